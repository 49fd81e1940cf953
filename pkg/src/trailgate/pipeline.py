"""End-to-end build, two-stage prediction, evaluation and ablation.

Build order: encode/scale, ADASYN, information-gain ranking with correlation
pruning, confident-learning harvest of suspicious rows, incremental feature
selection per stage, a second ADASYN pass on each stage's selected columns,
then the stage-1 forest gate and the stage-2 network.
"""
from __future__ import annotations

import contextlib
import csv
import json
import logging
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import sklearn

from . import __version__
from .augment import AugmentConfig, adasyn
from .config import PipelineConfig, coerce
from .dataset import FeatureTable, LabelVector, Schema, load_split, map_labels, parse_nslkdd
from .dataset import encode_and_scale, fit_schema
from .errors import ConfigError, SchemaError, StageError
from .forest import ForestClassifier, dumps_forest, loads_forest, train_forest
from .ifs import run_ifs
from .metrics import confusion, metrics_report
from .neural import NetClassifier, dumps_params, loads_params, train
from .noise import dedupe_rows, noise_report, oof_probabilities
from .ranking import select_features

log = logging.getLogger(__name__)

RF = "RF"
BT = "BT"
MODEL_KINDS = (RF, BT)
STRATEGIES = ("Raw", "Aug", "FS", "Aug+FS")
COMBOS = ("RF", "BT", "RF+BT", "BT+RF", "RF+RF", "BT+BT")


class Timer:
    """Wall-clock seconds per named step, in first-seen order."""

    def __init__(self):
        self.seconds = {}

    @contextlib.contextmanager
    def __call__(self, name):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.seconds[name] = self.seconds.get(name, 0.0) + time.perf_counter() - start

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "seconds"])
            for k, v in self.seconds.items():
                w.writerow([k, f"{v:.6f}"])


@contextlib.contextmanager
def stage(name, timer=None):
    """Tag any failure inside the block with the stage name."""
    ctx = timer(name) if timer else contextlib.nullcontext()
    with ctx:
        try:
            yield
        except (StageError, ConfigError):
            raise
        except Exception as exc:
            raise StageError(name, f"{type(exc).__name__}: {exc}") from exc


# --------------------------------------------------------------------- models

@dataclass(eq=False)
class StageModel:
    """One classifier bound to its feature columns.

    ``binary`` marks a normal/attack gate; otherwise the model emits task labels.
    """
    kind: str
    features: tuple
    model: object  # Forest or NetParams
    binary: bool
    _net: object = field(default=None, repr=False)

    def predict(self, data):
        X = data[:, list(self.features)]
        if self.kind == RF:
            return self.model.predict(X)
        if self._net is None:
            self._net = self.model.build()
        return self._net.predict(X)

    def dumps(self):
        return dumps_forest(self.model) if self.kind == RF else dumps_params(self.model)

    @classmethod
    def loads(cls, kind, features, binary, raw):
        model = loads_forest(raw) if kind == RF else loads_params(raw)
        return cls(kind, tuple(features), model, binary)


def combine(stage1_pred, stage2_pred, flagged):
    """Stage-1 normal verdicts are final; flagged rows take the stage-2 output."""
    final = np.zeros(stage1_pred.shape[0], dtype=np.int64)
    final[flagged] = stage2_pred
    return final


@dataclass
class PredictionTrace:
    stage1: np.ndarray
    flagged: np.ndarray
    stage2_calls: int  # rows handed to stage 2


@dataclass(eq=False)
class TrainedPipeline:
    schema: Schema
    task: str
    class_names: tuple
    stage1: StageModel
    stage2: StageModel | None
    provenance: dict = field(default_factory=dict)
    train_logs: dict = field(default_factory=dict, repr=False)  # stage tag -> TrainLog, not saved

    def _check(self, table):
        if isinstance(table, FeatureTable):
            if table.schema.names != self.schema.names:
                raise SchemaError("table schema does not match the pipeline schema")
            return table.data
        data = np.asarray(table, dtype=np.float64)
        if data.ndim != 2 or data.shape[1] != self.schema.n_features:
            raise SchemaError(f"expected {self.schema.n_features} columns, got shape {data.shape}")
        return data

    def predict_traced(self, table):
        data = self._check(table)
        s1 = np.asarray(self.stage1.predict(data), dtype=np.int64)
        if self.stage2 is None:
            return s1, PredictionTrace(s1, np.flatnonzero(s1 != 0), 0)
        if not self.stage1.binary:
            s1 = (s1 != 0).astype(np.int64)
        flagged = np.flatnonzero(s1 == 1)
        s2 = np.asarray(self.stage2.predict(data[flagged]), dtype=np.int64) if flagged.size else \
            np.empty(0, dtype=np.int64)
        return combine(s1, s2, flagged), PredictionTrace(s1, flagged, int(flagged.size))

    def predict(self, table):
        return self.predict_traced(table)[0]

    # directory layout: pipeline.json plus one binary file per stage model
    def save(self, directory):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        meta = {"task": self.task, "class_names": list(self.class_names),
                "schema": self.schema.to_json(), "provenance": self.provenance, "stages": []}
        for i, st in enumerate((self.stage1, self.stage2), start=1):
            if st is None:
                continue
            fname = f"stage{i}.{'tgrf' if st.kind == RF else 'tgnw'}"
            (d / fname).write_bytes(st.dumps())
            meta["stages"].append({"kind": st.kind, "features": list(st.features),
                                   "feature_names": [self.schema.names[j] for j in st.features],
                                   "binary": st.binary, "file": fname})
        (d / "pipeline.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return [d / "pipeline.json"] + [d / s["file"] for s in meta["stages"]]

    @classmethod
    def load(cls, directory):
        d = Path(directory)
        meta = json.loads((d / "pipeline.json").read_text(encoding="utf-8"))
        stages = [StageModel.loads(s["kind"], s["features"], s["binary"], (d / s["file"]).read_bytes())
                  for s in meta["stages"]]
        return cls(Schema.from_json(meta["schema"]), meta["task"], tuple(meta["class_names"]),
                   stages[0], stages[1] if len(stages) > 1 else None, meta["provenance"])


# ------------------------------------------------------------------ selection

@dataclass(eq=False)
class Selection:
    """Everything feature selection produced; reusable across arms of one config."""
    ranking: object
    noise: object
    augment_report: object
    curves: dict  # kind -> IfsCurve (None when the count was fixed)
    features: dict  # kind -> tuple of schema indices
    n_abnormal: int


def _augment(table, labels, config):
    cfg = AugmentConfig(target_ratio=config.augment_ratio, k_neighbors=config.augment_k, seed=config.seed)
    return adasyn(table, labels, cfg)


def _forest_factory(n_estimators, seed, n_classes):
    return lambda s: ForestClassifier(n_estimators=n_estimators, seed=s, n_classes=n_classes)


def harvest_abnormal(table, labels, config, timer=None):
    """Confident-learning pass on the augmented data; returns (report, rows, labels)."""
    with stage("CL", timer):
        factory = _forest_factory(config.cl_n_estimators, config.seed, labels.n_classes)
        probs = oof_probabilities(table, labels, config.cl_folds, factory, seed=config.seed)
        report, _ = noise_report(probs, labels)
        idx = report.abnormal_indices
        ab_x, ab_y = table.data[idx], labels.labels[idx]
        keep = dedupe_rows(ab_x, ab_y)
        ab_x, ab_y = ab_x[keep], ab_y[keep]
        if config.max_abnormal is not None and ab_x.shape[0] > config.max_abnormal:
            pick = np.sort(np.random.default_rng([config.seed, 55]).choice(
                ab_x.shape[0], config.max_abnormal, replace=False))
            ab_x, ab_y = ab_x[pick], ab_y[pick]
    log.info("confident learning flagged %d rows (%d distinct kept)", idx.size, ab_x.shape[0])
    return report, ab_x, ab_y


def select(table, labels, config: PipelineConfig, timer=None, report_dir=None, kinds=MODEL_KINDS):
    """Feature selection for each requested classifier kind."""
    out = Path(report_dir) if report_dir else None
    with stage("DA", timer):
        aug_table, aug_labels, aug_report = _augment(table, labels, config)
    if out:
        aug_report.write_csv(out / "augment_report.csv")
    with stage("IG+CM", timer):
        ranking = select_features(table, labels, config.pcc)
    if out:
        ranking.write_csv(out / "ranking.csv")
    report, ab_x, ab_y = harvest_abnormal(aug_table, aug_labels, config, timer)
    if out:
        report.write_json(out / "noise_report.json")

    survivors = ranking.survivors
    curves, features = {}, {}
    for kind in kinds:
        stage_no = 1 if kind == RF else 2
        fixed = config.stage1_k if kind == RF else config.stage2_k
        if fixed is not None:
            curves[kind] = None
            features[kind] = tuple(survivors[:fixed])
            continue
        with stage(f"IFS{stage_no}", timer):
            if kind == RF:
                y, y_ab = labels.to_binary(), (ab_y != 0).astype(np.int64)
                n_est = config.ifs_forest_n_estimators

                def factory(k, n_est=n_est):
                    return ForestClassifier(n_estimators=n_est, seed=config.seed, n_classes=2)
                rule = config.stage1_rule
            else:
                y, y_ab = labels, ab_y
                net_cfg = config.ifs_net_config(seq_len=1, num_classes=labels.n_classes)

                def factory(k, net_cfg=net_cfg):
                    return NetClassifier(net_cfg)
                rule = config.stage2_rule
            curve = run_ifs(table, y, survivors, ab_x, y_ab, factory, stop_rule=rule, seed=config.seed,
                            ratio=config.ifs_ratio, dma_threshold=config.dma_threshold,
                            max_k=config.ifs_max_k)
        curves[kind] = curve
        features[kind] = tuple(survivors[:curve.chosen_k])
        if out:
            curve.write_csv(out / f"ifs_curve_stage{stage_no}.csv")
        log.info("stage %d features: %s", stage_no, ", ".join(curve.chosen_features))
    return Selection(ranking, report, aug_report, curves, features, int(ab_x.shape[0]))


# ---------------------------------------------------------------------- build

def _fit_stage(kind, table, labels, features, config, binary, augment, timer, report_dir, tag):
    sub = table.select(features)
    y = labels
    if augment:
        with stage(f"DA{tag}", timer):
            sub, y, rep = _augment(sub, labels, config)
        if report_dir:
            rep.write_csv(Path(report_dir) / f"augment_report_stage{tag}.csv")
    if binary:
        y = y.to_binary()
    with stage(f"train{tag}", timer):
        if kind == RF:
            model = train_forest(sub, y, n_estimators=config.forest_n_estimators,
                                 max_depth=config.forest_max_depth, min_leaf=config.forest_min_leaf,
                                 seed=config.seed, n_classes=y.n_classes)
            trainlog = None
        else:
            model, trainlog = train(sub.data, y.labels, config.net_config(len(features), y.n_classes))
    if trainlog is not None and report_dir:
        trainlog.write_csv(Path(report_dir) / f"trainlog_stage{tag}.csv")
    return StageModel(kind, tuple(int(j) for j in features), model, binary), trainlog


def provenance(config):
    return {"config_hash": config.digest(), "seed": config.seed, "trailgate": __version__,
            "numpy": np.__version__, "scikit-learn": sklearn.__version__,
            "python": platform.python_version()}


def build_from_table(table: FeatureTable, labels: LabelVector, config: PipelineConfig, combo="RF+BT",
                     augment=True, feature_select=True, selection=None, timer=None, report_dir=None):
    """Train one arm; the default arm is the full two-stage method."""
    if combo not in COMBOS:
        raise ConfigError(f"unknown classifier combination {combo!r}; choose from {COMBOS}")
    kinds = combo.split("+")
    if feature_select and selection is None:
        selection = select(table, labels, config, timer, report_dir, kinds=tuple(dict.fromkeys(kinds)))
    all_features = tuple(range(table.schema.n_features))

    def features_for(kind):
        return selection.features[kind] if feature_select else all_features

    logs = {}
    if len(kinds) == 1:
        s1, logs["1"] = _fit_stage(kinds[0], table, labels, features_for(kinds[0]), config, False,
                                   augment, timer, report_dir, "1")
        s2 = None
    else:
        s1, logs["1"] = _fit_stage(kinds[0], table, labels, features_for(kinds[0]), config, True,
                                   augment, timer, report_dir, "1")
        s2, logs["2"] = _fit_stage(kinds[1], table, labels, features_for(kinds[1]), config, False,
                                   augment, timer, report_dir, "2")
    prov = provenance(config)
    prov.update(combo=combo, augment=augment, feature_select=feature_select)
    logs = {k: v for k, v in logs.items() if v is not None}
    pipe = TrainedPipeline(table.schema, config.task, labels.class_names, s1, s2, prov, logs)
    return pipe, selection


def load_training(path, config: PipelineConfig):
    if not Path(path).is_file():
        raise FileNotFoundError(f"training file not found: {path}")
    records = parse_nslkdd(path)
    schema = fit_schema(records)
    table = encode_and_scale(records, schema)
    labels = map_labels(records, config.scheme, unknown_as_attack=config.unknown_as_attack,
                        family_map=config.family_map)
    return table, labels


def build(train_path, config: PipelineConfig, report_dir=None, timer=None):
    timer = timer or Timer()
    with timer("preprocess"):
        table, labels = load_training(train_path, config)
    pipe, selection = build_from_table(table, labels, config, timer=timer, report_dir=report_dir)
    return pipe, selection, timer


# ------------------------------------------------------------------- evaluate

def check_invariants(pipe, pred, trace):
    """Two-stage structural guarantees, asserted on every evaluation."""
    if pipe.stage2 is None:
        return
    if np.any(pred[trace.stage1 == 0] != 0):
        raise StageError("predict", "a stage-1 normal verdict was overridden")
    if trace.stage2_calls != int(np.count_nonzero(trace.stage1 == 1)):
        raise StageError("predict", "stage 2 saw rows stage 1 did not flag")


def evaluate_table(pipe, table, labels, timer=None):
    with stage("predict", timer):
        pred, trace = pipe.predict_traced(table)
        check_invariants(pipe, pred, trace)
    cm = confusion(labels.labels, pred, len(pipe.class_names), pipe.class_names)
    report = metrics_report(cm)
    report["stage1_flagged"] = trace.stage2_calls if pipe.stage2 is not None else None
    if pipe.stage2 is not None:
        truth = (labels.labels != 0).astype(np.int64)
        report["stage1_accuracy"] = float(np.mean(trace.stage1 == truth)) if truth.size else None
    if table.unseen_categories:
        report["unseen_categories"] = dict(sorted(table.unseen_categories.items()))
    return cm, report


def evaluate(pipe, test_paths, config: PipelineConfig, out_dir=None, timer=None):
    """Score each test file; writes metrics.json and confusion CSVs when ``out_dir`` is set.

    Returns ``({test_name: ConfusionMatrix}, {test_name: metrics dict}, written paths)``.
    """
    cms, reports, written = {}, {}, []
    for path in test_paths:
        name = Path(path).stem
        if not Path(path).is_file():
            raise FileNotFoundError(f"test file not found: {path}")
        table, labels, _ = load_split(path, pipe.schema, config.scheme, config.unknown_as_attack,
                                      config.family_map)
        cms[name], reports[name] = evaluate_table(pipe, table, labels, timer)
    if out_dir:
        out = Path(out_dir)
        for i, (name, cm) in enumerate(cms.items()):
            p = out / f"confusion_{name}.csv"
            cm.write_csv(p)
            written.append(p)
            if i == 0:
                cm.write_csv(out / "confusion.csv")
                written.append(out / "confusion.csv")
        p = out / "metrics.json"
        p.write_text(json.dumps({"task": pipe.task, "test_sets": reports}, indent=2, sort_keys=True) + "\n",
                     encoding="utf-8")
        written.append(p)
    return cms, reports, written


def run(train_path, test_paths, config: PipelineConfig, out_dir):
    """Build, evaluate and write the full run directory; returns the artifact paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(config.dumps(), encoding="utf-8")
    timer = Timer()
    pipe, _, _ = build(train_path, config, report_dir=out, timer=timer)
    pipe.save(out / "model")
    _, reports, _ = evaluate(pipe, test_paths, config, out, timer)
    timer.write_csv(out / "timings.csv")
    return pipe, reports


# --------------------------------------------------------------------- ablate

def parse_arm(name):
    """``"Aug+FS:RF+BT"``; a bare strategy implies RF+BT, a bare combo implies Aug+FS."""
    if ":" in name:
        strategy, combo = name.split(":", 1)
    elif name in STRATEGIES:
        strategy, combo = name, "RF+BT"
    else:
        strategy, combo = "Aug+FS", name
    if strategy not in STRATEGIES or combo not in COMBOS:
        raise ConfigError(f"unknown arm {name!r}; arms are STRATEGY:COMBO with STRATEGY in "
                          f"{STRATEGIES} and COMBO in {COMBOS}")
    return strategy, combo


def ablate(train_path, test_path, config: PipelineConfig, arms, out_csv=None):
    """One evaluate per arm with shared seeds and a shared selection pass."""
    parsed = [(a, *parse_arm(a)) for a in arms]
    table, labels = load_training(train_path, config)
    test_table, test_labels, _ = load_split(test_path, table.schema, config.scheme,
                                            config.unknown_as_attack, config.family_map)
    selection = None
    if any("FS" in s for _, s, _ in parsed):
        selection = select(table, labels, config)
    rows = []
    for name, strategy, combo in parsed:
        pipe, _ = build_from_table(table, labels, config, combo=combo, augment="Aug" in strategy,
                                   feature_select="FS" in strategy, selection=selection)
        cm, rep = evaluate_table(pipe, test_table, test_labels)
        rows.append({"arm": f"{strategy}:{combo}", "strategy": strategy, "classifiers": combo,
                     "accuracy": rep["accuracy"], "macro_f1": rep["macro_f1"]})
        log.info("arm %s accuracy %.5f", name, rep["accuracy"])
    if out_csv:
        write_rows(out_csv, rows)
    return rows


SWEEP_PARAMS = {"n_estimators": "forest_n_estimators", "batch": "net_batch_size",
                "epoch": "net_epochs", "pcc": "pcc_threshold", "augment_ratio": "augment_ratio"}
# parameters that leave feature selection untouched, so one selection pass serves every value
_SELECTION_FREE = ("n_estimators", "batch", "epoch")


def sweep(train_path, test_path, config: PipelineConfig, param, values, out_csv=None):
    """One full build per value under a shared seed; rows of value -> metrics."""
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"unsupported sweep parameter {param!r}; choose from {tuple(SWEEP_PARAMS)}")
    key = SWEEP_PARAMS[param]
    table, labels = load_training(train_path, config)
    test_table, test_labels, _ = load_split(test_path, table.schema, config.scheme,
                                            config.unknown_as_attack, config.family_map)
    selection = select(table, labels, config) if param in _SELECTION_FREE else None
    rows = []
    for raw in values:
        cfg = config.replace(**{key: coerce(key, raw)})
        pipe, _ = build_from_table(table, labels, cfg, selection=selection)
        _, rep = evaluate_table(pipe, test_table, test_labels)
        tl = pipe.train_logs.get("2")
        rows.append({"param": param, "value": raw, "accuracy": rep["accuracy"], "macro_f1": rep["macro_f1"],
                     "stage1_accuracy": rep.get("stage1_accuracy"),
                     "stage2_val_acc": tl.best_val_acc if tl else None})
        log.info("sweep %s=%s accuracy %.5f", param, raw, rep["accuracy"])
    if out_csv:
        write_rows(out_csv, rows)
    return rows


def write_rows(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v) for k, v in r.items()})


__all__ = [
    "BT", "COMBOS", "MODEL_KINDS", "RF", "STRATEGIES", "PredictionTrace", "Selection", "StageModel",
    "Timer", "TrainedPipeline", "ablate", "build", "build_from_table", "check_invariants", "combine",
    "evaluate", "evaluate_table", "harvest_abnormal", "load_training", "parse_arm", "run", "select",
    "stage", "sweep", "write_rows", "SWEEP_PARAMS",
]
