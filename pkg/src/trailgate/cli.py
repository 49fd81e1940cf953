"""trailgate command line: prep, run, sweep, ablate, report.

Exit codes: 0 success, 2 configuration error, 3 I/O or parse error, 4 stage failure.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__, pipeline
from .augment import class_counts
from .config import coerce, load_config
from .dataset import load_split, write_table
from .errors import ConfigError, ParseError, TrailGateError
from .metrics import ConfusionMatrix
from .reference import targets_for

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_STAGE = 0, 2, 3, 4
RUN_ARTIFACTS = ("config.txt", "metrics.json", "confusion.csv", "timings.csv")

log = logging.getLogger("trailgate")


@dataclass
class RunManifest:
    command: list
    config_hash: str
    seeds: dict
    started: str
    finished: str = ""
    artifacts: list = field(default_factory=list)
    version: str = __version__
    config_file_sha256: str | None = None

    def finalize(self, out_dir):
        out = Path(out_dir)
        self.finished = _now()
        files = sorted(p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
        self.artifacts = [str(p.relative_to(out)) for p in files] + ["manifest.json"]
        (out / "manifest.json").write_text(json.dumps(asdict(self), indent=2) + "\n", encoding="utf-8")


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _overrides(pairs):
    out = {}
    for item in pairs or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _config(args):
    overrides = {k: coerce(k, v) for k, v in _overrides(args.set).items()}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.config is not None and not Path(args.config).is_file():
        raise FileNotFoundError(f"config file not found: {args.config}")
    return load_config(args.config, task=args.task, **overrides)


def _start(args, config, out):
    out.mkdir(parents=True, exist_ok=True)
    digest = None
    if args.config:
        digest = hashlib.sha256(Path(args.config).read_bytes()).hexdigest()
    return RunManifest(list(sys.argv), config.digest(), {"seed": config.seed}, _now(),
                       config_file_sha256=digest)


def cmd_prep(args):
    schema = None
    if args.schema_from:
        _, _, schema = load_split(args.schema_from)
    scheme = "binary" if args.task == "binary" else "multi5"
    table, labels, _ = load_split(args.input, schema, scheme)
    write_table(args.out, table)
    counts = class_counts(labels)
    print(f"{args.input}: {table.n_rows} rows, {table.schema.n_features} features")
    for c, n in counts.items():
        print(f"  {labels.class_names[c]:<8} {n}")
    for name, n in table.unseen_categories.items():
        print(f"  unseen {name} values: {n}")
    return EXIT_OK


def cmd_run(args):
    config = _config(args)
    out = Path(args.out)
    manifest = _start(args, config, out)
    try:
        _, reports = pipeline.run(args.train, args.test, config, out)
    finally:
        manifest.finalize(out)
    for name, rep in reports.items():
        print(f"{name}: accuracy {rep['accuracy']:.4f}  macro F1 {rep['macro_f1']:.4f}")
    return EXIT_OK


def cmd_sweep(args):
    config = _config(args)
    out = Path(args.out)
    manifest = _start(args, config, out)
    values = [v for chunk in args.values for v in chunk.split(",") if v]
    try:
        rows = pipeline.sweep(args.train, args.test[0], config, args.param, values, out / "sweep.csv")
    finally:
        manifest.finalize(out)
    for r in rows:
        print(f"{r['param']}={r['value']}: accuracy {r['accuracy']:.4f}")
    return EXIT_OK


def cmd_ablate(args):
    config = _config(args)
    arms = [a for chunk in args.arms for a in chunk.split(",") if a]
    for a in arms:
        pipeline.parse_arm(a)
    out = Path(args.out)
    manifest = _start(args, config, out)
    try:
        rows = pipeline.ablate(args.train, args.test[0], config, arms, out / "ablation.csv")
    finally:
        manifest.finalize(out)
    for r in rows:
        print(f"{r['arm']:<16} accuracy {r['accuracy']:.4f}")
    return EXIT_OK


def _pct(v):
    return "-" if v is None else f"{100 * v:7.2f}"


def _measured(rep, key):
    if "." in key:
        cls, metric = key.split(".", 1)
        return rep.get("per_class", {}).get(cls, {}).get(metric)
    return rep.get(key)


def summarize(run_dir):
    """Side-by-side text of measured metrics, published targets and deltas (points)."""
    run = Path(run_dir)
    missing = [f for f in RUN_ARTIFACTS if not (run / f).is_file()]
    if missing:
        raise FileNotFoundError(f"incomplete run directory {run}: missing {', '.join(missing)}")
    metrics = json.loads((run / "metrics.json").read_text(encoding="utf-8"))
    task = metrics["task"]
    lines = [f"run {run}  task {task}"]
    for name, rep in metrics["test_sets"].items():
        targets = targets_for(task, name)
        keys = ["accuracy", "recall", "specificity", "far", "precision", "f1"] if task == "binary" else \
            ["accuracy", "macro_f1", "macro_far"] + [f"{c}.{m}" for c in rep["class_names"]
                                                       for m in ("precision", "recall", "specificity",
                                                                 "far", "f1")]
        lines.append("")
        lines.append(f"[{name}] {rep['n_samples']} samples")
        lines.append(f"  {'metric':<20}{'measured':>9}{'target':>9}{'delta':>9}")
        for k in keys:
            m, t = _measured(rep, k), targets.get(k)
            delta = "-" if m is None or t is None else f"{100 * (m - t):+7.2f}"
            lines.append(f"  {k:<20}{_pct(m):>9}{_pct(t):>9}{delta:>9}")
        if rep.get("stage1_accuracy") is not None:
            lines.append(f"  stage-1 gate accuracy {_pct(rep['stage1_accuracy']).strip()}%, "
                         f"{rep['stage1_flagged']} rows sent to stage 2")
        for feat, n in (rep.get("unseen_categories") or {}).items():
            lines.append(f"  unseen {feat} values: {n}")
    cm = ConfusionMatrix.read_csv(run / "confusion.csv")
    lines.append("")
    lines.append("confusion (rows true, columns predicted):")
    lines.append("  " + " ".join(f"{c:>8}" for c in ("",) + tuple(cm.class_names)))
    for c, row in zip(cm.class_names, cm.counts):
        lines.append("  " + " ".join(f"{v:>8}" for v in (c, *map(int, row))))
    lines.append("")
    lines.append("timings (s):")
    for row in (run / "timings.csv").read_text(encoding="utf-8").splitlines()[1:]:
        step, sec = row.split(",")
        lines.append(f"  {step:<12}{float(sec):10.3f}")
    return "\n".join(lines)


def cmd_report(args):
    print(summarize(args.run))
    return EXIT_OK


def _common(p, needs_test=True):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--task", choices=("binary", "multi"))
    p.add_argument("--train", required=True)
    if needs_test:
        p.add_argument("--test", nargs="+", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")


def build_parser():
    ap = argparse.ArgumentParser(prog="trailgate", description="Two-stage intrusion detection experiments.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    ap.add_argument("--version", action="version", version=f"trailgate {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prep", help="parse, encode and cache one data file")
    p.add_argument("--input", required=True)
    p.add_argument("--schema-from", help="fit encoding on this file instead of --input")
    p.add_argument("--task", choices=("binary", "multi"), default="binary")
    p.add_argument("--out", required=True, help="cached table path")
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("run", help="build and evaluate the full pipeline")
    _common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="one run per parameter value")
    _common(p)
    p.add_argument("--param", required=True, choices=tuple(pipeline.SWEEP_PARAMS))
    p.add_argument("--values", nargs="+", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ablate", help="compare strategies and classifier pairs")
    _common(p)
    p.add_argument("--arms", nargs="+", required=True, help="e.g. Aug+FS:RF+BT Raw:BT RF+RF")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="summarize a finished run directory")
    p.add_argument("--run", required=True)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ParseError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except TrailGateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
