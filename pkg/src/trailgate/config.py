"""Pipeline configuration and its flat ``key = value`` file format.

Keys mirror :class:`PipelineConfig` fields. Task-specific overrides use a
``binary.`` or ``multi.`` prefix (for example ``multi.pcc_threshold = 0.9``);
a prefix that does not match the active task is rejected.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional

from .dataset import BINARY, MULTI5
from .errors import ConfigError
from .neural.network import NetConfig

TASKS = ("binary", "multi")
STOP_RULES = ("peak", "dma")
DEFAULT_PCC = {"binary": 0.7, "multi": 0.9}


@dataclass(frozen=True)
class PipelineConfig:
    task: str = "binary"
    pcc_threshold: Optional[float] = None  # None -> 0.7 binary / 0.9 multi
    augment_ratio: float = 1.0
    augment_k: int = 5
    family_map: str = "counts"
    unknown_as_attack: bool = False
    # stage-1 forest
    forest_n_estimators: int = 300
    forest_max_depth: Optional[int] = None
    forest_min_leaf: int = 1
    # confident learning
    cl_folds: int = 10
    cl_n_estimators: int = 50
    max_abnormal: Optional[int] = None
    # incremental feature selection
    ifs_ratio: float = 0.7
    stage1_rule: str = "dma"
    stage2_rule: str = "peak"
    dma_threshold: float = 0.005
    ifs_forest_n_estimators: int = 100
    ifs_max_k: Optional[int] = None
    ifs_net_epochs: int = 3
    ifs_net_embed_dim: int = 16
    ifs_net_gru_hidden: int = 32
    ifs_net_ffn_dim: int = 128
    stage1_k: Optional[int] = None  # fixes the feature count, skipping IFS
    stage2_k: Optional[int] = None
    # stage-2 network
    net_embed_dim: int = 32
    net_gru_hidden: int = 64
    net_heads: int = 4
    net_ffn_dim: int = 256
    net_encoder_layers: int = 1
    net_fc_dim: int = 64
    net_dropout: float = 0.1
    net_lr: float = 0.001
    net_batch_size: int = 512
    net_epochs: int = 10
    net_k_folds: int = 10
    net_val_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        thr = self.pcc
        if not 0 < thr <= 1:
            raise ConfigError("pcc_threshold must lie in (0, 1]")
        if not 0 < self.augment_ratio <= 1:
            raise ConfigError("augment_ratio must lie in (0, 1]")
        for rule in (self.stage1_rule, self.stage2_rule):
            if rule not in STOP_RULES:
                raise ConfigError(f"stop rule must be one of {STOP_RULES}, got {rule!r}")
        if self.cl_folds < 2:
            raise ConfigError("cl_folds must be >= 2")

    @property
    def pcc(self):
        return DEFAULT_PCC[self.task] if self.pcc_threshold is None else self.pcc_threshold

    @property
    def scheme(self):
        return BINARY if self.task == "binary" else MULTI5

    @property
    def num_classes(self):
        return 2 if self.task == "binary" else 5

    def net_config(self, seq_len, num_classes=None) -> NetConfig:
        return NetConfig(
            seq_len=seq_len, num_classes=num_classes or self.num_classes,
            embed_dim=self.net_embed_dim, gru_hidden=self.net_gru_hidden, heads=self.net_heads,
            ffn_dim=self.net_ffn_dim, encoder_layers=self.net_encoder_layers, fc_dim=self.net_fc_dim,
            dropout=self.net_dropout, lr=self.net_lr, batch_size=self.net_batch_size,
            epochs=self.net_epochs, k_folds=self.net_k_folds, val_fraction=self.net_val_fraction,
            seed=self.seed,
        )

    def ifs_net_config(self, seq_len, num_classes=None) -> NetConfig:
        return self.net_config(seq_len, num_classes).replace(
            embed_dim=self.ifs_net_embed_dim, gru_hidden=self.ifs_net_gru_hidden,
            ffn_dim=self.ifs_net_ffn_dim, epochs=self.ifs_net_epochs, k_folds=1)

    def replace(self, **changes):
        try:
            return replace(self, **changes)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self):
        return asdict(self)

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def dumps(self):
        lines = [f"{k} = {_format(v)}" for k, v in self.to_dict().items()]
        return "\n".join(lines) + "\n"


def valid_keys():
    return tuple(f.name for f in fields(PipelineConfig))


def _format(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _field_types():
    # resolve the annotation strings produced by `from __future__ import annotations`
    out = {}
    for f in fields(PipelineConfig):
        ann = str(f.type)
        base = ann.replace("Optional[", "").rstrip("]")
        out[f.name] = (base, ann.startswith("Optional"))
    return out


def coerce(key, raw):
    types = _field_types()
    if key not in types:
        raise ConfigError(f"unknown config key {key!r}; valid keys: {', '.join(valid_keys())}")
    base, optional = types[key]
    text = str(raw).strip()
    if optional and text.lower() in ("none", "null", ""):
        return None
    try:
        if base == "bool":
            if text.lower() in ("true", "yes", "1", "on"):
                return True
            if text.lower() in ("false", "no", "0", "off"):
                return False
            raise ValueError(text)
        if base == "int":
            return int(text)
        if base == "float":
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value {text!r} for {key} (expected {base})") from None
    return text


def parse_config_text(text, task=None) -> dict:
    """Parse ``key = value`` lines into a dict of typed overrides."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        raw[key] = (lineno, value)
    if task is None:
        task = raw.get("task", (0, "binary"))[1]
    values = {}
    prefixed = {}
    for key, (lineno, value) in raw.items():
        if "." in key:
            prefix, name = key.split(".", 1)
            if prefix not in TASKS:
                raise ConfigError(f"unknown config key {key!r}; valid keys: {', '.join(valid_keys())}")
            if prefix != task:
                raise ConfigError(f"config key {key!r} applies to task {prefix!r}, not {task!r}")
            prefixed[name] = coerce(name, value)
        else:
            values[key] = coerce(key, value)
    values.update(prefixed)
    values["task"] = task
    return values


def load_config(path=None, task=None, **overrides) -> PipelineConfig:
    values = {}
    if path is not None:
        values = parse_config_text(Path(path).read_text(encoding="utf-8"), task)
    elif task is not None:
        values["task"] = task
    for k, v in overrides.items():
        if v is not None:
            if k not in valid_keys():
                raise ConfigError(f"unknown config key {k!r}; valid keys: {', '.join(valid_keys())}")
            values[k] = v
    return PipelineConfig(**values)
