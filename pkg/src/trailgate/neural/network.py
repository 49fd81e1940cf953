"""The stage-2 sequence classifier and its weight container format."""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from .layers import BiGRU, Dense, Dropout, Embedding, EncoderBlock, softmax


@dataclass(frozen=True)
class NetConfig:
    seq_len: int
    num_classes: int
    embed_dim: int = 32
    gru_hidden: int = 64
    model_dim: int | None = None  # defaults to 2 * gru_hidden
    heads: int = 4
    ffn_dim: int = 256
    encoder_layers: int = 1
    fc_dim: int = 64
    dropout: float = 0.1
    lr: float = 0.001
    batch_size: int = 512
    epochs: int = 10
    k_folds: int = 10
    val_fraction: float = 0.1  # holdout share when k_folds == 1
    seed: int = 0

    def __post_init__(self):
        if self.model_dim is None:
            object.__setattr__(self, "model_dim", 2 * self.gru_hidden)
        if self.seq_len < 1:
            raise ConfigError("seq_len must be >= 1")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if self.model_dim % self.heads:
            raise ConfigError(f"model_dim {self.model_dim} not divisible by heads {self.heads}")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must lie in [0, 1)")

    def replace(self, **changes):
        data = asdict(self)
        data.update(changes)
        if "gru_hidden" in changes and "model_dim" not in changes:
            data["model_dim"] = None
        return NetConfig(**data)

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})


class Network:
    """embed -> BiGRU -> encoder blocks -> mean pool -> FC(ReLU) -> FC."""

    def __init__(self, config: NetConfig, rng=None):
        self.config = c = config
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.embed = Embedding(c.seq_len, c.embed_dim, rng)
        self.bigru = BiGRU(c.embed_dim, c.gru_hidden, c.model_dim, rng)
        self.encoders = [EncoderBlock(c.model_dim, c.heads, c.ffn_dim, c.dropout, rng)
                         for _ in range(c.encoder_layers)]
        self.pool_drop = Dropout(c.dropout, rng)
        self.fc1 = Dense(c.model_dim, c.fc_dim, rng, activation="relu")
        self.fc2 = Dense(c.fc_dim, c.num_classes, rng)

    def layers(self):
        """Leaf layers with parameters, keyed by dotted path."""
        out = {"embed": self.embed}
        for k, v in self.bigru.sublayers.items():
            out[f"bigru.{k}"] = v
        for i, enc in enumerate(self.encoders):
            for k, v in enc.sublayers.items():
                out[f"encoder{i}.{k}"] = v
        out["fc1"], out["fc2"] = self.fc1, self.fc2
        return out

    def params(self):
        return {f"{p}.{n}": arr for p, layer in self.layers().items() for n, arr in layer.params.items()}

    def grads(self):
        return {f"{p}.{n}": arr for p, layer in self.layers().items() for n, arr in layer.grads.items()}

    def set_params(self, tensors):
        for p, layer in self.layers().items():
            for n in layer.params:
                arr = np.asarray(tensors[f"{p}.{n}"], dtype=np.float64)
                if arr.shape != layer.params[n].shape:
                    raise ValueError(f"shape mismatch for {p}.{n}: {arr.shape} vs {layer.params[n].shape}")
                layer.params[n] = arr.copy()

    def forward(self, X, train=False):
        X = np.asarray(X, dtype=np.float64)
        h = self.bigru.forward(self.embed.forward(X), train)
        for enc in self.encoders:
            h = enc.forward(h, train)
        self._T = h.shape[1]
        pooled = self.pool_drop.forward(h.mean(axis=1), train)
        return self.fc2.forward(self.fc1.forward(pooled))

    def backward(self, dlogits):
        dpool = self.pool_drop.backward(self.fc1.backward(self.fc2.backward(dlogits)))
        dh = np.repeat(dpool[:, None, :] / self._T, self._T, axis=1)
        for enc in reversed(self.encoders):
            dh = enc.backward(dh)
        return self.embed.backward(self.bigru.backward(dh))

    def predict_proba(self, X, batch_size=4096):
        X = np.asarray(X, dtype=np.float64)
        out = [softmax(self.forward(X[i:i + batch_size])) for i in range(0, X.shape[0], batch_size)]
        return np.vstack(out) if out else np.empty((0, self.config.num_classes))

    def predict(self, X, batch_size=4096):
        return np.argmax(self.predict_proba(X, batch_size), axis=1)


def cross_entropy(logits, labels):
    """Mean negative log-likelihood over the batch (max-shifted for stability)."""
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(labels.shape[0]), labels].mean())


def cross_entropy_grad(logits, labels):
    p = softmax(logits)
    p[np.arange(labels.shape[0]), labels] -= 1.0
    return p / labels.shape[0]


@dataclass(eq=False)
class NetParams:
    config: NetConfig
    tensors: dict

    def build(self) -> Network:
        net = Network(self.config)
        net.set_params(self.tensors)
        return net

    @classmethod
    def from_network(cls, net: Network):
        return cls(net.config, {k: v.copy() for k, v in net.params().items()})


WEIGHTS_MAGIC = b"TGNW"
WEIGHTS_VERSION = 1


def dumps_params(params: NetParams) -> bytes:
    cfg = json.dumps(asdict(params.config), sort_keys=True).encode("utf-8")
    chunks = [WEIGHTS_MAGIC, struct.pack("<IQ", WEIGHTS_VERSION, len(cfg)), cfg,
              struct.pack("<I", len(params.tensors))]
    for name in sorted(params.tensors):
        arr = np.ascontiguousarray(params.tensors[name], dtype="<f8")
        key = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(key)))
        chunks.append(key)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    return b"".join(chunks)


def loads_params(raw: bytes) -> NetParams:
    if raw[:4] != WEIGHTS_MAGIC:
        raise ValueError("not a weight container")
    version, clen = struct.unpack_from("<IQ", raw, 4)
    if version != WEIGHTS_VERSION:
        raise ValueError(f"unsupported weight container version {version}")
    off = 16
    config = NetConfig.from_dict(json.loads(raw[off:off + clen].decode("utf-8")))
    off += clen
    (count,) = struct.unpack_from("<I", raw, off)
    off += 4
    tensors = {}
    for _ in range(count):
        (klen,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off:off + klen].decode("utf-8")
        off += klen
        (ndim,) = struct.unpack_from("<B", raw, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", raw, off)
        off += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        tensors[name] = np.frombuffer(raw, dtype="<f8", count=size, offset=off).reshape(shape).astype(np.float64)
        off += 8 * size
    return NetParams(config, tensors)


def save_params(path, params):
    Path(path).write_bytes(dumps_params(params))


def load_params(path):
    return loads_params(Path(path).read_bytes())
