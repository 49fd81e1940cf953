"""Layers with explicit forward and backward passes, all in float64.

Each layer keeps its parameters in ``params`` and, after ``backward``, the
matching gradients in ``grads``. ``forward`` caches what ``backward`` needs;
a layer therefore supports one outstanding forward pass at a time.
"""
from __future__ import annotations

import numpy as np


def sigmoid(x):
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(x, axis=-1):
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def matmul_last(x, W):
    """``x @ W`` over the last axis via one 2-D product (stacked matmul is slow)."""
    return (x.reshape(-1, x.shape[-1]) @ W).reshape(*x.shape[:-1], W.shape[-1])


def glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def orthogonal(rng, n, m):
    a = rng.standard_normal((max(n, m), min(n, m)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    return q if n >= m else q.T


class Layer:
    def __init__(self):
        self.params = {}
        self.grads = {}

    def zero_like_grads(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}


class Dense(Layer):
    """Affine map over the last axis; any leading shape."""

    def __init__(self, n_in, n_out, rng=None, activation=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.params = {"W": glorot(rng, n_in, n_out), "b": np.zeros(n_out)}
        self.activation = activation

    def forward(self, x, train=False):
        out = matmul_last(x, self.params["W"]) + self.params["b"]
        if self.activation == "relu":
            self._mask = out > 0
            out = out * self._mask
        self._x = x
        return out

    def backward(self, dout):
        if self.activation == "relu":
            dout = dout * self._mask
        x2 = self._x.reshape(-1, self._x.shape[-1])
        d2 = dout.reshape(-1, dout.shape[-1])
        self.grads = {"W": x2.T @ d2, "b": d2.sum(axis=0)}
        return matmul_last(dout, self.params["W"].T)


class Embedding(Layer):
    """Lift each scalar feature to a vector: ``x_t * lift[t] + position[t]``."""

    def __init__(self, seq_len, embed_dim, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.params = {
            "lift": rng.standard_normal((seq_len, embed_dim)),
            "position": 0.1 * rng.standard_normal((seq_len, embed_dim)),
        }

    def forward(self, x, train=False):
        if x.ndim != 2 or x.shape[1] != self.params["lift"].shape[0]:
            raise ValueError(f"expected rows of width {self.params['lift'].shape[0]}, got {x.shape}")
        self._x = x
        return x[:, :, None] * self.params["lift"] + self.params["position"]

    def backward(self, dout):
        self.grads = {
            "lift": np.einsum("nte,nt->te", dout, self._x),
            "position": dout.sum(axis=0),
        }
        return np.einsum("nte,te->nt", dout, self.params["lift"])


def gru_step(x_proj, h, U, H):
    """One gated step given the precomputed input projection ``x W + b``.

    Gate blocks in column order: update z, reset r, candidate.
    """
    hu = h @ U[:, :2 * H]
    z = sigmoid(x_proj[:, :H] + hu[:, :H])
    r = sigmoid(x_proj[:, H:2 * H] + hu[:, H:])
    rh = r * h
    cand = np.tanh(x_proj[:, 2 * H:] + rh @ U[:, 2 * H:])
    h_new = (1.0 - z) * h + z * cand
    return h_new, (h, z, r, rh, cand)


def gru_cell(x_t, h_prev, W, U, b):
    """Standalone cell: z, r, candidate from ``x W + h U + b`` blocks."""
    H = h_prev.shape[-1]
    h_new, _ = gru_step(x_t @ W + b, h_prev, U, H)
    return h_new


class GRUDirection(Layer):
    def __init__(self, n_in, hidden, rng=None, reverse=False):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.hidden = hidden
        self.reverse = reverse
        U = np.hstack([orthogonal(rng, hidden, hidden) for _ in range(3)])
        self.params = {"W": np.hstack([glorot(rng, n_in, hidden) for _ in range(3)]),
                       "U": U, "b": np.zeros(3 * hidden)}

    def _steps(self, T):
        return range(T - 1, -1, -1) if self.reverse else range(T)

    def forward(self, x, train=False):
        N, T, _ = x.shape
        H = self.hidden
        xp = matmul_last(x, self.params["W"]) + self.params["b"]
        h = np.zeros((N, H))
        out = np.empty((N, T, H))
        caches = [None] * T
        for t in self._steps(T):
            h, caches[t] = gru_step(xp[:, t], h, self.params["U"], H)
            out[:, t] = h
        self._x, self._caches = x, caches
        return out

    def backward(self, dout):
        x, caches = self._x, self._caches
        N, T, _ = x.shape
        H = self.hidden
        U = self.params["U"]
        dU = np.zeros_like(U)
        dxp = np.empty((N, T, 3 * H))
        dh_next = np.zeros((N, H))
        for t in reversed(list(self._steps(T))):
            h, z, r, rh, cand = caches[t]
            dh = dout[:, t] + dh_next
            dz = dh * (cand - h)
            dcand = dh * z
            dh_prev = dh * (1.0 - z)
            da_c = dcand * (1.0 - cand * cand)
            dU[:, 2 * H:] += rh.T @ da_c
            drh = da_c @ U[:, 2 * H:].T
            dh_prev += drh * r
            dr = drh * h
            da_z = dz * z * (1.0 - z)
            da_r = dr * r * (1.0 - r)
            da_zr = np.hstack([da_z, da_r])
            dU[:, :2 * H] += h.T @ da_zr
            dh_prev += da_zr @ U[:, :2 * H].T
            dxp[:, t, :2 * H] = da_zr
            dxp[:, t, 2 * H:] = da_c
            dh_next = dh_prev
        flat = dxp.reshape(-1, 3 * H)
        self.grads = {"W": x.reshape(-1, x.shape[-1]).T @ flat, "U": dU, "b": flat.sum(axis=0)}
        return matmul_last(dxp, self.params["W"].T)


class BiGRU(Layer):
    """Forward and reverse scans, states concatenated, then a linear output map."""

    def __init__(self, n_in, hidden, out_dim, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.fwd = GRUDirection(n_in, hidden, rng)
        self.bwd = GRUDirection(n_in, hidden, rng, reverse=True)
        self.proj = Dense(2 * hidden, out_dim, rng)
        self.hidden = hidden

    @property
    def sublayers(self):
        return {"fwd": self.fwd, "bwd": self.bwd, "proj": self.proj}

    def states(self, x):
        return np.concatenate([self.fwd.forward(x), self.bwd.forward(x)], axis=-1)

    def forward(self, x, train=False):
        return self.proj.forward(self.states(x))

    def backward(self, dout):
        ds = self.proj.backward(dout)
        H = self.hidden
        return self.fwd.backward(ds[..., :H]) + self.bwd.backward(ds[..., H:])


def attention(Q, K, V):
    """Scaled dot-product attention; returns ``(output, weights)``.

    Works on the last two axes, so leading batch/head axes broadcast.
    """
    dk = Q.shape[-1]
    if K.shape[-1] != dk or K.shape[-2] != V.shape[-2]:
        raise ValueError("incompatible Q/K/V shapes")
    weights = softmax(Q @ np.swapaxes(K, -1, -2) / np.sqrt(dk))
    return weights @ V, weights


class MultiHeadAttention(Layer):
    def __init__(self, d_model, heads, rng=None):
        super().__init__()
        if d_model % heads:
            raise ValueError(f"model dimension {d_model} not divisible by {heads} heads")
        rng = rng or np.random.default_rng(0)
        self.heads, self.d_model, self.dk = heads, d_model, d_model // heads
        self.params = {}
        for name in ("q", "k", "v", "o"):
            self.params["W" + name] = glorot(rng, d_model, d_model)
            self.params["b" + name] = np.zeros(d_model)

    def _split(self, x):
        N, T, _ = x.shape
        return x.reshape(N, T, self.heads, self.dk).transpose(0, 2, 1, 3)

    def _merge(self, x):
        N, h, T, dk = x.shape
        return x.transpose(0, 2, 1, 3).reshape(N, T, h * dk)

    def forward(self, x, train=False):
        p = self.params
        Q = self._split(matmul_last(x, p["Wq"]) + p["bq"])
        K = self._split(matmul_last(x, p["Wk"]) + p["bk"])
        V = self._split(matmul_last(x, p["Wv"]) + p["bv"])
        O, A = attention(Q, K, V)
        Oc = self._merge(O)
        self._cache = (x, Q, K, V, A, Oc)
        self.weights = A
        return matmul_last(Oc, p["Wo"]) + p["bo"]

    def backward(self, dout):
        p = self.params
        x, Q, K, V, A, Oc = self._cache
        D = self.d_model
        x2 = x.reshape(-1, D)
        g = {"Wo": Oc.reshape(-1, D).T @ dout.reshape(-1, D), "bo": dout.reshape(-1, D).sum(axis=0)}
        dO = self._split(matmul_last(dout, p["Wo"].T))
        dA = dO @ np.swapaxes(V, -1, -2)
        dV = np.swapaxes(A, -1, -2) @ dO
        dS = A * (dA - np.sum(dA * A, axis=-1, keepdims=True)) / np.sqrt(self.dk)
        dQ = dS @ K
        dK = np.swapaxes(dS, -1, -2) @ Q
        dx = np.zeros_like(x)
        for name, d in (("q", dQ), ("k", dK), ("v", dV)):
            d2 = self._merge(d).reshape(-1, D)
            g["W" + name] = x2.T @ d2
            g["b" + name] = d2.sum(axis=0)
            dx += (d2 @ p["W" + name].T).reshape(x.shape)
        self.grads = g
        return dx


class LayerNorm(Layer):
    def __init__(self, dim, eps=1e-9):
        super().__init__()
        self.eps = eps
        self.params = {"gamma": np.ones(dim), "beta": np.zeros(dim)}

    def normalize(self, x):
        mu = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        return (x - mu) * inv, inv

    def forward(self, x, train=False):
        xhat, inv = self.normalize(x)
        self._cache = (xhat, inv)
        return xhat * self.params["gamma"] + self.params["beta"]

    def backward(self, dout):
        xhat, inv = self._cache
        D = xhat.shape[-1]
        self.grads = {"gamma": (dout * xhat).reshape(-1, D).sum(axis=0),
                      "beta": dout.reshape(-1, D).sum(axis=0)}
        dxhat = dout * self.params["gamma"]
        return inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                      - xhat * np.mean(dxhat * xhat, axis=-1, keepdims=True))


class Dropout(Layer):
    """Inverted dropout; the mask stream comes from the owner's generator."""

    def __init__(self, rate, rng=None):
        super().__init__()
        self.rate = rate
        self.rng = rng or np.random.default_rng(0)
        self._mask = None

    def forward(self, x, train=False):
        if not train or self.rate <= 0:
            self._mask = None
            return x
        keep = 1.0 - self.rate
        self._mask = (self.rng.random(x.shape) < keep) / keep
        return x * self._mask

    def backward(self, dout):
        return dout if self._mask is None else dout * self._mask


class EncoderBlock(Layer):
    """Post-norm encoder: LN(x + MHA(x)), then LN(y + FFN(y))."""

    def __init__(self, d_model, heads, ffn_dim, dropout=0.0, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.attn = MultiHeadAttention(d_model, heads, rng)
        self.norm1 = LayerNorm(d_model)
        self.ff1 = Dense(d_model, ffn_dim, rng, activation="relu")
        self.ff2 = Dense(ffn_dim, d_model, rng)
        self.norm2 = LayerNorm(d_model)
        self.drop1 = Dropout(dropout, rng)
        self.drop2 = Dropout(dropout, rng)

    @property
    def sublayers(self):
        return {"attn": self.attn, "norm1": self.norm1, "ff1": self.ff1, "ff2": self.ff2,
                "norm2": self.norm2}

    def forward(self, x, train=False):
        a = self.drop1.forward(self.attn.forward(x), train)
        y = self.norm1.forward(x + a)
        f = self.drop2.forward(self.ff2.forward(self.ff1.forward(y)), train)
        return self.norm2.forward(y + f)

    def backward(self, dout):
        d_sum2 = self.norm2.backward(dout)
        dy = d_sum2 + self.ff1.backward(self.ff2.backward(self.drop2.backward(d_sum2)))
        d_sum1 = self.norm1.backward(dy)
        return d_sum1 + self.attn.backward(self.drop1.backward(d_sum1))
