import math

import numpy as np
import pytest

from oracles import numeric_grad, rel_error
from trailgate.errors import ConfigError, DivergenceError
from trailgate.neural import (
    Adam, BiGRU, Dense, Embedding, EncoderBlock, GRUDirection, LayerNorm, MultiHeadAttention, NetConfig,
    NetParams, Network, adam_update, attention, cross_entropy, cross_entropy_grad, dumps_params,
    gru_cell, load_params, loads_params, save_params, softmax, train,
)
from trailgate.neural.training import fold_splits


def check_layer(layer, x, params=None):
    rng = np.random.default_rng(42)
    R = rng.standard_normal(layer.forward(x).shape)

    def loss():
        return float(np.sum(layer.forward(x) * R))

    loss()
    dx = layer.backward(R)
    grads = dict(layer.grads)
    sub = params if params is not None else {k: (layer, k) for k in layer.params}
    for name, (owner, key) in sub.items():
        analytic = grads[name] if params is None else owner.grads[key]
        assert rel_error(analytic, numeric_grad(loss, owner.params[key])) < 1e-4, name
    assert rel_error(dx, numeric_grad(loss, x)) < 1e-4


def test_dense_gradients():
    rng = np.random.default_rng(0)
    check_layer(Dense(4, 3, rng), rng.standard_normal((2, 5, 4)))
    check_layer(Dense(4, 3, rng, activation="relu"), rng.standard_normal((6, 4)))


def test_embedding_gradients_and_examples():
    rng = np.random.default_rng(1)
    emb = Embedding(12, 5, rng)
    check_layer(emb, rng.standard_normal((3, 12)))
    assert emb.forward(np.zeros((2, 12))).shape == (2, 12, 5)
    emb.params["position"][:] = 0
    assert not emb.forward(np.zeros((1, 12))).any()
    x = rng.standard_normal((1, 12))
    assert np.allclose(emb.forward(2 * x), 2 * emb.forward(x))
    with pytest.raises(ValueError):
        emb.forward(np.zeros((1, 11)))


@pytest.mark.parametrize("reverse", [False, True])
def test_gru_direction_gradients(reverse):
    rng = np.random.default_rng(2)
    check_layer(GRUDirection(3, 4, rng, reverse=reverse), rng.standard_normal((2, 5, 3)))


def test_gru_cell_zero_parameters():
    H = 3
    W, U, b = np.zeros((2, 3 * H)), np.zeros((H, 3 * H)), np.zeros(3 * H)
    h = np.array([[0.4, -1.0, 2.0]])
    assert np.allclose(gru_cell(np.ones((1, 2)), h, W, U, b), 0.5 * h)
    assert not gru_cell(np.ones((1, 2)), np.zeros((1, H)), W, U, b).any()


def test_gru_cell_jacobian():
    rng = np.random.default_rng(3)
    H = 3
    W, U, b = rng.normal(0, 0.5, (2, 3 * H)), rng.normal(0, 0.5, (H, 3 * H)), rng.normal(0, 0.5, 3 * H)
    x = rng.standard_normal((1, 2))
    h = rng.standard_normal((1, H))
    r = rng.standard_normal(H)
    g = GRUDirection(2, H)
    g.params = {"W": W, "U": U, "b": b}
    # single step from zero state equals the standalone cell from zero state
    assert np.allclose(g.forward(x[:, None, :])[:, 0], gru_cell(x, np.zeros((1, H)), W, U, b))

    def f():
        return float((gru_cell(x, h, W, U, b) @ r)[0])
    eps = 1e-6
    for arr in (W, U, b, h):
        num = numeric_grad(f, arr, eps)
        # second route: the same cell differenced with a smaller step
        num2 = numeric_grad(f, arr, eps / 10)
        assert rel_error(num, num2) < 1e-6


def test_bigru_gradients_and_shapes():
    rng = np.random.default_rng(4)
    layer = BiGRU(3, 4, 5, rng)
    x = rng.standard_normal((2, 4, 3))
    params = {f"{p}.{k}": (sub, k) for p, sub in layer.sublayers.items() for k in sub.params}
    check_layer(layer, x, params)
    assert layer.states(rng.standard_normal((1, 1, 3))).shape == (1, 1, 8)


def test_bigru_reversal_symmetry():
    rng = np.random.default_rng(5)
    layer = BiGRU(3, 4, 5, rng)
    layer.bwd.params = {k: v.copy() for k, v in layer.fwd.params.items()}
    x = rng.standard_normal((2, 6, 3))
    s = layer.states(x)
    s_rev = layer.states(x[:, ::-1])
    assert np.allclose(s[:, :, :4], s_rev[:, ::-1, 4:])
    assert np.allclose(s[:, :, 4:], s_rev[:, ::-1, :4])


def test_bigru_zero_params_output_bias():
    layer = BiGRU(2, 3, 4)
    for sub in layer.sublayers.values():
        for k in sub.params:
            sub.params[k][:] = 0
    layer.proj.params["b"][:] = [1, 2, 3, 4]
    out = layer.forward(np.random.default_rng(0).standard_normal((2, 3, 2)))
    assert np.allclose(out, [1, 2, 3, 4])


def test_attention_examples():
    out, w = attention(np.array([[1.0, 0.0]]), np.eye(2), np.eye(2))
    assert w[0] == pytest.approx([0.6697615493266569, 0.3302384506733431], abs=1e-12)
    assert np.allclose(out, w)
    V = np.array([[3.0, -1.0]])
    assert np.allclose(attention(np.ones((2, 2)), np.ones((1, 2)), V)[0], V)
    V = np.array([[1.0, 2.0], [3.0, 6.0], [5.0, 1.0]])
    out, w = attention(np.random.default_rng(0).random((4, 2)), np.ones((3, 2)), V)
    assert np.allclose(out, V.mean(axis=0))
    with pytest.raises(ValueError):
        attention(np.ones((1, 2)), np.ones((2, 3)), np.ones((2, 2)))


def test_attention_rows_are_convex_combinations():
    rng = np.random.default_rng(6)
    Q, K, V = rng.standard_normal((5, 4)), rng.standard_normal((7, 4)), rng.standard_normal((7, 3))
    out, w = attention(Q, K, V)
    assert np.all(np.abs(w.sum(axis=-1) - 1) < 1e-9) and np.all(w >= 0)
    assert np.all(out >= V.min(axis=0) - 1e-12) and np.all(out <= V.max(axis=0) + 1e-12)


def test_multi_head_attention_gradients():
    rng = np.random.default_rng(7)
    mha = MultiHeadAttention(4, 2, rng)
    check_layer(mha, rng.standard_normal((2, 3, 4)))
    assert np.allclose(mha.weights.sum(axis=-1), 1.0, atol=1e-9)
    with pytest.raises(ValueError):
        MultiHeadAttention(5, 2)


def test_layer_norm_statistics_and_gradients():
    rng = np.random.default_rng(8)
    ln = LayerNorm(6)
    x = rng.standard_normal((4, 3, 6)) * 5 + 2
    xhat, _ = ln.normalize(x)
    assert np.all(np.abs(xhat.mean(axis=-1)) < 1e-9)
    assert np.all(np.abs(xhat.var(axis=-1) - 1) < 1e-6)
    ln.params["gamma"] = rng.standard_normal(6)
    ln.params["beta"] = rng.standard_normal(6)
    check_layer(ln, x)


def test_encoder_block_gradients_and_zero_sublayers():
    rng = np.random.default_rng(9)
    enc = EncoderBlock(4, 2, 6, 0.0, rng)
    params = {f"{p}.{k}": (sub, k) for p, sub in enc.sublayers.items() for k in sub.params}
    x = rng.standard_normal((2, 3, 4))
    check_layer(enc, x, params)
    for sub in (enc.attn, enc.ff1, enc.ff2):
        for k in sub.params:
            sub.params[k][:] = 0
    # with both sublayers silent the block is LN(LN(x)), which equals LN(x)
    expect, _ = LayerNorm(4).normalize(x)
    assert np.allclose(enc.forward(x), expect, atol=1e-7)
    assert enc.forward(x).shape == x.shape


def _tiny_config(**kw):
    base = dict(seq_len=6, num_classes=3, embed_dim=4, gru_hidden=8, heads=2, ffn_dim=8, fc_dim=5,
                dropout=0.0, seed=0)
    base.update(kw)
    return NetConfig(**base)


def test_full_network_gradient_check():
    rng = np.random.default_rng(10)
    net = Network(_tiny_config())
    X = rng.random((4, 6))
    y = np.array([0, 1, 2, 1])

    def loss():
        return cross_entropy(net.forward(X, train=True), y)

    logits = net.forward(X, train=True)
    net.backward(cross_entropy_grad(logits, y))
    grads = {k: v.copy() for k, v in net.grads().items()}
    params = net.params()
    assert set(grads) == set(params)
    for name, arr in params.items():
        assert rel_error(grads[name], numeric_grad(loss, arr)) < 1e-4, name


def test_network_shapes_and_batch_permutation():
    net = Network(_tiny_config(num_classes=5, dropout=0.1))
    X = np.random.default_rng(11).random((7, 6))
    logits = net.forward(X)
    assert logits.shape == (7, 5)
    perm = np.random.default_rng(0).permutation(7)
    assert np.allclose(net.forward(X[perm]), logits[perm])
    P = net.predict_proba(X, batch_size=3)
    assert np.all(np.abs(P.sum(axis=1) - 1) < 1e-9)
    with pytest.raises(ValueError):
        net.forward(np.zeros((1, 5)))


def test_net_config_validation():
    with pytest.raises(ConfigError):
        NetConfig(seq_len=4, num_classes=2, gru_hidden=3, heads=4)
    with pytest.raises(ConfigError):
        NetConfig(seq_len=0, num_classes=2)
    with pytest.raises(ConfigError):
        NetConfig(seq_len=4, num_classes=2, lr=0)
    assert NetConfig(seq_len=4, num_classes=2).model_dim == 128


def test_cross_entropy_examples():
    assert cross_entropy(np.array([[1.0, 2.0]]), np.array([1])) == pytest.approx(0.31326168751822286, abs=1e-12)
    assert cross_entropy(np.zeros((3, 5)), np.array([0, 2, 4])) == pytest.approx(math.log(5))
    assert cross_entropy(np.array([[0.0, 800.0]]), np.array([1])) == pytest.approx(0.0, abs=1e-12)
    assert softmax(np.array([[1000.0, 1000.0]])).tolist() == [[0.5, 0.5]]


def test_adam_examples():
    p, m, v = adam_update(np.array([1.0, 1.0]), np.array([3.0, -0.2]), np.zeros(2), np.zeros(2), 1)
    assert np.allclose(p, [1 - 0.001, 1 + 0.001], atol=1e-9)
    opt = Adam()
    params = {"w": np.array([2.0])}
    for _ in range(5):
        opt.step(params, {"w": np.array([0.0])})
    assert params["w"][0] == 2.0
    # hand recurrence for g = 1 then g = -1
    opt = Adam(lr=0.1)
    params = {"w": np.array([0.0])}
    opt.step(params, {"w": np.array([1.0])})
    opt.step(params, {"w": np.array([-1.0])})
    m1, v1 = 0.1, 0.001
    m2, v2 = 0.9 * m1 - 0.1, 0.999 * v1 + 0.001
    w1 = -0.1 * (m1 / 0.1) / (math.sqrt(v1 / 0.001) + 1e-8)
    w2 = w1 - 0.1 * (m2 / (1 - 0.81)) / (math.sqrt(v2 / (1 - 0.999 ** 2)) + 1e-8)
    assert opt.m["w"][0] == pytest.approx(m2) and opt.v["w"][0] == pytest.approx(v2)
    assert params["w"][0] == pytest.approx(w2, abs=1e-12)
    with pytest.raises(ValueError):
        adam_update(np.zeros(1), np.zeros(1), np.zeros(1), np.zeros(1), 0)


def test_weight_container_round_trip(tmp_path):
    net = Network(_tiny_config())
    params = NetParams.from_network(net)
    save_params(tmp_path / "w.tgnw", params)
    back = load_params(tmp_path / "w.tgnw")
    assert back.config == params.config
    X = np.random.default_rng(12).random((3, 6))
    assert np.array_equal(back.build().forward(X), net.forward(X))
    assert dumps_params(back) == dumps_params(params)
    with pytest.raises(ValueError):
        loads_params(b"NOPE" + dumps_params(params)[4:])


def test_memorizes_twenty_samples():
    rng = np.random.default_rng(13)
    X = rng.random((20, 6))
    y = rng.integers(0, 2, 20)
    cfg = _tiny_config(num_classes=2, gru_hidden=8, fc_dim=16, lr=0.01, batch_size=20)
    net = Network(cfg)
    opt = Adam(lr=cfg.lr)
    for _ in range(200):
        logits = net.forward(X, train=True)
        net.backward(cross_entropy_grad(logits, y))
        opt.step(net.params(), net.grads())
    assert cross_entropy(net.forward(X), y) < 0.05


def test_train_is_deterministic_and_keeps_best_snapshot(tmp_path):
    rng = np.random.default_rng(14)
    X = rng.random((60, 6))
    y = (X[:, 0] > 0.5).astype(int)
    cfg = _tiny_config(num_classes=2, epochs=3, k_folds=3, batch_size=16)
    p1, log1 = train(X, y, cfg)
    p2, log2 = train(X, y, cfg)
    assert log1.records == log2.records
    assert len(log1.records) == 9
    best = max(log1.records, key=lambda r: r[3])
    assert log1.best_val_acc == best[3]
    assert (log1.best_fold, log1.best_epoch) == next((f, e) for f, e, _, a in log1.records if a == best[3])
    for k in p1.tensors:
        assert np.array_equal(p1.tensors[k], p2.tensors[k])
    log1.write_csv(tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().startswith("fold,epoch,loss,val_acc\n")


def test_fold_splits_partition():
    y = np.array([0, 1] * 10)
    splits = fold_splits(y, 4, 0)
    assert sorted(np.concatenate([va for _, va in splits]).tolist()) == list(range(20))
    (tr, va), = fold_splits(y, 1, 0, 0.25)
    assert len(va) == 5 and np.intersect1d(tr, va).size == 0


def test_divergence_is_reported():
    X = np.random.default_rng(15).random((20, 6))
    X[0, 0] = np.inf
    with pytest.raises(DivergenceError):
        train(X, np.arange(20) % 2, _tiny_config(num_classes=2, epochs=1, k_folds=1, batch_size=20))
