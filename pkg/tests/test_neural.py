import numpy as np
import pytest

from pmrf_lab import neural as nn
from pmrf_lab.errors import BadMagic, Truncated
from pmrf_lab.tensor_core import RngKey


def fd_max_rel_error(params, x, t, cond, target, h=1e-5):
    _, grads = nn.loss_and_grad(params, x, t, cond, target)
    arrays = params.arrays()
    worst = 0.0
    for a, g in zip(arrays, grads.arrays()):
        for idx in np.ndindex(a.shape):
            old = a[idx]
            a[idx] = old + h
            lp, _ = nn.loss_and_grad(params, x, t, cond, target)
            a[idx] = old - h
            lm, _ = nn.loss_and_grad(params, x, t, cond, target)
            a[idx] = old
            fd = (lp - lm) / (2 * h)
            worst = max(worst, abs(fd - g[idx]) / max(abs(fd), abs(g[idx]), 1e-6))
    return worst


def test_init_shapes_and_determinism():
    p = nn.mlp_init([2, 8, 2], key=RngKey(1))
    assert [w.shape for w in p.weights] == [(8, 2), (2, 8)]
    assert [b.shape for b in p.biases] == [(8,), (2,)]
    q = nn.mlp_init([2, 8, 2], key=RngKey(1))
    assert all(np.array_equal(a, b) for a, b in zip(p.arrays(), q.arrays()))


def test_init_weight_std():
    p = nn.mlp_init([100, 100], key=RngKey(2))
    assert abs(p.weights[0].std() - 0.1) < 0.01


def test_zero_output_layer():
    p = nn.mlp_init([3, 5, 2], key=RngKey(0), n_freqs=4, cond_width=2)
    p.weights[-1][:] = 0
    out = nn.forward(p, np.ones((7, 3)), 0.3, np.ones((7, 2)))
    assert np.all(out == 0)


def test_forward_deterministic():
    p = nn.mlp_init([3, 5, 2], key=RngKey(0))
    x = RngKey(1).generator().standard_normal((4, 3))
    assert nn.forward(p, x).tobytes() == nn.forward(p, x).tobytes()


def test_zero_residual():
    p = nn.mlp_init([2, 4, 1], key=RngKey(3))
    x = np.ones((3, 2))
    loss, grads = nn.loss_and_grad(p, x, None, None, nn.forward(p, x))
    assert loss == 0
    assert all(np.all(g == 0) for g in grads.arrays())


def test_single_linear_layer_by_hand():
    p = nn.mlp_init([1, 1], key=RngKey(0))
    p.weights[0][:] = 2.0
    loss, grads = nn.loss_and_grad(p, np.array([[1.0]]), None, None, np.array([[0.0]]))
    assert loss == 4.0
    assert grads.weights[0][0, 0] == 4.0
    assert grads.biases[0][0] == 4.0


def test_gradients_2_16_2():
    g = RngKey(7).generator()
    p = nn.mlp_init([2, 16, 2], key=RngKey(7))
    p.biases[0][:] = g.standard_normal(16) * 0.1
    assert fd_max_rel_error(p, g.standard_normal((5, 2)), None, None, g.standard_normal((5, 2))) < 1e-4


def test_gradients_with_time_and_cond():
    g = RngKey(8).generator()
    p = nn.mlp_init([2, 6, 6, 2], cond_width=3, key=RngKey(8), n_freqs=3)
    err = fd_max_rel_error(p, g.standard_normal((4, 2)), g.uniform(size=4), g.standard_normal((4, 3)),
                           g.standard_normal((4, 2)))
    assert err < 1e-4


def test_adamw_first_step():
    p = nn.MlpParams([np.zeros((1, 1))], [np.zeros(1)])
    st = nn.adamw_init(p, lr=0.1, betas=(0.9, 0.95), eps=1e-8, weight_decay=0.0)
    g = nn.MlpParams([np.ones((1, 1))], [np.zeros(1)])
    p2, st2 = nn.adamw_step(st, p, g)
    assert p2.weights[0][0, 0] == pytest.approx(-0.1, abs=1e-8)
    assert p2.biases[0][0] == 0.0
    assert st2.step == 1 and st.step == 0
    assert p.weights[0][0, 0] == 0.0


def test_adamw_decoupled_decay():
    p = nn.MlpParams([np.ones((1, 1))], [np.ones(1)])
    st = nn.adamw_init(p, lr=0.1, weight_decay=0.01)
    p2, _ = nn.adamw_step(st, p, p.zeros_like())
    assert p2.weights[0][0, 0] == pytest.approx(0.999, abs=1e-15)


def test_ema():
    zero = nn.MlpParams([np.zeros((1, 1))], [np.zeros(1)])
    one = nn.MlpParams([np.ones((1, 1))], [np.ones(1)])
    e = nn.ema_update(nn.EmaParams(zero, 0.9999), one)
    assert e.shadow.weights[0][0, 0] == pytest.approx(1e-4, abs=1e-15)
    same = nn.ema_update(nn.EmaParams(one, 0.9999), one)
    assert same.shadow.weights[0][0, 0] == 1.0
    e = nn.EmaParams(zero, 0.999)
    for _ in range(10_000):
        e = nn.ema_update(e, one)
    assert e.shadow.weights[0][0, 0] == pytest.approx(1 - 0.999**10_000, rel=1e-10)
    assert e.shadow.weights[0][0, 0] == pytest.approx(0.99995, abs=1e-5)


def test_linear_task_trains_down():
    g = RngKey(11).generator()
    x = g.standard_normal((2000, 3))
    y = x @ np.array([[1.0, -2.0], [0.5, 0.0], [0.0, 3.0]]) + 0.1
    p0 = nn.mlp_init([3, 32, 2], key=RngKey(12))
    cfg = nn.TrainConfig(epochs=30, batch_size=64, lr=3e-3, weight_decay=0.0, ema_decay=0.99)
    p = nn.train_regression(p0, cfg, len(x), lambda idx, _k: (x[idx], None, None, y[idx]), RngKey(13))
    l0, _ = nn.loss_and_grad(p0, x, None, None, y)
    l1, _ = nn.loss_and_grad(p, x, None, None, y)
    assert l1 < 0.01 * l0


def test_training_is_bitwise_reproducible():
    g = RngKey(1).generator()
    x = g.standard_normal((300, 2))
    cfg = nn.TrainConfig(epochs=2, batch_size=32)

    def run():
        p0 = nn.mlp_init([2, 8, 2], key=RngKey(5))
        return nn.train_regression(p0, cfg, 300, lambda idx, _k: (x[idx], None, None, x[idx]), RngKey(6))

    a, b = run(), run()
    assert all(u.tobytes() == v.tobytes() for u, v in zip(a.arrays(), b.arrays()))


def test_checkpoint_roundtrip(tmp_path):
    p = nn.mlp_init([2, 5, 2], cond_width=3, key=RngKey(0), n_freqs=4)
    path = tmp_path / "m.ckpt"
    nn.save_checkpoint(path, p, {"lr": 0.1})
    q, cfg = nn.load_checkpoint(path)
    assert cfg == {"lr": 0.1}
    assert q.cond_width == 3 and q.n_freqs == 4
    assert all(np.array_equal(a, b) for a, b in zip(p.arrays(), q.arrays()))
    np.testing.assert_array_equal(p.freqs, q.freqs)
    raw = path.read_bytes()
    assert raw[:8] == nn.MAGIC


def test_checkpoint_errors(tmp_path):
    p = nn.mlp_init([2, 5, 2], key=RngKey(0))
    path = tmp_path / "m.ckpt"
    nn.save_checkpoint(path, p)
    raw = path.read_bytes()
    (tmp_path / "short.ckpt").write_bytes(raw[:-5])
    with pytest.raises(Truncated):
        nn.load_checkpoint(tmp_path / "short.ckpt")
    (tmp_path / "bad.ckpt").write_bytes(b"XXXXXXXX" + raw[8:])
    with pytest.raises(BadMagic):
        nn.load_checkpoint(tmp_path / "bad.ckpt")
