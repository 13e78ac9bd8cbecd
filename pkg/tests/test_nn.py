import io

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import signal

from voxsep import nn
from voxsep.errors import FormatError, InvalidArgument, ShapeError, StateError, StatError
from voxsep.nn import Tensor, checkpoint
from voxsep.nn import functional as F


def leaf(shape, seed, scale=1.0):
    return Tensor(np.random.default_rng(seed).standard_normal(shape) * scale, requires_grad=True,
                  dtype=np.float64)


def ref_conv2d(x, w, stride, pads):
    """Direct scipy cross-correlation of the padded input, then strided."""
    xp = np.pad(x, ((0, 0), (0, 0)) + tuple(pads))
    n, f = x.shape[0], w.shape[0]
    full = np.array([[sum(signal.correlate(xp[i, c], w[o, c], mode="valid") for c in range(x.shape[1]))
                      for o in range(f)] for i in range(n)])
    return full[:, :, ::stride, ::stride]


# ---------------------------------------------------------------- tensor basics

def test_arithmetic_gradients():
    a, b = leaf((3, 4), 0), leaf((3, 4), 1)
    out = ((a * b) - a + 2.0).sum()
    out.backward()
    assert np.allclose(a.grad, b.data - 1.0)
    assert np.allclose(b.grad, a.data)


def test_broadcast_gradient_is_reduced():
    a, b = leaf((2, 3), 0), leaf((3,), 1)
    (a + b).sum().backward()
    assert b.grad.shape == (3,)
    assert np.allclose(b.grad, 2.0)


def test_gradient_accumulates_over_reuse():
    a = leaf((5,), 0)
    (a * a).sum().backward()
    assert np.allclose(a.grad, 2 * a.data)


def test_no_grad_builds_no_graph():
    a = leaf((3,), 0)
    with nn.no_grad():
        y = (a * 2.0).sum()
    assert not y.requires_grad


def test_activations_match_numpy():
    x = leaf((50,), 3, 2.0)
    assert np.allclose(F.relu(x).data, np.maximum(x.data, 0))
    assert np.allclose(F.leaky_relu(x, 0.2).data, np.where(x.data > 0, x.data, 0.2 * x.data))
    assert np.allclose(F.sigmoid(x).data, 1 / (1 + np.exp(-x.data)))
    assert np.allclose(F.tanh(x).data, np.tanh(x.data))


def test_sigmoid_is_stable_for_large_inputs():
    x = Tensor(np.array([-1000.0, 1000.0]), dtype=np.float64)
    assert np.array_equal(F.sigmoid(x).data, [0.0, 1.0])


def test_l1_loss_value_and_shape_check():
    p = Tensor(np.array([1.0, -2.0, 3.0]), dtype=np.float64)
    assert F.l1_loss(p, np.array([0.0, 0.0, 0.0])).item() == pytest.approx(2.0)
    with pytest.raises(ShapeError):
        F.l1_loss(p, np.zeros(2))


# ---------------------------------------------------------------- convolution

@given(st.integers(1, 2), st.integers(1, 3), st.integers(1, 3), st.integers(3, 9), st.integers(3, 9),
       st.sampled_from([1, 3, 5]), st.sampled_from([1, 2]), st.integers(0, 1000))
def test_conv2d_same_matches_scipy(n, c, f, h, w, k, stride, seed):
    x = np.random.default_rng(seed).standard_normal((n, c, h, w))
    ker = np.random.default_rng(seed + 1).standard_normal((f, c, k, k))
    y = F.conv2d(Tensor(x, dtype=np.float64), Tensor(ker, dtype=np.float64), stride=stride).data
    pads = [F.same_padding(s, k, stride)[:2] for s in (h, w)]
    ref = ref_conv2d(x, ker, stride, pads)
    assert y.shape == (n, f, -(-h // stride), -(-w // stride))
    assert np.allclose(y, ref, atol=1e-10)


def test_conv2d_valid_shape():
    x = Tensor(np.ones((1, 1, 6, 7)), dtype=np.float64)
    y = F.conv2d(x, Tensor(np.ones((2, 1, 3, 3)), dtype=np.float64), padding="valid")
    assert y.shape == (1, 2, 4, 5)
    assert np.all(y.data == 9.0)


def test_conv_errors():
    x = Tensor(np.ones((1, 2, 5, 5)), dtype=np.float64)
    with pytest.raises(ShapeError):
        F.conv2d(x, Tensor(np.ones((1, 3, 3, 3)), dtype=np.float64))
    with pytest.raises(ShapeError):
        F.conv1d(Tensor(np.ones((1, 1, 2)), dtype=np.float64), Tensor(np.ones((1, 1, 5)), dtype=np.float64))
    with pytest.raises(InvalidArgument):
        F.conv2d(x, Tensor(np.ones((1, 2, 3, 3)), dtype=np.float64), padding="full")


@given(st.integers(2, 9), st.integers(2, 9), st.sampled_from([3, 5]), st.integers(0, 1000))
def test_conv_transpose_is_adjoint(h, w, k, seed):
    rng = np.random.default_rng(seed)
    ker = rng.standard_normal((3, 2, k, k))
    x = rng.standard_normal((1, 2, h, w))
    fwd = F.conv2d(Tensor(x, dtype=np.float64), Tensor(ker, dtype=np.float64), stride=2).data
    y = rng.standard_normal(fwd.shape)
    back = F.conv_transpose2d(Tensor(y, dtype=np.float64), Tensor(ker, dtype=np.float64), stride=2,
                              output_shape=(h, w)).data
    assert back.shape == x.shape
    assert np.isclose(np.sum(fwd * y), np.sum(x * back), rtol=1e-10, atol=1e-10)


def test_conv1d_matches_numpy_correlate():
    rng = np.random.default_rng(5)
    x, k = rng.standard_normal(40), rng.standard_normal(5)
    y = F.conv1d(Tensor(x[None, None], dtype=np.float64), Tensor(k[None, None], dtype=np.float64)).data
    assert np.allclose(y[0, 0], np.correlate(x, k, mode="valid"))


# ---------------------------------------------------------------- normalisation / dropout

def test_batch_norm_training_statistics():
    x = leaf((8, 3, 4, 4), 0, 3.0)
    rm, rv = np.zeros(3), np.ones(3)
    y = F.batch_norm(x, Tensor(np.ones(3), dtype=np.float64), Tensor(np.zeros(3), dtype=np.float64), rm, rv,
                     training=True, momentum=0.9, eps=1e-5).data
    assert np.allclose(y.mean(axis=(0, 2, 3)), 0.0, atol=1e-10)
    assert np.allclose(y.var(axis=(0, 2, 3)), 1.0, atol=1e-3)
    mu = x.data.mean(axis=(0, 2, 3))
    var = x.data.var(axis=(0, 2, 3))
    assert np.allclose(rm, 0.1 * mu)
    assert np.allclose(rv, 0.9 + 0.1 * var)


def test_batch_norm_eval_uses_running_stats():
    x = leaf((2, 2, 3), 1)
    rm, rv = np.array([1.0, -1.0]), np.array([4.0, 0.25])
    g, b = Tensor(np.array([2.0, 1.0]), dtype=np.float64), Tensor(np.array([0.5, 0.0]), dtype=np.float64)
    y = F.batch_norm(x, g, b, rm.copy(), rv.copy(), training=False, eps=0.0).data
    expected = (x.data - rm[None, :, None]) / np.sqrt(rv)[None, :, None] * g.data[None, :, None] + b.data[None, :, None]
    assert np.allclose(y, expected)


def test_batch_norm_needs_two_values():
    x = leaf((1, 2, 1, 1), 0)
    with pytest.raises(StatError):
        F.batch_norm(x, leaf((2,), 1), leaf((2,), 2), np.zeros(2), np.ones(2), training=True)


def test_dropout_seeded_and_inverted():
    x = Tensor(np.ones(100000), dtype=np.float64)
    a = F.dropout(x, 0.5, seed=3).data
    assert np.array_equal(a, F.dropout(x, 0.5, seed=3).data)
    assert set(np.unique(a)) == {0.0, 2.0}
    assert abs(a.mean() - 1.0) < 0.02
    assert F.dropout(x, 0.5, training=False) is x
    with pytest.raises(InvalidArgument):
        F.dropout(x, 1.0)


# ---------------------------------------------------------------- shape helpers

def test_decimate_and_upsample():
    x = Tensor(np.arange(7.0)[None, None], dtype=np.float64)
    assert np.array_equal(F.decimate2(x).data[0, 0], [0, 2, 4, 6])
    up = F.linear_upsample2(Tensor(np.array([[[0.0, 2.0, 4.0]]]), dtype=np.float64)).data[0, 0]
    # 2L - 1 samples; interpolated midpoints between originals
    assert np.array_equal(up, [0, 1, 2, 3, 4])


def test_crop_centered():
    x = Tensor(np.arange(10.0)[None, None], dtype=np.float64)
    assert np.array_equal(F.crop(x, (4,)).data[0, 0], [3, 4, 5, 6])
    with pytest.raises(ShapeError):
        F.crop(x, (11,))


def test_crop_concat_channels():
    s = Tensor(np.zeros((1, 2, 9)), dtype=np.float64)
    u = Tensor(np.ones((1, 3, 5)), dtype=np.float64)
    assert F.crop_concat(s, u).shape == (1, 5, 5)


# ---------------------------------------------------------------- gradient checks per layer

LAYERS = {
    "conv2d": lambda p: F.conv2d(p[0], p[1], p[2], stride=2),
    "conv_transpose2d": lambda p: F.conv_transpose2d(p[0], p[3], p[4], stride=2, output_shape=(18, 13)),
    "conv1d": lambda p: F.conv1d(p[5], p[6], p[7]),
    "conv_transpose1d": lambda p: F.conv_transpose1d(p[5], p[8], None, stride=2, output_len=25),
    "batch_norm": lambda p: F.batch_norm(p[0], p[9], p[10], np.zeros(2), np.ones(2), training=True),
    "leaky_relu": lambda p: F.leaky_relu(p[0]),
    "relu": lambda p: F.relu(p[0]),
    "sigmoid": lambda p: F.sigmoid(p[0]),
    "tanh": lambda p: F.tanh(p[0]),
    "dropout": lambda p: F.dropout(p[0], 0.5, seed=1),
    "decimate2": lambda p: F.decimate2(p[5]),
    "linear_upsample2": lambda p: F.linear_upsample2(p[5]),
    "crop_concat": lambda p: F.crop_concat(p[5], F.crop(p[5], (7,))),
}


def _params():
    return [leaf((2, 2, 9, 7), 0), leaf((3, 2, 5, 5), 1), leaf((3,), 2),
            leaf((2, 3, 5, 5), 3), leaf((3,), 4), leaf((2, 2, 13), 5), leaf((3, 2, 5), 6), leaf((3,), 7),
            leaf((2, 1, 5), 8), leaf((2,), 9), leaf((2,), 10)]


@pytest.mark.parametrize("name", sorted(LAYERS))
def test_layer_gradients(name):
    params = _params()

    def fn():
        out = LAYERS[name](params)
        # a random linear functional gives every output element its own weight
        r = np.random.default_rng(99).standard_normal(out.shape)
        return (out * r).sum()

    assert nn.grad_check(fn, params, eps=1e-6, samples=8) < 1e-6


def test_l1_loss_gradient():
    p = leaf((4, 5), 0)
    t = np.random.default_rng(1).standard_normal((4, 5))
    assert nn.grad_check(lambda: F.l1_loss(p, t), [p], eps=1e-7) < 1e-5


# ---------------------------------------------------------------- Adam

def test_adam_matches_hand_iteration():
    p = nn.ParameterSet()
    t = p.add("w", np.array([1.0, -2.0]))
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    grads = [np.array([0.5, -1.0]), np.array([-0.25, 2.0])]
    m = v = np.zeros(2)
    w = np.array([1.0, -2.0])
    for k, g in enumerate(grads, start=1):
        t.grad = g.copy()
        nn.adam_step(p, lr, b1, b2, eps)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w = w - lr * (m / (1 - b1 ** k)) / (np.sqrt(v / (1 - b2 ** k)) + eps)
        assert np.allclose(t.data, w, rtol=1e-12)
    assert p.step_count == 2


def test_adam_first_step_is_lr_times_sign():
    p = nn.ParameterSet()
    t = p.add("w", np.zeros(3))
    t.grad = np.array([3.0, -0.01, 200.0])
    nn.adam_step(p, 0.5)
    assert np.allclose(t.data, [-0.5, 0.5, -0.5], atol=1e-6)


def test_adam_requires_gradients():
    p = nn.ParameterSet()
    p.add("w", np.zeros(2))
    with pytest.raises(StateError):
        nn.adam_step(p)


# ---------------------------------------------------------------- checkpoints

def _trained_set(dtype):
    p = nn.ParameterSet()
    for i, shape in enumerate([(3, 4), (5,), (2, 2, 2)]):
        p.add(f"layer{i}", np.random.default_rng(i).standard_normal(shape).astype(dtype))
    for _ in range(3):
        for _, t in p.items():
            t.grad = np.random.default_rng(7).standard_normal(t.shape).astype(dtype)
        nn.adam_step(p, 1e-2)
    return p


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_checkpoint_bit_exact(tmp_path, dtype):
    p = _trained_set(dtype)
    buffers = {"bn.mean": np.arange(4, dtype=dtype)}
    checkpoint.save(tmp_path / "c.bin", p, buffers)
    q, bufs = checkpoint.load(tmp_path / "c.bin")
    assert q.step_count == 3
    for name, t in p.items():
        assert q[name].data.dtype == t.data.dtype
        assert q[name].data.tobytes() == t.data.tobytes()
        assert q.m[name].tobytes() == p.m[name].tobytes()
        assert q.v[name].tobytes() == p.v[name].tobytes()
    assert bufs["bn.mean"].tobytes() == buffers["bn.mean"].tobytes()
    # saving the loaded set reproduces the same bytes
    assert checkpoint.to_bytes(q, bufs) == checkpoint.to_bytes(p, buffers)


def test_checkpoint_bad_magic(tmp_path):
    (tmp_path / "x.bin").write_bytes(b"NOPE" + bytes(32))
    with pytest.raises(FormatError):
        checkpoint.load(tmp_path / "x.bin")


def test_checkpoint_truncated():
    raw = checkpoint.to_bytes(_trained_set(np.float64))
    with pytest.raises(FormatError):
        checkpoint.read_params(io.BytesIO(raw[:-5]))
