import numpy as np
import pytest

from gaborcnn.errors import ConfigError, ShapeError
from gaborcnn.gabor import GaborParams, build_bank, ones_bank
from gaborcnn.gof import GofLayer
from gaborcnn.optim import OptimizerConfig
from gaborcnn.tensors import (
    Tensor4,
    correlate2d_filter_grad,
    correlate2d_raw,
)
from gaborcnn.verify import ScalarAdadelta, fd_gradient, relative_error


def make_layer(M=1, D=4, U=4, V=1, W=3, v=1, seed=0, ones=False, **kw):
    params = GaborParams(U, V, W)
    bank = ones_bank(params) if ones else build_bank(params)
    return GofLayer(M, D, bank, v, rng=np.random.default_rng(seed), **kw)


def test_modulate_identity_with_ones_bank():
    layer = make_layer(M=2, D=3, ones=True)
    mod = layer.modulate()
    for u in range(4):
        assert np.array_equal(mod[:, u], layer.learned)


def test_modulate_matches_explicit_hadamard():
    layer = make_layer(M=1, D=4, U=4, W=3, seed=7)
    mod = layer.modulate()
    for u in range(4):
        g = layer.bank.kernel(u, 1)
        for d in range(4):
            expected = layer.learned[0, d] * g
            assert np.array_equal(mod[0, u, d], expected)


def test_modulate_linearity():
    layer = make_layer(M=2, D=2, seed=8)
    before = layer.modulate()
    layer.learned *= 2.0
    assert np.allclose(layer.modulate(), 2.0 * before, rtol=0, atol=0)


def test_modulate_kernel_size_mismatch():
    layer = make_layer()
    layer.learned = np.zeros((1, 4, 5, 5))
    with pytest.raises(ConfigError):
        layer.modulate()


def test_forward_worked_example_shapes():
    x = Tensor4(np.random.default_rng(0).standard_normal((1, 4, 32, 32)),
                orient_groups=4)
    layer = make_layer(M=1, D=4, U=4, W=3, in_orient_groups=4)
    out = layer.forward(x)
    assert out.shape == (1, 4, 30, 30)
    assert out.orient_groups == 4

    layer20 = make_layer(M=20, D=4, U=4, W=3, in_orient_groups=4)
    out20 = layer20.forward(x)
    assert out20.shape == (1, 80, 30, 30)
    assert out20.orient_groups == 4


def test_forward_identity_modulation_reduces_to_plain_conv():
    rng = np.random.default_rng(1)
    layer = make_layer(M=1, D=3, ones=True, seed=2)
    x = rng.standard_normal((2, 3, 8, 8))
    out = layer.forward(Tensor4(x)).data
    plain = correlate2d_raw(x, layer.learned)
    for u in range(4):
        assert relative_error(out[:, u : u + 1], plain) <= 1e-12


def test_forward_channel_and_group_mismatch():
    layer = make_layer(M=1, D=4)
    with pytest.raises(ShapeError):
        layer.forward(Tensor4(np.zeros((1, 3, 8, 8))))
    with pytest.raises(ShapeError):
        layer.forward(Tensor4(np.zeros((1, 4, 8, 8)), orient_groups=4))


def test_forward_equals_per_orientation_decomposition():
    rng = np.random.default_rng(3)
    layer = make_layer(M=3, D=2, U=4, V=2, W=3, v=2, seed=4, pad=1)
    x = rng.standard_normal((2, 2, 7, 7))
    out = layer.forward(Tensor4(x)).data
    mod = layer.modulate()
    for i in range(3):
        for u in range(4):
            ref = correlate2d_raw(x, mod[i, u][None], pad=1)[:, 0]
            ref = ref + layer.bias[i * 4 + u]
            assert relative_error(out[:, i * 4 + u], ref) <= 1e-10


def test_backward_zero_grad():
    layer = make_layer(M=2, D=2)
    x = np.random.default_rng(5).standard_normal((1, 2, 6, 6))
    out = layer.forward(Tensor4(x))
    grad_in, grad_learned = layer.backward(Tensor4(np.zeros_like(out.data)))
    assert not grad_in.data.any()
    assert not grad_learned.any()
    assert not layer.grad_bias.any()


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(6)
    layer = make_layer(M=2, D=2, U=2, W=3, seed=7)
    x = rng.standard_normal((1, 2, 6, 6))

    def loss():
        out = layer.forward(Tensor4(x)).data
        return float(np.sum(out**2))

    out = layer.forward(Tensor4(x)).data
    grad_in, grad_learned = layer.backward(Tensor4(2.0 * out))
    fd = fd_gradient(loss, layer.learned, step=1e-5)
    # per-element |a-b| / max(1, |a|, |b|)
    denom = np.maximum(1.0, np.maximum(np.abs(grad_learned), np.abs(fd)))
    assert np.max(np.abs(grad_learned - fd) / denom) <= 1e-6
    fd_in = fd_gradient(loss, x, step=1e-5)
    assert relative_error(grad_in.data, fd_in) <= 1e-6


def test_backward_ones_bank_is_pure_orientation_sum():
    rng = np.random.default_rng(8)
    layer = make_layer(M=2, D=3, ones=True, seed=9)
    x = rng.standard_normal((2, 3, 7, 7))
    out = layer.forward(Tensor4(x))
    g = rng.standard_normal(out.data.shape)
    _, grad_learned = layer.backward(Tensor4(g))
    grad_mod = correlate2d_filter_grad(x, g, 0, (3, 3)).reshape(2, 4, 3, 3, 3)
    assert np.array_equal(grad_learned, grad_mod.sum(axis=1))


def test_backward_shape_mismatch():
    layer = make_layer(M=1, D=2)
    layer.forward(Tensor4(np.zeros((1, 2, 6, 6))))
    with pytest.raises(ShapeError):
        layer.backward(Tensor4(np.zeros((1, 3, 4, 4))))


def test_apply_update_zero_grad_is_noop():
    for method in ("sgd", "adadelta"):
        layer = make_layer(M=2, D=2, seed=10)
        before = layer.learned.copy()
        layer.apply_update(
            OptimizerConfig(method=method),
            lr=1.0,
            grad_learned=np.zeros_like(layer.learned),
            grad_bias=np.zeros_like(layer.bias),
        )
        assert np.array_equal(layer.learned, before)


def test_sgd_unit_gradient_literal_update():
    layer = make_layer(M=1, D=1, seed=11)
    before = layer.learned.copy()
    layer.apply_update(
        OptimizerConfig(method="sgd"),
        lr=1.0,
        grad_learned=np.ones_like(layer.learned),
        grad_bias=np.zeros_like(layer.bias),
    )
    assert np.array_equal(layer.learned, before - 1.0)


def test_adadelta_matches_scalar_transcription():
    layer = make_layer(M=1, D=1, W=3, seed=12)
    rng = np.random.default_rng(13)
    grads = [rng.standard_normal(layer.learned.shape) for _ in range(3)]
    refs = np.empty_like(layer.learned)
    flat_ref = refs.ravel()
    oracles = [ScalarAdadelta(lr=0.5) for _ in range(layer.learned.size)]
    vals = layer.learned.ravel().copy()
    for g in grads:
        for i, o in enumerate(oracles):
            vals[i] = o.step(vals[i], g.ravel()[i])
    for g in grads:
        layer.apply_update(OptimizerConfig(method="adadelta"), lr=0.5,
                           grad_learned=g, grad_bias=np.zeros_like(layer.bias))
    assert relative_error(layer.learned.ravel(), vals) <= 1e-12


def test_update_shape_mismatch():
    layer = make_layer()
    with pytest.raises(ShapeError):
        layer.apply_update(OptimizerConfig(), lr=1.0,
                           grad_learned=np.zeros((2, 2, 3, 3)))


def test_parameter_compression_ratio():
    layer = make_layer(M=1, D=4, U=4, W=3)
    persisted, effective = layer.param_counts()
    assert (persisted, effective) == (36, 144)
    layer2 = make_layer(M=5, D=8, U=4, V=2, W=5, v=2)
    p2, e2 = layer2.param_counts()
    assert p2 == 5 * 8 * 25
    assert e2 == p2 * 4


def test_serialization_roundtrip():
    layer = make_layer(M=2, D=3, U=4, V=2, W=5, v=2, seed=14, pad=2)
    layer.bias = np.random.default_rng(15).standard_normal(layer.bias.shape)
    blob = layer.save_bytes()
    loaded = GofLayer.load_bytes(blob)
    assert np.array_equal(loaded.learned, layer.learned)
    assert np.array_equal(loaded.bias, layer.bias)
    assert np.array_equal(loaded.bank.kernels, layer.bank.kernels)
    assert (loaded.v, loaded.pad, loaded.stride) == (2, 2, 1)
    with pytest.raises(ConfigError):
        GofLayer.load_bytes(b"XXXX" + blob[4:])


def test_update_determinism():
    def run():
        layer = make_layer(M=2, D=2, seed=16)
        x = np.random.default_rng(17).standard_normal((1, 2, 6, 6))
        for _ in range(5):
            out = layer.forward(Tensor4(x))
            layer.backward(Tensor4(out.data))
            layer.apply_update(OptimizerConfig(weight_decay=5e-5), lr=1.0)
        return layer.learned

    assert np.array_equal(run(), run())
