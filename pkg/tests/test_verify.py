import cmath

import numpy as np

from gaborcnn.gabor import GaborParams
from gaborcnn.verify import (
    ScalarAdadelta,
    fd_gradient,
    oracle_correlate,
    oracle_gabor,
    oracle_gabor_imag,
    relative_error,
)


def test_oracle_gabor_center_value():
    # at z = 0 the wavelet reduces to (k^2/sigma^2)(1 - e^{-sigma^2/2})
    sigma = 2 * np.pi
    k = (np.pi / 2)  # v = 1
    expected = (k * k / sigma**2) * (1.0 - np.exp(-(sigma**2) / 2))
    params = GaborParams(num_orientations=4, num_scales=1, kernel_size=3, sigma=sigma)
    assert abs(oracle_gabor(params, 0, 1, 0.0, 0.0) - expected) <= 1e-15


def test_oracle_gabor_imag_vanishes_at_origin():
    params = GaborParams(num_orientations=4, num_scales=1, kernel_size=3,
                         sigma=2 * np.pi)
    for u in range(4):
        assert abs(oracle_gabor_imag(params, u, 1, 0.0, 0.0)) <= 1e-15


def test_oracle_gabor_matches_direct_complex_formula():
    # transcribe the definition once more, inline, with cmath
    sigma = 2 * np.pi
    u, v, U = 1, 2, 4
    params = GaborParams(num_orientations=U, num_scales=2, kernel_size=3,
                         sigma=sigma)
    kmag = (np.pi / 2) / np.sqrt(2.0) ** (v - 1)
    phi = u * np.pi / U
    for (x, y) in [(0.5, -1.0), (2.0, 3.0), (-1.5, 0.25)]:
        zz = x * x + y * y
        val = (kmag**2 / sigma**2) * np.exp(-kmag**2 * zz / (2 * sigma**2)) * (
            cmath.exp(1j * kmag * (np.cos(phi) * x + np.sin(phi) * y))
            - np.exp(-(sigma**2) / 2)
        )
        assert abs(oracle_gabor(params, u, v, x, y) - val.real) <= 1e-15
        assert abs(oracle_gabor_imag(params, u, v, x, y) - val.imag) <= 1e-15


def test_oracle_correlate_identity_filter():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 3, 5, 5))
    f = np.zeros((3, 3, 1, 1))
    for c in range(3):
        f[c, c, 0, 0] = 1.0
    out = oracle_correlate(x, f, pad=0, stride=1)
    assert np.array_equal(out, x)


def test_oracle_correlate_hand_example():
    x = np.arange(9, dtype=float).reshape(1, 1, 3, 3)
    f = np.ones((1, 1, 2, 2))
    out = oracle_correlate(x, f, pad=0, stride=1)
    assert np.array_equal(out[0, 0], [[8.0, 12.0], [20.0, 24.0]])


def test_fd_gradient_exact_on_quadratic():
    # central differences are exact for quadratics up to roundoff
    rng = np.random.default_rng(1)
    a = rng.standard_normal((4, 4))
    a = a + a.T
    b = rng.standard_normal(4)
    x = rng.standard_normal(4)

    def loss():
        return float(0.5 * x @ a @ x + b @ x)

    grad = fd_gradient(loss, x)
    assert relative_error(grad, a @ x + b) <= 1e-9


def test_relative_error_scaling():
    assert relative_error(np.array([1.0]), np.array([1.0])) == 0.0
    assert relative_error(np.array([0.0]), np.array([1e-7])) <= 1e-6
    assert abs(relative_error(np.array([200.0]), np.array([100.0])) - 0.5) < 1e-12


def test_scalar_adadelta_first_step():
    # with zero accumulators the first update is lr * sqrt(eps/( (1-rho) g^2 + eps )) * g
    opt = ScalarAdadelta(rho=0.9, eps=1e-6, lr=1.0)
    g = 2.0
    x = opt.step(1.0, g)
    expected = 1.0 - np.sqrt(1e-6 / (0.1 * g * g + 1e-6)) * g
    assert abs(x - expected) <= 1e-15
