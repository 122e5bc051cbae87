import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dlctl.tensor import ShapeError, conv2d, conv2d_transpose, conv2d_weight_grad, fft2c, ifft2c


def brute_conv(x, w, d):
    """Quadruple-loop same-size dilated cross-correlation with zero padding."""
    c_out, c_in, k, _ = w.shape
    _, h, wd = x.shape
    half = (k - 1) // 2
    out = np.zeros((c_out, h, wd), dtype=np.result_type(x, w))
    for o in range(c_out):
        for i in range(h):
            for j in range(wd):
                acc = 0.0
                for c in range(c_in):
                    for a in range(k):
                        for b in range(k):
                            ii = i + (a - half) * d
                            jj = j + (b - half) * d
                            if 0 <= ii < h and 0 <= jj < wd:
                                acc += w[o, c, a, b] * x[c, ii, jj]
                out[o, i, j] = acc
    return out


def rel(a, b):
    return abs(a - b) / max(abs(a), abs(b))


def test_identity_kernel():
    x = np.random.default_rng(0).standard_normal((1, 6, 5))
    w = np.ones((1, 1, 1, 1))
    np.testing.assert_array_equal(conv2d(x, w), x)
    np.testing.assert_array_equal(conv2d_transpose(x, w), x)


def test_zero_kernel():
    x = np.random.default_rng(1).standard_normal((2, 7, 7))
    w = np.zeros((3, 2, 3, 3))
    assert not conv2d(x, w).any()
    assert not conv2d_transpose(np.ones((3, 7, 7)), w).any()


@pytest.mark.parametrize("k,d", [(3, 1), (3, 2), (5, 1), (5, 2)])
def test_matches_brute_force(k, d):
    rng = np.random.default_rng(k * 10 + d)
    x = rng.standard_normal((2, 5, 6))
    w = rng.standard_normal((3, 2, k, k))
    np.testing.assert_allclose(conv2d(x, w, d), brute_conv(x, w, d), rtol=1e-12, atol=1e-12)


def test_batched_matches_unbatched():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 3, 8, 8))
    w = rng.standard_normal((4, 3, 3, 3))
    out = conv2d(x, w, 2)
    for b in range(2):
        np.testing.assert_allclose(out[b], conv2d(x[b], w, 2), rtol=1e-13)


def test_channel_mismatch():
    with pytest.raises(ShapeError):
        conv2d(np.zeros((2, 4, 4)), np.zeros((1, 3, 3, 3)))
    with pytest.raises(ShapeError):
        conv2d_transpose(np.zeros((2, 4, 4)), np.zeros((3, 2, 3, 3)))
    with pytest.raises(ShapeError):
        conv2d(np.zeros((1, 4, 4)), np.zeros((1, 1, 2, 2)))


@pytest.mark.parametrize("d", [1, 2, 3])
def test_transpose_adjoint_dot_product(d):
    rng = np.random.default_rng(d)
    for _ in range(20):
        x = rng.standard_normal((1, 8, 8))
        z = rng.standard_normal((4, 8, 8))
        w = rng.standard_normal((4, 1, 3, 3))
        lhs = np.vdot(conv2d(x, w, d), z)
        rhs = np.vdot(x, conv2d_transpose(z, w, d))
        assert rel(lhs, rhs) < 1e-12


def test_weight_grad_by_linearity():
    # <conv2d(x, W), g> is linear in W, so its gradient is exactly the coefficient array.
    rng = np.random.default_rng(5)
    x = rng.standard_normal((2, 6, 6))
    g = rng.standard_normal((3, 6, 6))
    grad = conv2d_weight_grad(x, g, 3, 2)
    basis = np.zeros((3, 2, 3, 3))
    for idx in np.ndindex(basis.shape):
        basis[idx] = 1.0
        assert np.isclose(np.vdot(conv2d(x, basis, 2), g), grad[idx], rtol=1e-12, atol=1e-12)
        basis[idx] = 0.0


@settings(max_examples=30, deadline=None)
@given(
    k=st.sampled_from([1, 3, 5]),
    d=st.integers(1, 3),
    h=st.integers(4, 12),
    w=st.integers(4, 12),
    seed=st.integers(0, 2**31 - 1),
)
def test_linearity_and_shape(k, d, h, w, seed):
    rng = np.random.default_rng(seed)
    kern = rng.standard_normal((2, 2, k, k))
    x, y = rng.standard_normal((2, 2, h, w))
    a, b = rng.standard_normal(2)
    lhs = conv2d(a * x + b * y, kern, d)
    assert lhs.shape == (2, h, w)
    rhs = a * conv2d(x, kern, d) + b * conv2d(y, kern, d)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * np.abs(rhs).max())


def test_fft_constant_image():
    c = 1.7 - 0.3j
    out = fft2c(np.full((6, 9), c))
    expected = np.zeros((6, 9), dtype=complex)
    expected[3, 4] = c * np.sqrt(54)
    np.testing.assert_allclose(out, expected, atol=1e-12)


@pytest.mark.parametrize("shape", [(8, 8), (7, 10), (320, 368)])
def test_fft_parseval_and_round_trip(shape):
    rng = np.random.default_rng(0)
    x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    k = fft2c(x)
    assert rel(np.linalg.norm(k), np.linalg.norm(x)) < 1e-12
    assert np.linalg.norm(ifft2c(k) - x) / np.linalg.norm(x) < 1e-12


def test_fft_adjoint_dot_product():
    rng = np.random.default_rng(11)
    for _ in range(20):
        x = rng.standard_normal((12, 10)) + 1j * rng.standard_normal((12, 10))
        y = rng.standard_normal((12, 10)) + 1j * rng.standard_normal((12, 10))
        assert rel(np.vdot(fft2c(x), y), np.vdot(x, ifft2c(y))) < 1e-10
