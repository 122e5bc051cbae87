import numpy as np
import pytest

from dlctl.transforms import (
    DEFAULT_SPECS,
    DeepLinearConvTransform,
    TransformSpec,
    WaveletTransform,
    bank_parameter_count,
    parameter_count,
    receptive_field,
    tight_frame_deviation,
)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_transform(spec, seed):
    rng = np.random.default_rng(seed)
    return DeepLinearConvTransform(spec, [rng.standard_normal(s) * 0.3 for s in spec.kernel_shapes])


def tight_transform(spec):
    """Centre-tap kernels whose composite is e_1 + 1/C, so W x = x on channel 0 only."""
    C = spec.channels
    ks = [np.zeros(s) for s in spec.kernel_shapes]
    mid = spec.filter_size // 2
    ks[0][0, 0, mid, mid] = 1.0
    for k in ks[1:-1]:
        k[:, :, mid, mid] = np.eye(C)
    if len(ks) > 1:
        ks[-1][:, :, mid, mid] = np.eye(C)
        ks[-1][:, 0, mid, mid] += 1.0 / C
    else:
        ks[0][:, 0, mid, mid] += 1.0 / C
    return DeepLinearConvTransform(spec, ks)


def dense_matrix(t, h, w):
    """Materialize the complex-linear map column by column."""
    cols = []
    for i in range(h * w):
        e = np.zeros(h * w, complex)
        e[i] = 1.0
        cols.append(t.forward(e.reshape(h, w)).ravel())
    return np.stack(cols, axis=1)


@pytest.mark.parametrize(
    "spec,rf",
    list(zip(DEFAULT_SPECS, [5, 7, 11, 9, 13, 21])),
)
def test_receptive_fields(spec, rf):
    assert receptive_field(spec) == rf


def test_receptive_field_by_impulse_response():
    # Oracle: support of the response to a centred impulse, skip path removed.
    for spec in DEFAULT_SPECS:
        spec = TransformSpec(spec.filter_size, spec.num_cascades, spec.dilation, 2)
        t = DeepLinearConvTransform(spec, [np.ones(s) for s in spec.kernel_shapes])
        n = 31
        e = np.zeros((n, n), complex)
        e[n // 2, n // 2] = 1.0
        resp = t.forward(e) + e / spec.channels
        rows = np.flatnonzero(np.abs(resp).sum(axis=(0, 2)) > 0)
        assert rows[-1] - rows[0] + 1 == receptive_field(spec)


def test_parameter_counts():
    counts = [parameter_count(s) for s in DEFAULT_SPECS]
    assert counts == [7308, 14364, 14364, 20300, 39900, 39900]
    assert bank_parameter_count(DEFAULT_SPECS) == 136136
    for s in DEFAULT_SPECS:
        k, c = s.filter_size, s.channels
        assert parameter_count(s) == k * k * c + (s.num_cascades - 1) * k * k * c * c


def test_spec_string_round_trip():
    for s in DEFAULT_SPECS:
        assert TransformSpec.from_string(s.to_string()) == s
    assert TransformSpec.from_string("5x3d2") == DEFAULT_SPECS[5]
    with pytest.raises(ValueError):
        TransformSpec.from_string("3by3")
    with pytest.raises(ValueError):
        TransformSpec(4, 2)


def test_zero_weights_leave_skip_path():
    spec = TransformSpec(3, 2, 1, 5)
    t = DeepLinearConvTransform.zeros(spec)
    rng = np.random.default_rng(0)
    x = crandn(rng, 6, 7)
    out = t.forward(x)
    assert out.shape == (5, 6, 7)
    for c in range(5):
        np.testing.assert_allclose(out[c], -x / 5)
    z = crandn(rng, 5, 6, 7)
    np.testing.assert_allclose(t.adjoint(z), -z.sum(axis=0) / 5)


@pytest.mark.parametrize("spec", DEFAULT_SPECS)
def test_adjoint_dot_product(spec):
    t = random_transform(spec, 1)
    rng = np.random.default_rng(2)
    for _ in range(20):
        x = crandn(rng, 10, 9)
        z = crandn(rng, spec.channels, 10, 9)
        lhs = np.vdot(t.forward(x), z)
        rhs = np.vdot(x, t.adjoint(z))
        assert abs(lhs - rhs) / abs(lhs) < 1e-10


def test_linearity():
    t = random_transform(DEFAULT_SPECS[2], 3)
    rng = np.random.default_rng(3)
    x = crandn(rng, 9, 9)
    a = 0.7 - 1.3j
    np.testing.assert_allclose(t.forward(a * x), a * t.forward(x), rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("spec", [TransformSpec(3, 2, 1, 4), TransformSpec(5, 3, 2, 3)])
def test_matches_materialized_matrix(spec):
    t = random_transform(spec, 4)
    h = w = 8
    M = dense_matrix(t, h, w)
    assert M.shape == (spec.channels * h * w, h * w)
    # the map is real-linear with real coefficients, so the complex matrix is real
    assert np.abs(M.imag).max() == 0
    x = crandn(np.random.default_rng(5), h, w)
    np.testing.assert_allclose(t.forward(x).ravel(), M @ x.ravel(), rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("spec", DEFAULT_SPECS)
def test_tight_frame_identity(spec):
    t = tight_transform(spec)
    x = crandn(np.random.default_rng(6), 12, 11)
    np.testing.assert_allclose(t.adjoint(t.forward(x)), x, atol=1e-12)
    assert tight_frame_deviation(t.forward, t.adjoint, x) < 1e-12
    r = random_transform(spec, 0)
    assert tight_frame_deviation(r.forward, r.adjoint, x) > 0


@pytest.mark.parametrize("shape", [(32, 32), (40, 24), (30, 27)])
def test_wavelet_orthogonality(shape):
    wt = WaveletTransform(levels=3)
    x = crandn(np.random.default_rng(7), *shape)
    c = wt.forward(x)
    np.testing.assert_allclose(wt.adjoint(c, shape), x, atol=1e-10)
    if shape[0] % 8 == 0 and shape[1] % 8 == 0:
        assert abs(np.linalg.norm(c) - np.linalg.norm(x)) < 1e-10 * np.linalg.norm(x)
        np.testing.assert_allclose(wt.forward(wt.adjoint(c)), c, atol=1e-10)


def test_wavelet_adjoint_dot_product():
    wt = WaveletTransform(levels=2)
    rng = np.random.default_rng(8)
    for _ in range(20):
        x = crandn(rng, 16, 24)
        z = crandn(rng, 1, 16, 24)
        lhs = np.vdot(wt.forward(x), z)
        rhs = np.vdot(x, wt.adjoint(z))
        assert abs(lhs - rhs) / abs(lhs) < 1e-10


def test_wavelet_constant_image_has_no_detail():
    import pywt

    x = np.full((16, 16), 2.5 + 1j)
    c = WaveletTransform(levels=1).forward(x)[0]
    assert np.abs(c[8:, :]).max() < 1e-12 and np.abs(c[:, 8:]).max() < 1e-12
    # oracle: periodic high-pass filtering of a constant row sums the filter taps to zero
    hi = np.array(pywt.Wavelet("db4").dec_hi)
    assert abs(hi.sum()) < 1e-12
    row = np.full(16, 2.5)
    direct = np.array([sum(hi[j] * row[(2 * i + 1 - j) % 16] for j in range(len(hi))) for i in range(8)])
    assert np.abs(direct).max() < 1e-12
