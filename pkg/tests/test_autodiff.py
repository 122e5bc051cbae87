import numpy as np
import pytest

from dlctl import autodiff as ad
from dlctl.training import example_loss, gradient_check, miniature_problem


def test_parameter_free_loss_has_empty_gradient_set():
    tape = ad.Tape()
    x = tape.constant(np.arange(4.0))
    n = ad.norm2(x)
    loss = n * n
    assert loss.value == pytest.approx(14.0)
    assert ad.backward(tape) == {}


def test_untaped_inputs_compute_plain_values():
    out = ad.norm2(np.arange(4.0))
    assert not isinstance(out, ad.Var)
    assert out == pytest.approx(np.sqrt(14.0))


def test_identity_chain():
    tape = ad.Tape()
    lam = tape.param("lam", 0.3)
    tape.param("other", np.ones(3))
    ad.add(lam, 0.0)
    grads = ad.backward(tape)
    assert grads["lam"] == 1.0
    np.testing.assert_array_equal(grads["other"], np.zeros(3))


def test_non_scalar_terminal_is_rejected():
    tape = ad.Tape()
    w = tape.param("w", np.ones(3))
    ad.mul(w, 2.0)
    with pytest.raises(ad.ContractError):
        ad.backward(tape)


def test_soft_threshold_backward_values():
    # Symbolic derivative of c (1 - tau/|c|) at c = 3+4i, tau = 2, upstream 1.
    d_c, d_tau = ad.soft_threshold_backward(3 + 4j, 2.0, 1.0)
    u = np.array([0.6, 0.8])
    jac = np.eye(2) - (2.0 / 5.0) * (np.eye(2) - np.outer(u, u))
    expected = jac.T @ np.array([1.0, 0.0])
    assert d_c == pytest.approx(complex(*expected))
    assert d_tau == pytest.approx(-0.6)


def test_soft_threshold_backward_dead_zone_and_zero_threshold():
    assert ad.soft_threshold_backward(0.3 + 0.4j, 1.0, 1 + 1j) == (0, 0)
    # |c| == tau exactly is treated as dead zone
    assert ad.soft_threshold_backward(3 + 4j, 5.0, 1.0) == (0, 0)
    d_c, d_tau = ad.soft_threshold_backward(3 + 4j, 0.0, 2 - 1j)
    assert d_c == pytest.approx(2 - 1j)
    assert d_tau == pytest.approx(-((3 - 4j) / 5 * (2 - 1j)).real)


def test_soft_threshold_against_finite_differences():
    rng = np.random.default_rng(0)
    c = rng.standard_normal(50) + 1j * rng.standard_normal(50)
    g = rng.standard_normal(50) + 1j * rng.standard_normal(50)
    tau = 0.7
    f = lambda c, t: np.vdot(g, ad.soft_threshold(c, t)).real
    h = 1e-6
    for i in range(50):
        if abs(abs(c[i]) - tau) < 1e-3:
            continue
        d_c, d_tau = ad.soft_threshold_backward(c[i], tau, g[i])
        e = np.zeros(50)
        e[i] = h
        fd_re = (f(c + e, tau) - f(c - e, tau)) / (2 * h)
        fd_im = (f(c + 1j * e, tau) - f(c - 1j * e, tau)) / (2 * h)
        assert d_c == pytest.approx(fd_re + 1j * fd_im, abs=1e-7)


def _complex_fd(f, x, h=1e-6):
    grad = np.zeros(x.shape, dtype=complex)
    for idx in np.ndindex(x.shape):
        for unit in (1.0, 1j):
            xp, xm = x.copy(), x.copy()
            xp[idx] += unit * h
            xm[idx] -= unit * h
            grad[idx] += unit * (f(xp) - f(xm)) / (2 * h)
    return grad


@pytest.mark.parametrize(
    "build",
    [
        lambda v, c: ad.norm2(ad.mul(v, c)),
        lambda v, c: ad.l1_parts(ad.sub(v, c)),
        lambda v, c: ad.real_inner(ad.exp(v), c),
        lambda v, c: ad.norm2(ad.div(v, ad.add(c, 3.0))),
        lambda v, c: ad.norm2(ad.soft_threshold(v, 0.5)),
        lambda v, c: ad.norm2(ad.sum0(ad.reshape(v, (2, 3)))),
        lambda v, c: ad.real_inner(
            ad.reshape(ad.batch_to_complex(ad.complex_to_batch(ad.reshape(v, (1, 2, 3)))), (6,)), c
        ),
    ],
)
def test_primitive_gradients_match_finite_differences(build):
    rng = np.random.default_rng(1)
    x = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    c = rng.standard_normal(6) + 1j * rng.standard_normal(6)

    def f(v):
        return float(build(v, c))

    fd = _complex_fd(f, x)
    tape = ad.Tape()
    # complex leaves are not parameters; route gradient through a real pair
    re = tape.param("re", x.real)
    im = tape.param("im", x.imag)
    build(re + 1j * im, c)
    g = ad.backward(tape)
    np.testing.assert_allclose(g["re"] + 1j * g["im"], fd, atol=1e-6)


def test_conv_primitives_gradients():
    rng = np.random.default_rng(2)
    w0 = rng.standard_normal((3, 2, 3, 3))
    x = rng.standard_normal((2, 2, 5, 5))
    z = rng.standard_normal((2, 3, 5, 5))
    tape = ad.Tape()
    w = tape.param("w", w0)
    ad.add(ad.real_inner(ad.conv2d(x, w, 2), z), ad.real_inner(ad.conv2d_transpose(z, w, 1), x))
    g = ad.backward(tape)["w"]
    from dlctl.tensor import conv2d, conv2d_transpose

    f = lambda w: np.vdot(conv2d(x, w, 2), z) + np.vdot(conv2d_transpose(z, w, 1), x)
    for idx in [(0, 0, 0, 0), (2, 1, 1, 2), (1, 0, 2, 2)]:
        e = np.zeros_like(w0)
        e[idx] = 1e-6
        assert g[idx] == pytest.approx((f(w0 + e) - f(w0 - e)) / 2e-6, rel=1e-6)


def test_full_pipeline_gradient_check():
    model, example = miniature_problem(seed=3)
    report = gradient_check(model, example, epsilon=0.1)
    assert report.checked > 400
    assert report.passed, report.failures[:5]


def test_backward_is_linear_in_seed_and_deterministic():
    model, example = miniature_problem(seed=1)
    tape = ad.Tape()
    example_loss(model, example, 0.1, tape)
    g1 = ad.backward(tape)
    g1b = ad.backward(tape)
    g3 = ad.backward(tape, loss_seed=3.0)
    for name in g1:
        np.testing.assert_array_equal(g1[name], g1b[name])
        np.testing.assert_allclose(g3[name], 3.0 * g1[name], rtol=1e-12, atol=1e-300)


def test_replay_reproduces_recorded_output():
    model, example = miniature_problem(seed=2)
    tape = ad.Tape()
    out = example_loss(model, example, 0.1, tape)
    recorded = out.value
    assert tape.replay() == recorded
    assert len(tape.params) == len(model.parameters())


def test_mixing_tapes_is_an_error():
    a = ad.Tape().param("a", 1.0)
    b = ad.Tape().param("b", 1.0)
    with pytest.raises(ad.ContractError):
        a + b
