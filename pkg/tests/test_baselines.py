import numpy as np
import pytest

from dlctl.admm import objective_value
from dlctl.baselines import CsConfig, cs_reconstruct, grid_search_lambda
from dlctl.metrics import nmse
from dlctl.mri import EncodingOperator, make_coils, make_phantom, make_uniform_mask
from dlctl.tensor import ShapeError, ifft2c
from dlctl.transforms import WaveletTransform


@pytest.fixture(scope="module")
def op():
    return EncodingOperator(make_coils(32, 32, 4), make_uniform_mask(32, 3, 4))


def test_unregularized_full_sampling():
    x = make_phantom(32, 32, 0)
    full = EncodingOperator(np.ones((1, 32, 32)), make_uniform_mask(32, 1, 0))
    y = full.forward(x)
    out = cs_reconstruct(y, full, CsConfig(lam=1e-12))
    ref = ifft2c(y[0])
    assert np.linalg.norm(out - ref) / np.linalg.norm(ref) < 1e-6


def test_large_lambda_shrinks_to_zero(op):
    x = make_phantom(32, 32, 1)
    y = op.forward(x)
    ehy = op.adjoint(y)
    wt = WaveletTransform(3)
    lam = 10 * np.abs(wt.forward(ehy)).max()
    out = cs_reconstruct(y, op, CsConfig(lam=lam))
    assert np.linalg.norm(out) < 0.01 * np.linalg.norm(ehy)


def test_endpoint_descent(op):
    cfg = CsConfig(lam=0.003)
    wt = WaveletTransform(3)
    fwd = [lambda v: wt.forward(v)]
    for seed in range(20):
        y = op.forward(make_phantom(32, 32, 100 + seed))
        x0 = op.adjoint(y)
        out = cs_reconstruct(y, op, cfg)
        f0 = objective_value(x0, y, op, transforms=fwd, lam=[cfg.lam])
        f1 = objective_value(out, y, op, transforms=fwd, lam=[cfg.lam])
        assert f1 <= f0


def test_wavelet_system_is_exact():
    wt = WaveletTransform(3)
    x = make_phantom(32, 32, 2)
    assert np.linalg.norm(wt.adjoint(wt.forward(x)) - x) / np.linalg.norm(x) < 1e-10


def test_deterministic_and_geometry(op):
    y = op.forward(make_phantom(32, 32, 3))
    assert cs_reconstruct(y, op).tobytes() == cs_reconstruct(y, op).tobytes()
    with pytest.raises(ShapeError):
        cs_reconstruct(y[:2], op)


def test_config_validation():
    with pytest.raises(ValueError):
        CsConfig(lam=0)
    with pytest.raises(ValueError):
        CsConfig(admm_iters=0)


def small_suite(op, n, seed0=200):
    return [(op.forward(x), op, x) for x in (make_phantom(32, 32, seed0 + k) for k in range(n))]


def test_grid_search_trivial_grids(op):
    val = small_suite(op, 2)
    cfg = CsConfig(admm_iters=5)
    assert grid_search_lambda(val, [0.02], cfg)[0] == 0.02
    best, scores = grid_search_lambda(val, [0.005, 0.005], cfg)
    assert best == 0.005 and scores[0] == scores[1]
    with pytest.raises(ValueError):
        grid_search_lambda(val, [], cfg)


def test_grid_search_exhaustive(op):
    val = small_suite(op, 20)
    grid = [1e-4, 1e-3, 3e-3, 1e-2, 1e-1]
    cfg = CsConfig(admm_iters=20)
    best, scores = grid_search_lambda(val, grid, cfg)
    for lam in grid:
        mean = np.mean([nmse(cs_reconstruct(y, o, CsConfig(lam=lam, admm_iters=20)), x) for y, o, x in val])
        assert mean >= scores[grid.index(best)]
