"""l1-wavelet compressed sensing run through the same ADMM engine."""

from dataclasses import dataclass, replace

import numpy as np

from .admm import _Bound, run_admm
from .metrics import nmse
from .transforms import WaveletTransform

__all__ = ["CsConfig", "cs_bound", "cs_reconstruct", "grid_search_lambda"]


@dataclass(frozen=True)
class CsConfig:
    lam: float = 0.01
    rho: float = 1.0
    eta: float = 1.0
    admm_iters: int = 50
    cg_iters: int = 5
    levels: int = 3
    wavelet: str = "db4"

    def __post_init__(self):
        if min(self.lam, self.rho, self.eta) <= 0:
            raise ValueError("lam, rho and eta must be positive")
        if self.admm_iters < 1 or self.cg_iters < 1 or self.levels < 1:
            raise ValueError("iteration counts and levels must be positive")


def cs_bound(config, shape):
    fwd, adj = WaveletTransform(config.levels, config.wavelet).bind(shape)
    return _Bound([fwd], [adj], [config.rho], [config.lam], [config.eta],
                  config.admm_iters, config.cg_iters)


def cs_reconstruct(y, op, config=CsConfig()):
    """Solve ``min 1/2 ||y - E x||^2 + lam ||Psi x||_1`` with an orthogonal wavelet ``Psi``."""
    return run_admm(y, op, cs_bound(config, op.image_shape))


def grid_search_lambda(validation, grid, config=CsConfig()):
    """Return ``(best_lam, mean_nmse_per_grid_point)``.

    ``validation`` is a sequence of ``(y, op, x_ref)``; ties go to the smaller lambda.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("lambda grid is empty")
    scores = []
    for lam in grid:
        cfg = replace(config, lam=float(lam))
        scores.append(float(np.mean([nmse(cs_reconstruct(y, op, cfg), x) for y, op, x in validation])))
    order = sorted(range(len(grid)), key=lambda i: (scores[i], grid[i]))
    return float(grid[order[0]]), scores
