"""Shared oracles for the test suite."""

import numpy as np

from dlctl.admm import DlcTlModel


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def dense(fn, shape):
    n = int(np.prod(shape))
    cols = []
    for i in range(n):
        e = np.zeros(n, complex)
        e[i] = 1.0
        cols.append(np.asarray(fn(e.reshape(shape))).ravel())
    return np.stack(cols, axis=1)


def tight_model(specs, T=3, cg_iters=5, lam=1e-2, rho=0.05, eta=0.1):
    """Centre-tap kernels giving W x = x on channel 0 (W^H W = I)."""
    kernels = []
    for spec in specs:
        C, mid = spec.channels, spec.filter_size // 2
        ks = [np.zeros(s) for s in spec.kernel_shapes]
        ks[0][0, 0, mid, mid] = 1.0
        for k in ks[1:]:
            k[:, :, mid, mid] = np.eye(C)
        ks[-1][:, 0, mid, mid] += 1.0 / C
        kernels.append(ks)
    L = len(specs)
    return DlcTlModel(specs, kernels, np.full(L, np.log(rho)), np.full(L, np.log(lam)),
                      np.full(L, np.log(eta)), T=T, cg_iters=cg_iters)


# criterion number -> one formatted pass/fail line, printed at the end of the run
ACCEPTANCE_RESULTS = {}
