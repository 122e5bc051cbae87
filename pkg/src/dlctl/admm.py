"""Unrolled ADMM for the weighted l1 analysis problem

    min_x 1/2 ||y - E x||^2 + sum_l lam_l ||W_l x||_1

The x-update solves ``(E^H E + sum_l rho_l I) x = E^H y + sum_l rho_l W_l^H (z_l - beta_l)``
with a fixed number of warm-started CG iterations, so the whole solve is a
fixed computational graph that the tape can differentiate.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .tensor import ShapeError
from .transforms import DeepLinearConvTransform, apply_W, apply_WH, bank_parameter_count

__all__ = [
    "AdmmState",
    "DlcTlModel",
    "admm_iteration",
    "bind_model",
    "cg_solve",
    "objective_value",
    "reconstruct",
    "run_admm",
    "soft_threshold",
]

soft_threshold = ad.soft_threshold


@dataclass
class DlcTlModel:
    """Learnable parameters shared by every unrolled iteration.

    The positive scalars are stored as logs: ``rho = exp(log_rho)`` etc.
    """

    specs: tuple
    kernels: list
    log_rho: np.ndarray
    log_lam: np.ndarray
    log_eta: np.ndarray
    T: int = 10
    cg_iters: int = 5

    def __post_init__(self):
        self.specs = tuple(self.specs)
        n = len(self.specs)
        if len(self.kernels) != n:
            raise ValueError("one kernel list per transform spec is required")
        for spec, ks in zip(self.specs, self.kernels):
            if [np.shape(k) for k in ks] != spec.kernel_shapes:
                raise ValueError(f"kernel shapes do not match {spec}")
        for name in ("log_rho", "log_lam", "log_eta"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},)")
            setattr(self, name, arr)

    @property
    def L(self):
        return len(self.specs)

    @property
    def rho(self):
        return np.exp(self.log_rho)

    @property
    def lam(self):
        return np.exp(self.log_lam)

    @property
    def eta(self):
        return np.exp(self.log_eta)

    @property
    def transforms(self):
        return [DeepLinearConvTransform(s, k) for s, k in zip(self.specs, self.kernels)]

    def parameters(self):
        """Ordered name -> array view of every trainable parameter."""
        params = {}
        for l, ks in enumerate(self.kernels):
            for q, k in enumerate(ks):
                params[f"W{l + 1}.{q + 1}"] = k
        params["log_rho"] = self.log_rho
        params["log_lam"] = self.log_lam
        params["log_eta"] = self.log_eta
        return params

    def with_parameters(self, params):
        kernels = [
            [np.array(params[f"W{l + 1}.{q + 1}"], dtype=np.float64) for q in range(len(ks))]
            for l, ks in enumerate(self.kernels)
        ]
        return replace(
            self,
            kernels=kernels,
            log_rho=np.array(params["log_rho"], dtype=np.float64),
            log_lam=np.array(params["log_lam"], dtype=np.float64),
            log_eta=np.array(params["log_eta"], dtype=np.float64),
        )

    def parameter_count(self):
        return bank_parameter_count(self.specs) + 3 * self.L


@dataclass
class AdmmState:
    x: object
    z: list
    beta: list
    iteration: int = 0


@dataclass
class _Bound:
    """Transforms and scalars ready for the solver (arrays or taped values)."""

    forward: list
    adjoint: list
    rho: list
    lam: list
    eta: list
    T: int
    cg_iters: int


def bind_model(model, params=None):
    """Close the model's transforms over ``params`` (defaults to the model's arrays)."""
    params = model.parameters() if params is None else params
    fwd, adj = [], []
    for l, spec in enumerate(model.specs):
        ks = [params[f"W{l + 1}.{q + 1}"] for q in range(spec.num_cascades)]
        fwd.append(lambda x, ks=ks, spec=spec: apply_W(x, ks, spec))
        adj.append(lambda z, ks=ks, spec=spec: apply_WH(z, ks, spec))
    rho = ad.exp(params["log_rho"])
    lam = ad.exp(params["log_lam"])
    eta = ad.exp(params["log_eta"])
    L = model.L
    return _Bound(
        fwd,
        adj,
        [ad.index(rho, l) for l in range(L)],
        [ad.index(lam, l) for l in range(L)],
        [ad.index(eta, l) for l in range(L)],
        model.T,
        model.cg_iters,
    )


def cg_solve(rhs, op, rho_bar, x0, iters, residuals=None):
    """Run exactly ``iters`` CG iterations on ``(E^H E + rho_bar I) x = rhs`` from ``x0``.

    If ``residuals`` is a list, ``||rhs - A x||`` is appended for the start
    point and after each iteration.
    """

    def A(v):
        return ad.linear(v, op.normal, op.normal, "normal") + rho_bar * v

    def track(x):
        if residuals is not None:
            xv = ad.value_of(x)
            rb = ad.value_of(rho_bar)
            residuals.append(
                float(np.linalg.norm(ad.value_of(rhs) - op.normal(xv) - rb * xv))
            )

    x = x0
    r = rhs - A(x)
    p = r
    rs = ad.real_inner(r, r)
    track(x)
    for _ in range(iters):
        Ap = A(p)
        alpha = ad.safe_div(rs, ad.real_inner(p, Ap))
        x = x + alpha * p
        r = r - alpha * Ap
        rs_new = ad.real_inner(r, r)
        p = r + ad.safe_div(rs_new, rs) * p
        rs = rs_new
        track(x)
    return x


def _step(state, bound, EHy, op):
    L = len(bound.forward)
    rhs = EHy
    rho_bar = bound.rho[0]
    for l in range(L):
        rhs = rhs + bound.rho[l] * bound.adjoint[l](state.z[l] - state.beta[l])
        if l:
            rho_bar = rho_bar + bound.rho[l]
    x = cg_solve(rhs, op, rho_bar, state.x, bound.cg_iters)
    z, beta = [], []
    for l in range(L):
        wx = bound.forward[l](x)
        zl = ad.soft_threshold(wx + state.beta[l], bound.lam[l] / bound.rho[l])
        beta.append(state.beta[l] + bound.eta[l] * (wx - zl))
        z.append(zl)
    return AdmmState(x, z, beta, state.iteration + 1)


def _check_geometry(y, op):
    if np.shape(y) != op.sens.shape:
        raise ShapeError(f"k-space shape {np.shape(y)} != operator shape {op.sens.shape}")


def initial_state(EHy, bound):
    z = [f(EHy) for f in bound.forward]
    beta = [np.zeros(np.shape(ad.value_of(zl)), dtype=complex) for zl in z]
    return AdmmState(EHy, z, beta, 0)


def run_admm(y, op, bound, iterations=None, callback=None):
    """Unrolled ADMM from ``x0 = E^H y``, ``z0 = W x0``, ``beta0 = 0``."""
    _check_geometry(y, op)
    EHy = op.adjoint(y)
    state = initial_state(EHy, bound)
    for _ in range(bound.T if iterations is None else iterations):
        state = _step(state, bound, EHy, op)
        if callback is not None:
            callback(state)
    return state.x


def admm_iteration(state, model, y, op):
    """One update of x (CG), then z (shrinkage) and beta (dual ascent)."""
    _check_geometry(y, op)
    return _step(state, bind_model(model), op.adjoint(y), op)


def reconstruct(y, op, model, tape=None):
    """Run ``model.T`` unrolled iterations; records on ``tape`` when given."""
    params = tape.watch(model.parameters()) if tape is not None else None
    return run_admm(y, op, bind_model(model, params))


def objective_value(x, y, op, model=None, transforms=None, lam=None):
    """``1/2 ||y - E x||^2 + sum_l lam_l ||W_l x||_1`` with complex-magnitude l1."""
    if model is not None:
        transforms = [t.forward for t in model.transforms]
        lam = model.lam
    x = np.asarray(x)
    val = 0.5 * np.sum(np.abs(np.asarray(y) - op.forward(x)) ** 2)
    for f, lm in zip(transforms or [], lam if lam is not None else []):
        val += lm * np.sum(np.abs(f(x)))
    return float(val)
