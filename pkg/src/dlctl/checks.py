"""Numerical self-checks shared by the ``selfcheck`` command and the test suite.

Each check returns a :class:`CheckResult`; none of them raise on failure.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor
from .admm import cg_solve
from .mri import EncodingOperator, make_coils, make_uniform_mask
from .training import gradient_check, miniature_problem
from .transforms import (
    DEFAULT_SPECS,
    DeepLinearConvTransform,
    bank_parameter_count,
    parameter_count,
    receptive_field,
)

__all__ = [
    "CheckResult",
    "adjoint_suite",
    "cg_oracle",
    "gradient_gate",
    "run_all",
    "bank_geometry",
]

EXPECTED_RECEPTIVE_FIELDS = (5, 7, 11, 9, 13, 21)
EXPECTED_PARAMETER_COUNTS = (7308, 14364, 14364, 20300, 39900, 39900)
TOTAL_PARAMETERS = 136154


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}  {self.detail}"


def _crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _dot_test(forward, adjoint, x_shape, y_shape, rng, trials, real=False):
    """Worst relative gap between ``<A x, y>`` and ``<x, A^H y>`` over random trials."""
    draw = (lambda s: rng.standard_normal(s)) if real else (lambda s: _crandn(rng, *s))
    worst = 0.0
    for _ in range(trials):
        x, y = draw(x_shape), draw(y_shape)
        lhs = np.vdot(forward(x), y)
        rhs = np.vdot(x, adjoint(y))
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1e-300))
    return worst


def adjoint_suite(trials=20, tol=1e-10, seed=0, channels=None):
    """Dot-product tests for conv2d, the centered FFT, every default transform and E."""
    rng = np.random.default_rng(seed)
    results = []

    def record(name, err):
        results.append(CheckResult(f"adjoint {name}", err < tol, f"max rel err {err:.2e}"))

    for k, d in ((3, 1), (3, 2), (5, 2)):
        w = rng.standard_normal((4, 3, k, k))
        err = _dot_test(
            lambda x: tensor.conv2d(x, w, d),
            lambda z: tensor.conv2d_transpose(z, w, d),
            (2, 3, 11, 9), (2, 4, 11, 9), rng, trials, real=True,
        )
        record(f"conv2d k={k} d={d}", err)
    record("fft2c", _dot_test(tensor.fft2c, tensor.ifft2c, (12, 10), (12, 10), rng, trials))
    for i, spec in enumerate(DEFAULT_SPECS):
        if channels is not None:
            spec = type(spec)(spec.filter_size, spec.num_cascades, spec.dilation, channels)
        t = DeepLinearConvTransform(spec, [rng.standard_normal(s) * 0.2 for s in spec.kernel_shapes])
        err = _dot_test(t.forward, t.adjoint, (12, 12), (spec.channels, 12, 12), rng, trials)
        record(f"W{i + 1} {spec.to_string()}", err)
    op = EncodingOperator(make_coils(16, 20, 4), make_uniform_mask(20, 4, 4))
    record("E", _dot_test(op.forward, op.adjoint, (16, 20), (4, 16, 20), rng, trials))
    return results


def cg_oracle(tol=1e-8, seed=0, rho_bar=0.1, iters=30, systems=3):
    """30-iteration CG against a dense solve of a 16x16 two-coil system."""
    rng = np.random.default_rng(seed)
    op = EncodingOperator(make_coils(16, 16, 2), make_uniform_mask(16, 3, 4))
    n = 256
    cols = []
    for i in range(n):
        e = np.zeros(n, complex)
        e[i] = 1.0
        v = e.reshape(16, 16)
        cols.append((op.normal(v) + rho_bar * v).ravel())
    A = np.stack(cols, axis=1)
    worst = 0.0
    for _ in range(systems):
        rhs = _crandn(rng, 16, 16)
        x = cg_solve(rhs, op, rho_bar, np.zeros((16, 16), complex), iters)
        direct = np.linalg.solve(A, rhs.ravel()).reshape(16, 16)
        worst = max(worst, np.linalg.norm(x - direct) / np.linalg.norm(direct))
    return [CheckResult("CG vs dense solve", worst < tol, f"max rel err {worst:.2e}")]


def bank_geometry():
    rf = tuple(receptive_field(s) for s in DEFAULT_SPECS)
    counts = tuple(parameter_count(s) for s in DEFAULT_SPECS)
    total = bank_parameter_count(DEFAULT_SPECS) + 3 * len(DEFAULT_SPECS)
    return [
        CheckResult("receptive fields", rf == EXPECTED_RECEPTIVE_FIELDS, str(rf)),
        CheckResult("parameter counts", counts == EXPECTED_PARAMETER_COUNTS, str(counts)),
        CheckResult("total parameters", total == TOTAL_PARAMETERS, str(total)),
    ]


def gradient_gate(seed=0):
    report = gradient_check(*miniature_problem(seed))
    detail = (f"{report.checked} checked, {report.excluded} excluded, "
              f"max rel err {report.max_error:.2e}")
    return [CheckResult("gradient check", report.passed, detail)]


def run_all():
    return bank_geometry() + adjoint_suite() + cg_oracle() + gradient_gate()
