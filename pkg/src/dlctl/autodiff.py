"""Reverse-mode differentiation over a fixed set of array primitives.

Every primitive accepts plain numpy values or :class:`Var` objects.  With only
plain inputs it simply computes the result, so the same solver code runs
untaped at inference time.  When any input is a ``Var`` the operation is
appended to that variable's :class:`Tape`.

Gradients of complex quantities follow the convention
``grad = dL/dRe(z) + 1j * dL/dIm(z)`` for a real loss ``L``.  Under this
convention the vector-Jacobian product of a complex-linear map ``A`` is
``A^H g``, and real leaves receive the real part of their accumulated grad.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import tensor

__all__ = [
    "ContractError",
    "GradientSet",
    "Tape",
    "Var",
    "add",
    "backward",
    "batch_to_complex",
    "complex_to_batch",
    "conv2d",
    "conv2d_transpose",
    "div",
    "exp",
    "index",
    "l1_parts",
    "linear",
    "mul",
    "neg",
    "norm2",
    "real_inner",
    "reshape",
    "safe_div",
    "soft_threshold",
    "soft_threshold_backward",
    "sub",
    "sum0",
    "value_of",
]


class ContractError(RuntimeError):
    """Raised when the tape is used outside its contract."""


GradientSet = dict  # parameter name -> gradient array, in registration order


@dataclass(eq=False)
class Node:
    op: str
    inputs: tuple
    forward: Callable
    vjp: Callable
    out: "Var"


@dataclass(eq=False)
class Tape:
    """Ordered record of primitive operations for one forward pass."""

    nodes: list = field(default_factory=list)
    params: dict = field(default_factory=dict)

    def param(self, name, value):
        """Register a named leaf whose gradient :func:`backward` reports."""
        if name in self.params:
            raise ContractError(f"parameter {name!r} registered twice")
        var = Var(np.array(value, dtype=np.float64), self, len(self.nodes))
        self.nodes.append(Node("param", (), None, None, var))
        self.params[name] = var
        return var

    def constant(self, value):
        """Record an input leaf that is not reported as a parameter."""
        var = Var(np.asarray(value), self, len(self.nodes))
        self.nodes.append(Node("constant", (), None, None, var))
        return var

    def watch(self, params):
        return {name: self.param(name, v) for name, v in params.items()}

    def replay(self):
        """Recompute every node from its inputs; returns the final value."""
        for node in self.nodes:
            if node.forward is not None:
                node.out.value = node.forward(*[value_of(v) for v in node.inputs])
        return self.nodes[-1].out.value

    def ops(self, name):
        return [n for n in self.nodes if n.op == name]

    def clear(self):
        """Drop all recorded nodes; breaks the tape/variable reference cycle."""
        self.nodes.clear()
        self.params.clear()

    def __len__(self):
        return len(self.nodes)


class Var:
    """A value produced on a tape."""

    __array_ufunc__ = None  # make numpy defer to the reflected operators
    __slots__ = ("value", "tape", "index")

    def __init__(self, value, tape, index):
        self.value = value
        self.tape = tape
        self.index = index

    @property
    def shape(self):
        return np.shape(self.value)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __repr__(self):
        return f"Var(op={self.tape.nodes[self.index].op}, shape={self.shape})"


def value_of(x):
    return x.value if isinstance(x, Var) else x


def _tape_of(args):
    tape = None
    for a in args:
        if isinstance(a, Var):
            if tape is None:
                tape = a.tape
            elif a.tape is not tape:
                raise ContractError("operands recorded on different tapes")
    return tape


def _primitive(op, forward, vjp, *args):
    """Apply ``forward`` and, if any argument is taped, record the node.

    ``vjp(g, out, *values)`` returns one gradient (or None) per argument.
    """
    vals = [value_of(a) for a in args]
    out = forward(*vals)
    tape = _tape_of(args)
    if tape is None:
        return out
    var = Var(out, tape, len(tape.nodes))
    tape.nodes.append(Node(op, args, forward, vjp, var))
    return var


def _fit(grad, like):
    """Reduce a broadcast gradient to the shape and field of ``like``."""
    shape = np.shape(like)
    grad = np.asarray(grad)
    if grad.shape != shape:
        extra = grad.ndim - len(shape)
        grad = grad.sum(axis=tuple(range(extra))) if extra > 0 else grad
        axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
        if axes:
            grad = grad.sum(axis=axes, keepdims=True)
    if not np.iscomplexobj(like) and np.iscomplexobj(grad):
        grad = grad.real
    return grad


def backward(tape, loss_seed=1.0):
    """Differentiate the final node of ``tape`` with respect to its parameters.

    Returns a :data:`GradientSet` mapping each registered parameter name to
    its gradient.  Nodes are visited in exact reverse recording order.
    """
    if not tape.nodes:
        raise ContractError("empty tape")
    final = tape.nodes[-1].out
    if np.ndim(final.value) != 0 or np.iscomplexobj(final.value):
        raise ContractError("backward needs a real scalar as the final node")
    grads = [None] * len(tape.nodes)
    grads[final.index] = np.float64(loss_seed)
    for node in reversed(tape.nodes):
        g = grads[node.out.index]
        if node.vjp is not None and node.forward is not None:
            grads[node.out.index] = None  # release intermediate gradients early
        if g is None or node.vjp is None:
            continue
        vals = [value_of(a) for a in node.inputs]
        in_grads = node.vjp(g, node.out.value, *vals)
        for a, v, ga in zip(node.inputs, vals, in_grads):
            if ga is None or not isinstance(a, Var):
                continue
            ga = _fit(ga, v)
            grads[a.index] = ga if grads[a.index] is None else grads[a.index] + ga
    out = GradientSet()
    for name, var in tape.params.items():
        g = grads[var.index]
        out[name] = np.zeros_like(var.value) if g is None else np.real(g).astype(np.float64)
    return out


# --- elementwise arithmetic ------------------------------------------------


def add(a, b):
    return _primitive("add", np.add, lambda g, o, a, b: (g, g), a, b)


def sub(a, b):
    return _primitive("sub", np.subtract, lambda g, o, a, b: (g, -g), a, b)


def neg(a):
    return _primitive("neg", np.negative, lambda g, o, a: (-g,), a)


def mul(a, b):
    return _primitive(
        "mul", np.multiply, lambda g, o, a, b: (g * np.conj(b), g * np.conj(a)), a, b
    )


def div(a, b):
    return _primitive(
        "div",
        np.divide,
        lambda g, o, a, b: (g / np.conj(b), -g * np.conj(o / b)),
        a,
        b,
    )


def _safe_div_fwd(a, b):
    return np.float64(0.0) if b == 0 else np.float64(a / b)


def _safe_div_vjp(g, o, a, b):
    if b == 0:
        return 0.0, 0.0
    return g / b, -g * o / b


def safe_div(a, b):
    """Real scalar ``a / b`` that returns 0 (with zero gradients) when ``b == 0``."""
    return _primitive("safe_div", _safe_div_fwd, _safe_div_vjp, a, b)


def exp(a):
    return _primitive("exp", np.exp, lambda g, o, a: (g * np.conj(o),), a)


# --- reductions ---------------------------------------------------------------


def real_inner(a, b):
    """``Re <a, b> = Re sum(conj(a) * b)``."""
    return _primitive(
        "real_inner",
        lambda a, b: np.float64(np.vdot(a, b).real),
        lambda g, o, a, b: (g * b, g * a),
        a,
        b,
    )


def _norm2_vjp(g, o, a):
    if o == 0:
        return (np.zeros_like(a),)
    return (g * a / o,)


def norm2(a):
    """Euclidean norm over all entries (real and imaginary parts stacked)."""
    return _primitive("norm2", lambda a: np.float64(np.linalg.norm(a.ravel())), _norm2_vjp, a)


def _l1_parts_fwd(a):
    if np.iscomplexobj(a):
        return np.float64(np.abs(a.real).sum() + np.abs(a.imag).sum())
    return np.float64(np.abs(a).sum())


def _l1_parts_vjp(g, o, a):
    if np.iscomplexobj(a):
        return (g * (np.sign(a.real) + 1j * np.sign(a.imag)),)
    return (g * np.sign(a),)


def l1_parts(a):
    """l1 norm over real and imaginary parts treated as separate entries."""
    return _primitive("l1_parts", _l1_parts_fwd, _l1_parts_vjp, a)


def sum0(a):
    """Sum over the leading axis."""
    return _primitive(
        "sum0",
        lambda a: a.sum(axis=0),
        lambda g, o, a: (np.broadcast_to(g, a.shape),),
        a,
    )


# --- shape plumbing -----------------------------------------------------------


def index(a, i):
    def vjp(g, o, a):
        full = np.zeros_like(a, dtype=np.result_type(a, g))
        full[i] = g
        return (full,)

    return _primitive("index", lambda a: a[i], vjp, a)


def reshape(a, shape):
    return _primitive(
        "reshape",
        lambda a: np.reshape(a, shape),
        lambda g, o, a: (np.reshape(g, np.shape(a)),),
        a,
    )


def _c2b_fwd(a):
    return np.stack([a.real, a.imag])


def complex_to_batch(a):
    """Complex ``(C, H, W)`` -> real ``(2, C, H, W)`` holding real and imaginary parts."""
    return _primitive("complex_to_batch", _c2b_fwd, lambda g, o, a: (g[0] + 1j * g[1],), a)


def batch_to_complex(a):
    """Inverse of :func:`complex_to_batch`."""
    return _primitive(
        "batch_to_complex",
        lambda a: a[0] + 1j * a[1],
        lambda g, o, a: (_c2b_fwd(np.asarray(g, dtype=complex)),),
        a,
    )


# --- linear operators -------------------------------------------------------


def linear(a, apply, adjoint, name="linear"):
    """Apply a fixed (parameter-free) linear map with a known adjoint."""
    return _primitive(name, apply, lambda g, o, a: (adjoint(g),), a)


def conv2d(x, weight, dilation=1):
    k = np.shape(value_of(weight))[-1]

    def vjp(g, o, x, w):
        return (
            tensor.conv2d_transpose(g, w, dilation),
            tensor.conv2d_weight_grad(x, g, k, dilation),
        )

    return _primitive("conv2d", lambda x, w: tensor.conv2d(x, w, dilation), vjp, x, weight)


def conv2d_transpose(z, weight, dilation=1):
    k = np.shape(value_of(weight))[-1]

    def vjp(g, o, z, w):
        # <conv2d(g, W), z> = <g, conv2d_transpose(z, W)>
        return (
            tensor.conv2d(g, w, dilation),
            tensor.conv2d_weight_grad(g, z, k, dilation),
        )

    return _primitive(
        "conv2d_transpose", lambda z, w: tensor.conv2d_transpose(z, w, dilation), vjp, z, weight
    )


# --- soft-thresholding --------------------------------------------------------


def _soft_fwd(c, tau):
    mag = np.abs(c)
    active = mag > tau
    scale = np.where(active, 1.0 - tau / np.where(active, mag, 1.0), 0.0)
    return c * scale


def _soft_vjp(g, o, c, tau):
    mag = np.abs(c)
    active = mag > tau
    safe = np.where(active, mag, 1.0)
    u = c / safe
    radial = (np.conj(u) * g).real
    # symmetric real Jacobian: I - (tau/|c|) (I - u u^T) on the active set
    d_c = np.where(active, g - (tau / safe) * (g - u * radial), 0.0)
    d_tau = -np.sum(np.where(active, radial, 0.0))
    return d_c, d_tau


def soft_threshold(c, tau):
    """Complex magnitude shrinkage ``c * max(|c| - tau, 0) / |c|``."""
    return _primitive("soft_threshold", _soft_fwd, _soft_vjp, c, tau)


def soft_threshold_backward(coeff, tau, upstream):
    """Vector-Jacobian product of soft-thresholding for one complex entry.

    Returns ``(d_coeff, d_tau)``.  On the closed dead zone ``|c| <= tau`` both
    are zero.
    """
    c = np.asarray(coeff, dtype=complex)
    d_c, d_tau = _soft_vjp(np.asarray(upstream, dtype=complex), None, c, float(tau))
    return complex(d_c), float(d_tau)
