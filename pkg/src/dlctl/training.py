"""End-to-end supervised training of the unrolled solver with Adam."""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .admm import DlcTlModel, bind_model, run_admm
from .formats import save_model
from .mri import EncodingOperator, make_phantom, make_uniform_mask
from .transforms import DEFAULT_SPECS, TransformSpec

__all__ = [
    "Adam",
    "GradientCheckReport",
    "NonFiniteLossError",
    "TrainConfig",
    "TrainExample",
    "example_loss",
    "gradient_check",
    "init_model",
    "loss",
    "mean_tight_frame_deviation",
    "miniature_problem",
    "train",
]

log = logging.getLogger(__name__)

RHO_INIT, LAM_INIT, ETA_INIT = 0.05, 0.01, 0.1


class NonFiniteLossError(FloatingPointError):
    def __init__(self, epoch, example):
        super().__init__(f"non-finite loss at epoch {epoch}, example {example}")
        self.epoch = epoch
        self.example = example


@dataclass
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 5e-4
    batch_size: int = 1
    epsilon: float = 0.1
    seed: int = 0
    T: int = 10
    cg_iters: int = 5
    specs: tuple = DEFAULT_SPECS
    gradient_gate: bool = True

    def __post_init__(self):
        if self.batch_size != 1:
            raise ValueError("only batch_size = 1 is supported")
        self.specs = tuple(
            TransformSpec.from_string(s) if isinstance(s, str) else s for s in self.specs
        )


@dataclass
class TrainExample:
    y: np.ndarray
    op: EncodingOperator
    x_ref: np.ndarray

    def __post_init__(self):
        if np.shape(self.x_ref) != tuple(self.op.image_shape):
            raise ValueError("reference image does not match operator geometry")


def _glorot(rng, shape):
    out_c, in_c, k, _ = shape
    bound = np.sqrt(6.0 / (k * k * in_c + k * k * out_c))
    return rng.uniform(-bound, bound, size=shape)


def init_model(config, seed=None):
    """Glorot-uniform kernels; rho, lam, eta start at 0.05, 0.01, 0.1."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    kernels = [[_glorot(rng, s) for s in spec.kernel_shapes] for spec in config.specs]
    L = len(config.specs)
    return DlcTlModel(
        config.specs,
        kernels,
        np.full(L, np.log(RHO_INIT)),
        np.full(L, np.log(LAM_INIT)),
        np.full(L, np.log(ETA_INIT)),
        T=config.T,
        cg_iters=config.cg_iters,
    )


def _loss(x_out, x_ref, forward, adjoint, epsilon):
    x_ref = np.asarray(x_ref)
    ref2 = np.linalg.norm(x_ref.ravel())
    ref1 = np.abs(x_ref.real).sum() + np.abs(x_ref.imag).sum()
    if ref2 == 0:
        raise ValueError("reference image is zero; the loss normalization is undefined")
    diff = x_ref - x_out
    total = ad.norm2(diff) / ref2 + ad.l1_parts(diff) / ref1
    if epsilon:
        for f, a in zip(forward, adjoint):
            total = total + (epsilon / ref2) * ad.norm2(a(f(x_ref)) - x_ref)
    return total


def loss(x_out, x_ref, model, epsilon):
    """Normalized l2 + normalized l1 error plus ``epsilon`` times the tight-frame penalty."""
    bound = bind_model(model)
    return _loss(x_out, x_ref, bound.forward, bound.adjoint, epsilon)


def example_loss(model, example, epsilon, tape=None):
    """Forward pass of one example; recorded on ``tape`` when given."""
    params = tape.watch(model.parameters()) if tape is not None else None
    bound = bind_model(model, params)
    x = run_admm(example.y, example.op, bound)
    return _loss(x, example.x_ref, bound.forward, bound.adjoint, epsilon)


def mean_tight_frame_deviation(model, images):
    """Mean over images of ``sum_l ||W_l^H W_l x - x|| / ||x||``."""
    total = 0.0
    for x in images:
        for t in model.transforms:
            total += np.linalg.norm(t.adjoint(t.forward(x)) - x) / np.linalg.norm(x)
    return float(total / len(images))


class Adam:
    def __init__(self, lr=5e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        out = {}
        for name, p in params.items():
            g = grads[name]
            m = self.beta1 * self.m.get(name, 0.0) + (1 - self.beta1) * g
            v = self.beta2 * self.v.get(name, 0.0) + (1 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            m_hat = m / (1 - self.beta1**self.t)
            v_hat = v / (1 - self.beta2**self.t)
            out[name] = p - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return out


@dataclass
class GradientCheckReport:
    checked: int = 0
    excluded: int = 0
    max_error: float = 0.0
    failures: list = field(default_factory=list)

    @property
    def passed(self):
        return self.checked > 0 and not self.failures


def _kink_signature(tape):
    active, margin = [], np.inf
    for node in tape.ops("soft_threshold"):
        c, tau = (ad.value_of(v) for v in node.inputs)
        gap = np.abs(c) - tau
        active.append(gap > 0)
        margin = min(margin, float(np.min(np.abs(gap))))
    for node in tape.ops("l1_parts"):
        d = ad.value_of(node.inputs[0])
        active.append(np.sign(d.real))
        active.append(np.sign(d.imag))
    return active, margin


def _eval(model, example, epsilon):
    tape = ad.Tape()
    val = example_loss(model, example, epsilon, tape)
    return float(val.value), tape


def gradient_check(model, example, epsilon=0.1, step=1e-5, rtol=1e-4, atol=1e-6,
                   kink_margin=1e-6):
    """Compare reverse-mode gradients with central finite differences, every coordinate.

    Coordinates whose perturbation changes any soft-threshold (or l1 sign)
    pattern are excluded, as is everything when the base point sits within
    ``kink_margin`` of a threshold.
    """
    _, tape = _eval(model, example, epsilon)
    grads = ad.backward(tape)
    base_sig, base_margin = _kink_signature(tape)
    report = GradientCheckReport()
    params = model.parameters()
    for name, arr in params.items():
        for idx in np.ndindex(arr.shape):
            vals, kinked = [], base_margin < kink_margin
            for sgn in (1.0, -1.0):
                pert = {k: v.copy() for k, v in params.items()}
                pert[name][idx] += sgn * step
                val, t = _eval(model.with_parameters(pert), example, epsilon)
                sig, _ = _kink_signature(t)
                kinked |= any(not np.array_equal(a, b) for a, b in zip(sig, base_sig))
                vals.append(val)
            if kinked:
                report.excluded += 1
                continue
            fd = (vals[0] - vals[1]) / (2 * step)
            g = float(grads[name][idx])
            err = abs(g - fd)
            report.checked += 1
            report.max_error = max(report.max_error, err / max(abs(fd), atol / rtol))
            if err > max(rtol * abs(fd), atol):
                report.failures.append((name, idx, g, fd))
    return report


def miniature_problem(seed=0, channels=4):
    """8x8 single-coil toy (L=2, T=2, two CG iterations) for gradient checks."""
    specs = (TransformSpec(3, 2, 1, channels), TransformSpec(3, 3, 2, channels))
    config = TrainConfig(epochs=0, T=2, cg_iters=2, specs=specs, seed=seed, gradient_gate=False)
    model = init_model(config)
    x_ref = make_phantom(16, 16, seed)[::2, ::2]
    op = EncodingOperator(np.ones((1, 8, 8)), make_uniform_mask(8, 2, 2))
    return model, TrainExample(op.forward(x_ref), op, x_ref)


def train(dataset, config, checkpoint_dir=None):
    """Train from ``init_model(config)``; returns ``(model, history)``.

    ``history`` holds one dict per epoch (epoch 0 is the initial model) with
    the mean training loss and the mean tight-frame deviation.  When
    ``checkpoint_dir`` is given, a checkpoint is written after every epoch.
    """
    if not dataset:
        raise ValueError("training needs at least one example")
    if config.gradient_gate:
        report = gradient_check(*miniature_problem(config.seed), epsilon=config.epsilon)
        if not report.passed:
            raise FloatingPointError(
                f"gradient check failed on {len(report.failures)} coordinates"
            )
    model = init_model(config)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(1)[0])
    refs = [ex.x_ref for ex in dataset]
    history = [{"epoch": 0, "loss": float("nan"),
                "tight_frame": mean_tight_frame_deviation(model, refs)}]
    adam = Adam(config.learning_rate)
    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)
    for epoch in range(1, config.epochs + 1):
        losses = []
        for i in shuffle_rng.permutation(len(dataset)):
            tape = ad.Tape()
            val = example_loss(model, dataset[i], config.epsilon, tape)
            if not np.isfinite(val.value):
                raise NonFiniteLossError(epoch, int(i))
            grads = ad.backward(tape)
            tape.clear()
            model = model.with_parameters(adam.step(model.parameters(), grads))
            losses.append(float(val.value))
        record = {
            "epoch": epoch,
            "loss": float(np.mean(losses)),
            "tight_frame": mean_tight_frame_deviation(model, refs),
        }
        history.append(record)
        log.info("epoch %d loss %.6f tight-frame %.6f", epoch, record["loss"], record["tight_frame"])
        if checkpoint_dir is not None:
            save_model(model, checkpoint_dir / f"epoch_{epoch:03d}.dlcm")
    return model, history
