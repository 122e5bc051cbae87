"""Multi-coil Cartesian MRI forward model, sampling masks and synthetic data."""

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, fft2c, ifft2c

__all__ = [
    "EncodingOperator",
    "SamplingMask",
    "make_coils",
    "make_phantom",
    "make_random_mask",
    "make_uniform_mask",
    "simulate_kspace",
]


@dataclass(frozen=True)
class SamplingMask:
    """1-D phase-encode line mask replicated along the readout (row) axis."""

    width: int
    kept_columns: tuple

    def __post_init__(self):
        cols = tuple(sorted(int(c) for c in set(self.kept_columns)))
        if cols and (cols[0] < 0 or cols[-1] >= self.width):
            raise ValueError(f"column index out of range [0, {self.width})")
        object.__setattr__(self, "kept_columns", cols)

    @property
    def vector(self):
        v = np.zeros(self.width)
        v[list(self.kept_columns)] = 1.0
        return v

    @classmethod
    def from_vector(cls, vec):
        vec = np.asarray(vec).ravel()
        return cls(vec.size, tuple(np.flatnonzero(vec != 0)))

    def __len__(self):
        return len(self.kept_columns)


def _acs_block(width, acs):
    start = width // 2 - acs // 2
    return set(range(start, start + acs))


def make_uniform_mask(width, R, acs):
    """Keep every ``R``-th column from index 0 plus a centered block of ``acs`` columns."""
    if R < 1:
        raise ValueError(f"acceleration must be >= 1, got {R}")
    if acs > width or acs < 0:
        raise ValueError(f"acs={acs} lines do not fit in width {width}")
    kept = set(range(0, width, int(R))) | _acs_block(width, acs)
    return SamplingMask(width, tuple(kept))


def make_random_mask(width, R, acs, seed):
    """Centered ACS block plus columns drawn uniformly without replacement.

    The total number of kept columns is ``width // R`` (at least ``acs``).
    """
    if R < 1:
        raise ValueError(f"acceleration must be >= 1, got {R}")
    if acs > width or acs < 0:
        raise ValueError(f"acs={acs} lines do not fit in width {width}")
    budget = int(width // R)
    acs_cols = _acs_block(width, acs)
    extra = budget - len(acs_cols)
    if extra < 0:
        raise ValueError(f"budget width/R={budget} is smaller than the {acs} ACS lines")
    pool = np.array(sorted(set(range(width)) - acs_cols))
    rng = np.random.default_rng(seed)
    picked = rng.choice(pool, size=extra, replace=False) if extra else []
    return SamplingMask(width, tuple(acs_cols | set(int(c) for c in picked)))


class EncodingOperator:
    """Multi-coil encoding ``E x = mask * fft2c(S_c * x)`` and its adjoint.

    Parameters
    ----------
    sens : ndarray
        Complex coil maps of shape ``(num_coils, H, W)``.
    mask : SamplingMask
        Phase-encode line mask of width ``W``.
    """

    def __init__(self, sens, mask):
        sens = np.asarray(sens, dtype=complex)
        if sens.ndim == 2:
            sens = sens[None]
        if sens.ndim != 3:
            raise ShapeError(f"coil maps must be (coils, H, W), got {sens.shape}")
        if mask.width != sens.shape[2]:
            raise ShapeError(f"mask width {mask.width} != image width {sens.shape[2]}")
        self.sens = sens
        self.mask = mask
        self._m = mask.vector[None, None, :]
        self.sens.setflags(write=False)

    @property
    def image_shape(self):
        return self.sens.shape[1:]

    @property
    def num_coils(self):
        return self.sens.shape[0]

    def forward(self, x):
        x = np.asarray(x)
        if x.shape != self.image_shape:
            raise ShapeError(f"image shape {x.shape} != operator shape {self.image_shape}")
        return self._m * fft2c(self.sens * x)

    def adjoint(self, y):
        y = np.asarray(y)
        if y.shape != self.sens.shape:
            raise ShapeError(f"k-space shape {y.shape} != operator shape {self.sens.shape}")
        return np.sum(np.conj(self.sens) * ifft2c(self._m * y), axis=0)

    def normal(self, x):
        """``E^H E x`` (self-adjoint)."""
        return self.adjoint(self.forward(x))


def simulate_kspace(x, op, noise_std=0.0, seed=None):
    """Undersampled k-space ``E x``, optionally with complex Gaussian noise on kept samples."""
    y = op.forward(x)
    if noise_std > 0:
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)
        y = y + op._m * (noise_std / np.sqrt(2)) * noise
    return y


def make_phantom(height, width, seed):
    """Random ellipse phantom with a smooth low-order polynomial phase.

    A large background ellipse with amplitude in [0.6, 1.0] carries 4 to 11
    smaller ellipses with signed amplitudes; the magnitude is clipped to
    ``[0, 1.5]``.
    """
    if height < 16 or width < 16:
        raise ValueError("phantom dimensions must be >= 16")
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(
        np.linspace(-1, 1, height), np.linspace(-1, 1, width), indexing="ij"
    )
    mag = np.zeros((height, width))
    n = int(rng.integers(5, 13))
    for i in range(n):
        if i == 0:
            cy, cx = rng.uniform(-0.05, 0.05, 2)
            ay, ax = rng.uniform(0.7, 0.9, 2)
            amp = rng.uniform(0.6, 1.0)
        else:
            cy, cx = rng.uniform(-0.5, 0.5, 2)
            ay, ax = rng.uniform(0.05, 0.35, 2)
            amp = rng.uniform(-0.4, 0.5)
        th = rng.uniform(0, np.pi)
        u = (xx - cx) * np.cos(th) + (yy - cy) * np.sin(th)
        v = -(xx - cx) * np.sin(th) + (yy - cy) * np.cos(th)
        mag += amp * ((u / ax) ** 2 + (v / ay) ** 2 <= 1.0)
    mag = np.clip(mag, 0.0, 1.5)
    c = rng.uniform(-0.5, 0.5, 6)
    phase = c[0] * np.pi + c[1] * xx + c[2] * yy + c[3] * xx**2 + c[4] * xx * yy + c[5] * yy**2
    return mag * np.exp(1j * phase)


def make_coils(height, width, num_coils):
    """Gaussian-profile coil maps around the border with linear phase, SOS-normalized."""
    if height < 16 or width < 16:
        raise ValueError("coil dimensions must be >= 16")
    yy, xx = np.meshgrid(
        np.linspace(-1, 1, height), np.linspace(-1, 1, width), indexing="ij"
    )
    maps = np.empty((num_coils, height, width), dtype=complex)
    for c in range(num_coils):
        ang = 2 * np.pi * c / num_coils
        cy, cx = np.sin(ang), np.cos(ang)
        prof = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * 0.6**2))
        phase = np.pi * 0.5 * (cx * xx + cy * yy) + ang
        maps[c] = prof * np.exp(1j * phase)
    sos = np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
    return maps / sos
