"""Deep linear convolutional sparsifying transforms and a fixed wavelet transform.

A transform maps a complex image ``(H, W)`` to ``C`` complex coefficient maps
``(C, H, W)``.  Real and imaginary parts go through the same bias-free cascade
of convolutions, and the input scaled by ``1/C`` is subtracted from every
output channel.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import pywt

from . import autodiff as ad

__all__ = [
    "DEFAULT_SPECS",
    "DeepLinearConvTransform",
    "TransformSpec",
    "WaveletTransform",
    "apply_W",
    "apply_WH",
    "bank_parameter_count",
    "parameter_count",
    "receptive_field",
    "tight_frame_deviation",
]


@dataclass(frozen=True)
class TransformSpec:
    filter_size: int
    num_cascades: int
    dilation: int = 1
    channels: int = 28

    def __post_init__(self):
        if self.filter_size % 2 != 1 or self.filter_size < 1:
            raise ValueError(f"filter size must be odd, got {self.filter_size}")
        if self.num_cascades < 1 or self.dilation < 1 or self.channels < 1:
            raise ValueError(f"invalid transform spec {self}")

    @property
    def kernel_shapes(self):
        k, c = self.filter_size, self.channels
        return [(c, 1, k, k)] + [(c, c, k, k)] * (self.num_cascades - 1)

    @property
    def dilations(self):
        # first stage undilated, later stages use the listed rate
        return [1] + [self.dilation] * (self.num_cascades - 1)

    def to_string(self):
        return f"{self.filter_size}x{self.num_cascades}d{self.dilation}c{self.channels}"

    @classmethod
    def from_string(cls, text):
        """Parse ``"<k>x<cascades>d<dilation>[c<channels>]"``, e.g. ``"3x2d1c28"``."""
        text = text.strip()
        try:
            k, rest = text.split("x")
            q, rest = rest.split("d")
            if "c" in rest:
                d, c = rest.split("c")
            else:
                d, c = rest, 28
            return cls(int(k), int(q), int(d), int(c))
        except ValueError as exc:
            raise ValueError(f"bad transform spec {text!r}") from exc


DEFAULT_SPECS = (
    TransformSpec(3, 2, 1),
    TransformSpec(3, 3, 1),
    TransformSpec(3, 3, 2),
    TransformSpec(5, 2, 1),
    TransformSpec(5, 3, 1),
    TransformSpec(5, 3, 2),
)


def receptive_field(spec):
    """Side length of the input region seen by one output pixel."""
    k = spec.filter_size
    span = (k - 1) * spec.dilation
    return k + (spec.num_cascades - 1) * span


def parameter_count(spec):
    return sum(int(np.prod(s)) for s in spec.kernel_shapes)


def bank_parameter_count(specs):
    return sum(parameter_count(s) for s in specs)


def apply_W(x, kernels, spec):
    """Forward transform; ``kernels`` may be arrays or taped variables."""
    h, w = np.shape(ad.value_of(x))
    r = ad.complex_to_batch(ad.reshape(x, (1, h, w)))
    for kern, d in zip(kernels, spec.dilations):
        r = ad.conv2d(r, kern, d)
    return ad.batch_to_complex(r) - (1.0 / spec.channels) * x


def apply_WH(z, kernels, spec):
    """Adjoint of :func:`apply_W`: reversed transposed cascade plus skip adjoint."""
    r = ad.complex_to_batch(z)
    for kern, d in zip(reversed(kernels), reversed(spec.dilations)):
        r = ad.conv2d_transpose(r, kern, d)
    x = ad.index(ad.batch_to_complex(r), 0)
    return x - (1.0 / spec.channels) * ad.sum0(z)


class DeepLinearConvTransform:
    """One learnable transform: a cascade of convolutions and an inverted skip."""

    def __init__(self, spec, kernels):
        kernels = [np.asarray(k, dtype=np.float64) for k in kernels]
        shapes = [k.shape for k in kernels]
        if shapes != spec.kernel_shapes:
            raise ValueError(f"kernel shapes {shapes} do not match {spec.kernel_shapes}")
        self.spec = spec
        self.kernels = kernels

    @classmethod
    def zeros(cls, spec):
        return cls(spec, [np.zeros(s) for s in spec.kernel_shapes])

    def forward(self, x):
        return apply_W(x, self.kernels, self.spec)

    def adjoint(self, z):
        return apply_WH(z, self.kernels, self.spec)

    @property
    def parameter_count(self):
        return parameter_count(self.spec)

    @property
    def receptive_field(self):
        return receptive_field(self.spec)


class WaveletTransform:
    """Orthogonal multi-level 2-D DWT (periodized), applied to real and imaginary parts.

    Images whose sides are not divisible by ``2**levels`` are zero padded; the
    adjoint crops back, so ``adjoint(forward(x)) == x`` always holds.
    """

    def __init__(self, levels=3, wavelet="db4"):
        self.levels = int(levels)
        self.wavelet = wavelet

    def _padded(self, shape):
        m = 2**self.levels
        return tuple(-(-n // m) * m for n in shape)

    def _wavedec2(self, x):
        # deep levels only trigger pywt's boundary-effect warning; periodization stays orthogonal
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            return pywt.wavedec2(x, self.wavelet, mode="periodization", level=self.levels)

    def _fwd_real(self, x):
        coeffs = self._wavedec2(x)
        arr, _ = pywt.coeffs_to_array(coeffs)
        return arr

    def _adj_real(self, arr):
        slices = self._slices(arr.shape)
        coeffs = pywt.array_to_coeffs(arr, slices, output_format="wavedec2")
        return pywt.waverec2(coeffs, self.wavelet, mode="periodization")

    def _slices(self, shape):
        dummy = self._wavedec2(np.zeros(shape))
        return pywt.coeffs_to_array(dummy)[1]

    def forward(self, x):
        x = np.asarray(x)
        h, w = x.shape
        ph, pw = self._padded(x.shape)
        xp = np.zeros((ph, pw), dtype=complex)
        xp[:h, :w] = x
        out = self._fwd_real(xp.real) + 1j * self._fwd_real(xp.imag)
        return out[None]

    def adjoint(self, z, shape=None):
        z = np.asarray(z)[0]
        out = self._adj_real(z.real) + 1j * self._adj_real(z.imag)
        if shape is not None:
            out = out[: shape[0], : shape[1]]
        return out

    def bind(self, shape):
        """Return ``(forward, adjoint)`` callables usable inside the solver."""
        fwd = lambda x: ad.linear(x, self.forward, lambda z: self.adjoint(z, shape), "wavelet")
        adj = lambda z: ad.linear(
            z, lambda z: self.adjoint(z, shape), self.forward, "wavelet_adjoint"
        )
        return fwd, adj


def tight_frame_deviation(forward, adjoint, x):
    """``||W^H W x - x|| / ||x||``; zero exactly when ``W`` is a tight frame on ``x``."""
    x = np.asarray(x)
    return float(np.linalg.norm(adjoint(forward(x)) - x) / np.linalg.norm(x))
