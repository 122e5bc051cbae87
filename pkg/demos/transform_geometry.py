"""
Geometry of the learnable transforms
====================================

Each sparsifying transform is a cascade of bias-free convolutions with an
inverted skip path.  This walk-through prints the receptive field and the
parameter count of the six default transforms, then checks two properties
the solver relies on: the adjoint is exact, and a random transform is far
from a tight frame while a hand-built one is exactly tight.
"""

import numpy as np

from dlctl.transforms import (
    DEFAULT_SPECS,
    DeepLinearConvTransform,
    bank_parameter_count,
    parameter_count,
    receptive_field,
    tight_frame_deviation,
)

###############################################################################
# The default bank
# ----------------
# Filter size, number of cascades and dilation fix both the spatial reach of
# a transform and how many weights it carries.

for i, spec in enumerate(DEFAULT_SPECS, start=1):
    rf = receptive_field(spec)
    print(f"W{i}: {spec.to_string():>10}  receptive field {rf:2d}x{rf:<2d}  "
          f"parameters {parameter_count(spec):6,d}")
total = bank_parameter_count(DEFAULT_SPECS) + 3 * len(DEFAULT_SPECS)
print(f"bank plus rho, lambda, eta per transform: {total:,d}")

###############################################################################
# Adjoint check
# -------------
# The solver applies ``W`` and ``W^H`` many times per iteration, so the two
# must satisfy ``<W x, z> = <x, W^H z>`` to machine precision.

rng = np.random.default_rng(0)
spec = DEFAULT_SPECS[5]
W = DeepLinearConvTransform(spec, [0.2 * rng.standard_normal(s) for s in spec.kernel_shapes])
x = rng.standard_normal((24, 24)) + 1j * rng.standard_normal((24, 24))
z = rng.standard_normal((spec.channels, 24, 24)) + 1j * rng.standard_normal((spec.channels, 24, 24))
lhs, rhs = np.vdot(W.forward(x), z), np.vdot(x, W.adjoint(z))
print(f"adjoint gap for {spec.to_string()}: {abs(lhs - rhs) / abs(lhs):.1e}")

###############################################################################
# Tight frames
# ------------
# The x-update treats ``W^H W`` as the identity.  A random transform breaks
# that badly; centre-tap kernels that copy the image into one channel (and
# cancel the skip path there) satisfy it exactly.

print(f"random kernels: deviation {tight_frame_deviation(W.forward, W.adjoint, x):.3f}")

C, mid = spec.channels, spec.filter_size // 2
kernels = [np.zeros(s) for s in spec.kernel_shapes]
kernels[0][0, 0, mid, mid] = 1.0
for k in kernels[1:]:
    k[:, :, mid, mid] = np.eye(C)
kernels[-1][:, 0, mid, mid] += 1.0 / C
tight = DeepLinearConvTransform(spec, kernels)
print(f"centre-tap kernels: deviation {tight_frame_deviation(tight.forward, tight.adjoint, x):.1e}")
