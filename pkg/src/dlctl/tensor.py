"""Dense numeric kernels: dilated 2-D convolution, its adjoint, and centered FFTs.

Real tensors are float64 arrays shaped ``(C, H, W)`` or batched ``(B, C, H, W)``.
Convolution is the cross-correlation used by deep-learning frameworks, with
zero padding so that the spatial size is preserved and no bias term.
"""

import numpy as np

__all__ = [
    "ShapeError",
    "conv2d",
    "conv2d_transpose",
    "conv2d_weight_grad",
    "fft2c",
    "ifft2c",
]


class ShapeError(ValueError):
    """Raised when array shapes are incompatible with an operation."""


def _check_kernel(weight, dilation):
    if weight.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise ShapeError(f"kernel must be (out, in, k, k), got {weight.shape}")
    if weight.shape[2] % 2 != 1:
        raise ShapeError(f"kernel side must be odd, got {weight.shape[2]}")
    if int(dilation) < 1:
        raise ShapeError(f"dilation must be >= 1, got {dilation}")


def _as_batch(x):
    x = np.asarray(x)
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeError(f"expected (C, H, W) or (B, C, H, W) input, got {x.shape}")


def _padded_flat(x, pad):
    """Zero pad a batched tensor and lay it out as a ``(C, B*Hp*Wp)`` matrix."""
    b, c, h, w = x.shape
    hp, wp = h + 2 * pad, w + 2 * pad
    xp = np.zeros((c, b, hp, wp), dtype=x.dtype)
    xp[:, :, pad:pad + h, pad:pad + w] = x.transpose(1, 0, 2, 3)
    return xp.reshape(c, b * hp * wp)


def _crop(flat, b, h, w, pad):
    c = flat.shape[0]
    full = flat.reshape(c, b, h + 2 * pad, w + 2 * pad)[:, :, pad:pad + h, pad:pad + w]
    return np.ascontiguousarray(full.transpose(1, 0, 2, 3))


def _taps(k, dilation, pad, wp):
    """Flat offset of each kernel tap relative to the output position."""
    for i in range(k):
        for j in range(k):
            yield i, j, (i * dilation - pad) * wp + (j * dilation - pad)


def _span(b, h, w, pad):
    # flat window covering every valid output position; taps never leave the array
    wp = w + 2 * pad
    lo = pad * wp + pad
    return lo, b * (h + 2 * pad) * wp - lo


def conv2d(x, weight, dilation=1):
    """Same-size dilated 2-D convolution (cross-correlation) without bias.

    Parameters
    ----------
    x : ndarray
        Input of shape ``(C_in, H, W)`` or ``(B, C_in, H, W)``.
    weight : ndarray
        Kernel of shape ``(C_out, C_in, k, k)`` with odd ``k``.
    dilation : int
        Spacing between kernel taps.

    Returns
    -------
    ndarray
        Output of shape ``(C_out, H, W)`` (or batched), zero padded by
        ``(k - 1) * dilation / 2`` on every side.
    """
    weight = np.asarray(weight)
    _check_kernel(weight, dilation)
    xb, squeeze = _as_batch(x)
    c_out, c_in, k, _ = weight.shape
    if xb.shape[1] != c_in:
        raise ShapeError(f"input has {xb.shape[1]} channels, kernel expects {c_in}")
    b, _, h, w = xb.shape
    pad = (k - 1) * dilation // 2
    flat = _padded_flat(xb, pad)
    out = np.zeros((c_out, flat.shape[1]), dtype=np.result_type(flat, weight))
    lo, hi = _span(b, h, w, pad)
    taps = np.ascontiguousarray(weight.transpose(2, 3, 0, 1))  # BLAS needs unit-stride blocks
    for i, j, off in _taps(k, dilation, pad, w + 2 * pad):
        out[:, lo:hi] += taps[i, j] @ flat[:, lo + off:hi + off]
    out = _crop(out, b, h, w, pad)
    return out[0] if squeeze else out


def conv2d_transpose(z, weight, dilation=1):
    """Exact adjoint of :func:`conv2d` with the same kernel.

    ``z`` has ``C_out`` channels; the result has ``C_in`` channels.
    """
    weight = np.asarray(weight)
    _check_kernel(weight, dilation)
    zb, squeeze = _as_batch(z)
    c_out, c_in, k, _ = weight.shape
    if zb.shape[1] != c_out:
        raise ShapeError(f"input has {zb.shape[1]} channels, kernel produces {c_out}")
    b, _, h, w = zb.shape
    pad = (k - 1) * dilation // 2
    flat = _padded_flat(zb, pad)
    out = np.zeros((c_in, flat.shape[1]), dtype=np.result_type(flat, weight))
    lo, hi = _span(b, h, w, pad)
    taps = np.ascontiguousarray(weight.transpose(2, 3, 1, 0))
    for i, j, off in _taps(k, dilation, pad, w + 2 * pad):
        out[:, lo:hi] += taps[i, j] @ flat[:, lo - off:hi - off]
    out = _crop(out, b, h, w, pad)
    return out[0] if squeeze else out


def conv2d_weight_grad(x, upstream, k, dilation=1):
    """Gradient of ``<conv2d(x, W), upstream>`` with respect to ``W``.

    Returns an array of shape ``(C_out, C_in, k, k)``.
    """
    xb, _ = _as_batch(x)
    gb, _ = _as_batch(upstream)
    b, c_in, h, w = xb.shape
    c_out = gb.shape[1]
    pad = (k - 1) * dilation // 2
    xf = _padded_flat(xb, pad)
    gf = _padded_flat(gb, pad)
    lo, hi = _span(b, h, w, pad)
    grad = np.empty((c_out, c_in, k, k), dtype=np.result_type(xf, gf))
    g = gf[:, lo:hi]
    for i, j, off in _taps(k, dilation, pad, w + 2 * pad):
        grad[:, :, i, j] = g @ xf[:, lo + off:hi + off].T
    return grad


def fft2c(img):
    """Centered orthonormal 2-D DFT over the last two axes."""
    axes = (-2, -1)
    return np.fft.fftshift(
        np.fft.fft2(np.fft.ifftshift(img, axes=axes), norm="ortho"), axes=axes
    )


def ifft2c(ksp):
    """Inverse of :func:`fft2c` (also its adjoint)."""
    axes = (-2, -1)
    return np.fft.fftshift(
        np.fft.ifft2(np.fft.ifftshift(ksp, axes=axes), norm="ortho"), axes=axes
    )
