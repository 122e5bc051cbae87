"""Image quality metrics and the per-slice metrics table."""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate

__all__ = ["MetricsRecord", "format_metrics_tsv", "gaussian_window", "nmse", "ssim", "summarize"]


def nmse(x_hat, x_ref):
    """``||x_hat - x_ref||^2 / ||x_ref||^2`` over complex entries."""
    x_hat, x_ref = np.asarray(x_hat), np.asarray(x_ref)
    if x_hat.shape != x_ref.shape:
        raise ValueError(f"shape mismatch {x_hat.shape} vs {x_ref.shape}")
    den = np.sum(np.abs(x_ref) ** 2)
    if den == 0:
        raise ValueError("reference is zero")
    return float(np.sum(np.abs(x_hat - x_ref) ** 2) / den)


def gaussian_window(size=7, sigma=1.5):
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(mag_hat, mag_ref, size=7, sigma=1.5, k1=0.01, k2=0.03):
    """Mean SSIM of magnitude images with a Gaussian window.

    The dynamic range is ``max(|mag_ref|)``.  Window statistics are local
    weighted moments; the border of half a window is excluded from the mean.
    """
    a = np.abs(np.asarray(mag_hat))
    b = np.abs(np.asarray(mag_ref))
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    w = gaussian_window(size, sigma)
    filt = lambda im: correlate(im, w, mode="reflect")
    L = b.max()
    c1, c2 = (k1 * L) ** 2, (k2 * L) ** 2
    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a**2
    var_b = filt(b * b) - mu_b**2
    cov = filt(a * b) - mu_a * mu_b
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    )
    pad = (size - 1) // 2
    return float(s[pad:-pad, pad:-pad].mean())


@dataclass(frozen=True)
class MetricsRecord:
    slice_id: int
    method: str
    nmse: float
    ssim: float


def summarize(records):
    """Per method: 25th percentile, median and 75th percentile of NMSE and SSIM."""
    out = {}
    for method in sorted({r.method for r in records}):
        rows = [r for r in records if r.method == method]
        out[method] = {}
        for metric in ("nmse", "ssim"):
            vals = np.array([getattr(r, metric) for r in rows])
            p25, p50, p75 = np.percentile(vals, [25, 50, 75], method="linear")
            out[method][metric] = (float(p25), float(p50), float(p75))
    return out


def format_metrics_tsv(records):
    lines = ["slice\tmethod\tnmse\tssim"]
    for r in sorted(records, key=lambda r: (r.method, r.slice_id)):
        lines.append(f"{r.slice_id}\t{r.method}\t{r.nmse:.10e}\t{r.ssim:.10f}")
    lines += ["", "# summary", "method\tmetric\tp25\tmedian\tp75"]
    for method, metrics in summarize(records).items():
        for metric, (p25, p50, p75) in metrics.items():
            lines.append(f"{method}\t{metric}\t{p25:.10e}\t{p50:.10e}\t{p75:.10e}")
    return "\n".join(lines) + "\n"
