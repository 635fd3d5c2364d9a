"""Rate-distortion metrics: PSNR, bits per pixel, BD-rate.

BD-rate follows the classic cubic-polynomial formulation: fit
log10(bpp) as a cubic in PSNR for each curve, integrate the difference
over the shared PSNR interval, and convert the mean log-rate gap to a
percentage. (Not the piecewise-cubic interpolation variant.)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PSNR_INF = float("inf")


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class RDPoint:
    bpp: float
    psnr: float
    lambda_index: int = -1
    image_id: str = ""

    def __post_init__(self):
        if not self.bpp > 0:
            raise MetricError(f"bpp must be positive, got {self.bpp}")


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10*log10(1/MSE) for images in [0, 1]; identical inputs give inf."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise MetricError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_INF
    return 10.0 * np.log10(1.0 / mse)


def bpp(bitstream: bytes, orig_height: int, orig_width: int) -> float:
    """Total coded bits (header included) per original pixel."""
    if orig_height <= 0 or orig_width <= 0:
        raise MetricError("image extents must be positive")
    return 8.0 * len(bitstream) / (orig_height * orig_width)


def _curve(points) -> tuple[np.ndarray, np.ndarray]:
    if len(points) < 4:
        raise MetricError(f"need at least 4 rate points, got {len(points)}")
    ps = np.array([p.psnr for p in points], dtype=np.float64)
    rs = np.array([p.bpp for p in points], dtype=np.float64)
    if not np.all(np.isfinite(ps)):
        raise MetricError("non-finite psnr in curve")
    if np.any(np.diff(ps) <= 0):
        raise MetricError("psnr values must be strictly increasing")
    return ps, np.log10(rs)


def bd_rate(anchor, test) -> float:
    """Average bitrate change of `test` vs `anchor` in percent.

    Negative means `test` spends fewer bits at equal quality.
    """
    pa, la = _curve(anchor)
    pt, lt = _curve(test)
    lo = max(pa[0], pt[0])
    hi = min(pa[-1], pt[-1])
    if not hi > lo:
        raise MetricError(
            f"psnr ranges do not overlap: [{pa[0]:.3f}, {pa[-1]:.3f}] vs "
            f"[{pt[0]:.3f}, {pt[-1]:.3f}]")
    # Cubic fit of log-rate vs quality; integrate via the antiderivative.
    ca = np.polyfit(pa, la, 3)
    ct = np.polyfit(pt, lt, 3)
    ia = np.polyint(ca)
    it = np.polyint(ct)
    avg_diff = (np.polyval(it, hi) - np.polyval(it, lo)
                - np.polyval(ia, hi) + np.polyval(ia, lo)) / (hi - lo)
    return 100.0 * (10.0 ** avg_diff - 1.0)


def bd_rate_per_image(anchor, test) -> float:
    """Mean of per-image BD-rates; both lists are grouped by image id."""
    by_image: dict[str, tuple[list, list]] = {}
    for p in anchor:
        by_image.setdefault(p.image_id, ([], []))[0].append(p)
    for p in test:
        by_image.setdefault(p.image_id, ([], []))[1].append(p)
    values = []
    for image_id, (a, t) in sorted(by_image.items()):
        if not a or not t:
            raise MetricError(f"image {image_id!r} missing from one curve")
        values.append(bd_rate(a, t))
    return float(np.mean(values))
