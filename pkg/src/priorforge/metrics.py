"""Image-quality metrics and filter frequency-response analysis."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mri import GeometryError, SamplingMask, _dft2c


@dataclass(frozen=True)
class MetricReport:
    psnr: float
    ssim: float
    data_range: float
    masked_psnr: float | None = None


def psnr(x: np.ndarray, ref: np.ndarray) -> float:
    """10*log10(range^2 / MSE) with range = max(ref); inf when MSE = 0."""
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise GeometryError(f"psnr extent mismatch: {x.shape} vs {ref.shape}")
    mse = np.mean((x - ref) ** 2)
    if mse == 0.0:
        return math.inf
    rng = float(ref.max())
    return 10.0 * math.log10(rng * rng / mse)


def _gaussian_taps(size: int, sigma: float) -> np.ndarray:
    r = (size - 1) // 2
    t = np.exp(-0.5 * (np.arange(-r, r + 1) / sigma) ** 2)
    return t / t.sum()


def ssim(x: np.ndarray, ref: np.ndarray, win_size: int = 11,
         sigma: float = 1.5, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean local SSIM with a Gaussian window over valid positions only.

    Data range is taken from the reference maximum.
    """
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise GeometryError(f"ssim extent mismatch: {x.shape} vs {ref.shape}")
    if min(x.shape) < win_size:
        raise GeometryError(
            f"image extents {x.shape} smaller than the {win_size}x{win_size} window"
        )
    taps = _gaussian_taps(win_size, sigma)

    def wfilter(a):
        # separable valid-mode correlation with the window
        a = np.apply_along_axis(lambda r_: np.correlate(r_, taps, mode="valid"), 0, a)
        return np.apply_along_axis(lambda r_: np.correlate(r_, taps, mode="valid"), 1, a)

    drange = float(ref.max())
    c1 = (k1 * drange) ** 2
    c2 = (k2 * drange) ** 2
    ux = wfilter(x)
    uy = wfilter(ref)
    uxx = wfilter(x * x)
    uyy = wfilter(ref * ref)
    uxy = wfilter(x * ref)
    vx = uxx - ux * ux
    vy = uyy - uy * uy
    cov = uxy - ux * uy
    num = (2 * ux * uy + c1) * (2 * cov + c2)
    den = (ux * ux + uy * uy + c1) * (vx + vy + c2)
    return float((num / den).mean())


def masked_region_psnr(x: np.ndarray, ref: np.ndarray, mask: SamplingMask) -> float:
    """PSNR of the error restricted to un-acquired k-space columns.

    The error spectrum is zeroed on acquired columns; by Parseval the
    remaining energy equals the image-domain MSE of the extrapolated part.
    """
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise GeometryError(f"psnr extent mismatch: {x.shape} vs {ref.shape}")
    cols = mask.columns
    if cols.all():
        raise GeometryError("mask acquires every column: no masked region")
    spec = _dft2c((x - ref).astype(np.complex128))
    masked = spec[:, cols == 0]
    mse = (np.abs(masked) ** 2).sum() / x.size
    if mse == 0.0:
        return math.inf
    rng = float(ref.max())
    return 10.0 * math.log10(rng * rng / mse)


def filter_frequency_response(taps, omegas) -> np.ndarray:
    """|sum_n taps_n exp(-i omega n)| per grid point."""
    taps = np.asarray(taps, dtype=np.float64)
    if taps.size == 0:
        raise ValueError("taps must be non-empty")
    omegas = np.asarray(omegas, dtype=np.float64)
    n = np.arange(taps.size)
    return np.abs(np.exp(-1j * np.outer(omegas, n)) @ taps)
