"""Reconstruction quality metrics for images scaled to [0, 1]."""

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(reference: np.ndarray, estimate: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB with peak value 1.

    10*log10(1 / MSE); identical inputs give +inf.
    """
    reference = np.asarray(reference, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if reference.shape != estimate.shape:
        raise ValueError(
            f"shape mismatch {reference.shape} vs {estimate.shape}")
    mse = float(np.mean((reference - estimate) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    win = np.outer(g, g)
    return win / win.sum()


def ssim(reference: np.ndarray, estimate: np.ndarray) -> float:
    """Mean structural similarity with an 11x11 Gaussian window, sigma 1.5.

    Uses the standard constants K1 = 0.01, K2 = 0.03 at dynamic range 1.
    Local statistics come from a valid-mode windowed convolution, so both
    images must be at least 11 pixels in each dimension.  The raw value
    lies in [-1, 1]; identical inputs give exactly 1.0.
    """
    x = np.asarray(reference, dtype=np.float64)
    y = np.asarray(estimate, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    if min(x.shape) < SSIM_WINDOW:
        raise ValueError(
            f"images must be at least {SSIM_WINDOW} pixels per side")
    win = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    mu_x = convolve2d(x, win, mode="valid")
    mu_y = convolve2d(y, win, mode="valid")
    var_x = convolve2d(x * x, win, mode="valid") - mu_x * mu_x
    var_y = convolve2d(y * y, win, mode="valid") - mu_y * mu_y
    cov = convolve2d(x * y, win, mode="valid") - mu_x * mu_y
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def mean_sparsity(codes: np.ndarray, zero_tol: float = 0.0) -> float:
    """Mean per-column count of entries with |a| > zero_tol."""
    if zero_tol < 0:
        raise ValueError("zero_tol must be >= 0")
    codes = np.asarray(codes)
    if codes.ndim != 2:
        raise ValueError("codes must be a 2-D matrix")
    return float(np.mean((np.abs(codes) > zero_tol).sum(axis=0)))


@dataclass(frozen=True)
class QualityReport:
    """Metrics for one reconstruction against its reference image."""

    psnr_db: float
    ssim: float
    mean_code_sparsity: float | None = None
    runtime_seconds: float | None = None


def evaluate_quality(reference, estimate, codes=None,
                     runtime_seconds=None) -> QualityReport:
    """Bundle PSNR/SSIM (and code sparsity when codes are given)."""
    return QualityReport(
        psnr_db=psnr(reference, estimate),
        ssim=ssim(reference, estimate),
        mean_code_sparsity=None if codes is None else mean_sparsity(codes),
        runtime_seconds=runtime_seconds)
