"""Training objective and verification metrics.

Forecast skill is scored on the 0-255 reflectivity scale: fields arrive in
[0, 1] and are scaled up before thresholding and before pixel/perceptual
metrics, so thresholds and errors are comparable across datasets quoted on
that scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PIXEL_SCALE = 255.0
PSNR_PERFECT = math.inf  # sentinel for identical inputs


class MetricError(ValueError):
    pass


def _check_match(pred: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise MetricError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    return pred, gt


def _frames(x: np.ndarray) -> np.ndarray:
    """View any (..., H, W) stack as (N, H, W)."""
    if x.ndim < 2:
        raise MetricError(f"need at least 2 dims, got {x.shape}")
    return x.reshape(-1, x.shape[-2], x.shape[-1])


# ---------------------------------------------------------------------------
# training objective


def combined_loss(pred: np.ndarray, gt: np.ndarray, lam: float) -> float:
    """Mean squared error plus ``lam`` times a spectral L1 term.

    The spectral term is the mean complex modulus of the per-frame 2D DFT
    coefficient difference, averaged over every bin of every frame, so the
    weight's scale does not depend on resolution or sequence length.
    """
    if not 0.0 <= lam <= 1.0:
        raise MetricError(f"lambda must lie in [0, 1], got {lam}")
    pred, gt = _check_match(pred, gt)
    mse_term = float(np.mean((pred - gt) ** 2))
    if lam == 0.0:
        return mse_term
    pf = np.fft.fft2(_frames(pred), axes=(1, 2))
    gf = np.fft.fft2(_frames(gt), axes=(1, 2))
    spectral_term = float(np.mean(np.abs(pf - gf)))
    return mse_term + lam * spectral_term


# ---------------------------------------------------------------------------
# categorical skill


@dataclass
class ContingencyCounts:
    hits: int = 0
    misses: int = 0
    false_alarms: int = 0
    correct_negatives: int = 0

    @property
    def total(self) -> int:
        return self.hits + self.misses + self.false_alarms + self.correct_negatives

    def __add__(self, other: "ContingencyCounts") -> "ContingencyCounts":
        return ContingencyCounts(
            self.hits + other.hits,
            self.misses + other.misses,
            self.false_alarms + other.false_alarms,
            self.correct_negatives + other.correct_negatives,
        )


def contingency(pred: np.ndarray, gt: np.ndarray, threshold: float) -> ContingencyCounts:
    """Pixelwise event counts at a 0-255 threshold; event means value >= threshold."""
    if not 0.0 <= threshold <= 255.0:
        raise MetricError(f"threshold must lie in [0, 255], got {threshold}")
    pred, gt = _check_match(pred, gt)
    pe = pred * PIXEL_SCALE >= threshold
    ge = gt * PIXEL_SCALE >= threshold
    return ContingencyCounts(
        hits=int(np.sum(pe & ge)),
        misses=int(np.sum(~pe & ge)),
        false_alarms=int(np.sum(pe & ~ge)),
        correct_negatives=int(np.sum(~pe & ~ge)),
    )


def csi(c: ContingencyCounts) -> float:
    denom = c.hits + c.misses + c.false_alarms
    return c.hits / denom if denom else 0.0


def hss(c: ContingencyCounts) -> float:
    a, b, m, d = c.hits, c.false_alarms, c.misses, c.correct_negatives
    denom = (a + m) * (m + d) + (a + b) * (b + d)
    return 2.0 * (a * d - b * m) / denom if denom else 0.0


# ---------------------------------------------------------------------------
# pixel and perceptual metrics (0-255 scale)


def mse(pred: np.ndarray, gt: np.ndarray) -> float:
    pred, gt = _check_match(pred, gt)
    return float(np.mean((PIXEL_SCALE * (pred - gt)) ** 2))


def mae(pred: np.ndarray, gt: np.ndarray) -> float:
    pred, gt = _check_match(pred, gt)
    return float(np.mean(np.abs(PIXEL_SCALE * (pred - gt))))


def psnr(pred: np.ndarray, gt: np.ndarray) -> float:
    err = mse(pred, gt)
    if err == 0.0:
        return PSNR_PERFECT
    return 10.0 * math.log10(PIXEL_SCALE**2 / err)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    g = np.exp(-((np.arange(size) - half) ** 2) / (2.0 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def ssim(
    pred: np.ndarray,
    gt: np.ndarray,
    window: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
) -> float:
    """Structural similarity with a Gaussian window, valid positions only.

    Inputs are (..., H, W) stacks in [0, 1]; frames are scored independently
    on the 0-255 scale and the scores averaged.
    """
    pred, gt = _check_match(pred, gt)
    pf = _frames(pred) * PIXEL_SCALE
    gf = _frames(gt) * PIXEL_SCALE
    if pf.shape[1] < window or pf.shape[2] < window:
        raise MetricError(f"frame {pf.shape[1:]} smaller than {window}x{window} window")
    kern = gaussian_window(window, sigma)
    c1 = (k1 * PIXEL_SCALE) ** 2
    c2 = (k2 * PIXEL_SCALE) ** 2

    def w_mean(x):
        win = np.lib.stride_tricks.sliding_window_view(x, (window, window), axis=(1, 2))
        return np.einsum("nhwij,ij->nhw", win, kern)

    mu_p = w_mean(pf)
    mu_g = w_mean(gf)
    var_p = w_mean(pf * pf) - mu_p**2
    var_g = w_mean(gf * gf) - mu_g**2
    cov = w_mean(pf * gf) - mu_p * mu_g
    score = ((2 * mu_p * mu_g + c1) * (2 * cov + c2)) / (
        (mu_p**2 + mu_g**2 + c1) * (var_p + var_g + c2)
    )
    return float(np.mean(score))


def average_over_thresholds(values: dict[float, float]) -> float:
    """Unweighted mean across a configured threshold list."""
    if not values:
        raise MetricError("no thresholds")
    return float(np.mean(list(values.values())))
