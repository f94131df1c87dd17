"""Training losses and image-quality metrics.

Losses operate on torch tensors and are differentiable. Metrics return
python floats computed in double precision on unit-range RGB, with no luma
conversion and no border cropping.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable

import numpy as np
import torch
from scipy import ndimage

from .errors import DimensionError, ValidationError

# returned by psnr() for identical images; excluded from report means
PSNR_INF = math.inf

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def _same_shape(a, b, who):
    if tuple(a.shape) != tuple(b.shape):
        raise DimensionError(f"{who}: shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")


def l1_loss(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    _same_shape(pred, gt, "l1_loss")
    return (pred - gt).abs().mean()


def alpha_masked_loss(pred: torch.Tensor, gt: torch.Tensor, alpha: torch.Tensor) -> torch.Tensor:
    """Mean of ``|pred - gt| * (1 - alpha)`` over all elements.

    ``alpha`` is (H, W), (1, H, W) or (B, 1, H, W) and is broadcast over the
    colour channels. The mean runs over every element, foreground included,
    so a crop that is mostly foreground produces a small loss.
    """
    _same_shape(pred, gt, "alpha_masked_loss")
    if alpha.shape[-2:] != pred.shape[-2:]:
        raise DimensionError(f"alpha_masked_loss: alpha spatial shape {tuple(alpha.shape[-2:])} "
                             f"does not match images {tuple(pred.shape[-2:])}")
    if alpha.dim() >= 3 and alpha.shape[-3] != 1:
        raise DimensionError(f"alpha_masked_loss: alpha must have a single channel, got {alpha.shape[-3]}")
    with torch.no_grad():
        lo, hi = float(alpha.min()), float(alpha.max())
    if lo < 0.0 or hi > 1.0 or math.isnan(lo) or math.isnan(hi):
        raise ValidationError(f"alpha values must lie in [0, 1], got range [{lo}, {hi}]")
    weight = 1.0 - alpha
    while weight.dim() < pred.dim():
        weight = weight.unsqueeze(0)
    return ((pred - gt).abs() * weight).sum() / pred.numel()


def _as_array(x) -> np.ndarray:
    if torch.is_tensor(x):
        x = x.detach().cpu().numpy()
    return np.asarray(x, dtype=np.float64)


def mse(pred, gt) -> float:
    a, b = _as_array(pred), _as_array(gt)
    _same_shape(a, b, "mse")
    return float(np.mean((a - b) ** 2))


def psnr(pred, gt) -> float:
    """Peak signal-to-noise ratio in dB for unit-range images (peak = 1)."""
    err = mse(pred, gt)
    if err == 0.0:
        return PSNR_INF
    return 10.0 * math.log10(1.0 / err)


def gaussian_window_1d(size=SSIM_WINDOW, sigma=SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img, g):
    out = ndimage.correlate1d(img, g, axis=-1, mode="constant")
    out = ndimage.correlate1d(out, g, axis=-2, mode="constant")
    r = len(g) // 2
    return out[..., r:-r, r:-r]


def ssim_map(pred, gt) -> np.ndarray:
    """Local SSIM at every valid window position, one map per channel."""
    a, b = _as_array(pred), _as_array(gt)
    _same_shape(a, b, "ssim")
    if a.ndim < 2 or a.shape[-1] < SSIM_WINDOW or a.shape[-2] < SSIM_WINDOW:
        raise ValidationError(f"ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {a.shape}")
    a = a.reshape((-1,) + a.shape[-2:])
    b = b.reshape((-1,) + b.shape[-2:])
    g = gaussian_window_1d()
    mu_a = np.stack([_filter_valid(c, g) for c in a])
    mu_b = np.stack([_filter_valid(c, g) for c in b])
    s_aa = np.stack([_filter_valid(c * c, g) for c in a]) - mu_a ** 2
    s_bb = np.stack([_filter_valid(c * c, g) for c in b]) - mu_b ** 2
    s_ab = np.stack([_filter_valid(ca * cb, g) for ca, cb in zip(a, b)]) - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * s_ab + SSIM_C2)
    den = (mu_a ** 2 + mu_b ** 2 + SSIM_C1) * (s_aa + s_bb + SSIM_C2)
    return num / den


def ssim(pred, gt) -> float:
    """Mean SSIM, 11x11 Gaussian window (sigma 1.5), averaged over channels."""
    return float(ssim_map(pred, gt).mean())


# -- reports ---------------------------------------------------------------

# name -> scorer(pred, gt) -> float; e.g. an external LPIPS wrapper
PERCEPTUAL_METRICS: Dict[str, Callable] = {}


def register_metric(name: str, scorer: Callable) -> None:
    """Add an extra per-image metric (such as LPIPS) to evaluation reports."""
    PERCEPTUAL_METRICS[name] = scorer


@dataclass
class ImageScore:
    id: str
    source: str
    target: str
    psnr: float
    ssim: float
    extra: dict = field(default_factory=dict)


@dataclass
class MetricReport:
    psnr_db: float
    ssim: float
    count: int
    infinite_psnr: int = 0
    extra: dict = field(default_factory=dict)

    @classmethod
    def aggregate(cls, scores: Iterable[ImageScore]) -> "MetricReport":
        scores = list(scores)
        finite = [s.psnr for s in scores if math.isfinite(s.psnr)]
        n_inf = len(scores) - len(finite)
        if n_inf:
            warnings.warn(f"{n_inf} image(s) with infinite PSNR excluded from the PSNR mean", stacklevel=2)
        if finite:
            mean_psnr = float(np.mean(finite))
        else:
            mean_psnr = PSNR_INF if scores else math.nan
        mean_ssim = float(np.mean([s.ssim for s in scores])) if scores else math.nan
        extra = {}
        for key in sorted({k for s in scores for k in s.extra}):
            extra[key] = float(np.mean([s.extra[key] for s in scores if key in s.extra]))
        return cls(mean_psnr, mean_ssim, len(scores), n_inf, extra)


def score_image(image_id, source_name, target_name, pred, gt) -> ImageScore:
    extra = {name: float(fn(pred, gt)) for name, fn in PERCEPTUAL_METRICS.items()}
    return ImageScore(image_id, source_name, target_name, psnr(pred, gt), ssim(pred, gt), extra)
