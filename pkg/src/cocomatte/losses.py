"""Forward evaluation of the matting training objective.

Nothing here differentiates; the functions score numpy grids so that loss
values can be inspected, logged or cross-checked outside a training loop.

Every region or pixel sum is reported as a mean by default. Pass
``reduction="sum"`` to get the raw sums instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import DimensionMismatch, NonFinite, NotNormalized
from .mask_ops import check_same_shape
from .trimap import regions

Reduction = Literal["mean", "sum"]

BINOMIAL_5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
PYRAMID_LEVELS = 5


@dataclass
class LossWeights:
    lambda_R: float = 0.2
    lambda_T: float = 0.05
    lambda_gp: float = 0.0
    prob_clamp_eps: float = 1e-6

    def __post_init__(self):
        if min(self.lambda_R, self.lambda_T, self.lambda_gp) < 0:
            raise ValueError("loss weights must be non-negative")
        if not 0 < self.prob_clamp_eps < 0.5:
            raise ValueError("prob_clamp_eps must lie in (0, 0.5)")


@dataclass
class GhmConfig:
    num_bins: int = 10

    def __post_init__(self):
        if self.num_bins < 1:
            raise ValueError("num_bins must be >= 1")


def _reduce(values: np.ndarray, reduction: Reduction) -> float:
    if values.size == 0:
        return 0.0
    return float(values.sum() if reduction == "sum" else values.mean())


# --- matting loss ------------------------------------------------------------


def forward_gradients(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences along x and y; the last column/row is 0 (replicate)."""
    gx = np.zeros_like(a)
    gy = np.zeros_like(a)
    gx[:, :-1] = a[:, 1:] - a[:, :-1]
    gy[:-1, :] = a[1:, :] - a[:-1, :]
    return gx, gy


def _blur(a: np.ndarray) -> np.ndarray:
    padded = np.pad(a, 2, mode="edge")
    h, w = a.shape
    rows = sum(BINOMIAL_5[i] * padded[i : i + h, :] for i in range(5))
    return sum(BINOMIAL_5[j] * rows[:, j : j + w] for j in range(5))


def _upsample(low: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    # Pad at low resolution before zero insertion so constants survive at borders.
    padded = np.pad(low, 1, mode="edge")
    ph, pw = padded.shape
    z = np.zeros((2 * ph, 2 * pw))
    z[::2, ::2] = padded
    h, w = z.shape
    z = np.pad(z, 2)
    rows = sum(2.0 * BINOMIAL_5[i] * z[i : i + h, :] for i in range(5))
    full = sum(2.0 * BINOMIAL_5[j] * rows[:, j : j + w] for j in range(5))
    return full[2 : 2 + shape[0], 2 : 2 + shape[1]]


def laplacian_pyramid(a, levels: int = PYRAMID_LEVELS) -> list[np.ndarray]:
    """Band-pass levels ``current - up(down(current))``, finest first."""
    current = np.asarray(a, dtype=np.float64)
    pyr = []
    for _ in range(levels):
        down = _blur(current)[::2, ::2]
        pyr.append(current - _upsample(down, current.shape))
        current = down
    return pyr


def matting_loss(
    alpha_hat,
    alpha,
    trimap,
    w: LossWeights | None = None,
    reduction: Reduction = "mean",
) -> tuple[float, dict[str, float]]:
    """L1 on known and unknown regions, gradient and Laplacian-pyramid terms.

    Returns ``(total, components)`` with components ``known``, ``unknown``,
    ``gradient`` (difference term plus ``lambda_gp`` times the target's own
    gradient) and ``laplacian``.
    """
    w = w or LossWeights()
    ah = np.asarray(alpha_hat, dtype=np.float64)
    a = np.asarray(alpha, dtype=np.float64)
    if ah.shape != a.shape or np.shape(trimap) != a.shape:
        raise DimensionMismatch(f"shapes {ah.shape}, {a.shape}, {np.shape(trimap)}")

    fg, bg, unk = regions(trimap)
    diff = np.abs(a - ah)
    known_term = _reduce(diff[fg | bg], reduction)
    unknown_term = _reduce(diff[unk], reduction)

    gx, gy = forward_gradients(a)
    hx, hy = forward_gradients(ah)
    grad_diff = _reduce(np.abs(gx - hx) + np.abs(gy - hy), reduction)
    grad_pen = _reduce(np.abs(gx) + np.abs(gy), reduction)
    gradient_term = grad_diff + w.lambda_gp * grad_pen

    lap_term = 0.0
    for k, (la, lh) in enumerate(zip(laplacian_pyramid(a), laplacian_pyramid(ah))):
        lap_term += 2.0**k * _reduce(np.abs(la - lh), reduction)

    components = {
        "known": known_term,
        "unknown": unknown_term,
        "gradient": gradient_term,
        "laplacian": lap_term,
    }
    return sum(components.values()), components


# --- regularization loss -------------------------------------------------------


def regularization_loss(p_hat_sam, p_sam, w: LossWeights | None = None, reduction: Reduction = "mean") -> float:
    """BCE of a predicted mask against the binarized output of a frozen model."""
    w = w or LossWeights()
    p_hat = np.asarray(p_hat_sam, dtype=np.float64)
    ref = np.asarray(p_sam, dtype=np.float64)
    if p_hat.shape != ref.shape:
        raise DimensionMismatch(f"{p_hat.shape} vs {ref.shape}")
    y = ref > 0.5
    p = np.clip(p_hat, w.prob_clamp_eps, 1.0 - w.prob_clamp_eps)
    bce = -np.where(y, np.log(p), np.log1p(-p))
    return _reduce(bce, reduction)


# --- GHM trimap loss -------------------------------------------------------------


def trimap_class_index(y_tri) -> np.ndarray:
    """Class index per pixel: 0 background, 1 unknown, 2 foreground."""
    fg, bg, _ = regions(y_tri)
    cls = np.ones(np.shape(y_tri), dtype=np.int64)
    cls[bg] = 0
    cls[fg] = 2
    return cls


def ghm_weights(p_true: np.ndarray, num_bins: int) -> np.ndarray:
    """Per-pixel ``1 / GD(g)`` with ``g = 1 - p_true`` and ``GD = count * B / N``."""
    g = 1.0 - p_true
    bins = np.minimum(np.floor(g * num_bins).astype(np.int64), num_bins - 1)
    bins = np.maximum(bins, 0)
    counts = np.bincount(bins.ravel(), minlength=num_bins)
    n = p_true.size
    return n / (counts[bins] * num_bins)


def ghm_trimap_loss(
    p_hat_mat,
    y_tri,
    g: GhmConfig | None = None,
    w: LossWeights | None = None,
    reduction: Reduction = "mean",
) -> float:
    """GHM-weighted cross-entropy of 3-class trimap probabilities (H, W, 3)."""
    g = g or GhmConfig()
    w = w or LossWeights()
    p = np.asarray(p_hat_mat, dtype=np.float64)
    if p.ndim != 3 or p.shape[2] != 3:
        raise DimensionMismatch(f"expected (H, W, 3) probabilities, got {p.shape}")
    check_same_shape(p, y_tri)
    if np.abs(p.sum(axis=2) - 1.0).max() > 1e-6:
        raise NotNormalized("class probabilities do not sum to 1 per pixel")
    cls = trimap_class_index(y_tri)
    p_true = np.take_along_axis(p, cls[:, :, None], axis=2)[:, :, 0]
    weight = ghm_weights(p_true, g.num_bins)
    ce = -np.log(np.maximum(p_true, w.prob_clamp_eps))
    return _reduce(weight * ce, reduction)


# --- combined objective ---------------------------------------------------------------


def total_loss(components, w: LossWeights | None = None) -> float:
    """``L_mat + lambda_R * L_reg + lambda_T * L_trimap``.

    ``components`` is a ``(mat, reg, trimap)`` triple or a mapping with those keys.
    """
    w = w or LossWeights()
    if isinstance(components, dict):
        mat, reg, tri = components["mat"], components["reg"], components["trimap"]
    else:
        mat, reg, tri = components
    vals = [float(mat), float(reg), float(tri)]
    if not all(math.isfinite(v) for v in vals):
        raise NonFinite(f"non-finite loss component in {vals}")
    return vals[0] + w.lambda_R * vals[1] + w.lambda_T * vals[2]
