"""Trimap construction from fused masks and from ground-truth alphas.

Trimaps are float arrays holding exactly ``BG = 0.0``, ``UNK = 0.5`` and
``FG = 1.0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyMask
from .mask_ops import dilate, erode

BG, UNK, FG = 0.0, 0.5, 1.0


@dataclass
class TrimapConfig:
    pre_dilate_k: int = 4
    eta: float = 12.0
    min_omega: int = 1

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.pre_dilate_k < 1:
            raise ValueError("pre_dilate_k must be >= 1")
        if self.min_omega < 1:
            raise ValueError("min_omega must be >= 1")


def adaptive_kernel_size(mask, eta: float = 12.0, min_omega: int = 1) -> int:
    """Erosion kernel ``sqrt(area) / eta``, rounded half up, floored at ``min_omega``."""
    area = int(np.count_nonzero(mask))
    if area == 0:
        raise EmptyMask("cannot size a kernel from an empty mask")
    return max(int(min_omega), math.floor(math.sqrt(area) / eta + 0.5))


def make_trimap(fused, cfg: TrimapConfig | None = None, *, return_omega: bool = False):
    cfg = cfg or TrimapConfig()
    m = np.asarray(fused, dtype=bool)
    if not m.any():
        raise EmptyMask("fused mask is empty")
    grown = dilate(m, cfg.pre_dilate_k)
    omega = adaptive_kernel_size(grown, cfg.eta, cfg.min_omega)
    tri = np.full(m.shape, UNK)
    tri[erode(grown, omega)] = FG
    tri[erode(~grown, omega)] = BG
    return (tri, omega) if return_omega else tri


def is_degenerate(trimap) -> bool:
    """True when erosion left no definite foreground."""
    return not np.any(np.asarray(trimap) == FG)


def regions(trimap) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Boolean ``(fg, bg, unk)`` masks. Tolerates values re-read from 8-bit PNGs."""
    t = np.asarray(trimap, dtype=np.float64)
    fg = t > 0.75
    bg = t < 0.25
    return fg, bg, ~(fg | bg)


def trimap_from_alpha(alpha, eps: float = 1e-3, unk_dilate_k: int = 0) -> np.ndarray:
    a = np.asarray(alpha, dtype=np.float64)
    tri = np.full(a.shape, UNK)
    tri[a >= 1 - eps] = FG
    tri[a <= eps] = BG
    if unk_dilate_k >= 1:
        tri[dilate(tri == UNK, unk_dilate_k)] = UNK
    return tri


def trimap_to_uint8(trimap) -> np.ndarray:
    fg, bg, _ = regions(trimap)
    out = np.full(np.shape(trimap), 128, dtype=np.uint8)
    out[fg] = 255
    out[bg] = 0
    return out


def trimap_from_uint8(arr) -> np.ndarray:
    a = np.asarray(arr)
    tri = np.full(a.shape, UNK)
    tri[a >= 192] = FG
    tri[a < 64] = BG
    return tri
