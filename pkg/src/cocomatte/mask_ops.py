"""Binary morphology and rectangle geometry.

Masks are 2-D boolean numpy arrays. Both morphology operators use a k x k
square structuring element whose offsets run from ``-(ceil(k/2) - 1)`` to
``floor(k/2)`` (so k=4 covers -1..2), with replicate padding at the image
border. Under this convention ``erode(m, k) == ~dilate(~m, k)`` exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import DimensionMismatch, EmptyMask, ZeroArea

OverlapMode = Literal["iou", "ioa"]


def se_offsets(k: int) -> tuple[int, int]:
    """Return ``(lo, hi)``, the inclusive offset range of a size-k element."""
    if k < 1:
        raise ValueError(f"kernel size must be >= 1, got {k}")
    return -((k + 1) // 2 - 1), k // 2


def _as_mask(mask) -> np.ndarray:
    m = np.asarray(mask)
    if m.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {m.shape}")
    return m.astype(bool, copy=False)


def _sweep(m: np.ndarray, k: int, axis: int, reduce) -> np.ndarray:
    # out[i] = reduce over s in [i - hi, i - lo] of m[clamp(s)]
    lo, hi = se_offsets(k)
    n = m.shape[axis]
    pad = [(0, 0), (0, 0)]
    pad[axis] = (hi, -lo)
    padded = np.pad(m, pad, mode="edge")
    out = None
    for start in range(k):
        sl = [slice(None), slice(None)]
        sl[axis] = slice(start, start + n)
        piece = padded[tuple(sl)]
        out = piece.copy() if out is None else reduce(out, piece, out=out)
    return out


def dilate(mask, k: int) -> np.ndarray:
    """Binary dilation with a k x k square element and replicate padding."""
    m = _as_mask(mask)
    return _sweep(_sweep(m, k, 0, np.logical_or), k, 1, np.logical_or)


def erode(mask, k: int) -> np.ndarray:
    """Binary erosion, the exact dual of :func:`dilate`."""
    m = _as_mask(mask)
    return _sweep(_sweep(m, k, 0, np.logical_and), k, 1, np.logical_and)


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle; ``x0, y0`` inclusive, ``x1, y1`` exclusive."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (0 <= self.x0 <= self.x1 and 0 <= self.y0 <= self.y1):
            raise ValueError(f"invalid rect {self}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.width * self.height

    def intersection(self, other: Rect) -> int:
        w = min(self.x1, other.x1) - max(self.x0, other.x0)
        h = min(self.y1, other.y1) - max(self.y0, other.y0)
        return max(w, 0) * max(h, 0)

    def contains(self, other: Rect) -> bool:
        return (
            self.x0 <= other.x0
            and self.y0 <= other.y0
            and self.x1 >= other.x1
            and self.y1 >= other.y1
        )

    def as_list(self) -> list[int]:
        return [self.x0, self.y0, self.x1, self.y1]


def min_bounding_rect(mask) -> Rect:
    m = _as_mask(mask)
    rows = np.flatnonzero(m.any(axis=1))
    if rows.size == 0:
        raise EmptyMask("mask has no set pixels")
    cols = np.flatnonzero(m.any(axis=0))
    return Rect(int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1)


def rect_overlap(a: Rect, b: Rect, mode: OverlapMode = "iou") -> float:
    """Overlap ratio of two rects.

    ``iou`` is the symmetric intersection over union; ``ioa`` divides the
    intersection by the area of ``b`` (the accessory rect).
    """
    inter = a.intersection(b)
    if mode == "iou":
        union = a.area + b.area - inter
        return inter / union if union > 0 else 0.0
    if mode == "ioa":
        if b.area == 0:
            raise ZeroArea(f"accessory rect {b} has zero area")
        return inter / b.area
    raise ValueError(f"unknown overlap mode {mode!r}")


def check_same_shape(*arrays) -> None:
    shapes = {np.shape(a)[:2] for a in arrays}
    if len(shapes) > 1:
        raise DimensionMismatch(f"spatial shapes differ: {sorted(shapes)}")


def masks_intersect(a, b) -> bool:
    check_same_shape(a, b)
    return bool(np.logical_and(_as_mask(a), _as_mask(b)).any())
