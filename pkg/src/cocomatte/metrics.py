"""Matting error metrics (SAD, MSE, MAD, Grad, Conn) and instance-level IMQ.

SAD, Grad and Conn are divided by 1000, as is customary in matting
benchmarks.
"""

from __future__ import annotations

import json
import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch

InstanceMetric = Literal["mad", "mse", "grad", "conn"]

FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


def _pair(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape:
        raise DimensionMismatch(f"pred {p.shape} vs gt {g.shape}")
    return p, g


def pixel_metrics(pred, gt) -> tuple[float, float, float]:
    """Return ``(sad, mse, mad)``."""
    p, g = _pair(pred, gt)
    d = p - g
    return float(np.abs(d).sum() / 1000.0), float((d * d).mean()), float(np.abs(d).mean())


# --- Grad ------------------------------------------------------------------------


def gaussian_derivative_filters(sigma: float = 1.4) -> tuple[np.ndarray, np.ndarray]:
    """x- and y-derivative-of-Gaussian kernels, half width ceil(3 sigma), unit L2 norm."""
    half = int(math.ceil(3 * sigma))
    t = np.arange(-half, half + 1, dtype=np.float64)
    gauss = np.exp(-(t**2) / (2 * sigma**2)) / (sigma * math.sqrt(2 * math.pi))
    dgauss = -t * gauss / sigma**2
    fx = np.outer(gauss, dgauss)
    fx /= np.sqrt((fx**2).sum())
    return fx, fx.T.copy()


def gradient_magnitude(a, sigma: float = 1.4) -> np.ndarray:
    fx, fy = gaussian_derivative_filters(sigma)
    gx = ndimage.correlate(a, fx, mode="nearest")
    gy = ndimage.correlate(a, fy, mode="nearest")
    return np.sqrt(gx**2 + gy**2)


def grad_metric(pred, gt, sigma: float = 1.4) -> float:
    p, g = _pair(pred, gt)
    diff = gradient_magnitude(p, sigma) - gradient_magnitude(g, sigma)
    return float((diff**2).sum() / 1000.0)


# --- Conn ------------------------------------------------------------------------


def largest_component(mask) -> np.ndarray:
    """Largest 4-connected component; ties go to the one met first in raster order."""
    labels, n = ndimage.label(mask, structure=FOUR_CONNECTED)
    if n == 0:
        return np.zeros(np.shape(mask), dtype=bool)
    sizes = np.bincount(labels.ravel())[1:]
    return labels == (int(np.argmax(sizes)) + 1)


def conn_metric(pred, gt, step: float = 0.1, delta: float = 0.15) -> float:
    p, g = _pair(pred, gt)
    thresholds = np.round(np.arange(1, int(round(1 / step))) * step, 10)
    level = np.zeros(p.shape)
    for theta in thresholds:
        omega = largest_component((p >= theta) & (g >= theta))
        level[omega] = theta
    dp = p - level
    dg = g - level
    phi_p = 1.0 - np.where(dp >= delta, dp, 0.0)
    phi_g = 1.0 - np.where(dg >= delta, dg, 0.0)
    return float(np.abs(phi_p - phi_g).sum() / 1000.0)


# --- reports ---------------------------------------------------------------------------

METRIC_NAMES = ("sad", "mse", "mad", "grad", "conn")


def all_metrics(pred, gt) -> dict[str, float]:
    sad, mse, mad = pixel_metrics(pred, gt)
    return {"sad": sad, "mse": mse, "mad": mad, "grad": grad_metric(pred, gt), "conn": conn_metric(pred, gt)}


@dataclass
class MetricReport:
    per_image: dict[str, dict[str, float]] = field(default_factory=dict)
    unmatched: list[str] = field(default_factory=list)
    errors: dict[str, str] = field(default_factory=dict)

    @property
    def aggregate(self) -> dict[str, float]:
        if not self.per_image:
            return {k: 0.0 for k in METRIC_NAMES}
        return {k: float(np.mean([m[k] for m in self.per_image.values()])) for k in METRIC_NAMES}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["aggregate"] = self.aggregate
        d["count"] = len(self.per_image)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        header = f"{'image':<32}" + "".join(f"{k.upper():>12}" for k in METRIC_NAMES)
        lines = [header, "-" * len(header)]
        for name in sorted(self.per_image):
            m = self.per_image[name]
            lines.append(f"{name[:32]:<32}" + "".join(f"{m[k]:>12.4f}" for k in METRIC_NAMES))
        lines.append("-" * len(header))
        agg = self.aggregate
        lines.append(f"{'mean':<32}" + "".join(f"{agg[k]:>12.4f}" for k in METRIC_NAMES))
        for name in self.unmatched:
            lines.append(f"unmatched: {name}")
        for name, msg in sorted(self.errors.items()):
            lines.append(f"error: {name}: {msg}")
        return "\n".join(lines)


# --- IMQ -----------------------------------------------------------------------------


def _binarize(a) -> np.ndarray:
    return np.asarray(a) >= 0.5


def mask_iou(a, b) -> float:
    inter = np.logical_and(a, b).sum()
    union = np.logical_or(a, b).sum()
    return float(inter / union) if union else 0.0


def normalized_error(pred, gt, metric: InstanceMetric) -> float:
    """Per-pair error scaled to [0, 1]."""
    if metric == "mad":
        return pixel_metrics(pred, gt)[2]
    if metric == "mse":
        return pixel_metrics(pred, gt)[1]
    scale = np.size(gt) / 1000.0
    if metric == "grad":
        return min(1.0, grad_metric(pred, gt) / scale)
    if metric == "conn":
        return min(1.0, conn_metric(pred, gt) / scale)
    raise ValueError(f"unknown IMQ metric {metric!r}")


def match_instances(preds: Sequence, gts: Sequence) -> list[tuple[int, int, float]]:
    """Greedy one-to-one matching by descending mask IoU (IoU > 0.5 only).

    ``preds`` and ``gts`` are ``(id, alpha)`` pairs. Returns ``(pred_pos,
    gt_pos, iou)`` triples. IoU ties are settled by gt id then pred id so
    the result does not depend on list order.
    """
    pb = [_binarize(a) for _, a in preds]
    gb = [_binarize(a) for _, a in gts]
    cand = []
    for i, (pid, _) in enumerate(preds):
        for j, (gid, _) in enumerate(gts):
            iou = mask_iou(pb[i], gb[j])
            if iou > 0.5:
                cand.append((-iou, gid, pid, i, j))
    cand.sort(key=lambda c: c[:3])
    used_p, used_g, out = set(), set(), []
    for neg_iou, _, _, i, j in cand:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        out.append((i, j, -neg_iou))
    return out


def imq(preds: Sequence, gts: Sequence, metric: InstanceMetric = "mad") -> float:
    """Instance matting quality in [0, 100].

    ``100 * sum(q) / (N_gt + N_fp)`` where each matched pair scores
    ``q = 1 - min(1, err)`` and ``N_fp`` counts unmatched predictions.
    """
    shapes = {np.shape(a) for _, a in list(preds) + list(gts)}
    if len(shapes) > 1:
        raise DimensionMismatch(f"instance mattes have differing shapes {sorted(shapes)}")
    matches = match_instances(preds, gts)
    n_fp = len(preds) - len(matches)
    denom = len(gts) + n_fp
    if denom == 0:
        return 100.0
    quality = sum(1.0 - min(1.0, normalized_error(preds[i][1], gts[j][1], metric)) for i, j, _ in matches)
    return 100.0 * quality / denom
