"""Dataset construction and evaluation drivers.

``build_dataset`` walks every image of an annotation file, fuses accessories
into each human, turns the fused mask into a trimap, solves for an alpha
matte and writes it as an 8-bit PNG next to a JSON Lines index.
"""

from __future__ import annotations

import json
import logging
import os
import re
import tempfile
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Literal, Optional, Union

import cv2
import numpy as np

from . import pngio
from .coco_ingest import CategoryTable, ImageInfo, InstanceAnnotation, load_document
from .errors import ConfigError, EmptyInput, MalformedIndex, MatteError, NoForeground
from .fusion import FusionConfig, Instance, assign_and_fuse_image
from .mask_ops import Rect, min_bounding_rect
from .metrics import MetricReport, all_metrics, imq
from .solver import ExternalBackendConfig, SolverConfig, run_external_backend, solve_alpha
from .trimap import TrimapConfig, is_degenerate, make_trimap, trimap_to_uint8

log = logging.getLogger(__name__)

INDEX_NAME = "index.jsonl"
SUMMARY_NAME = "summary.json"
BBOX_THRESH = 1.0 / 255.0

# COCO area ranges
AREA_BINS = (("small", 0, 32**2), ("medium", 32**2, 96**2), ("large", 96**2, float("inf")))


@dataclass
class PipelineConfig:
    images_dir: Path
    annotations_path: Path
    output_dir: Path
    fusion: FusionConfig = field(default_factory=FusionConfig)
    trimap: TrimapConfig = field(default_factory=TrimapConfig)
    solver: Union[SolverConfig, ExternalBackendConfig] = field(default_factory=SolverConfig)
    parallelism: int = 1
    resize_target: int = 1024
    human_category: Union[int, str, None] = None
    accessory_categories: Optional[list] = None
    bbox_thresh: float = BBOX_THRESH

    def __post_init__(self):
        self.images_dir = Path(self.images_dir)
        self.annotations_path = Path(self.annotations_path)
        self.output_dir = Path(self.output_dir)
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")

    @classmethod
    def from_dict(cls, d: dict, base_dir: Union[str, Path] = ".") -> PipelineConfig:
        base = Path(base_dir)
        d = dict(d)
        try:
            paths = {k: base / d.pop(k) for k in ("images_dir", "annotations_path", "output_dir")}
        except KeyError as exc:
            raise ConfigError(f"config is missing {exc}") from exc
        try:
            fusion = FusionConfig(**d.pop("fusion", {}))
            trimap = TrimapConfig(**d.pop("trimap", {}))
            backend = d.pop("backend", None)
            solver_raw = d.pop("solver", {})
            solver = ExternalBackendConfig(**backend) if backend else SolverConfig(**solver_raw)
            return cls(**paths, fusion=fusion, trimap=trimap, solver=solver, **d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> PipelineConfig:
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw, Path(path).parent)

    def to_dict(self) -> dict:
        d = {
            "images_dir": str(self.images_dir),
            "annotations_path": str(self.annotations_path),
            "output_dir": str(self.output_dir),
            "fusion": asdict(self.fusion),
            "trimap": asdict(self.trimap),
            "parallelism": self.parallelism,
            "resize_target": self.resize_target,
            "human_category": self.human_category,
            "accessory_categories": self.accessory_categories,
            "bbox_thresh": self.bbox_thresh,
        }
        if d["fusion"]["accessory_ids"] is not None:
            d["fusion"]["accessory_ids"] = sorted(d["fusion"]["accessory_ids"])
        key = "backend" if isinstance(self.solver, ExternalBackendConfig) else "solver"
        d[key] = asdict(self.solver)
        return d


# --- small operations ------------------------------------------------------------


def derive_bbox(alpha, thresh: float = BBOX_THRESH) -> Rect:
    """Box prompt: tightest rect around pixels with alpha above ``thresh``."""
    fg = np.asarray(alpha) > thresh
    if not fg.any():
        raise NoForeground(f"no pixel exceeds alpha {thresh:.5f}")
    return min_bounding_rect(fg)


def resized_shape(h: int, w: int, target: int) -> tuple[int, int]:
    long_side = max(h, w)
    if long_side == target:
        return h, w
    scale = target / long_side
    if h >= w:
        return target, max(1, int(np.floor(w * scale + 0.5)))
    return max(1, int(np.floor(h * scale + 0.5))), target


def proportional_resize(
    grid, target: int = 1024, kind: Literal["image", "alpha", "trimap", "mask"] = "alpha"
) -> np.ndarray:
    """Scale the longer side to ``target`` keeping aspect ratio.

    Bilinear for images and mattes, nearest neighbour for trimaps and masks.
    """
    a = np.asarray(grid)
    h, w = a.shape[:2]
    if h <= 0 or w <= 0:
        raise ValueError("grid must have positive dimensions")
    nh, nw = resized_shape(h, w, target)
    if (nh, nw) == (h, w):
        return a.copy()
    if kind in ("trimap", "mask"):
        src = a.astype(np.uint8) if a.dtype == bool else a
        out = cv2.resize(src, (nw, nh), interpolation=cv2.INTER_NEAREST)
        return out.astype(bool) if a.dtype == bool else out
    if kind not in ("image", "alpha"):
        raise ValueError(f"unknown grid kind {kind!r}")
    return cv2.resize(a.astype(np.float64), (nw, nh), interpolation=cv2.INTER_LINEAR)


def _reason(exc: Exception) -> str:
    return re.sub(r"(?<!^)(?=[A-Z])", "_", type(exc).__name__).lower()


# --- build -------------------------------------------------------------------------


@dataclass
class _ImageTask:
    info: ImageInfo
    annotations: list[InstanceAnnotation]
    categories: CategoryTable
    cfg: PipelineConfig


def _skip(info: ImageInfo, instance_id: int, reason: str, merged=(), merged_names=(), omega=None) -> dict:
    return {
        "image_id": info.id,
        "instance_id": instance_id,
        "file_name": info.file_name,
        "alpha_path": None,
        "trimap_path": None,
        "bbox_prompt": None,
        "merged_ids": list(merged),
        "merged_categories": list(merged_names),
        "omega": omega,
        "alpha_area": 0,
        "skipped": True,
        "reason": reason,
    }


def _solve(cfg: PipelineConfig, image: np.ndarray, trimap: np.ndarray) -> np.ndarray:
    if isinstance(cfg.solver, SolverConfig):
        return solve_alpha(image, trimap, cfg.solver)
    with tempfile.TemporaryDirectory() as tmp:
        img_path = os.path.join(tmp, "image.png")
        tri_path = os.path.join(tmp, "trimap.png")
        pngio.write_uint8(img_path, pngio.to_uint8(image))
        pngio.write_uint8(tri_path, trimap_to_uint8(trimap))
        return run_external_backend(img_path, tri_path, cfg.solver, os.path.join(tmp, "alpha.png"))


def _process_image(task: _ImageTask) -> tuple[list[dict], Counter]:
    info, cfg, cats = task.info, task.cfg, task.categories
    counts: Counter = Counter(images=1)
    fusion_cfg = cfg.fusion
    if fusion_cfg.accessory_ids is None:
        fusion_cfg = FusionConfig(**{**asdict(fusion_cfg), "accessory_ids": cats.accessory_ids})

    human_anns, other_anns = [], []
    for ann in task.annotations:
        if ann.category_id == cats.human_id:
            if ann.iscrowd and fusion_cfg.skip_crowd:
                counts["crowd_humans_excluded"] += 1
                continue
            human_anns.append(ann)
        else:
            other_anns.append(ann)
    counts["human_instances"] += len(human_anns)
    if not human_anns:
        counts["images_without_humans"] += 1
        return [], counts

    path = cfg.images_dir / info.file_name
    try:
        image = pngio.read_rgb(path)
    except (OSError, ValueError) as exc:
        log.warning("image %s unreadable: %s", path, exc)
        return [_skip(info, a.id, "image_unreadable") for a in human_anns], counts
    if image.shape[:2] != (info.height, info.width):
        return [_skip(info, a.id, "image_size_mismatch") for a in human_anns], counts

    def decode(ann):
        return ann.to_mask(info.height, info.width)

    records = []
    humans = []
    for ann in human_anns:
        try:
            mask = decode(ann)
        except MatteError as exc:
            records.append(_skip(info, ann.id, _reason(exc)))
            continue
        if not mask.any():
            records.append(_skip(info, ann.id, "empty_mask"))
        else:
            humans.append(Instance(ann.id, ann.category_id, mask, ann.iscrowd))
    others = []
    for ann in other_anns:
        try:
            others.append(Instance(ann.id, ann.category_id, decode(ann), ann.iscrowd))
        except MatteError as exc:
            log.warning("annotation %d undecodable: %s", ann.id, exc)
    if not humans:
        return records, counts

    cat_of = {o.id: o.category_id for o in others}
    stem = f"{info.id:012d}"
    for res in assign_and_fuse_image(humans, others, fusion_cfg):
        names = [cats.name(cat_of[i]) for i in res.merged_ids]
        trimap, omega = make_trimap(res.fused_mask, cfg.trimap, return_omega=True)
        if is_degenerate(trimap):
            records.append(_skip(info, res.human_id, "degenerate_trimap", res.merged_ids, names, omega))
            continue
        try:
            alpha = _solve(cfg, image, trimap)
            quantized = pngio.to_uint8(alpha)
            bbox = derive_bbox(quantized / 255.0, cfg.bbox_thresh)
        except MatteError as exc:
            log.warning("instance %d skipped: %s", res.human_id, exc)
            records.append(_skip(info, res.human_id, _reason(exc), res.merged_ids, names, omega))
            continue
        alpha_rel = f"alphas/{stem}_{res.human_id}.png"
        trimap_rel = f"trimaps/{stem}_{res.human_id}.png"
        pngio.write_uint8(cfg.output_dir / alpha_rel, quantized)
        pngio.write_uint8(cfg.output_dir / trimap_rel, trimap_to_uint8(trimap))
        records.append(
            {
                "image_id": info.id,
                "instance_id": res.human_id,
                "file_name": info.file_name,
                "alpha_path": alpha_rel,
                "trimap_path": trimap_rel,
                "bbox_prompt": bbox.as_list(),
                "merged_ids": res.merged_ids,
                "merged_categories": names,
                "omega": omega,
                "alpha_area": int(np.count_nonzero(quantized / 255.0 > cfg.bbox_thresh)),
                "skipped": False,
                "reason": None,
            }
        )
    return records, counts


def build_dataset(cfg: PipelineConfig) -> tuple[list[dict], dict]:
    """Build the matte dataset; returns ``(records, summary)``.

    Per-instance failures become skipped records. The index and summary are
    written to ``cfg.output_dir`` in ``(image_id, instance_id)`` order.
    """
    if not cfg.annotations_path.is_file():
        raise ConfigError(f"annotations file not found: {cfg.annotations_path}")
    if not cfg.images_dir.is_dir():
        raise ConfigError(f"images directory not found: {cfg.images_dir}")
    doc = load_document(cfg.annotations_path, cfg.human_category, cfg.accessory_categories)
    groups = doc.annotations_by_image()
    tasks = [_ImageTask(doc.images[i], groups[i], doc.categories, cfg) for i in sorted(groups) if i in doc.images]

    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    if cfg.parallelism == 1 or len(tasks) <= 1:
        results = [_process_image(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=cfg.parallelism) as pool:
            results = list(pool.map(_process_image, tasks))

    records: list[dict] = []
    totals: Counter = Counter()
    for recs, counts in results:
        records.extend(recs)
        totals.update(counts)
    records.sort(key=lambda r: (r["image_id"], r["instance_id"]))

    skipped = Counter(r["reason"] for r in records if r["skipped"])
    summary = {
        "images": totals["images"],
        "images_without_humans": totals["images_without_humans"],
        "human_instances": totals["human_instances"],
        "crowd_humans_excluded": totals["crowd_humans_excluded"],
        "records": len(records),
        "active": sum(not r["skipped"] for r in records),
        "skipped": dict(sorted(skipped.items())),
        "merged_accessories": sum(len(r["merged_ids"]) for r in records if not r["skipped"]),
    }
    write_index(cfg.output_dir / INDEX_NAME, records)
    with open(cfg.output_dir / SUMMARY_NAME, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return records, summary


# --- index I/O -------------------------------------------------------------------------

REQUIRED_KEYS = ("image_id", "instance_id", "alpha_path", "bbox_prompt", "merged_ids", "skipped")


def write_index(path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n")


def read_index(path) -> list[dict]:
    rows = []
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    row = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise MalformedIndex(f"{path}:{lineno}: {exc}") from exc
                if not isinstance(row, dict) or any(k not in row for k in REQUIRED_KEYS):
                    raise MalformedIndex(f"{path}:{lineno}: missing required keys")
                rows.append(row)
    except OSError as exc:
        raise MalformedIndex(f"cannot read index {path}: {exc}") from exc
    return rows


# --- evaluation --------------------------------------------------------------------------


def evaluate(pred_dir, gt_dir, resize_target: Optional[int] = 1024) -> MetricReport:
    """Score every same-named PNG pair in two directories."""
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    preds = {p.name for p in pred_dir.glob("*.png")}
    gts = {p.name for p in gt_dir.glob("*.png")}
    pairs = sorted(preds & gts)
    if not pairs:
        raise EmptyInput(f"no same-named PNGs in {pred_dir} and {gt_dir}")
    report = MetricReport(unmatched=sorted(preds ^ gts))
    for name in pairs:
        pred = pngio.read_gray(pred_dir / name)
        gt = pngio.read_gray(gt_dir / name)
        if pred.shape != gt.shape:
            report.errors[name] = f"size mismatch {pred.shape} vs {gt.shape}"
            continue
        if resize_target:
            pred = np.clip(proportional_resize(pred, resize_target, "alpha"), 0, 1)
            gt = np.clip(proportional_resize(gt, resize_target, "alpha"), 0, 1)
        report.per_image[name] = all_metrics(pred, gt)
    return report


def _instances_by_image(index_path) -> dict[int, list[tuple[int, np.ndarray]]]:
    base = Path(index_path).parent
    groups: dict[int, list[tuple[int, np.ndarray]]] = {}
    for row in read_index(index_path):
        groups.setdefault(int(row["image_id"]), [])
        if row["skipped"]:
            continue
        groups[int(row["image_id"])].append((int(row["instance_id"]), pngio.read_gray(base / row["alpha_path"])))
    return groups


def evaluate_instances(pred_index, gt_index, metric="mad") -> dict:
    """Per-image IMQ between two dataset indexes, plus the mean over images."""
    preds = _instances_by_image(pred_index)
    gts = _instances_by_image(gt_index)
    image_ids = sorted(set(preds) | set(gts))
    if not image_ids:
        raise EmptyInput("both indexes are empty")
    per_image = {i: imq(preds.get(i, []), gts.get(i, []), metric) for i in image_ids}
    return {
        "metric": metric,
        "per_image": {str(i): s for i, s in per_image.items()},
        "missing_in_pred": [i for i in image_ids if i not in preds],
        "mean_imq": float(np.mean(list(per_image.values()))),
    }


def stats(index_path) -> dict:
    rows = read_index(index_path)
    skipped = Counter(r.get("reason") or "unknown" for r in rows if r["skipped"])
    merged = Counter()
    area = Counter({name: 0 for name, _, _ in AREA_BINS})
    for r in rows:
        if r["skipped"]:
            continue
        names = r.get("merged_categories")
        merged.update(names if names is not None else [str(i) for i in r["merged_ids"]])
        a = r.get("alpha_area", 0)
        for name, lo, hi in AREA_BINS:
            if lo <= a < hi:
                area[name] += 1
    return {
        "total": len(rows),
        "active": len(rows) - sum(skipped.values()),
        "images": len({r["image_id"] for r in rows}),
        "skipped": dict(sorted(skipped.items())),
        "merged_by_category": dict(sorted(merged.items())),
        "alpha_area_histogram": dict(area),
    }
