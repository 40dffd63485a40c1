"""Small synthetic COCO-style scene sets for end-to-end runs and tests.

Each scene exercises one fusion or trimap path: a tie that merges, a ball
that sits inside the human's box without touching, a bottle below the
overlap threshold, two humans plus a crowd region, and a dotted human whose
trimap erodes to nothing.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import pngio
from .coco_ingest import compress_rle, encode_rle

CATEGORIES = [
    {"id": 1, "name": "person"},
    {"id": 18, "name": "dog"},
    {"id": 27, "name": "backpack"},
    {"id": 32, "name": "tie"},
    {"id": 37, "name": "sports ball"},
    {"id": 44, "name": "bottle"},
]
PERSON, DOG, TIE, BALL, BOTTLE = 1, 18, 32, 37, 44


def _box(h, w, r0, r1, c0, c1) -> np.ndarray:
    m = np.zeros((h, w), dtype=bool)
    m[r0:r1, c0:c1] = True
    return m


def _rect_polygon(r0, r1, c0, c1) -> list[list[float]]:
    return [[c0, r0, c1, r0, c1, r1, c0, r1]]


def _render(masks_colors, h, w, seed) -> np.ndarray:
    """Paint masks over a smooth background and soften edges slightly."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    img = np.stack([0.15 + 0.3 * xx, 0.35 + 0.2 * yy, 0.55 - 0.2 * xx], axis=-1)
    for mask, color in masks_colors:
        img[mask] = color
    img = ndimage.gaussian_filter(img, sigma=(0.7, 0.7, 0))
    img += rng.normal(0, 0.01, img.shape)
    return np.clip(img, 0, 1)


def scenes() -> list[dict]:
    """In-memory scene descriptions: masks, categories and encodings."""
    out = []

    # 1: tie worn on the torso, occluding it
    h = w = 64
    tie = _box(h, w, 20, 36, 30, 34)
    person = _box(h, w, 12, 56, 22, 42) & ~tie
    out.append(
        {
            "id": 1,
            "size": (h, w),
            "instances": [
                {"id": 101, "category_id": PERSON, "mask": person, "encoding": "compressed"},
                {"id": 102, "category_id": TIE, "polygon": _rect_polygon(20, 36, 30, 34), "mask": tie},
            ],
            "colors": [(person, (0.85, 0.65, 0.5)), (tie, (0.7, 0.1, 0.1))],
        }
    )

    # 2: raised arm; ball inside the box but clear of the body
    torso = _box(h, w, 10, 58, 10, 22)
    arm = _box(h, w, 10, 16, 10, 50)
    person = torso | arm
    ball = _box(h, w, 40, 46, 38, 44)
    out.append(
        {
            "id": 2,
            "size": (h, w),
            "instances": [
                {"id": 201, "category_id": PERSON, "mask": person, "encoding": "uncompressed"},
                {"id": 202, "category_id": BALL, "mask": ball, "encoding": "compressed"},
            ],
            "colors": [(person, (0.8, 0.6, 0.45)), (ball, (0.95, 0.95, 0.9))],
        }
    )

    # 3: bottle half outside the person's box; a dog elsewhere
    bottle = _box(h, w, 30, 44, 30, 38)
    person = _box(h, w, 10, 50, 10, 34) & ~bottle
    dog = _box(h, w, 50, 62, 44, 62)
    out.append(
        {
            "id": 3,
            "size": (h, w),
            "instances": [
                {"id": 301, "category_id": PERSON, "mask": person, "encoding": "compressed"},
                {"id": 302, "category_id": BOTTLE, "mask": bottle, "encoding": "uncompressed"},
                {"id": 303, "category_id": DOG, "polygon": _rect_polygon(50, 62, 44, 62), "mask": dog},
            ],
            "colors": [(person, (0.75, 0.55, 0.4)), (bottle, (0.2, 0.6, 0.3)), (dog, (0.5, 0.35, 0.2))],
        }
    )

    # 4: two people, a bottle held by the left one, a crowd strip at the bottom
    a = _box(h, w, 8, 54, 6, 26)
    bottle = _box(h, w, 30, 40, 18, 24)
    a &= ~bottle
    b = _box(h, w, 8, 54, 36, 58)
    crowd = _box(h, w, 57, 64, 0, 64)
    out.append(
        {
            "id": 4,
            "size": (h, w),
            "instances": [
                {"id": 401, "category_id": PERSON, "mask": a, "encoding": "compressed"},
                {"id": 402, "category_id": PERSON, "mask": b, "encoding": "uncompressed"},
                {"id": 403, "category_id": BOTTLE, "mask": bottle, "encoding": "compressed"},
                {"id": 404, "category_id": PERSON, "mask": crowd, "encoding": "uncompressed", "iscrowd": 1},
            ],
            "colors": [
                (a, (0.9, 0.7, 0.55)),
                (b, (0.6, 0.45, 0.35)),
                (bottle, (0.1, 0.5, 0.8)),
                (crowd, (0.4, 0.4, 0.4)),
            ],
        }
    )

    # 5: a dotted "person" whose trimap has no definite foreground
    h = w = 96
    dots = np.zeros((h, w), dtype=bool)
    dots[4:90:6, 4:90:6] = True  # dilated blocks stay clear of the border
    out.append(
        {
            "id": 5,
            "size": (h, w),
            "instances": [{"id": 501, "category_id": PERSON, "mask": dots, "encoding": "uncompressed"}],
            "colors": [(dots, (0.9, 0.8, 0.7))],
        }
    )
    return out


def _segmentation(inst: dict):
    if inst.get("polygon"):
        return inst["polygon"]
    rle = encode_rle(inst["mask"])
    if inst.get("encoding") == "compressed":
        rle = compress_rle(rle)
    return rle.to_json()


def write_scene_set(root, seed: int = 0) -> Path:
    """Write ``images/`` and ``annotations.json`` under ``root``; returns the annotation path."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    doc = {"images": [], "annotations": [], "categories": CATEGORIES}
    for scene in scenes():
        h, w = scene["size"]
        name = f"scene_{scene['id']:02d}.png"
        img = _render(scene["colors"], h, w, seed + scene["id"])
        pngio.write_uint8(root / "images" / name, pngio.to_uint8(img))
        doc["images"].append({"id": scene["id"], "file_name": name, "height": h, "width": w})
        for inst in scene["instances"]:
            doc["annotations"].append(
                {
                    "id": inst["id"],
                    "image_id": scene["id"],
                    "category_id": inst["category_id"],
                    "segmentation": _segmentation(inst),
                    "iscrowd": inst.get("iscrowd", 0),
                    "area": int(inst["mask"].sum()),
                }
            )
    path = root / "annotations.json"
    path.write_text(json.dumps(doc, indent=1), encoding="utf-8")
    return path


def write_config(root, **overrides) -> Path:
    root = Path(root)
    cfg = {"images_dir": "images", "annotations_path": "annotations.json", "output_dir": "out"}
    cfg.update(overrides)
    path = root / "config.json"
    path.write_text(json.dumps(cfg, indent=2), encoding="utf-8")
    return path


def composite_instance(rng, size: int = 8):
    """Two-color composite over a random linear alpha ramp, with its exact trimap.

    The image satisfies the local color-line model exactly, so a correct
    solver reproduces the known pixels to high precision.
    """
    while True:
        fg, bg = rng.random(3), rng.random(3)
        cols = np.arange(size) - (size - 1) / 2
        alpha = np.clip(rng.uniform(-1, 2, (size, 1)) + rng.uniform(-0.75, -0.15) * cols, 0, 1)
        alpha = np.broadcast_to(alpha, (size, size)).copy()
        trimap = np.where(alpha >= 1, 1.0, np.where(alpha <= 0, 0.0, 0.5))
        if (trimap == 1).any() and (trimap == 0).any():
            image = alpha[..., None] * fg + (1 - alpha[..., None]) * bg
            return image, trimap, alpha
