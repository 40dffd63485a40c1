"""COCO-style annotation parsing and mask decoding.

RLE masks scan the grid in column-major order and always start with a run
of zeros. Compressed ``counts`` strings use the COCO variable-length
encoding: each value is split into 5-bit groups, least significant first,
stored as ``chr(48 + group)`` with bit 5 (0x20) flagging continuation and
bit 4 of the final group acting as the sign. Every count from index 3 on is
stored as a difference to the count two positions earlier.
"""

from __future__ import annotations

import json
import os
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import (
    BadCompressedString,
    CountMismatch,
    DegeneratePolygon,
    MalformedFile,
    UnknownCategory,
)

DEFAULT_HUMAN_NAME = "person"
DEFAULT_ACCESSORY_NAMES = (
    "backpack",
    "umbrella",
    "handbag",
    "tie",
    "suitcase",
    "bottle",
    "cup",
    "baseball glove",
    "sports ball",
    "skis",
    "snowboard",
    "surfboard",
    "tennis racket",
    "cell phone",
    "book",
)


@dataclass(frozen=True)
class RleSegmentation:
    size: tuple[int, int]  # (height, width)
    counts: Union[tuple[int, ...], str]

    @property
    def compressed(self) -> bool:
        return isinstance(self.counts, str)

    def run_lengths(self) -> list[int]:
        if isinstance(self.counts, str):
            return decode_counts_string(self.counts)
        return [int(c) for c in self.counts]

    def to_json(self) -> dict:
        counts = self.counts if isinstance(self.counts, str) else list(self.counts)
        return {"size": list(self.size), "counts": counts}


@dataclass(frozen=True)
class Polygon:
    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.vertices) < 3:
            raise DegeneratePolygon(
                f"polygon needs at least 3 vertices, got {len(self.vertices)}"
            )

    @classmethod
    def from_flat(cls, coords: Sequence[float]) -> Polygon:
        if len(coords) % 2:
            raise DegeneratePolygon("flat polygon has an odd number of coordinates")
        pts = tuple((float(coords[i]), float(coords[i + 1])) for i in range(0, len(coords), 2))
        return cls(pts)

    def to_flat(self) -> list[float]:
        return [c for xy in self.vertices for c in xy]


Segmentation = Union[RleSegmentation, list[Polygon]]


@dataclass(frozen=True)
class InstanceAnnotation:
    id: int
    image_id: int
    category_id: int
    segmentation: Segmentation
    iscrowd: bool = False

    def to_mask(self, height: int, width: int) -> np.ndarray:
        return segmentation_to_mask(self.segmentation, height, width)


@dataclass(frozen=True)
class ImageInfo:
    id: int
    file_name: str
    height: int
    width: int


@dataclass
class CategoryTable:
    names: dict[int, str]
    human_id: int
    accessory_ids: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        self.accessory_ids = frozenset(self.accessory_ids)
        if self.human_id not in self.names:
            raise UnknownCategory(f"human category id {self.human_id} not declared")
        missing = self.accessory_ids - self.names.keys()
        if missing:
            raise UnknownCategory(f"accessory ids not declared: {sorted(missing)}")
        if self.human_id in self.accessory_ids:
            raise ValueError("the human category cannot also be an accessory")

    def name(self, category_id: int) -> str:
        return self.names.get(category_id, str(category_id))

    @classmethod
    def from_categories(
        cls,
        categories: Iterable[Mapping],
        human: Union[int, str, None] = None,
        accessories: Union[Iterable[Union[int, str]], None] = None,
    ) -> CategoryTable:
        """Build a table from a COCO ``categories`` array.

        ``human`` and ``accessories`` may be given as ids or names. Default
        accessory names that the file does not declare are dropped silently;
        explicitly requested ones must exist.
        """
        names = {int(c["id"]): str(c["name"]) for c in categories}
        by_name = {v: k for k, v in names.items()}

        def resolve(ref) -> int:
            if isinstance(ref, str):
                if ref not in by_name:
                    raise UnknownCategory(f"category {ref!r} not declared")
                return by_name[ref]
            if int(ref) not in names:
                raise UnknownCategory(f"category id {ref} not declared")
            return int(ref)

        human_id = resolve(DEFAULT_HUMAN_NAME if human is None else human)
        if accessories is None:
            acc = {by_name[n] for n in DEFAULT_ACCESSORY_NAMES if n in by_name}
        else:
            acc = {resolve(a) for a in accessories}
        return cls(names, human_id, frozenset(acc))


@dataclass
class CocoDocument:
    images: dict[int, ImageInfo]
    annotations: list[InstanceAnnotation]
    categories: CategoryTable

    def annotations_by_image(self) -> dict[int, list[InstanceAnnotation]]:
        groups: dict[int, list[InstanceAnnotation]] = {i: [] for i in sorted(self.images)}
        for ann in self.annotations:
            groups.setdefault(ann.image_id, []).append(ann)
        for anns in groups.values():
            anns.sort(key=lambda a: a.id)
        return groups


# --- RLE ------------------------------------------------------------------


def decode_counts_string(s: str) -> list[int]:
    counts: list[int] = []
    p = 0
    n = len(s)
    while p < n:
        x = 0
        k = 0
        more = True
        while more:
            if p >= n:
                raise BadCompressedString("string ends inside a multi-character value")
            c = ord(s[p]) - 48
            if not 0 <= c < 64:
                raise BadCompressedString(f"invalid character {s[p]!r} at offset {p}")
            x |= (c & 0x1F) << (5 * k)
            more = bool(c & 0x20)
            p += 1
            k += 1
            if not more and (c & 0x10):
                x |= -1 << (5 * k)
        if len(counts) > 2:
            x += counts[-2]
        if x < 0:
            raise BadCompressedString(f"decoded negative run length {x}")
        counts.append(x)
    return counts


def encode_counts_string(counts: Sequence[int]) -> str:
    out = []
    for i, c in enumerate(counts):
        x = int(c)
        if i > 2:
            x -= int(counts[i - 2])
        more = True
        while more:
            ch = x & 0x1F
            x >>= 5
            more = x != -1 if ch & 0x10 else x != 0
            if more:
                ch |= 0x20
            out.append(chr(ch + 48))
    return "".join(out)


def decode_rle(rle: RleSegmentation) -> np.ndarray:
    h, w = (int(v) for v in rle.size)
    counts = rle.run_lengths()
    if any(c < 0 for c in counts):
        raise CountMismatch("negative run length")
    total = sum(counts)
    if total != h * w:
        raise CountMismatch(f"runs cover {total} pixels, grid has {h * w}")
    values = np.zeros(len(counts), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, counts)
    return flat.reshape((w, h)).T.copy()


def encode_rle(mask) -> RleSegmentation:
    m = np.asarray(mask, dtype=bool)
    h, w = m.shape
    flat = m.T.ravel()
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat.size and flat[0]:
        runs.insert(0, 0)
    return RleSegmentation((h, w), tuple(int(r) for r in runs))


def compress_rle(rle: RleSegmentation) -> RleSegmentation:
    return RleSegmentation(tuple(rle.size), encode_counts_string(rle.run_lengths()))


# --- polygons ---------------------------------------------------------------


def polygons_to_mask(polys: Sequence[Polygon], height: int, width: int) -> np.ndarray:
    """Rasterize polygons by the even-odd rule, sampling pixel centers."""
    if height <= 0 or width <= 0:
        raise ValueError("height and width must be positive")
    out = np.zeros((height, width), dtype=bool)
    centers_x = np.arange(width) + 0.5
    for poly in polys:
        pts = np.asarray(poly.vertices, dtype=np.float64)
        if len(pts) < 3:
            raise DegeneratePolygon("polygon needs at least 3 vertices")
        x0, y0 = pts[:, 0], pts[:, 1]
        x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
        for row in range(height):
            cy = row + 0.5
            crosses = (y0 > cy) != (y1 > cy)
            if not crosses.any():
                continue
            xa, ya, xb, yb = x0[crosses], y0[crosses], x1[crosses], y1[crosses]
            xs = np.sort(xa + (cy - ya) * (xb - xa) / (yb - ya))
            # inside iff an odd number of crossings lie strictly right of the center
            right = xs.size - np.searchsorted(xs, centers_x, side="right")
            out[row] |= (right % 2) == 1
    return out


def segmentation_to_mask(seg: Segmentation, height: int, width: int) -> np.ndarray:
    if isinstance(seg, RleSegmentation):
        if tuple(seg.size) != (height, width):
            raise CountMismatch(f"RLE size {tuple(seg.size)} != image size {(height, width)}")
        return decode_rle(seg)
    return polygons_to_mask(seg, height, width)


# --- documents -------------------------------------------------------------


def parse_segmentation(raw) -> Segmentation:
    if isinstance(raw, Mapping):
        size = tuple(int(v) for v in raw["size"])
        counts = raw["counts"]
        if isinstance(counts, (bytes, bytearray)):
            counts = counts.decode("ascii")
        if isinstance(counts, str):
            rle = RleSegmentation(size, counts)
        else:
            rle = RleSegmentation(size, tuple(int(c) for c in counts))
        if sum(rle.run_lengths()) != size[0] * size[1]:
            raise CountMismatch(f"RLE counts do not cover a {size} grid")
        return rle
    if isinstance(raw, list):
        if not raw:
            raise MalformedFile("empty segmentation")
        return [Polygon.from_flat(p) for p in raw]
    raise MalformedFile(f"unsupported segmentation type {type(raw).__name__}")


def parse_document(doc: Mapping, human=None, accessories=None) -> CocoDocument:
    try:
        images_raw = doc["images"]
        anns_raw = doc["annotations"]
        cats_raw = doc["categories"]
    except (KeyError, TypeError) as exc:
        raise MalformedFile(f"missing section: {exc}") from exc

    try:
        categories = CategoryTable.from_categories(cats_raw, human, accessories)
        images = {}
        for im in images_raw:
            info = ImageInfo(int(im["id"]), str(im["file_name"]), int(im["height"]), int(im["width"]))
            images[info.id] = info
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, UnknownCategory):
            raise
        raise MalformedFile(f"bad images/categories entry: {exc}") from exc

    annotations = []
    seen = set()
    for raw in anns_raw:
        try:
            ann_id = int(raw["id"])
            cat = int(raw["category_id"])
            image_id = int(raw["image_id"])
            seg = parse_segmentation(raw["segmentation"])
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedFile(f"bad annotation {raw.get('id', '?') if isinstance(raw, Mapping) else raw!r}: {exc}") from exc
        if cat not in categories.names:
            raise UnknownCategory(f"annotation {ann_id} references undeclared category {cat}")
        if ann_id in seen:
            raise MalformedFile(f"duplicate annotation id {ann_id}")
        if image_id not in images:
            raise MalformedFile(f"annotation {ann_id} references unknown image {image_id}")
        seen.add(ann_id)
        annotations.append(
            InstanceAnnotation(ann_id, image_id, cat, seg, bool(raw.get("iscrowd", 0)))
        )
    return CocoDocument(images, annotations, categories)


def load_document(path: Union[str, os.PathLike], human=None, accessories=None) -> CocoDocument:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise MalformedFile(f"{path}: {exc}") from exc
    return parse_document(doc, human, accessories)


def load_annotations(path, human=None, accessories=None) -> tuple[list[InstanceAnnotation], CategoryTable]:
    doc = load_document(path, human, accessories)
    return doc.annotations, doc.categories
