"""Accessory fusion: fold held or worn objects into the owning human mask.

A candidate accessory is merged when the bounding rect of its mask overlaps
the human's bounding rect by more than ``tau`` *and* its mask, dilated by a
small kernel, touches the human mask. The second test rejects objects such
as a thrown ball that sit inside the human's box without contact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import EmptyMask
from .mask_ops import OverlapMode, check_same_shape, dilate, masks_intersect, min_bounding_rect, rect_overlap

NOT_ACCESSORY = "not_accessory"
CROWD = "crowd"
BELOW_TAU = "below_tau"
DISJOINT = "disjoint_after_dilation"
EMPTY = "empty_mask"
ASSIGNED_ELSEWHERE = "assigned_to_other_human"


@dataclass
class FusionConfig:
    tau: float = 0.8
    filter_dilate_k: int = 4
    overlap_mode: OverlapMode = "ioa"
    accessory_ids: Optional[frozenset[int]] = None  # None: take the category table's set
    skip_crowd: bool = True

    def __post_init__(self):
        if not 0 < self.tau <= 1:
            raise ValueError(f"tau must be in (0, 1], got {self.tau}")
        if self.filter_dilate_k < 1:
            raise ValueError("filter_dilate_k must be >= 1")
        if self.overlap_mode not in ("iou", "ioa"):
            raise ValueError(f"unknown overlap mode {self.overlap_mode!r}")
        if self.accessory_ids is not None:
            self.accessory_ids = frozenset(int(i) for i in self.accessory_ids)


class Instance(NamedTuple):
    id: int
    category_id: int
    mask: np.ndarray
    iscrowd: bool = False


@dataclass
class FusionResult:
    fused_mask: np.ndarray
    human_id: int
    merged_ids: list[int] = field(default_factory=list)
    skipped_ids: list[tuple[int, str]] = field(default_factory=list)


@dataclass(frozen=True)
class _Verdict:
    passed: bool
    ratio: float
    reason: Optional[str]


def _as_instance(obj) -> Instance:
    return obj if isinstance(obj, Instance) else Instance(*obj)


def _accessories(cfg: FusionConfig) -> frozenset[int]:
    if cfg.accessory_ids is None:
        raise ValueError("FusionConfig.accessory_ids is unset")
    return cfg.accessory_ids


def _judge(human_mask, human_rect, cand: Instance, cfg: FusionConfig) -> _Verdict:
    if cand.category_id not in _accessories(cfg):
        return _Verdict(False, 0.0, NOT_ACCESSORY)
    if cfg.skip_crowd and cand.iscrowd:
        return _Verdict(False, 0.0, CROWD)
    if not cand.mask.any():
        return _Verdict(False, 0.0, EMPTY)
    ratio = rect_overlap(human_rect, min_bounding_rect(cand.mask), cfg.overlap_mode)
    if not ratio > cfg.tau:
        return _Verdict(False, ratio, BELOW_TAU)
    if not masks_intersect(human_mask, dilate(cand.mask, cfg.filter_dilate_k)):
        return _Verdict(False, ratio, DISJOINT)
    return _Verdict(True, ratio, None)


def _prepare(human, others):
    if isinstance(human, Instance):
        hid, hmask = human.id, human.mask
    else:
        hid, hmask = human
    hmask = np.asarray(hmask, dtype=bool)
    cands = sorted((_as_instance(o) for o in others), key=lambda c: c.id)
    check_same_shape(hmask, *[c.mask for c in cands])
    if not hmask.any():
        raise EmptyMask(f"human {hid} has an empty mask")
    return int(hid), hmask, cands


def _fuse(hmask, merge_masks) -> np.ndarray:
    fused = hmask.copy()
    for m in merge_masks:
        fused |= np.asarray(m, dtype=bool)
    return fused


def fuse_accessories(human, others, cfg: FusionConfig) -> FusionResult:
    """Fuse accessories into a single human.

    ``human`` is ``(id, mask)`` or an :class:`Instance`; ``others`` holds
    ``(id, category_id, mask[, iscrowd])`` tuples or instances. Candidates
    are visited in ascending id order.
    """
    hid, hmask, cands = _prepare(human, others)
    rect = min_bounding_rect(hmask)
    merged, skipped, masks = [], [], []
    for cand in cands:
        v = _judge(hmask, rect, cand, cfg)
        if v.passed:
            merged.append(cand.id)
            masks.append(cand.mask)
        else:
            skipped.append((cand.id, v.reason))
    return FusionResult(_fuse(hmask, masks), hid, merged, skipped)


def assign_and_fuse_image(humans, others, cfg: FusionConfig) -> list[FusionResult]:
    """Fuse every accessory in an image into at most one human.

    An accessory that passes for several humans goes to the one with the
    highest rect overlap, ties resolved toward the lowest human id. Results
    come back in ascending human id order.
    """
    if not humans:
        raise ValueError("assign_and_fuse_image needs at least one human")
    prepared = sorted(
        (_prepare(h, others) for h in humans),
        key=lambda p: p[0],
    )
    cands = prepared[0][2]
    rects = {hid: min_bounding_rect(hmask) for hid, hmask, _ in prepared}

    verdicts = {
        (hid, c.id): _judge(hmask, rects[hid], c, cfg) for hid, hmask, _ in prepared for c in cands
    }
    owner: dict[int, int] = {}
    for c in cands:
        passing = [(hid, verdicts[hid, c.id].ratio) for hid, _, _ in prepared if verdicts[hid, c.id].passed]
        if passing:
            owner[c.id] = min(passing, key=lambda hr: (-hr[1], hr[0]))[0]

    results = []
    for hid, hmask, _ in prepared:
        merged, skipped, masks = [], [], []
        for c in cands:
            v = verdicts[hid, c.id]
            if v.passed and owner[c.id] == hid:
                merged.append(c.id)
                masks.append(c.mask)
            elif v.passed:
                skipped.append((c.id, ASSIGNED_ELSEWHERE))
            else:
                skipped.append((c.id, v.reason))
        results.append(FusionResult(_fuse(hmask, masks), hid, merged, skipped))
    return results
