"""8-bit PNG reading and writing for images, trimaps and mattes."""

from __future__ import annotations

import os

import numpy as np
from PIL import Image


def to_uint8(values) -> np.ndarray:
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.rint(v * 255.0).astype(np.uint8)


def write_gray(path, values01) -> None:
    """Write a [0, 1] grid as 8-bit grayscale (255 is 1.0)."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    Image.fromarray(to_uint8(values01), mode="L").save(path, format="PNG")


def write_uint8(path, arr) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    arr = np.asarray(arr, dtype=np.uint8)
    mode = "L" if arr.ndim == 2 else "RGB"
    Image.fromarray(arr, mode=mode).save(path, format="PNG")


def read_gray_uint8(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode != "L":
            im = im.convert("L")
        return np.array(im, dtype=np.uint8)


def read_gray(path) -> np.ndarray:
    return read_gray_uint8(path).astype(np.float64) / 255.0


def read_rgb(path) -> np.ndarray:
    """Read an image as float RGB in [0, 1], shape (H, W, 3)."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
