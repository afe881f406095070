"""Offline per-window rendering to binary PPM (P6)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .evaluation import BoundingBox
from .events import SensorGeometry

# fixed palette: cluster id i -> PALETTE[i % len(PALETTE)]
PALETTE = np.array(
    [
        (230, 25, 75),
        (60, 180, 75),
        (255, 225, 25),
        (0, 130, 200),
        (245, 130, 48),
        (145, 30, 180),
        (70, 240, 240),
        (240, 50, 230),
        (210, 245, 60),
        (250, 190, 212),
        (0, 128, 128),
        (220, 190, 255),
    ],
    dtype=np.uint8,
)
NOISE_COLOUR = np.array((128, 128, 128), dtype=np.uint8)
DETECTION_COLOUR = np.array((255, 255, 255), dtype=np.uint8)
TRUTH_COLOUR = np.array((0, 255, 0), dtype=np.uint8)


def colour_for(cluster_id: int) -> np.ndarray:
    return NOISE_COLOUR if cluster_id < 0 else PALETTE[cluster_id % len(PALETTE)]


def _outline(img: np.ndarray, box: BoundingBox, colour: np.ndarray, dashed: bool = False) -> None:
    h, w = img.shape[:2]
    x0, y0 = max(box.x_min, 0), max(box.y_min, 0)
    x1, y1 = min(box.x_max, w) - 1, min(box.y_max, h) - 1
    if x0 > x1 or y0 > y1:
        return
    xs = np.arange(x0, x1 + 1)
    ys = np.arange(y0, y1 + 1)
    if dashed:
        xs = xs[(xs - x0) % 4 < 2]
        ys = ys[(ys - y0) % 4 < 2]
    img[y0, xs] = colour
    img[y1, xs] = colour
    img[ys, x0] = colour
    img[ys, x1] = colour


def render_window(
    events: np.ndarray,
    labels: Sequence[int],
    boxes: Sequence[BoundingBox],
    geometry: SensorGeometry,
    truth: Sequence[BoundingBox] = (),
) -> np.ndarray:
    """RGB image: events coloured by cluster (noise grey), detections solid
    white, ground truth dashed green."""
    img = np.zeros((geometry.height, geometry.width, 3), dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.int64)
    if len(events):
        colours = np.where(labels[:, None] < 0, NOISE_COLOUR, PALETTE[np.maximum(labels, 0) % len(PALETTE)])
        img[events["y"], events["x"]] = colours
    for b in truth:
        _outline(img, b, TRUTH_COLOUR, dashed=True)
    for b in boxes:
        _outline(img, b, DETECTION_COLOUR)
    return img


def write_ppm(img: np.ndarray, path) -> None:
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img, dtype=np.uint8).tobytes())


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4], dtype=np.uint8)[: w * h * 3].reshape(h, w, 3)
