"""Bounding boxes from event clusters, IoU coverage matching and P/R/F."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .events import SensorGeometry

IOU_THRESHOLD = 0.85
MIN_EVENTS_PER_BOX = 5
FORMAT_VERSION = 1


@dataclass(frozen=True, order=True)
class BoundingBox:
    """Pixel box, inclusive min and exclusive max."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self) -> None:
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate box {self.as_list()}")

    @property
    def area(self) -> int:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def as_list(self) -> list[int]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    def clipped(self, geometry: SensorGeometry) -> "BoundingBox":
        return BoundingBox(
            max(0, self.x_min),
            max(0, self.y_min),
            min(geometry.width, self.x_max),
            min(geometry.height, self.y_max),
        )

    def within(self, geometry: SensorGeometry) -> bool:
        return self.x_min >= 0 and self.y_min >= 0 and self.x_max <= geometry.width and self.y_max <= geometry.height


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    cluster_id: int
    n_events: int


@dataclass(frozen=True)
class DetectionSet:
    window_index: int
    detections: tuple[Detection, ...] = ()

    @property
    def boxes(self) -> list[BoundingBox]:
        return [d.box for d in self.detections]


def cluster_bbox(events: np.ndarray, trim_quantile: float = 0.02, min_events: int = MIN_EVENTS_PER_BOX) -> BoundingBox:
    """Box spanning the ``[q, 1 - q]`` quantiles of x and y, rounded outward.

    ``q = 0`` gives the exact extent; a single repeated coordinate yields a
    one-pixel side.
    """
    if not 0 <= trim_quantile < 0.5:
        raise ValueError("trim_quantile must lie in [0, 0.5)")
    if len(events) < min_events:
        raise ValueError(f"need at least {min_events} events for a box, got {len(events)}")
    xs = np.asarray(events["x"], dtype=np.float64)
    ys = np.asarray(events["y"], dtype=np.float64)
    q = trim_quantile
    x_lo, x_hi = np.quantile(xs, [q, 1.0 - q])
    y_lo, y_hi = np.quantile(ys, [q, 1.0 - q])
    return BoundingBox(
        int(math.floor(x_lo)),
        int(math.floor(y_lo)),
        int(math.ceil(x_hi)) + 1,
        int(math.ceil(y_hi)) + 1,
    )


def iou(a: BoundingBox, b: BoundingBox) -> float:
    w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    inter = w * h if w > 0 and h > 0 else 0
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True)
class MatchResult:
    tp: int
    fp: int
    fn: int
    pairs: tuple[tuple[int, int, float], ...] = ()  # (detection idx, truth idx, iou)
    window_index: int | None = None

    def to_json(self) -> dict:
        return {
            "window": self.window_index,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "pairs": [[d, t, v] for d, t, v in self.pairs],
        }


def match(
    detections: Sequence[BoundingBox] | DetectionSet,
    truth: Sequence[BoundingBox],
    threshold: float = IOU_THRESHOLD,
    window_index: int | None = None,
) -> MatchResult:
    """Greedy one-to-one matching in descending IoU order.

    Only pairs at or above ``threshold`` can match.  IoU ties go to the lower
    detection index, then the lower truth index.
    """
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    if isinstance(detections, DetectionSet):
        window_index = detections.window_index if window_index is None else window_index
        detections = detections.boxes
    candidates = []
    for i, d in enumerate(detections):
        for j, g in enumerate(truth):
            v = iou(d, g)
            if v >= threshold:
                candidates.append((-v, i, j))
    candidates.sort()
    used_d: set[int] = set()
    used_t: set[int] = set()
    pairs = []
    for neg, i, j in candidates:
        if i in used_d or j in used_t:
            continue
        used_d.add(i)
        used_t.add(j)
        pairs.append((i, j, -neg))
    tp = len(pairs)
    return MatchResult(
        tp=tp,
        fp=len(detections) - tp,
        fn=len(truth) - tp,
        pairs=tuple(pairs),
        window_index=window_index,
    )


@dataclass(frozen=True)
class MetricsReport:
    precision: float
    recall: float
    f_measure: float
    tp: int
    fp: int
    fn: int
    per_window: tuple[MatchResult, ...] = field(default=(), repr=False)
    empty: bool = False  # no detections and no truth at all

    def row(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "f_measure": self.f_measure,
        }


def f_measure(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def metrics(results: Iterable[MatchResult]) -> MetricsReport:
    """Micro-averaged precision/recall/F; zero denominators give 0."""
    results = tuple(results)
    tp = sum(r.tp for r in results)
    fp = sum(r.fp for r in results)
    fn = sum(r.fn for r in results)
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return MetricsReport(
        precision=p,
        recall=r,
        f_measure=f_measure(p, r),
        tp=tp,
        fp=fp,
        fn=fn,
        per_window=results,
        empty=(tp + fp + fn) == 0,
    )


# ---------------------------------------------------------------- file formats


def load_truth(path_or_text) -> dict[int, list[BoundingBox]]:
    """Ground truth JSON: ``{"windows": [{"index": i, "boxes": [[x0,y0,x1,y1], ...]}]}``."""
    doc = _load_json(path_or_text)
    out: dict[int, list[BoundingBox]] = {}
    for w in doc.get("windows", []):
        out[int(w["index"])] = [BoundingBox(*map(int, b)) for b in w.get("boxes", [])]
    return out


def load_detections(path_or_text) -> dict[int, DetectionSet]:
    doc = _load_json(path_or_text)
    out: dict[int, DetectionSet] = {}
    for w in doc.get("windows", []):
        idx = int(w["index"])
        cids = w.get("cluster_ids") or list(range(len(w.get("boxes", []))))
        counts = w.get("event_counts") or [0] * len(cids)
        dets = tuple(
            Detection(BoundingBox(*map(int, b)), int(c), int(n)) for b, c, n in zip(w.get("boxes", []), cids, counts)
        )
        out[idx] = DetectionSet(idx, dets)
    return out


def detections_json(sets: Sequence[DetectionSet], **extra) -> dict:
    doc = {"format_version": FORMAT_VERSION}
    doc.update(extra)
    doc["windows"] = [
        {
            "index": s.window_index,
            "boxes": [d.box.as_list() for d in s.detections],
            "cluster_ids": [d.cluster_id for d in s.detections],
            "event_counts": [d.n_events for d in s.detections],
        }
        for s in sorted(sets, key=lambda s: s.window_index)
    ]
    return doc


def truth_json(boxes_by_window: dict[int, Sequence[BoundingBox]]) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "windows": [{"index": i, "boxes": [b.as_list() for b in boxes]} for i, boxes in sorted(boxes_by_window.items())],
    }


def evaluate(
    detections: dict[int, DetectionSet],
    truth: dict[int, Sequence[BoundingBox]],
    threshold: float = IOU_THRESHOLD,
    strict: bool = True,
) -> MetricsReport:
    """Match every window and roll up.  ``strict`` rejects window-set mismatches."""
    if strict and set(detections) != set(truth):
        only_d = sorted(set(detections) - set(truth))
        only_t = sorted(set(truth) - set(detections))
        raise ValueError(f"window index mismatch: detections-only {only_d[:5]}, truth-only {only_t[:5]}")
    results = []
    for idx in sorted(set(detections) | set(truth)):
        dets = detections.get(idx, DetectionSet(idx))
        results.append(match(dets, truth.get(idx, []), threshold, window_index=idx))
    return metrics(results)


CSV_COLUMNS = ("sequence", "method", "tp", "fp", "fn", "precision", "recall", "f_measure")


def metrics_csv_row(sequence: str, method: str, report: MetricsReport) -> str:
    r = report
    return f"{sequence},{method},{r.tp},{r.fp},{r.fn},{r.precision:.6f},{r.recall:.6f},{r.f_measure:.6f}"


def _load_json(path_or_text):
    if isinstance(path_or_text, dict):
        return path_or_text
    text = str(path_or_text)
    if text.lstrip().startswith("{"):
        return json.loads(text)
    with open(path_or_text, encoding="utf-8") as fh:
        return json.load(fh)
