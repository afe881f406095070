"""Deterministic synthetic event scenes with exact ground-truth boxes.

Objects are rectangles or disks translating at constant velocity.  Events
fire only on boundary pixels whose normal has a component along the motion
(leading edge +1, trailing edge -1); background noise is uniform in space
and time.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .evaluation import BoundingBox, truth_json
from .events import EVENT_DTYPE, SensorGeometry, canonical_order, serialize_events, serialize_frame_timestamps

FRAME_PERIOD_US = 33_333
NOISE_ID = -1


@dataclass(frozen=True)
class ObjectSpec:
    shape: str = "rectangle"  # "rectangle" or "disk"
    size: float | tuple[float, float] = 30.0  # side (or (w, h)) / diameter, pixels
    start: tuple[float, float] = (0.0, 0.0)  # centre at t = 0
    velocity: tuple[float, float] = (0.0, 0.0)  # pixels per second

    def __post_init__(self) -> None:
        if self.shape not in ("rectangle", "disk"):
            raise ValueError(f"unknown shape {self.shape!r}")
        w, h = self.extent
        if w <= 0 or h <= 0:
            raise ValueError("object size must be positive")
        if self.shape == "disk" and w != h:
            raise ValueError("disk size must be a single diameter")

    @property
    def extent(self) -> tuple[float, float]:
        if isinstance(self.size, (int, float)):
            return float(self.size), float(self.size)
        return float(self.size[0]), float(self.size[1])

    def centre(self, t_us: float | np.ndarray):
        s = np.asarray(t_us, dtype=np.float64) / 1e6
        return self.start[0] + self.velocity[0] * s, self.start[1] + self.velocity[1] * s

    def bounds(self, t_us: float) -> tuple[float, float, float, float]:
        """Continuous ``(x0, y0, x1, y1)`` occupied at ``t_us``."""
        cx, cy = self.centre(t_us)
        w, h = self.extent
        return float(cx - w / 2), float(cy - h / 2), float(cx + w / 2), float(cy + h / 2)

    def swept_box(self, t0: float, t1: float) -> BoundingBox:
        a = self.bounds(t0)
        b = self.bounds(t1)
        return BoundingBox(
            math.floor(min(a[0], b[0])),
            math.floor(min(a[1], b[1])),
            math.ceil(max(a[2], b[2])),
            math.ceil(max(a[3], b[3])),
        )

    @property
    def area(self) -> float:
        w, h = self.extent
        return w * h if self.shape == "rectangle" else math.pi * w * w / 4


@dataclass(frozen=True)
class SceneSpec:
    geometry: SensorGeometry = SensorGeometry()
    duration: int = 10 * FRAME_PERIOD_US  # microseconds
    frame_period: int = FRAME_PERIOD_US
    objects: tuple[ObjectSpec, ...] = ()
    noise_rate: float = 0.0  # background events per second
    events_per_edge_pixel_per_frame: float = 3.0
    seed: int = 0
    micro_step: int = 1_000  # microseconds

    def __post_init__(self) -> None:
        object.__setattr__(self, "objects", tuple(self.objects))

    def validate(self) -> None:
        if self.duration <= 0 or self.frame_period <= 0 or self.micro_step <= 0:
            raise ValueError("duration, frame_period and micro_step must be positive")
        if self.duration < self.frame_period:
            raise ValueError("duration shorter than one frame period")
        if self.noise_rate < 0 or self.events_per_edge_pixel_per_frame < 0:
            raise ValueError("rates must be non-negative")
        if not self.objects and self.noise_rate == 0:
            raise ValueError("empty scene: no objects and no noise")
        g = self.geometry
        for n, obj in enumerate(self.objects):
            for t in (0, self.duration):
                x0, y0, x1, y1 = obj.bounds(t)
                if x0 < 0 or y0 < 0 or x1 > g.width or y1 > g.height:
                    raise ValueError(f"object {n} leaves the {g.width}x{g.height} sensor at t={t} us")

    @property
    def frame_timestamps(self) -> np.ndarray:
        m = self.duration // self.frame_period
        return np.arange(1, m + 1, dtype=np.int64) * self.frame_period

    def to_json(self) -> dict:
        d = asdict(self)
        d["objects"] = [asdict(o) for o in self.objects]
        return d

    @classmethod
    def from_json(cls, doc: dict) -> "SceneSpec":
        doc = dict(doc)
        doc["geometry"] = SensorGeometry(**doc.get("geometry", {}))
        objs = []
        for o in doc.get("objects", []):
            o = dict(o)
            if isinstance(o.get("size"), list):
                o["size"] = tuple(o["size"])
            o["start"] = tuple(o.get("start", (0.0, 0.0)))
            o["velocity"] = tuple(o.get("velocity", (0.0, 0.0)))
            objs.append(ObjectSpec(**o))
        doc["objects"] = tuple(objs)
        doc.pop("format_version", None)
        return cls(**doc)


@dataclass(frozen=True)
class Scene:
    spec: SceneSpec
    events: np.ndarray = field(repr=False)  # canonical order
    source: np.ndarray = field(repr=False)  # object id per event, -1 for noise
    frame_timestamps: np.ndarray = field(repr=False)
    truth: dict[int, list[BoundingBox]] = field(repr=False)

    @property
    def n_noise(self) -> int:
        return int(np.count_nonzero(self.source == NOISE_ID))

    @property
    def noise_fraction(self) -> float:
        return self.n_noise / max(len(self.events), 1)


def _rect_edges(obj: ObjectSpec, t: np.ndarray, rng, side: int):
    """Pixel coordinates for ``n`` events on one rectangle side at times ``t``."""
    cx, cy = obj.centre(t)
    w, h = obj.extent
    x0, x1 = cx - w / 2, cx + w / 2
    y0, y1 = cy - h / 2, cy + h / 2
    u = rng.random(len(t))
    if side == 0:  # left
        xs, ys = np.floor(x0), np.floor(y0 + u * h)
    elif side == 1:  # right
        xs, ys = np.ceil(x1) - 1, np.floor(y0 + u * h)
    elif side == 2:  # top
        xs, ys = np.floor(x0 + u * w), np.floor(y0)
    else:  # bottom
        xs, ys = np.floor(x0 + u * w), np.ceil(y1) - 1
    xs = np.clip(xs, np.floor(x0), np.ceil(x1) - 1)
    ys = np.clip(ys, np.floor(y0), np.ceil(y1) - 1)
    return xs.astype(np.int64), ys.astype(np.int64)


_RECT_NORMALS = ((-1.0, 0.0), (1.0, 0.0), (0.0, -1.0), (0.0, 1.0))


def _emit_object(obj: ObjectSpec, spec: SceneSpec, rng) -> list[np.ndarray]:
    vx, vy = obj.velocity
    speed = math.hypot(vx, vy)
    if speed == 0:
        return []
    w, h = obj.extent
    out = []
    density = spec.events_per_edge_pixel_per_frame
    starts = np.arange(0, spec.duration, spec.micro_step, dtype=np.int64)
    spans = np.minimum(starts + spec.micro_step, spec.duration) - starts
    frac = spans / spec.frame_period
    if obj.shape == "rectangle":
        for side, (nx, ny) in enumerate(_RECT_NORMALS):
            along = vx * nx + vy * ny
            if along == 0:
                continue
            length = h if side < 2 else w
            lam = density * length * abs(along) / speed * frac
            counts = rng.poisson(lam)
            t0 = np.repeat(starts, counts)
            t = np.floor(t0 + rng.random(len(t0)) * np.repeat(spans, counts)).astype(np.int64)
            xs, ys = _rect_edges(obj, t.astype(np.float64), rng, side)
            p = np.full(len(t), 1 if along > 0 else -1, dtype=np.int64)
            out.append(np.stack([t, xs, ys, p], axis=1))
    else:
        r = w / 2
        lam = density * math.pi * w * frac
        counts = rng.poisson(lam)
        t0 = np.repeat(starts, counts)
        t = np.floor(t0 + rng.random(len(t0)) * np.repeat(spans, counts)).astype(np.int64)
        theta = rng.random(len(t)) * 2 * math.pi
        nx, ny = np.cos(theta), np.sin(theta)
        along = (nx * vx + ny * vy) / speed
        keep = rng.random(len(t)) < np.abs(along)
        t, nx, ny, along = t[keep], nx[keep], ny[keep], along[keep]
        cx, cy = obj.centre(t.astype(np.float64))
        xs = np.clip(np.floor(cx + r * nx), np.floor(cx - r), np.ceil(cx + r) - 1).astype(np.int64)
        ys = np.clip(np.floor(cy + r * ny), np.floor(cy - r), np.ceil(cy + r) - 1).astype(np.int64)
        p = np.where(along > 0, 1, -1).astype(np.int64)
        out.append(np.stack([t, xs, ys, p], axis=1))
    return out


def generate(spec: SceneSpec) -> Scene:
    """Render a scene to events, frame timestamps and per-window truth boxes.

    Truth for window ``i`` is the box swept by each object over
    ``[T_{i-1}, T_i]``, so every object event of the window lies inside it.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    g = spec.geometry
    parts = []
    sources = []
    for oid, obj in enumerate(spec.objects):
        for arr in _emit_object(obj, spec, rng):
            parts.append(arr)
            sources.append(np.full(len(arr), oid, dtype=np.int64))
    n_noise = rng.poisson(spec.noise_rate * spec.duration / 1e6) if spec.noise_rate else 0
    if n_noise:
        noise = np.stack(
            [
                rng.integers(0, spec.duration, n_noise),
                rng.integers(0, g.width, n_noise),
                rng.integers(0, g.height, n_noise),
                rng.choice(np.array([-1, 1]), n_noise),
            ],
            axis=1,
        )
        parts.append(noise)
        sources.append(np.full(n_noise, NOISE_ID, dtype=np.int64))
    raw = np.concatenate(parts) if parts else np.empty((0, 4), dtype=np.int64)
    src = np.concatenate(sources) if sources else np.empty(0, dtype=np.int64)
    events = np.empty(len(raw), dtype=EVENT_DTYPE)
    for col, name in enumerate(("t", "x", "y", "p")):
        events[name] = raw[:, col]
    order = np.lexsort((src, events["p"], events["y"], events["x"], events["t"]))
    events, src = events[order], src[order]

    frames = spec.frame_timestamps
    truth: dict[int, list[BoundingBox]] = {}
    prev = 0
    for i, t_end in enumerate(frames, start=1):
        truth[i] = [obj.swept_box(prev, int(t_end)).clipped(g) for obj in spec.objects]
        prev = int(t_end)
    return Scene(spec=spec, events=events, source=src, frame_timestamps=frames, truth=truth)


def write_scene(scene: Scene, out_dir) -> dict[str, Path]:
    """Write ``events.csv``, ``frames.txt``, ``truth.json`` and ``scene.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "events": out / "events.csv",
        "frames": out / "frames.txt",
        "truth": out / "truth.json",
        "scene": out / "scene.json",
    }
    paths["events"].write_text(serialize_events(scene.events), encoding="utf-8")
    paths["frames"].write_text(serialize_frame_timestamps(scene.frame_timestamps), encoding="utf-8")
    paths["truth"].write_text(json.dumps(truth_json(scene.truth), indent=1) + "\n", encoding="utf-8")
    doc = {"format_version": 1, **scene.spec.to_json()}
    paths["scene"].write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    return paths


# --------------------------------------------------------------------- presets


def _square(size, start, velocity) -> ObjectSpec:
    return ObjectSpec("rectangle", float(size), tuple(map(float, start)), tuple(map(float, velocity)))


def _presets(seed: int) -> dict[str, SceneSpec]:
    two = (
        _square(36, (90, 85), (60, 25)),
        _square(36, (250, 175), (-55, -20)),
    )
    four = (
        _square(30, (70, 60), (50, 20)),
        _square(30, (270, 60), (-45, 25)),
        _square(30, (75, 200), (40, -25)),
        _square(30, (270, 195), (-50, -20)),
    )
    # small object parked near the large one's trailing edge
    disparity = (
        _square(16, (120, 130), (40, 30)),
        _square(80, (240, 130), (60, 0)),
    )
    return {
        "clean-2": SceneSpec(objects=two, seed=seed),
        "clean-4": SceneSpec(objects=four, seed=seed),
        "noisy": SceneSpec(objects=two, noise_rate=40_000.0, seed=seed),
        "size-disparity": SceneSpec(objects=disparity, seed=seed),
    }


PRESETS = ("clean-2", "clean-4", "noisy", "size-disparity")


def preset(name: str, seed: int = 0) -> SceneSpec:
    """Scenario presets; ``noisy`` and ``size-disparity`` are known hard cases."""
    specs = _presets(seed)
    if name not in specs:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return specs[name]


def true_object_count(spec: SceneSpec) -> int:
    return len(spec.objects)


def load_scene_spec(path) -> SceneSpec:
    return SceneSpec.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def object_event_counts(scene: Scene) -> Sequence[int]:
    return np.bincount(scene.source[scene.source >= 0], minlength=len(scene.spec.objects)).tolist()
