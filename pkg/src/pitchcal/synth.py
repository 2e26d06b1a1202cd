"""Synthetic ground truth: random broadcast cameras and the annotations they imply.

Annotated points are placed on the projected, sampled template polyline of
the generating camera (clipped to the frame), so with no corruption the
generating camera scores perfectly at any threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .camera_models import PinholeRadial, look_at_rotation, rodrigues
from .field_model import CLASS_NAMES, FieldElement, PitchSpec, Segment3D, build_pitch_template
from .metrics import DEFAULT_SPACING, ImageAnnotation, is_predicted, project_template

MAX_REDRAWS = 100


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SceneConfig:
    seed: int = 0
    image_size: tuple[int, int] = (1920, 1080)
    position_min: tuple[float, float, float] = (-10.0, -45.0, 8.0)
    position_max: tuple[float, float, float] = (10.0, -35.0, 25.0)
    look_at_min: tuple[float, float] = (-52.5, -34.0)
    look_at_max: tuple[float, float] = (52.5, 34.0)
    focal_range: tuple[float, float] = (1500.0, 6000.0)
    k1_range: tuple[float, float] = (-0.12, 0.02)
    noise_sigma: float = 0.0
    dropout_rate: float = 0.0
    hallucination_rate: float = 0.0
    points_per_line: int = 6
    points_per_curve: int = 12
    spacing: float = DEFAULT_SPACING
    require_classes: tuple[str, ...] = ()
    pitch: PitchSpec = field(default_factory=PitchSpec)

    def __post_init__(self):
        for name in ("dropout_rate", "hallucination_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        pairs = [
            *zip(self.position_min, self.position_max),
            *zip(self.look_at_min, self.look_at_max),
            self.focal_range,
            self.k1_range,
        ]
        if any(lo > hi for lo, hi in pairs):
            raise ValueError("every range needs min <= max")
        if self.focal_range[0] <= 0:
            raise ValueError("focal range must be positive")
        if self.points_per_line < 1 or self.points_per_curve < 1:
            raise ValueError("points per element must be at least 1")
        unknown = set(self.require_classes) - set(CLASS_NAMES)
        if unknown:
            raise ValueError(f"unknown required classes: {sorted(unknown)}")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "pitch"}
        d = {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}
        d["pitch"] = {k: getattr(self.pitch, k) for k in self.pitch.__dataclass_fields__}
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "SceneConfig":
        data = dict(data)
        if "pitch" in data:
            data["pitch"] = PitchSpec.from_dict(data["pitch"])
        for k, v in list(data.items()):
            if isinstance(v, list):
                data[k] = tuple(v)
        return cls(**data)


@dataclass(frozen=True)
class SyntheticScene:
    camera: PinholeRadial
    annotation: ImageAnnotation
    provenance: dict


def scene_rng(seed: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, int(index)])


def draw_camera(config: SceneConfig, rng: np.random.Generator) -> PinholeRadial:
    pos = rng.uniform(config.position_min, config.position_max)
    target = np.append(rng.uniform(config.look_at_min, config.look_at_max), 0.0)
    f = rng.uniform(*config.focal_range)
    k1 = rng.uniform(*config.k1_range)
    r = look_at_rotation(pos, target)
    w, h = config.image_size
    return PinholeRadial(f, (w / 2.0, h / 2.0), r, -r @ pos, k1)


def _clip_segment(p, q, w, h):
    # Liang-Barsky against [0, w] x [0, h]
    d = q - p
    t0, t1 = 0.0, 1.0
    for pk, qk in ((-d[0], p[0]), (d[0], w - p[0]), (-d[1], p[1]), (d[1], h - p[1])):
        if pk == 0.0:
            if qk < 0.0:
                return None
            continue
        t = qk / pk
        if pk < 0.0:
            t0 = max(t0, t)
        else:
            t1 = min(t1, t)
        if t0 > t1:
            return None
    return p + t0 * d, p + t1 * d


def visible_segments(pieces: Sequence[np.ndarray], image_size) -> list[tuple[np.ndarray, np.ndarray]]:
    """Sub-segments of the projected pieces that lie inside the frame."""
    w, h = image_size
    out = []
    for piece in pieces:
        for i in range(len(piece) - 1):
            c = _clip_segment(piece[i], piece[i + 1], w, h)
            if c is not None:
                out.append(c)
    return out


def points_along(segments, n: int) -> np.ndarray:
    """``n`` points evenly spread by arc length over disjoint segments."""
    lengths = np.array([np.linalg.norm(b - a) for a, b in segments])
    total = float(lengths.sum())
    if total == 0.0:
        return np.repeat(segments[0][0][None, :], n, axis=0)
    targets = np.array([total / 2.0]) if n == 1 else np.linspace(0.0, total, n)
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    out = []
    for s in targets:
        k = int(np.searchsorted(cum, s, side="right") - 1)
        k = min(max(k, 0), len(segments) - 1)
        while lengths[k] == 0.0 and k > 0:
            k -= 1
        a, b = segments[k]
        t = 0.0 if lengths[k] == 0.0 else min(1.0, max(0.0, (s - cum[k]) / lengths[k]))
        out.append(a + t * (b - a))
    return np.array(out)


def _border_points(rng, image_size, n) -> np.ndarray:
    w, h = image_size
    side = int(rng.integers(4))
    frac = rng.uniform(0.1, 0.85)
    inset = 10.0
    if side in (0, 1):  # top / bottom edge
        y = inset if side == 0 else h - inset
        x0 = frac * w
        xs = np.linspace(x0, x0 + 0.05 * w, n)
        return np.column_stack([xs, np.full(n, y)])
    x = inset if side == 2 else w - inset
    y0 = frac * h
    ys = np.linspace(y0, y0 + 0.05 * h, n)
    return np.column_stack([np.full(n, x), ys])


def generate_scene(
    config: SceneConfig,
    index: int = 0,
    template: Optional[Sequence[FieldElement]] = None,
) -> SyntheticScene:
    """Draw a camera and annotate every element it images.

    Deterministic in ``(config.seed, index)``.
    """
    template = build_pitch_template(config.pitch) if template is None else list(template)
    rng = scene_rng(config.seed, index)
    size = tuple(config.image_size)
    required = set(config.require_classes)
    for attempt in range(MAX_REDRAWS):
        camera = draw_camera(config, rng)
        projected = project_template(camera, template, config.spacing)
        predicted = [n for n in CLASS_NAMES if n in projected and is_predicted(projected[n], size)]
        if predicted and required.issubset(predicted):
            break
    else:
        raise GenerationError(
            f"no camera imaging the required elements after {MAX_REDRAWS} draws"
        )
    kinds = {e.name: isinstance(e.geometry, Segment3D) for e in template}
    elements, dropped, hallucinated = {}, [], []
    for name in CLASS_NAMES:
        if name not in projected:
            continue
        n = config.points_per_line if kinds[name] else config.points_per_curve
        if name in predicted:
            segs = visible_segments(projected[name], size)
            if not segs:
                continue
            pts = points_along(segs, n)
            if config.noise_sigma > 0:
                pts = pts + rng.normal(0.0, config.noise_sigma, pts.shape)
            if config.dropout_rate > 0 and rng.random() < config.dropout_rate:
                dropped.append(name)
                continue
            elements[name] = pts
        elif config.hallucination_rate > 0 and rng.random() < config.hallucination_rate:
            elements[name] = _border_points(rng, size, config.points_per_line)
            hallucinated.append(name)
    provenance = {
        "seed": int(config.seed),
        "index": int(index),
        "redraws": attempt,
        "noise_sigma": config.noise_sigma,
        "dropped": dropped,
        "hallucinated": hallucinated,
        "predicted": predicted,
    }
    return SyntheticScene(camera, ImageAnnotation(size, elements), provenance)


def generate_scenes(config: SceneConfig, n: int, template=None) -> list[SyntheticScene]:
    template = build_pitch_template(config.pitch) if template is None else template
    return [generate_scene(config, i, template) for i in range(n)]


def perturb_camera(camera: PinholeRadial, magnitude: float, seed: int) -> PinholeRadial:
    """Seeded random rotation, camera-centre shift and focal scaling.

    Per unit magnitude: 0.5 degree rotation about a random axis, 0.1 m
    centre displacement in a random direction, and 0.5% focal change of
    random sign. Distortion is left untouched.
    """
    if magnitude < 0:
        raise ValueError("magnitude must be non-negative")
    if magnitude == 0:
        return camera
    rng = np.random.default_rng(seed)
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    sign = 1.0 if rng.random() < 0.5 else -1.0
    rot = rodrigues(axis * math.radians(0.5 * magnitude)) @ camera.rotation
    center = camera.center + 0.1 * magnitude * direction
    focal = camera.focal * (1.0 + sign * 0.005 * magnitude)
    return PinholeRadial(
        focal, camera.principal_point, rot, -rot @ center, camera.k1, camera.k2
    )


def with_seed(config: SceneConfig, seed: int) -> SceneConfig:
    return replace(config, seed=seed)
