"""Soccer pitch template: semantic field elements with exact world geometry.

World frame: origin at the pitch centre, X along the length (towards the
right goal), Y along the width (towards the far, "top" side line), Z up.
All ground markings lie on Z = 0. Distances are in meters.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from functools import lru_cache
from pathlib import Path
from typing import Union

import numpy as np

CLASS_NAMES: tuple[str, ...] = (
    "Side line top",
    "Side line bottom",
    "Side line left",
    "Side line right",
    "Middle line",
    "Big rect. left top",
    "Big rect. left main",
    "Big rect. left bottom",
    "Big rect. right top",
    "Big rect. right main",
    "Big rect. right bottom",
    "Small rect. left top",
    "Small rect. left main",
    "Small rect. left bottom",
    "Small rect. right top",
    "Small rect. right main",
    "Small rect. right bottom",
    "Circle central",
    "Circle left",
    "Circle right",
    "Goal left post left",
    "Goal left post right",
    "Goal left crossbar",
    "Goal right post left",
    "Goal right post right",
    "Goal right crossbar",
)

GOAL_CLASSES: tuple[str, ...] = tuple(c for c in CLASS_NAMES if c.startswith("Goal"))
GOAL_POST_CLASSES: tuple[str, ...] = tuple(c for c in GOAL_CLASSES if "post" in c)


def _swap(name: str, a: str, b: str) -> str:
    return name.replace(a, "\0").replace(b, a).replace("\0", b)


def _mirror_x_name(name: str) -> str:
    # "left"/"right" in post names is from the point of view of a player
    # facing that goal, so mirroring X swaps both goal side and post side.
    return _swap(name, "left", "right")


def _mirror_y_name(name: str) -> str:
    name = _swap(name, "top", "bottom")
    if "post" in name:
        goal, post = name.split(" post ")
        name = f"{goal} post {_swap(post, 'left', 'right')}"
    return name


#: class -> class obtained by the reflection X -> -X
MIRROR_X: dict[str, str] = {c: _mirror_x_name(c) for c in CLASS_NAMES}
#: class -> class obtained by the reflection Y -> -Y
MIRROR_Y: dict[str, str] = {c: _mirror_y_name(c) for c in CLASS_NAMES}


class PitchSpecError(ValueError):
    """A pitch specification violates one of its invariants."""


@dataclass(frozen=True)
class PitchSpec:
    """Pitch dimensions in meters (defaults follow the laws of the game)."""

    length: float = 105.0
    width: float = 68.0
    circle_radius: float = 9.15
    penalty_area_length: float = 16.5
    penalty_area_width: float = 40.32
    goal_area_length: float = 5.5
    goal_area_width: float = 18.32
    penalty_mark_distance: float = 11.0
    goal_width: float = 7.32
    goal_height: float = 2.44

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise PitchSpecError(f"{f.name} must be a finite positive number, got {value!r}")
        checks = [
            (self.length > self.width, "length > width"),
            (self.penalty_area_width < self.width, "penalty_area_width < width"),
            (
                self.goal_area_length < self.penalty_area_length,
                "goal_area_length < penalty_area_length",
            ),
            (self.goal_width < self.goal_area_width, "goal_width < goal_area_width"),
        ]
        for ok, rule in checks:
            if not ok:
                raise PitchSpecError(f"pitch spec violates invariant: {rule}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "PitchSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise PitchSpecError(f"unknown pitch spec fields: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()})

    @classmethod
    def from_json(cls, text: str) -> "PitchSpec":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "PitchSpec":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


Point3 = tuple[float, float, float]


@dataclass(frozen=True)
class Segment3D:
    start: Point3
    end: Point3

    @property
    def length(self) -> float:
        return math.dist(self.start, self.end)


@dataclass(frozen=True)
class Circle3D:
    """Circle or circular arc.

    The arc runs counterclockwise (seen from the side the normal points to)
    from ``start_angle`` to ``end_angle``, in radians. Angle 0 points along
    +X for circles lying in a horizontal plane.
    """

    center: Point3
    radius: float
    normal: Point3 = (0.0, 0.0, 1.0)
    start_angle: float = 0.0
    end_angle: float = 2.0 * math.pi

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("circle radius must be positive")
        if not self.end_angle > self.start_angle:
            raise ValueError("circle end_angle must exceed start_angle")

    @property
    def is_full(self) -> bool:
        return self.end_angle - self.start_angle >= 2.0 * math.pi - 1e-15

    def basis(self) -> tuple[np.ndarray, np.ndarray]:
        """In-plane orthonormal axes (u, v) with u x v along the normal."""
        n = np.asarray(self.normal, dtype=float)
        n = n / np.linalg.norm(n)
        ref = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        u = ref - n * (ref @ n)
        u /= np.linalg.norm(u)
        return u, np.cross(n, u)


Geometry = Union[Segment3D, Circle3D]


@dataclass(frozen=True)
class FieldElement:
    name: str
    geometry: Geometry

    @property
    def is_ground(self) -> bool:
        return all(abs(p[2]) == 0.0 for p in _defining_points(self.geometry))


def _defining_points(g: Geometry) -> list[Point3]:
    if isinstance(g, Segment3D):
        return [g.start, g.end]
    if abs(g.normal[0]) == 0.0 and abs(g.normal[1]) == 0.0:
        return [g.center]
    u, v = g.basis()
    c = np.asarray(g.center)
    return [tuple(c + g.radius * u), tuple(c + g.radius * v), tuple(c - g.radius * v)]


def build_pitch_template(spec: PitchSpec | None = None) -> list[FieldElement]:
    """The 26 semantic elements of a soccer pitch, in ``CLASS_NAMES`` order."""
    spec = PitchSpec() if spec is None else spec
    hl = spec.length / 2.0
    hw = spec.width / 2.0
    pa_y = spec.penalty_area_width / 2.0
    ga_y = spec.goal_area_width / 2.0
    gw = spec.goal_width / 2.0
    gh = spec.goal_height

    def seg(x0, y0, x1, y1, z0=0.0, z1=0.0):
        return Segment3D((float(x0), float(y0), float(z0)), (float(x1), float(y1), float(z1)))

    geo: dict[str, Geometry] = {
        "Side line top": seg(-hl, hw, hl, hw),
        "Side line bottom": seg(-hl, -hw, hl, -hw),
        "Side line left": seg(-hl, -hw, -hl, hw),
        "Side line right": seg(hl, -hw, hl, hw),
        "Middle line": seg(0.0, -hw, 0.0, hw),
        "Circle central": Circle3D((0.0, 0.0, 0.0), spec.circle_radius),
    }
    for side, sx in (("left", -1.0), ("right", 1.0)):
        goal_x = sx * hl
        for prefix, depth, half in (
            ("Big rect.", spec.penalty_area_length, pa_y),
            ("Small rect.", spec.goal_area_length, ga_y),
        ):
            inner_x = sx * (hl - depth)
            geo[f"{prefix} {side} top"] = seg(goal_x, half, inner_x, half)
            geo[f"{prefix} {side} main"] = seg(inner_x, -half, inner_x, half)
            geo[f"{prefix} {side} bottom"] = seg(goal_x, -half, inner_x, -half)

        # penalty arc: the part of the circle around the penalty mark that
        # lies outside the penalty area
        mark_x = sx * (hl - spec.penalty_mark_distance)
        gap = spec.penalty_area_length - spec.penalty_mark_distance
        half_angle = math.acos(min(1.0, gap / spec.circle_radius))
        mid = 0.0 if sx < 0 else math.pi
        geo[f"Circle {side}"] = Circle3D(
            (mark_x, 0.0, 0.0),
            spec.circle_radius,
            start_angle=mid - half_angle,
            end_angle=mid + half_angle,
        )

        # posts named as seen by a player facing the goal
        facing_left_y = -gw if sx < 0 else gw
        geo[f"Goal {side} post left"] = seg(goal_x, facing_left_y, goal_x, facing_left_y, 0.0, gh)
        geo[f"Goal {side} post right"] = seg(
            goal_x, -facing_left_y, goal_x, -facing_left_y, 0.0, gh
        )
        geo[f"Goal {side} crossbar"] = seg(goal_x, -gw, goal_x, gw, gh, gh)

    return [FieldElement(name, geo[name]) for name in CLASS_NAMES]


def sample_element(element: FieldElement, max_spacing: float) -> np.ndarray:
    """Discretize an element into an ordered ``(n, 3)`` polyline.

    Consecutive points are at most ``max_spacing`` apart. Full circles are
    closed (the first point is repeated at the end).
    """
    if not max_spacing > 0:
        raise ValueError("max_spacing must be positive")
    return _sample_cached(element.geometry, float(max_spacing)).copy()


@lru_cache(maxsize=1024)
def _sample_cached(geometry: Geometry, max_spacing: float) -> np.ndarray:
    if isinstance(geometry, Segment3D):
        a = np.asarray(geometry.start, dtype=float)
        b = np.asarray(geometry.end, dtype=float)
        n = max(1, math.ceil(geometry.length / max_spacing - 1e-12))
        s = np.arange(n + 1) / n
        pts = a[None, :] + s[:, None] * (b - a)[None, :]
        pts[0] = a
        pts[-1] = b
    else:
        span = geometry.end_angle - geometry.start_angle
        n = max(1, math.ceil(geometry.radius * span / max_spacing - 1e-12))
        ang = geometry.start_angle + span * np.arange(n + 1) / n
        u, v = geometry.basis()
        c = np.asarray(geometry.center, dtype=float)
        r = geometry.radius
        pts = c[None, :] + r * (np.cos(ang)[:, None] * u[None, :] + np.sin(ang)[:, None] * v[None, :])
        if geometry.is_full:
            pts[-1] = pts[0]
    pts.setflags(write=False)
    return pts


def element_by_name(template: list[FieldElement]) -> dict[str, FieldElement]:
    return {e.name: e for e in template}
