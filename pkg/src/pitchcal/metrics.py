"""Calibration scoring against semantic polyline annotations.

The main metric is the Jaccard index for camera calibration, JaC_tau. A
template element is *predicted* by a camera when at least one vertex of its
projected, sampled polyline falls inside the image. Per class:

* annotated and predicted, every annotated point closer than ``tau`` -> TP
* annotated and predicted, some point at ``tau`` or further -> FP (inaccurate)
* predicted but not annotated -> FP (hallucinated)
* annotated but not predicted -> FN

``JaC = TP / (TP + FP + FN)``. Legacy metrics (reprojection error,
projection error, IoU whole/part) are provided for comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence

import numpy as np

from . import _kernels
from .camera_models import (
    CameraModel,
    Homography,
    Status,
    ground_homography_of,
    split_pieces,
)
from .field_model import CLASS_NAMES, FieldElement, PitchSpec, sample_element
from .geometry import clip_halfplane, is_convex, is_simple, pack_pieces, polygon_area, polygon_iou

DEFAULT_SPACING = 0.2
OUT_OF_FRAME_TOLERANCE = 0.05

TP = "TP"
FP_INACCURATE = "FP_INACCURATE"
FP_HALLUCINATED = "FP_HALLUCINATED"
FN = "FN"


class SchemaError(ValueError):
    """Annotation content does not match the class registry or value rules."""


class DegenerateGeometryError(ValueError):
    """A back-projected polygon is not a valid convex region."""


@dataclass(frozen=True, eq=False)
class ImageAnnotation:
    """Annotated points per semantic class, in pixels.

    Points may lie outside the image by at most 5% of the corresponding
    image dimension.
    """

    image_size: tuple[int, int]
    elements: Mapping[str, np.ndarray]

    def __post_init__(self):
        w, h = self.image_size
        if not (w > 0 and h > 0):
            raise SchemaError("image size must be positive")
        clean = {}
        for name, pts in self.elements.items():
            if name not in CLASS_NAMES:
                raise SchemaError(
                    f"unknown class {name!r}; valid labels are: {', '.join(CLASS_NAMES)}"
                )
            arr = np.array(pts, dtype=np.float64).reshape(-1, 2)
            if len(arr) == 0:
                raise SchemaError(f"class {name!r} has no points")
            if not np.all(np.isfinite(arr)):
                raise SchemaError(f"class {name!r} has a non-finite coordinate")
            mx, my = OUT_OF_FRAME_TOLERANCE * w, OUT_OF_FRAME_TOLERANCE * h
            if (
                arr[:, 0].min() < -mx
                or arr[:, 0].max() > w + mx
                or arr[:, 1].min() < -my
                or arr[:, 1].max() > h + my
            ):
                raise SchemaError(f"class {name!r} has a point too far outside the image")
            arr.setflags(write=False)
            clean[name] = arr
        ordered = {n: clean[n] for n in CLASS_NAMES if n in clean}
        object.__setattr__(self, "image_size", (int(w), int(h)))
        object.__setattr__(self, "elements", ordered)

    def __eq__(self, other):
        if not isinstance(other, ImageAnnotation):
            return NotImplemented
        return (
            self.image_size == other.image_size
            and self.elements.keys() == other.elements.keys()
            and all(np.array_equal(self.elements[k], other.elements[k]) for k in self.elements)
        )

    @property
    def n_points(self) -> int:
        return sum(len(v) for v in self.elements.values())


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp_hallucinated: int = 0
    fp_inaccurate: int = 0
    fn: int = 0

    @property
    def fp(self) -> int:
        return self.fp_hallucinated + self.fp_inaccurate

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp,
            self.fp_hallucinated + other.fp_hallucinated,
            self.fp_inaccurate + other.fp_inaccurate,
            self.fn + other.fn,
        )

    def jaccard(self) -> float:
        den = self.tp + self.fp + self.fn
        return 1.0 if den == 0 else self.tp / den


@dataclass(frozen=True)
class ClassVerdict:
    verdict: str
    max_distance: Optional[float] = None


@dataclass(frozen=True)
class ImageEval:
    tau: float
    counts: ConfusionCounts
    verdicts: dict[str, ClassVerdict]
    distances: dict[str, np.ndarray]
    jaccard: float
    vacuous: bool
    reprojection_px: Optional[float]
    reprojection_norm: Optional[float]
    excluded_points: int = 0

    def to_dict(self) -> dict:
        c = self.counts
        return {
            "tau": self.tau,
            "counts": {
                "tp": c.tp,
                "fp": c.fp,
                "fp_hallucinated": c.fp_hallucinated,
                "fp_inaccurate": c.fp_inaccurate,
                "fn": c.fn,
            },
            "jaccard": self.jaccard,
            "vacuous": self.vacuous,
            "reprojection_px": self.reprojection_px,
            "reprojection_norm": self.reprojection_norm,
            "excluded_points": self.excluded_points,
            "verdicts": {
                k: {"verdict": v.verdict, "max_distance": v.max_distance}
                for k, v in self.verdicts.items()
            },
            "distances": {k: [float(x) for x in v] for k, v in self.distances.items()},
        }


# ---------------------------------------------------------------------------
# projection of the template
# ---------------------------------------------------------------------------


@lru_cache(maxsize=64)
def _template_samples(template: tuple[FieldElement, ...], spacing: float):
    names = tuple(e.name for e in template)
    chunks = [sample_element(e, spacing) for e in template]
    bounds = np.cumsum([0] + [len(c) for c in chunks])
    pts = np.concatenate(chunks)
    pts.setflags(write=False)
    return names, pts, bounds


def project_template(
    camera: CameraModel,
    template: Sequence[FieldElement],
    spacing: float = DEFAULT_SPACING,
) -> dict[str, list[np.ndarray]]:
    """Projected polyline pieces of every template element (possibly empty)."""
    names, pts, bounds = _template_samples(tuple(template), float(spacing))
    uv, status = camera.project_points(pts)
    ok = status == Status.OK
    out = {}
    for i, name in enumerate(names):
        s, e = bounds[i], bounds[i + 1]
        out[name] = split_pieces(uv[s:e], ok[s:e])
    return out


def is_predicted(pieces: Sequence[np.ndarray], image_size: tuple[int, int]) -> bool:
    w, h = image_size
    for p in pieces:
        inside = (p[:, 0] >= 0) & (p[:, 0] <= w) & (p[:, 1] >= 0) & (p[:, 1] <= h)
        if inside.any():
            return True
    return False


@dataclass(frozen=True)
class Measurement:
    """tau-independent part of an evaluation."""

    image_size: tuple[int, int]
    annotated: frozenset
    predicted: frozenset
    distances: dict[str, np.ndarray] = field(default_factory=dict)
    excluded_points: int = 0


def measure_image(
    camera: CameraModel,
    template: Sequence[FieldElement],
    annotation: ImageAnnotation,
    spacing: float = DEFAULT_SPACING,
) -> Measurement:
    names = {e.name for e in template}
    for cls in annotation.elements:
        if cls not in names:
            raise SchemaError(f"annotated class {cls!r} is absent from the template")
    projected = project_template(camera, template, spacing)
    predicted = frozenset(n for n, p in projected.items() if is_predicted(p, annotation.image_size))
    distances = {}
    for cls, pts in annotation.elements.items():
        if cls in predicted:
            verts = pack_pieces(projected[cls])
            n = len(pts)
            d, _ = _kernels.polyline_offsets(
                pts, np.zeros(n, np.int64), np.full(n, len(verts), np.int64), verts
            )
            distances[cls] = d
    excluded = sum(len(p) for c, p in annotation.elements.items() if c not in predicted)
    return Measurement(
        annotation.image_size, frozenset(annotation.elements), predicted, distances, excluded
    )


def is_within(distances: np.ndarray, tau: float) -> bool:
    """The per-element acceptance predicate: every point strictly below tau."""
    return bool(np.all(distances < tau))


def score(m: Measurement, tau: float) -> ImageEval:
    if not tau > 0:
        raise ValueError("tau must be positive")
    verdicts = {}
    tp = fpi = fph = fn = 0
    for cls in CLASS_NAMES:
        ann, pred = cls in m.annotated, cls in m.predicted
        if ann and pred:
            d = m.distances[cls]
            worst = float(d.max())
            if is_within(d, tau):
                tp += 1
                verdicts[cls] = ClassVerdict(TP, worst)
            else:
                fpi += 1
                verdicts[cls] = ClassVerdict(FP_INACCURATE, worst)
        elif pred:
            fph += 1
            verdicts[cls] = ClassVerdict(FP_HALLUCINATED)
        elif ann:
            fn += 1
            verdicts[cls] = ClassVerdict(FN)
    counts = ConfusionCounts(tp, fph, fpi, fn)
    rep = _reprojection_from(m)
    return ImageEval(
        tau=float(tau),
        counts=counts,
        verdicts=verdicts,
        distances=dict(m.distances),
        jaccard=counts.jaccard(),
        vacuous=(tp + fph + fpi + fn) == 0,
        reprojection_px=rep.px,
        reprojection_norm=rep.normalized,
        excluded_points=rep.n_excluded,
    )


def evaluate_image(
    camera: CameraModel,
    template: Sequence[FieldElement],
    annotation: ImageAnnotation,
    tau: float,
    spacing: float = DEFAULT_SPACING,
) -> ImageEval:
    """Score one calibrated image at threshold ``tau`` (pixels)."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    return score(measure_image(camera, template, annotation, spacing), tau)


# ---------------------------------------------------------------------------
# reprojection error
# ---------------------------------------------------------------------------


class ReprojectionError(NamedTuple):
    px: Optional[float]
    normalized: Optional[float]
    n_points: int
    n_excluded: int


def _reprojection_from(m: Measurement) -> ReprojectionError:
    n_used = sum(len(d) for d in m.distances.values())
    if n_used == 0:
        return ReprojectionError(None, None, 0, m.excluded_points)
    px = float(np.mean(np.concatenate(list(m.distances.values()))))
    return ReprojectionError(px, px / m.image_size[1], n_used, m.excluded_points)


def reprojection_error(
    camera: CameraModel,
    template: Sequence[FieldElement],
    annotation: ImageAnnotation,
    spacing: float = DEFAULT_SPACING,
) -> ReprojectionError:
    """Mean annotated-point distance to the projection of its own class.

    Only classes that are both annotated and predicted contribute; points of
    unpredicted classes are counted in ``n_excluded``.
    """
    return _reprojection_from(measure_image(camera, template, annotation, spacing))


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetSummary:
    n_images: int
    counts: ConfusionCounts
    micro_jaccard: float
    mean_jaccard: float
    mean_reprojection_px: Optional[float]
    median_reprojection_px: Optional[float]
    mean_reprojection_norm: Optional[float]
    median_reprojection_norm: Optional[float]

    def to_dict(self) -> dict:
        c = self.counts
        return {
            "n_images": self.n_images,
            "tp": c.tp,
            "fp": c.fp,
            "fp_hallucinated": c.fp_hallucinated,
            "fp_inaccurate": c.fp_inaccurate,
            "fn": c.fn,
            "micro_jaccard": self.micro_jaccard,
            "mean_jaccard": self.mean_jaccard,
            "mean_reprojection_px": self.mean_reprojection_px,
            "median_reprojection_px": self.median_reprojection_px,
            "mean_reprojection_norm": self.mean_reprojection_norm,
            "median_reprojection_norm": self.median_reprojection_norm,
        }


def _stat(values, fn) -> Optional[float]:
    return float(fn(values)) if values else None


def aggregate(evals: Iterable[ImageEval]) -> DatasetSummary:
    """Micro-averaged JaC plus per-image means/medians."""
    evals = list(evals)
    if not evals:
        raise ValueError("aggregate needs at least one evaluation")
    total = ConfusionCounts()
    for e in evals:
        total = total + e.counts
    px = sorted(e.reprojection_px for e in evals if e.reprojection_px is not None)
    nm = sorted(e.reprojection_norm for e in evals if e.reprojection_norm is not None)
    return DatasetSummary(
        n_images=len(evals),
        counts=total,
        micro_jaccard=total.jaccard(),
        mean_jaccard=float(math.fsum(e.jaccard for e in evals) / len(evals)),
        mean_reprojection_px=_stat(px, lambda v: math.fsum(v) / len(v)),
        median_reprojection_px=_stat(px, np.median),
        mean_reprojection_norm=_stat(nm, lambda v: math.fsum(v) / len(v)),
        median_reprojection_norm=_stat(nm, np.median),
    )


# ---------------------------------------------------------------------------
# ground-plane metrics
# ---------------------------------------------------------------------------


def pitch_rectangle(spec: Optional[PitchSpec] = None) -> np.ndarray:
    spec = PitchSpec() if spec is None else spec
    hl, hw = spec.length / 2.0, spec.width / 2.0
    return np.array([[-hl, -hw], [hl, -hw], [hl, hw], [-hl, hw]])


def projection_error(
    estimated: CameraModel,
    ground_truth: CameraModel,
    image_size: tuple[int, int],
    n_samples: int = 2000,
    spec: Optional[PitchSpec] = None,
    seed: int = 0,
) -> Optional[float]:
    """Mean ground distance (meters) between two back-projections of a pixel.

    Pixels are drawn uniformly over the image and kept when the ground-truth
    back-projection lands on the pitch. Returns None when no pixel qualifies.
    Pixels the estimated model cannot back-project are skipped.
    """
    rect = pitch_rectangle(spec)
    hl, hw = rect[2]
    w, h = image_size
    rng = np.random.default_rng(seed)
    kept_gt, kept_est = [], []
    n_kept = 0
    for _ in range(50):
        cand = rng.uniform((0.0, 0.0), (w, h), size=(max(n_samples, 256), 2))
        g = ground_truth.ground_points(cand)
        on = np.isfinite(g[:, 0]) & (np.abs(g[:, 0]) <= hl) & (np.abs(g[:, 1]) <= hw)
        if not on.any():
            continue
        e = estimated.ground_points(cand[on])
        good = np.isfinite(e[:, 0])
        kept_gt.append(g[on][good])
        kept_est.append(e[good])
        n_kept += int(good.sum())
        if n_kept >= n_samples:
            break
    if n_kept == 0:
        return None
    gt = np.concatenate(kept_gt)[:n_samples]
    est = np.concatenate(kept_est)[:n_samples]
    return float(np.mean(np.linalg.norm(gt[:, :2] - est[:, :2], axis=1)))


def _as_homography(camera: CameraModel, ignore_distortion: bool) -> Homography:
    if isinstance(camera, Homography):
        return camera
    return ground_homography_of(camera, ignore_distortion=ignore_distortion)


def _apply(h: np.ndarray, pts: np.ndarray) -> np.ndarray:
    hom = np.column_stack([pts, np.ones(len(pts))]) @ h.T
    return hom


def _estimated_field_polygon(est: Homography, gt: Homography, rect: np.ndarray) -> np.ndarray:
    img = _apply(est.h, rect)
    if np.any(img[:, 2] <= 0):
        raise DegenerateGeometryError("pitch corner projects behind the estimated camera")
    img = img[:, :2] / img[:, 2:3]
    back = _apply(gt.inverse, img)
    if np.any(back[:, 2] <= 0):
        raise DegenerateGeometryError("pitch corner back-projects beyond the horizon")
    poly = back[:, :2] / back[:, 2:3]
    if not is_simple(poly) or not is_convex(poly):
        raise DegenerateGeometryError("back-projected pitch quadrilateral is self-intersecting")
    return poly


def iou_whole(
    estimated: CameraModel,
    gt: Homography,
    spec: Optional[PitchSpec] = None,
    ignore_distortion: bool = False,
) -> float:
    """IoU between the pitch rectangle and its image -> ground round trip."""
    rect = pitch_rectangle(spec)
    poly = _estimated_field_polygon(_as_homography(estimated, ignore_distortion), gt, rect)
    return polygon_iou(poly, rect)


def visible_region_halfplanes(gt: Homography, image_size: tuple[int, int]) -> list[tuple]:
    """Ground half-planes whose intersection is the part of Z=0 seen by ``gt``.

    One half-plane per image border plus one keeping points in front of the
    camera, so the region stays exact when the horizon is in view.
    """
    w, h = image_size
    corners = np.array([[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]])
    # the frame is clockwise in a y-down image; inside = right of each edge
    planes = []
    for i in range(4):
        p = np.append(corners[i], 1.0)
        q = np.append(corners[(i + 1) % 4], 1.0)
        line = np.cross(p, q)
        if line @ np.array([w / 2, h / 2, 1.0]) < 0:
            line = -line
        # image point x = gt.h X / w with w > 0, so line.x >= 0 <=> (gt.h^T line).X >= 0
        planes.append(tuple(gt.h.T @ line))
    planes.append(tuple(gt.h[2] - np.array([0.0, 0.0, 1e-12])))
    return planes


def iou_part(
    estimated: CameraModel,
    gt: Homography,
    image_size: tuple[int, int],
    spec: Optional[PitchSpec] = None,
    ignore_distortion: bool = False,
) -> float:
    """IoU restricted to the pitch area visible in the ground-truth view."""
    rect = pitch_rectangle(spec)
    poly = _estimated_field_polygon(_as_homography(estimated, ignore_distortion), gt, rect)
    planes = visible_region_halfplanes(gt, image_size)
    a, b = rect, poly
    for pl in planes:
        a = clip_halfplane(a, pl)
        b = clip_halfplane(b, pl)
    if polygon_area(a) == 0.0 and polygon_area(b) == 0.0:
        raise DegenerateGeometryError("no part of the pitch is visible")
    if polygon_area(a) == 0.0 or polygon_area(b) == 0.0:
        return 0.0
    return polygon_iou(a, b)
