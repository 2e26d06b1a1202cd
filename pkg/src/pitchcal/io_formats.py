"""File formats: annotations, cameras, legacy homographies, reports, SVG overlays.

Readers reject anything they would otherwise have to coerce. Writers emit
UTF-8 JSON with sorted keys, so a write/read/write cycle is byte-stable.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .camera_models import (
    CameraModel,
    Homography,
    PinholeRadial,
    SimplifiedPinhole,
)
from .field_model import CLASS_NAMES, FieldElement, PitchSpec
from .metrics import (
    DEFAULT_SPACING,
    FN,
    FP_HALLUCINATED,
    FP_INACCURATE,
    TP,
    ImageAnnotation,
    ImageEval,
    SchemaError,
    pitch_rectangle,
    project_template,
)

PathLike = Union[str, Path]
SVG_NS = "http://www.w3.org/2000/svg"


class ParseError(ValueError):
    pass


class LegacyConventionWarning(UserWarning):
    pass


def _load_json(path: PathLike):
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def _reject_constant(name):
    raise SchemaError(f"non-finite number {name} is not allowed")


def _number(value, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{what} must be a number, got {value!r}")
    if not math.isfinite(value):
        raise SchemaError(f"{what} must be finite")
    return float(value)


# ---------------------------------------------------------------------------
# annotations
# ---------------------------------------------------------------------------


def annotation_from_dict(data: dict) -> ImageAnnotation:
    if not isinstance(data, dict):
        raise SchemaError("annotation document must be an object")
    missing = {"image_width", "image_height", "elements"} - set(data)
    if missing:
        raise SchemaError(f"annotation is missing {sorted(missing)}")
    w, h = data["image_width"], data["image_height"]
    for v, what in ((w, "image_width"), (h, "image_height")):
        if isinstance(v, bool) or not isinstance(v, int) or v <= 0:
            raise SchemaError(f"{what} must be a positive integer")
    elements = data["elements"]
    if not isinstance(elements, dict):
        raise SchemaError("elements must be an object")
    parsed = {}
    for label, pts in elements.items():
        if label not in CLASS_NAMES:
            raise SchemaError(
                f"unknown class {label!r}; valid labels are: {', '.join(CLASS_NAMES)}"
            )
        if not isinstance(pts, list) or not pts:
            raise SchemaError(f"class {label!r} needs a non-empty point list")
        rows = []
        for p in pts:
            if not isinstance(p, dict) or set(p) != {"x", "y"}:
                raise SchemaError(f"class {label!r}: points must be objects with x and y")
            rows.append((_number(p["x"], f"{label}.x"), _number(p["y"], f"{label}.y")))
        parsed[label] = np.array(rows)
    return ImageAnnotation((w, h), parsed)


def read_annotation(path: PathLike) -> ImageAnnotation:
    return annotation_from_dict(_load_json(path))


def annotation_to_json(annotation: ImageAnnotation) -> str:
    """Canonical text: sorted keys, coordinates with six decimals."""
    w, h = annotation.image_size
    lines = ["{", '  "elements": {']
    labels = sorted(annotation.elements)
    for i, label in enumerate(labels):
        lines.append(f"    {json.dumps(label)}: [")
        pts = annotation.elements[label]
        for j, (x, y) in enumerate(pts):
            sep = "," if j < len(pts) - 1 else ""
            lines.append(f'      {{"x": {x:.6f}, "y": {y:.6f}}}{sep}')
        lines.append("    ]" + ("," if i < len(labels) - 1 else ""))
    lines.append("  },")
    lines.append(f'  "image_height": {int(h)},')
    lines.append(f'  "image_width": {int(w)}')
    lines.append("}")
    return "\n".join(lines) + "\n"


def write_annotation(annotation: ImageAnnotation, path: PathLike) -> None:
    Path(path).write_text(annotation_to_json(annotation), encoding="utf-8")


# ---------------------------------------------------------------------------
# cameras
# ---------------------------------------------------------------------------


def camera_to_dict(camera: CameraModel) -> dict:
    if isinstance(camera, Homography):
        return {"model": "homography", "h": [float(v) for v in camera.h.ravel()]}
    d = {
        "model": "pinhole",
        "focal": camera.focal,
        "principal_point": [float(v) for v in camera.principal_point],
        "rotation": [float(v) for v in camera.rotation.ravel()],
        "translation": [float(v) for v in camera.translation],
    }
    if isinstance(camera, PinholeRadial):
        d["model"] = "pinhole_radial"
        d["k1"] = camera.k1
        d["k2"] = camera.k2
    return d


def _vector(data, key, n) -> list[float]:
    v = data.get(key)
    if not isinstance(v, list) or len(v) != n:
        raise SchemaError(f"{key} must be a list of {n} numbers")
    return [_number(x, key) for x in v]


def camera_from_dict(data: dict) -> CameraModel:
    if not isinstance(data, dict) or "model" not in data:
        raise SchemaError("camera document needs a model tag")
    model = data["model"]
    if model == "homography":
        return Homography(np.array(_vector(data, "h", 9)).reshape(3, 3))
    if model not in ("pinhole", "pinhole_radial"):
        raise SchemaError(f"unknown camera model {model!r}")
    args = (
        _number(data.get("focal"), "focal"),
        tuple(_vector(data, "principal_point", 2)),
        np.array(_vector(data, "rotation", 9)).reshape(3, 3),
        np.array(_vector(data, "translation", 3)),
    )
    if model == "pinhole":
        return SimplifiedPinhole(*args)
    k1 = _number(data.get("k1", 0.0), "k1")
    k2 = _number(data.get("k2", 0.0), "k2")
    return PinholeRadial(*args, k1, k2)


def camera_to_json(camera: CameraModel) -> str:
    return json.dumps(camera_to_dict(camera), indent=2, sort_keys=True) + "\n"


def write_camera(camera: CameraModel, path: PathLike) -> None:
    Path(path).write_text(camera_to_json(camera), encoding="utf-8")


def read_camera(path: PathLike) -> CameraModel:
    return camera_from_dict(_load_json(path))


def write_json(data, path: PathLike) -> None:
    Path(path).write_text(
        json.dumps(data, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8"
    )


# ---------------------------------------------------------------------------
# legacy homographies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LegacyConvention:
    """How a 9-number legacy homography file relates to this toolkit's frame.

    ``meters_to_pixels_center``: the file already maps centre-origin meters
    to pixels. ``pixels_to_yards_corner``: the file maps pixels to a yard
    template with its origin at a corner (``y_down`` when template y grows
    towards the near side line); the template rectangle is stretched onto
    the pitch rectangle. ``custom``: ``H = post @ F @ pre`` with ``F`` the
    file matrix, inverted first when ``invert`` is set.
    """

    kind: str = "meters_to_pixels_center"
    template_yards: tuple[float, float] = (115.0, 74.0)
    y_down: bool = True
    pre: Optional[tuple[float, ...]] = None
    post: Optional[tuple[float, ...]] = None
    invert: bool = False

    KINDS = ("meters_to_pixels_center", "pixels_to_yards_corner", "custom")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise SchemaError(f"unknown legacy convention {self.kind!r}; choose from {self.KINDS}")

    @classmethod
    def parse(cls, value: str) -> "LegacyConvention":
        """A convention name, or a path to a JSON sidecar describing one."""
        if value in cls.KINDS:
            return cls(kind=value)
        data = _load_json(value)
        if "convention" not in data:
            raise SchemaError("legacy convention sidecar needs a 'convention' key")
        kw = {"kind": data["convention"]}
        if "template_yards" in data:
            kw["template_yards"] = tuple(_vector(data, "template_yards", 2))
        if "y_down" in data:
            kw["y_down"] = bool(data["y_down"])
        for key in ("pre", "post"):
            if key in data:
                kw[key] = tuple(_vector(data, key, 9))
        if "invert" in data:
            kw["invert"] = bool(data["invert"])
        return cls(**kw)

    def to_toolkit(self, f: np.ndarray, spec: Optional[PitchSpec] = None) -> np.ndarray:
        spec = PitchSpec() if spec is None else spec
        if self.kind == "meters_to_pixels_center":
            return f
        if self.kind == "custom":
            m = np.linalg.inv(f) if self.invert else f
            pre = np.eye(3) if self.pre is None else np.array(self.pre).reshape(3, 3)
            post = np.eye(3) if self.post is None else np.array(self.post).reshape(3, 3)
            return post @ m @ pre
        lyd, wyd = self.template_yards
        sy = -1.0 if self.y_down else 1.0
        yards_to_m = np.array(
            [
                [spec.length / lyd, 0.0, -spec.length / 2.0],
                [0.0, sy * spec.width / wyd, -sy * spec.width / 2.0],
                [0.0, 0.0, 1.0],
            ]
        )
        return np.linalg.inv(yards_to_m @ f)


MIN_PIXELS_PER_METER = 0.5


def homography_sanity_warnings(
    h: Homography, image_size: tuple[int, int], spec: Optional[PitchSpec] = None
) -> list[str]:
    """Checks that a converted homography images at least part of the pitch.

    A grid of pitch points is projected; a broadcast view sees some of them.
    """
    w, hh = image_size
    hl, hw = pitch_rectangle(spec)[2]
    gx, gy = np.meshgrid(np.linspace(-hl, hl, 43), np.linspace(-hw, hw, 29))
    uv, status = h.project_points(np.column_stack([gx.ravel(), gy.ravel()]))
    ok = status == 0
    if not ok.any():
        return ["the whole pitch maps beyond the horizon"]
    u, v = uv[ok, 0], uv[ok, 1]
    inside = (u >= 0) & (u <= w) & (v >= 0) & (v <= hh)
    if not inside.any():
        return ["no pitch point projects inside the image"]
    # a misread unit or direction shrinks the pitch to a few pixels
    g = np.column_stack([gx.ravel(), gy.ravel()])[ok][inside]
    step, _ = h.project_points(g + [1.0, 0.0])
    scale = np.linalg.norm(step - uv[ok][inside], axis=1)
    if not np.nanmax(scale) >= MIN_PIXELS_PER_METER:
        return [f"the pitch images at under {MIN_PIXELS_PER_METER:g} px per meter"]
    return []


def read_legacy_homography(
    path: PathLike,
    convention: LegacyConvention,
    spec: Optional[PitchSpec] = None,
    image_size: Optional[tuple[int, int]] = None,
) -> Homography:
    """Read 9 whitespace-separated numbers (row-major) and convert the frame.

    With ``image_size`` given, suspicious results raise a
    ``LegacyConventionWarning``.
    """
    tokens = Path(path).read_text(encoding="utf-8").split()
    if len(tokens) != 9:
        raise ParseError(f"{path}: expected 9 numbers, found {len(tokens)}")
    try:
        vals = [float(t) for t in tokens]
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not all(math.isfinite(v) for v in vals):
        raise ParseError(f"{path}: non-finite entry")
    f = np.array(vals).reshape(3, 3)
    if abs(np.linalg.det(f / np.linalg.norm(f))) <= 1e-12:
        raise SchemaError(f"{path}: singular homography")
    h = Homography(convention.to_toolkit(f, spec))
    if image_size is not None:
        for msg in homography_sanity_warnings(h, image_size, spec):
            warnings.warn(f"{path}: {msg}; check the legacy convention", LegacyConventionWarning)
    return h


def write_legacy_homography(h: Homography, path: PathLike) -> None:
    """Write in the ``meters_to_pixels_center`` convention."""
    rows = [" ".join(repr(float(v)) for v in row) for row in h.h]
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# evaluation reports
# ---------------------------------------------------------------------------

CSV_COLUMNS = (
    "image_id",
    "tp",
    "fp_halluc",
    "fp_inacc",
    "fn",
    "jaccard",
    "reproj_px",
    "reproj_norm",
)


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def eval_row(image_id: str, ev: ImageEval) -> dict:
    c = ev.counts
    return {
        "image_id": image_id,
        "tp": c.tp,
        "fp_halluc": c.fp_hallucinated,
        "fp_inacc": c.fp_inaccurate,
        "fn": c.fn,
        "jaccard": repr(float(ev.jaccard)),
        "reproj_px": _fmt(ev.reprojection_px),
        "reproj_norm": _fmt(ev.reprojection_norm),
    }


def write_dataset_csv(rows: Iterable[tuple[str, ImageEval]], path: PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for image_id, ev in sorted(rows, key=lambda r: r[0]):
            writer.writerow(eval_row(image_id, ev))


def write_image_eval(evals: Sequence[ImageEval], path: PathLike, image_id: str = "") -> None:
    """Per-image JSON holding one entry per threshold."""
    doc = {"image_id": image_id, "evaluations": [e.to_dict() for e in evals]}
    write_json(doc, path)


# ---------------------------------------------------------------------------
# scenes
# ---------------------------------------------------------------------------


def write_scene(scene, out_dir: PathLike, stem: str) -> dict[str, Path]:
    """Annotation, ground-truth camera and provenance files for a scene."""
    out = Path(out_dir)
    paths = {
        "annotation": out / f"{stem}.json",
        "camera": out / f"{stem}.camera.json",
        "provenance": out / f"{stem}.provenance.json",
    }
    write_annotation(scene.annotation, paths["annotation"])
    write_camera(scene.camera, paths["camera"])
    write_json(scene.provenance, paths["provenance"])
    return paths


# ---------------------------------------------------------------------------
# SVG overlays
# ---------------------------------------------------------------------------

COLORS = {
    TP: "#1db954",
    FP_INACCURATE: "#ff8c00",
    FP_HALLUCINATED: "#ff8c00",
    FN: "#e02020",
}
SVG_ELEMENTS = {"svg", "title", "desc", "g", "rect", "polyline", "circle", "text", "line"}


def _points_attr(pts: np.ndarray) -> str:
    return " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)


def render_overlay(
    camera: CameraModel,
    template: Sequence[FieldElement],
    annotation: ImageAnnotation,
    evaluation: ImageEval,
    path: Optional[PathLike] = None,
    spacing: float = DEFAULT_SPACING,
) -> str:
    """SVG 1.1 overlay coloured by verdict; returns the document text.

    Projected elements are drawn green (TP) or orange (FP), missed elements
    red dashed along their annotation; annotated points are circles of
    radius tau / 2.
    """
    w, h = annotation.image_size
    ET.register_namespace("", SVG_NS)
    root = ET.Element(
        f"{{{SVG_NS}}}svg",
        {
            "version": "1.1",
            "width": str(w),
            "height": str(h),
            "viewBox": f"0 0 {w} {h}",
        },
    )
    ET.SubElement(root, f"{{{SVG_NS}}}title").text = f"calibration overlay, tau = {evaluation.tau:g} px"
    ET.SubElement(
        root,
        f"{{{SVG_NS}}}rect",
        {"x": "0", "y": "0", "width": str(w), "height": str(h), "fill": "#20402a"},
    )
    projected = project_template(camera, template, spacing)
    layer = ET.SubElement(root, f"{{{SVG_NS}}}g", {"id": "elements", "fill": "none"})
    limit = 1e6
    for cls, verdict in evaluation.verdicts.items():
        color = COLORS[verdict.verdict]
        grp = ET.SubElement(layer, f"{{{SVG_NS}}}g", {"class": verdict.verdict, "stroke": color})
        ET.SubElement(grp, f"{{{SVG_NS}}}title").text = f"{cls}: {verdict.verdict}"
        if verdict.verdict == FN:
            pts = annotation.elements[cls]
            if len(pts) >= 2:
                ET.SubElement(
                    grp,
                    f"{{{SVG_NS}}}polyline",
                    {"points": _points_attr(pts), "stroke-width": "2", "stroke-dasharray": "8,6"},
                )
            continue
        for piece in projected.get(cls, []):
            piece = piece[np.all(np.abs(piece) < limit, axis=1)]
            if len(piece) >= 2:
                ET.SubElement(
                    grp, f"{{{SVG_NS}}}polyline", {"points": _points_attr(piece), "stroke-width": "2"}
                )
    marks = ET.SubElement(
        root, f"{{{SVG_NS}}}g", {"id": "annotations", "fill": "none", "stroke": "#ffffff"}
    )
    r = f"{evaluation.tau / 2.0:.3f}"
    for cls, pts in annotation.elements.items():
        for x, y in pts:
            ET.SubElement(marks, f"{{{SVG_NS}}}circle", {"cx": f"{x:.2f}", "cy": f"{y:.2f}", "r": r})
    legend = ET.SubElement(root, f"{{{SVG_NS}}}g", {"id": "legend", "font-family": "sans-serif", "font-size": "20"})
    entries = [("TP", COLORS[TP], None), ("FP", COLORS[FP_INACCURATE], None), ("FN", COLORS[FN], "8,6")]
    for i, (label, color, dash) in enumerate(entries):
        y = 30 + 28 * i
        attrs = {"x1": "20", "y1": str(y), "x2": "60", "y2": str(y), "stroke": color, "stroke-width": "4"}
        if dash:
            attrs["stroke-dasharray"] = dash
        ET.SubElement(legend, f"{{{SVG_NS}}}line", attrs)
        ET.SubElement(legend, f"{{{SVG_NS}}}text", {"x": "70", "y": str(y + 7), "fill": "#ffffff"}).text = label
    ET.indent(root)
    text = '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def validate_svg(text: str) -> list[str]:
    """Structural SVG 1.1 checks; returns a list of problems (empty if valid)."""
    problems = []
    try:
        root = ET.fromstring(text.encode("utf-8"))
    except ET.ParseError as exc:
        return [f"not well-formed XML: {exc}"]
    if root.tag != f"{{{SVG_NS}}}svg":
        problems.append(f"root element is {root.tag}, expected svg in the SVG namespace")
    if root.get("version") != "1.1":
        problems.append("svg version attribute must be 1.1")
    numeric = {
        "rect": ("x", "y", "width", "height"),
        "circle": ("cx", "cy", "r"),
        "line": ("x1", "y1", "x2", "y2"),
    }
    for el in root.iter():
        if not el.tag.startswith(f"{{{SVG_NS}}}"):
            problems.append(f"element outside the SVG namespace: {el.tag}")
            continue
        name = el.tag.split("}", 1)[1]
        if name not in SVG_ELEMENTS:
            problems.append(f"unexpected element {name}")
        for attr in numeric.get(name, ()):
            try:
                float(el.get(attr))
            except (TypeError, ValueError):
                problems.append(f"{name} has a missing or non-numeric {attr}")
        if name == "circle" and float(el.get("r", "0")) < 0:
            problems.append("circle radius is negative")
        if name == "polyline":
            nums = el.get("points", "").replace(",", " ").split()
            try:
                vals = [float(v) for v in nums]
            except ValueError:
                problems.append("polyline points are not numeric")
                continue
            if len(vals) < 4 or len(vals) % 2:
                problems.append("polyline needs an even count of at least 4 coordinates")
    return problems
