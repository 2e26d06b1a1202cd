"""Baseline calibration: normalized DLT, closed-form pinhole seed, LM refinement.

The refinement minimizes, over all annotated points, the squared distance to
the projected sampled template element of the same class. That is the same
quantity the metrics threshold, so a good fit is a good score.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels
from .camera_models import (
    CameraError,
    CameraModel,
    Homography,
    PinholeRadial,
    SimplifiedPinhole,
    Status,
    look_at_rotation,
    ground_homography_of,
    nearest_rotation,
    rodrigues,
)
from .field_model import FieldElement, Segment3D, sample_element
from .metrics import DEFAULT_SPACING, ImageAnnotation

log = logging.getLogger(__name__)

PINHOLE_PARAMS = ("f", "rx", "ry", "rz", "tx", "ty", "tz", "k1", "k2")


class CalibrationError(ValueError):
    pass


class DegenerateConfigurationError(CalibrationError):
    pass


class InitializationError(CalibrationError):
    pass


class UnderdeterminedError(CalibrationError):
    pass


class InvalidSeedError(CalibrationError):
    pass


@dataclass(frozen=True)
class Correspondence:
    world: tuple[float, float, float]
    image: tuple[float, float]
    weight: float = 1.0

    def __post_init__(self):
        vals = (*self.world, *self.image, self.weight)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("correspondence values must be finite")
        if self.weight < 0:
            raise ValueError("correspondence weight must be non-negative")


# ---------------------------------------------------------------------------
# DLT
# ---------------------------------------------------------------------------


def _hartley(pts: np.ndarray) -> np.ndarray:
    c = pts.mean(axis=0)
    rms = math.sqrt(float(np.mean(np.sum((pts - c) ** 2, axis=1))))
    if rms == 0.0:
        raise DegenerateConfigurationError("all points coincide")
    s = math.sqrt(2.0) / rms
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


def dlt_homography(corrs: Sequence[Correspondence]) -> Homography:
    """Normalized DLT from at least four ground-plane correspondences."""
    if len(corrs) < 4:
        raise DegenerateConfigurationError("DLT needs at least 4 correspondences")
    world = np.array([c.world[:2] for c in corrs], dtype=float)
    image = np.array([c.image for c in corrs], dtype=float)
    wts = np.sqrt(np.array([c.weight for c in corrs], dtype=float))
    for pts, what in ((world, "world"), (image, "image")):
        centered = pts - pts.mean(axis=0)
        sv = np.linalg.svd(centered, compute_uv=False)
        if sv[0] == 0.0 or sv[1] / sv[0] < 1e-9:
            raise DegenerateConfigurationError(f"{what} points are collinear")
    tw, ti = _hartley(world), _hartley(image)
    wn = np.column_stack([world, np.ones(len(world))]) @ tw.T
    im = np.column_stack([image, np.ones(len(image))]) @ ti.T
    n = len(corrs)
    a = np.zeros((2 * n, 9))
    x, y = wn[:, 0], wn[:, 1]
    u, v = im[:, 0], im[:, 1]
    a[0::2, 0:3] = np.column_stack([x, y, np.ones(n)])
    a[0::2, 6:9] = -u[:, None] * np.column_stack([x, y, np.ones(n)])
    a[1::2, 3:6] = np.column_stack([x, y, np.ones(n)])
    a[1::2, 6:9] = -v[:, None] * np.column_stack([x, y, np.ones(n)])
    a *= np.repeat(wts, 2)[:, None]
    _, s, vt = np.linalg.svd(a)
    if s.shape[0] >= 8 and s[7] <= 1e-12 * s[0]:
        raise DegenerateConfigurationError("correspondences do not determine a homography")
    hn = vt[-1].reshape(3, 3)
    h = np.linalg.inv(ti) @ hn @ tw
    try:
        return Homography(h)
    except CameraError as exc:
        raise DegenerateConfigurationError(str(exc)) from exc


# ---------------------------------------------------------------------------
# closed-form pinhole seed
# ---------------------------------------------------------------------------


def init_pinhole_from_homography(
    h: Homography, image_size: tuple[int, int]
) -> SimplifiedPinhole:
    """Recover focal, pose from a ground homography (principal point at centre).

    Uses both orthonormality constraints on the first two columns of
    ``K^-1 H`` and solves for ``1/f^2`` in the least-squares sense.
    """
    w, hgt = image_size
    pp = (w / 2.0, hgt / 2.0)
    shift = np.array([[1.0, 0.0, -pp[0]], [0.0, 1.0, -pp[1]], [0.0, 0.0, 1.0]])
    m = shift @ h.h
    a, b, c = m[:, 0], m[:, 1], m[:, 2]
    a1 = a[0] * b[0] + a[1] * b[1]
    b1 = a[2] * b[2]
    a2 = a[0] ** 2 + a[1] ** 2 - b[0] ** 2 - b[1] ** 2
    b2 = a[2] ** 2 - b[2] ** 2
    den = a1 * a1 + a2 * a2
    inv_f2 = -(a1 * b1 + a2 * b2) / den if den > 0 else float("nan")
    f = 1.0 / math.sqrt(inv_f2) if math.isfinite(inv_f2) and inv_f2 > 0 else math.inf
    if not f < 1000.0 * max(w, hgt):
        raise InitializationError(
            "focal length is not observable from this homography "
            "(e.g. a fronto-parallel view); supply a seed camera"
        )
    kinv = np.diag([1.0 / f, 1.0 / f, 1.0])
    r1, r2, t = kinv @ a, kinv @ b, kinv @ c
    lam = 2.0 / (np.linalg.norm(r1) + np.linalg.norm(r2))
    if t[2] * lam < 0:
        lam = -lam
    r1, r2, t = lam * r1, lam * r2, lam * t
    r = nearest_rotation(np.column_stack([r1, r2, np.cross(r1, r2)]))
    return SimplifiedPinhole(f, pp, r, t)


# ---------------------------------------------------------------------------
# Levenberg-Marquardt
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FitOptions:
    max_iterations: int = 200
    lambda0: float = 1e-3
    rel_step: float = 1e-6
    min_step: float = 1e-8
    ftol: float = 1e-10
    gtol: float = 1e-10
    cost_floor: float = 1e-24
    unlock_k2: bool = False
    fixed: frozenset = frozenset()
    spacing: float = DEFAULT_SPACING

    def free_pinhole_params(self) -> list[str]:
        names = [p for p in PINHOLE_PARAMS if p not in self.fixed]
        if not self.unlock_k2 and "k2" in names:
            names.remove("k2")
        return names


@dataclass
class FitReport:
    iterations: int
    initial_cost: float
    final_cost: float
    converged: bool
    cost_trace: list = field(default_factory=list)
    reason: str = ""
    n_points: int = 0
    n_params: int = 0

    @property
    def rms_px(self) -> float:
        return math.sqrt(self.final_cost / self.n_points) if self.n_points else float("nan")

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "initial_cost": self.initial_cost,
            "final_cost": self.final_cost,
            "converged": self.converged,
            "reason": self.reason,
            "n_points": self.n_points,
            "n_params": self.n_params,
            "rms_px": self.rms_px if self.n_points else None,
            "cost_trace": list(self.cost_trace),
        }


def fd_jacobian(fun: Callable, x: np.ndarray, rel_step=1e-6, min_step=1e-8) -> np.ndarray:
    """Central finite-difference Jacobian, step ``max(rel_step*|x|, min_step)``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        h = max(rel_step * abs(x[i]), min_step)
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        cols.append((fun(xp) - fun(xm)) / (2.0 * h))
    return np.column_stack(cols)


def _cost(r: np.ndarray) -> float:
    if not np.all(np.isfinite(r)):
        return math.inf
    return float(r @ r)


def levenberg_marquardt(
    fun: Callable[[np.ndarray], np.ndarray], x0, options: FitOptions = FitOptions()
) -> tuple[np.ndarray, FitReport]:
    """Minimize ``|fun(x)|^2``.

    Damping starts at ``options.lambda0``, is multiplied by 10 after a
    rejected step and divided by 10 after an accepted one. Steps are scaled
    by ``diag(J^T J)``.
    """
    x = np.asarray(x0, dtype=float).copy()
    r = fun(x)
    cost = _cost(r)
    report = FitReport(0, cost, cost, False, [cost], n_params=x.size)
    if not math.isfinite(cost):
        report.reason = "non-finite initial cost"
        return x, report
    lam = options.lambda0
    it = 0
    while it < options.max_iterations:
        if cost <= options.cost_floor:
            report.converged, report.reason = True, "cost below floor"
            break
        jac = fd_jacobian(fun, x, options.rel_step, options.min_step)
        grad = jac.T @ r
        if np.max(np.abs(grad)) < options.gtol:
            report.converged, report.reason = True, "gradient"
            break
        jtj = jac.T @ jac
        diag = np.diag(jtj).copy()
        diag[diag <= 0] = 1.0
        accepted = False
        stop = False
        while it < options.max_iterations:
            it += 1
            try:
                step = np.linalg.solve(jtj + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_new = x + step
            r_new = fun(x_new)
            cost_new = _cost(r_new)
            if cost_new < cost:
                rel = (cost - cost_new) / cost
                x, r, cost = x_new, r_new, cost_new
                report.cost_trace.append(cost)
                lam = max(lam / 10.0, 1e-15)
                accepted = True
                if rel < options.ftol:
                    report.converged, report.reason = True, "relative cost decrease"
                    stop = True
                break
            lam *= 10.0
            if lam > 1e16:
                stop = True
                report.reason = "damping overflow"
                report.converged = bool(np.max(np.abs(grad)) < 1e-6 * max(1.0, cost))
                break
        if stop or not accepted:
            break
    else:
        report.reason = report.reason or "max iterations"
    if not report.reason:
        report.reason = "max iterations"
    report.iterations = it
    report.final_cost = cost
    return x, report


# ---------------------------------------------------------------------------
# residuals against the template
# ---------------------------------------------------------------------------


class TemplateResiduals:
    """Offsets from annotated points to their class's projected polyline.

    Only classes that the seed camera can project take part; the set is
    frozen at construction so the residual vector has a fixed length.
    """

    def __init__(
        self,
        template: Sequence[FieldElement],
        annotation: ImageAnnotation,
        seed: CameraModel,
        spacing: float = DEFAULT_SPACING,
    ):
        by_name = {e.name: e for e in template}
        chunks, pts, starts, ends, classes = [], [], [], [], []
        offset = 0
        for cls, ann in annotation.elements.items():
            if cls not in by_name:
                continue
            samples = sample_element(by_name[cls], spacing)
            _, status = seed.project_points(samples)
            if np.count_nonzero(status == Status.OK) < 2:
                continue
            chunks.append(samples)
            chunks.append(np.full((1, 3), np.nan))
            n = len(samples)
            pts.append(ann)
            starts.append(np.full(len(ann), offset, dtype=np.int64))
            ends.append(np.full(len(ann), offset + n, dtype=np.int64))
            classes.append(cls)
            offset += n + 1
        self.classes = classes
        self.world = np.concatenate(chunks) if chunks else np.empty((0, 3))
        self.points = np.concatenate(pts) if pts else np.empty((0, 2))
        self.starts = np.concatenate(starts) if starts else np.empty(0, np.int64)
        self.ends = np.concatenate(ends) if ends else np.empty(0, np.int64)

    @property
    def n_points(self) -> int:
        return len(self.points)

    def offsets(self, camera: CameraModel) -> tuple[np.ndarray, np.ndarray]:
        uv, status = camera.project_points(self.world)
        ok = status == Status.OK
        # isolated vertices are dropped, matching project_polyline
        prev_ok = np.concatenate([[False], ok[:-1]])
        next_ok = np.concatenate([ok[1:], [False]])
        uv[ok & ~prev_ok & ~next_ok] = np.nan
        return _kernels.polyline_offsets(self.points, self.starts, self.ends, uv)

    def __call__(self, camera: CameraModel) -> np.ndarray:
        dist, off = self.offsets(camera)
        if not np.all(np.isfinite(dist)):
            return np.full(2 * self.n_points, np.nan)
        return off.ravel()


# ---------------------------------------------------------------------------
# pinhole refinement
# ---------------------------------------------------------------------------


class PinholeParametrization:
    """Maps a free-parameter vector to ``PinholeRadial`` cameras.

    Rotation is an axis-angle increment applied on the left of the seed
    rotation; the principal point stays fixed.
    """

    def __init__(self, seed: PinholeRadial, free: Sequence[str]):
        self.seed = seed
        self.free = list(free)
        self.base = {
            "f": seed.focal,
            "rx": 0.0,
            "ry": 0.0,
            "rz": 0.0,
            "tx": seed.translation[0],
            "ty": seed.translation[1],
            "tz": seed.translation[2],
            "k1": seed.k1,
            "k2": seed.k2,
        }

    def x0(self) -> np.ndarray:
        return np.array([self.base[n] for n in self.free], dtype=float)

    def camera(self, x) -> PinholeRadial:
        p = dict(self.base)
        p.update(zip(self.free, x))
        r = rodrigues([p["rx"], p["ry"], p["rz"]]) @ self.seed.rotation
        return PinholeRadial(
            abs(p["f"]),
            self.seed.principal_point,
            r,
            (p["tx"], p["ty"], p["tz"]),
            p["k1"],
            p["k2"],
        )


def _checked_camera(build, x):
    try:
        return build(x)
    except (CameraError, ValueError):
        return None


def make_pinhole_objective(
    initial: PinholeRadial,
    template: Sequence[FieldElement],
    annotation: ImageAnnotation,
    options: FitOptions = FitOptions(),
):
    """Residual function and parametrization used by ``refine_camera``."""
    if not isinstance(initial, PinholeRadial):
        initial = PinholeRadial.from_pinhole(initial)
    par = PinholeParametrization(initial, options.free_pinhole_params())
    res = TemplateResiduals(template, annotation, initial, options.spacing)

    def fun(x):
        cam = _checked_camera(par.camera, x)
        if cam is None or cam.focal <= 0:
            return np.full(2 * res.n_points, np.nan)
        return res(cam)

    return fun, par, res


def refine_camera(
    initial: SimplifiedPinhole,
    template: Sequence[FieldElement],
    annotation: ImageAnnotation,
    options: FitOptions = FitOptions(),
) -> tuple[PinholeRadial, FitReport]:
    """Levenberg-Marquardt over focal, rotation, translation and k1 (k2 opt.)."""
    fun, par, res = make_pinhole_objective(initial, template, annotation, options)
    n_params = len(par.free)
    if res.n_points < max(6, n_params):
        raise UnderdeterminedError(
            f"{res.n_points} usable annotated points for {n_params} parameters"
        )
    x0 = par.x0()
    if not math.isfinite(_cost(fun(x0))):
        raise InvalidSeedError("cost is not finite at the initial camera")
    x, report = levenberg_marquardt(fun, x0, options)
    report.n_points = res.n_points
    return par.camera(x), report


# ---------------------------------------------------------------------------
# homography refinement
# ---------------------------------------------------------------------------


def refine_homography(
    initial: Homography,
    template: Sequence[FieldElement],
    annotation: ImageAnnotation,
    options: FitOptions = FitOptions(),
) -> tuple[Homography, FitReport]:
    """LM over the eight free entries of h (the largest entry stays fixed)."""
    res = TemplateResiduals(template, annotation, initial, options.spacing)
    if res.n_points < 8:
        raise UnderdeterminedError(f"{res.n_points} usable annotated points for 8 parameters")
    h0 = initial.h.ravel().copy()
    pivot = int(np.argmax(np.abs(h0)))
    free = [i for i in range(9) if i != pivot]

    def build(x):
        h = h0.copy()
        h[free] = x
        return Homography(h)

    def fun(x):
        cam = _checked_camera(build, x)
        if cam is None:
            return np.full(2 * res.n_points, np.nan)
        return res(cam)

    x0 = h0[free]
    if not math.isfinite(_cost(fun(x0))):
        raise InvalidSeedError("cost is not finite at the initial homography")
    x, report = levenberg_marquardt(fun, x0, options)
    report.n_points = res.n_points
    return build(x), report


# ---------------------------------------------------------------------------
# seeding from annotations
# ---------------------------------------------------------------------------


def _fit_line(pts: np.ndarray) -> Optional[np.ndarray]:
    c = pts.mean(axis=0)
    _, s, vt = np.linalg.svd(pts - c)
    if s[0] == 0.0:
        return None
    d = vt[0]
    n = np.array([-d[1], d[0]])
    return np.array([n[0], n[1], -n @ c])


def _world_line(seg: Segment3D) -> np.ndarray:
    p = np.array([seg.start[0], seg.start[1], 1.0])
    q = np.array([seg.end[0], seg.end[1], 1.0])
    return np.cross(p, q)


def _segments_touch(s1: Segment3D, s2: Segment3D, x: np.ndarray, tol=1e-6) -> bool:
    for s in (s1, s2):
        a = np.array(s.start[:2])
        b = np.array(s.end[:2])
        ab = b - a
        t = float((x - a) @ ab / (ab @ ab))
        if t < -tol or t > 1 + tol:
            return False
    return True


def line_intersection_correspondences(
    template: Sequence[FieldElement],
    annotation: ImageAnnotation,
    virtual: bool = False,
) -> list[Correspondence]:
    """Correspondences at intersections of annotated straight ground lines.

    Each straight ground class with two or more points gets a fitted image
    line. Pairs whose world segments meet produce one correspondence; with
    ``virtual`` set, any non-parallel pair meeting inside the pitch counts.
    """
    w, h = annotation.image_size
    lines = []
    for e in template:
        g = e.geometry
        if not isinstance(g, Segment3D) or not e.is_ground:
            continue
        pts = annotation.elements.get(e.name)
        if pts is None or len(pts) < 2:
            continue
        il = _fit_line(pts)
        if il is not None:
            lines.append((e, il))
    out = []
    span = max(w, h)
    for i in range(len(lines)):
        for j in range(i + 1, len(lines)):
            (e1, l1), (e2, l2) = lines[i], lines[j]
            wx = np.cross(_world_line(e1.geometry), _world_line(e2.geometry))
            if abs(wx[2]) < 1e-9 * max(1.0, np.abs(wx[:2]).max()):
                continue
            wp = wx[:2] / wx[2]
            if virtual:
                if np.any(np.abs(wp) > 60.0):
                    continue
            elif not _segments_touch(e1.geometry, e2.geometry, wp):
                continue
            ix = np.cross(l1, l2)
            if abs(ix[2]) < 1e-12:
                continue
            ip = ix[:2] / ix[2]
            if not np.all(np.isfinite(ip)) or np.any(np.abs(ip - (w / 2, h / 2)) > 2 * span):
                continue
            out.append(Correspondence((float(wp[0]), float(wp[1]), 0.0), (float(ip[0]), float(ip[1]))))
    return out


def initial_homography(
    template: Sequence[FieldElement], annotation: ImageAnnotation
) -> Homography:
    """DLT seed from line intersections (virtual ones only when needed)."""
    corrs = line_intersection_correspondences(template, annotation)
    if len(corrs) < 4:
        corrs = line_intersection_correspondences(template, annotation, virtual=True)
    return dlt_homography(corrs)


def candidate_cameras(image_size: tuple[int, int]) -> list[PinholeRadial]:
    """Coarse grid of main-camera poses used when no closed-form seed exists."""
    pp = (image_size[0] / 2.0, image_size[1] / 2.0)
    cams = []
    for cx in (-20.0, 0.0, 20.0):
        c = np.array([cx, -40.0, 15.0])
        for tx in (-45.0, -30.0, -15.0, 0.0, 15.0, 30.0, 45.0):
            for ty in (-20.0, 0.0, 20.0):
                r = look_at_rotation(c, (tx, ty, 0.0))
                for f in (1500.0, 3000.0, 6000.0):
                    cams.append(PinholeRadial(f, pp, r, -r @ c))
    return cams


def _seed_score(res: TemplateResiduals, cam: CameraModel) -> float:
    dist, _ = res.offsets(cam)
    dist = np.where(np.isfinite(dist), dist, 1e4)
    return float(np.mean(np.minimum(dist, 1e4)))


def _search_seeds(template, annotation, spacing, k=3) -> list[PinholeRadial]:
    cands = candidate_cameras(annotation.image_size)
    ref = cands[len(cands) // 2]
    res = TemplateResiduals(template, annotation, ref, spacing)
    scored = sorted(cands, key=lambda c: _seed_score(res, c))
    return scored[:k]


def fit_pinhole(
    template: Sequence[FieldElement],
    annotation: ImageAnnotation,
    options: FitOptions = FitOptions(),
    seed: Optional[SimplifiedPinhole] = None,
    accept_rms: float = 2.0,
) -> tuple[PinholeRadial, FitReport]:
    """Seed (given, DLT-based, or grid search) then ``refine_camera``."""
    seeds: list[PinholeRadial] = []
    if seed is not None:
        seeds.append(PinholeRadial.from_pinhole(seed, seed.k1, seed.k2))
    else:
        try:
            h = initial_homography(template, annotation)
            seeds.append(PinholeRadial.from_pinhole(init_pinhole_from_homography(h, annotation.image_size)))
        except CalibrationError as exc:
            log.debug("closed-form seed unavailable: %s", exc)
    best = None
    for s in seeds:
        try:
            out = refine_camera(s, template, annotation, options)
        except InvalidSeedError:
            continue
        if best is None or out[1].final_cost < best[1].final_cost:
            best = out
    if best is None or best[1].rms_px > accept_rms:
        for s in _search_seeds(template, annotation, options.spacing):
            try:
                out = refine_camera(s, template, annotation, options)
            except InvalidSeedError:
                continue
            if best is None or out[1].final_cost < best[1].final_cost:
                best = out
    if best is None:
        raise InitializationError("no usable seed camera")
    return best


def fit_homography(
    template: Sequence[FieldElement],
    annotation: ImageAnnotation,
    options: FitOptions = FitOptions(),
    seed: Optional[Homography] = None,
    accept_rms: float = 2.0,
) -> tuple[Homography, FitReport]:
    """DLT seed (or given seed) refined by LM over the entries of h.

    When no DLT seed exists or its refinement stays above ``accept_rms``,
    the ground homography of a full pinhole fit is tried as well.
    """
    seeds: list[Homography] = []
    if seed is not None:
        seeds.append(seed)
    else:
        try:
            seeds.append(initial_homography(template, annotation))
        except CalibrationError as exc:
            log.debug("DLT seed unavailable: %s", exc)
    best = None

    def attempt(h):
        nonlocal best
        try:
            out = refine_homography(h, template, annotation, options)
        except InvalidSeedError:
            return
        if best is None or out[1].final_cost < best[1].final_cost:
            best = out

    for h in seeds:
        attempt(h)
    if best is None or best[1].rms_px > accept_rms:
        try:
            cam, _ = fit_pinhole(template, annotation, options, accept_rms=accept_rms)
            attempt(ground_homography_of(cam, ignore_distortion=True))
        except CalibrationError as exc:
            log.debug("pinhole-based seed unavailable: %s", exc)
    if best is None:
        raise InitializationError("no usable seed homography")
    return best
