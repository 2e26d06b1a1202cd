"""Camera models sharing one projection contract.

Three models ship: a ground-plane ``Homography``, a ``SimplifiedPinhole``
(single focal, zero skew) and ``PinholeRadial`` (pinhole plus even-order
radial distortion in normalized coordinates). Every model implements
``project_points`` which maps world points to pixels and flags points it
cannot image.
"""

from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional, Sequence, Union

import numpy as np

DEPTH_EPS = 1e-9
PLANE_EPS = 1e-9
UNDISTORT_MAX_ITER = 20
UNDISTORT_TOL = 1e-12


class Status(IntEnum):
    OK = 0
    BEHIND_CAMERA = 1
    OFF_PLANE = 2
    OUTSIDE_LENS = 3


class CameraError(ValueError):
    pass


class NoIntersectionError(CameraError):
    """A pixel ray does not reach the ground plane in front of the camera."""


class ConvergenceError(CameraError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class DistortionDroppedError(CameraError):
    """Refusal to silently drop lens distortion when reducing to a homography."""


@dataclass(frozen=True)
class Projection2D:
    """Result of projecting one world point.

    ``point`` is None when the point cannot be imaged; ``reason`` then names
    why ("behind-camera", "off-plane-for-homography", or
    "outside-distortion-domain" for rays past the radius where the lens
    model folds back).
    """

    point: Optional[tuple[float, float]]
    reason: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.point is not None


_REASONS = {
    Status.BEHIND_CAMERA: "behind-camera",
    Status.OFF_PLANE: "off-plane-for-homography",
    Status.OUTSIDE_LENS: "outside-distortion-domain",
}


def _as_matrix(values, shape) -> np.ndarray:
    m = np.array(values, dtype=np.float64).reshape(shape)
    m.setflags(write=False)
    return m


def rodrigues(rvec) -> np.ndarray:
    """Rotation matrix for an axis-angle 3-vector."""
    rvec = np.asarray(rvec, dtype=float)
    theta = float(np.linalg.norm(rvec))
    if theta < 1e-12:
        k = np.array(
            [[0.0, -rvec[2], rvec[1]], [rvec[2], 0.0, -rvec[0]], [-rvec[1], rvec[0], 0.0]]
        )
        return np.eye(3) + k + 0.5 * k @ k
    axis = rvec / theta
    k = np.array(
        [[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]]
    )
    return np.eye(3) + math.sin(theta) * k + (1.0 - math.cos(theta)) * (k @ k)


def nearest_rotation(m) -> np.ndarray:
    """Closest proper rotation (Frobenius) to a 3x3 matrix."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=float))
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def look_at_rotation(position, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """World-to-camera rotation for a camera at ``position`` aimed at ``target``.

    Camera axes follow the image convention: x right, y down, z forward.
    """
    z = np.asarray(target, dtype=float) - np.asarray(position, dtype=float)
    z /= np.linalg.norm(z)
    x = np.cross(z, np.asarray(up, dtype=float))
    nx = np.linalg.norm(x)
    if nx < 1e-12:
        raise CameraError("viewing direction is parallel to the up vector")
    x /= nx
    y = np.cross(z, x)
    return np.stack([x, y, z])


def distort(normalized_point, k1: float, k2: float = 0.0) -> np.ndarray:
    """Apply ``x * (1 + k1 r^2 + k2 r^4)`` to one point or an ``(N, 2)`` array."""
    p = np.asarray(normalized_point, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        r2 = np.sum(p * p, axis=-1, keepdims=True)
        return p * (1.0 + k1 * r2 + k2 * r2 * r2)


@lru_cache(maxsize=1024)
def monotonic_radius2(k1: float, k2: float = 0.0) -> float:
    """Largest r^2 up to which ``r (1 + k1 r^2 + k2 r^4)`` still increases.

    Beyond it the forward model folds back towards the centre, so rays at
    larger angles would land on spurious pixels. ``inf`` when it never folds.
    """
    # derivative: 1 + 3 k1 s + 5 k2 s^2 with s = r^2
    roots = np.roots([5.0 * k2, 3.0 * k1, 1.0]) if k2 != 0.0 else (
        np.array([-1.0 / (3.0 * k1)]) if k1 != 0.0 else np.array([])
    )
    real = [float(r.real) for r in np.atleast_1d(roots) if abs(r.imag) < 1e-12 and r.real > 0]
    return min(real) if real else math.inf


def undistort(distorted, k1: float, k2: float = 0.0) -> np.ndarray:
    """Invert ``distort`` by fixed-point iteration.

    Raises ``ConvergenceError`` if the update does not shrink below 1e-12 in
    20 iterations.
    """
    xd = np.asarray(distorted, dtype=float)
    if k1 == 0.0 and k2 == 0.0:
        return xd.copy()
    x = xd.copy()
    step = np.inf
    for _ in range(UNDISTORT_MAX_ITER):
        r2 = np.sum(x * x, axis=-1, keepdims=True)
        new = xd / (1.0 + k1 * r2 + k2 * r2 * r2)
        diff = np.abs(new - x)
        step = float(np.nanmax(diff)) if diff.size else 0.0
        x = new
        if step < UNDISTORT_TOL:
            return x
    if not np.isfinite(step):
        step = float("inf")
    raise ConvergenceError("radial undistortion did not converge", step)


@dataclass(frozen=True, eq=False)
class Homography:
    """Ground-plane homography, world (X, Y, 1) -> homogeneous pixels.

    Stored with unit Frobenius norm and non-negative ``h[2, 2]``.
    """

    h: np.ndarray

    model = "homography"

    def __post_init__(self):
        m = np.array(self.h, dtype=np.float64).reshape(3, 3)
        if not np.all(np.isfinite(m)):
            raise CameraError("homography has non-finite entries")
        norm = np.linalg.norm(m)
        if norm == 0.0:
            raise CameraError("homography is the zero matrix")
        if abs(norm - 1.0) > 1e-14:
            m = m / norm
        if m[2, 2] < 0.0:
            m = -m
        if abs(np.linalg.det(m)) <= 1e-12:
            raise CameraError("homography is singular")
        object.__setattr__(self, "h", _as_matrix(m, (3, 3)))

    def __eq__(self, other):
        return isinstance(other, Homography) and np.array_equal(self.h, other.h)

    def __hash__(self):
        return hash(self.h.tobytes())

    @property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.h)

    def project_points(self, points) -> tuple[np.ndarray, np.ndarray]:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        status = np.full(pts.shape[0], Status.OK, dtype=np.int8)
        if pts.shape[1] == 3:
            off = ~(np.abs(pts[:, 2]) <= PLANE_EPS)
            status[off] = Status.OFF_PLANE
            xy = pts[:, :2]
        else:
            xy = pts
        w = self.h[2, 0] * xy[:, 0] + self.h[2, 1] * xy[:, 1] + self.h[2, 2]
        u = self.h[0, 0] * xy[:, 0] + self.h[0, 1] * xy[:, 1] + self.h[0, 2]
        v = self.h[1, 0] * xy[:, 0] + self.h[1, 1] * xy[:, 1] + self.h[1, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            uv = np.stack([u / w, v / w], axis=1)
        # points on or beyond the vanishing line have no finite image
        status[(status == Status.OK) & (w <= DEPTH_EPS)] = Status.BEHIND_CAMERA
        uv[status != Status.OK] = np.nan
        return uv, status

    def ground_points(self, pixels) -> np.ndarray:
        px = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
        hom = np.column_stack([px, np.ones(len(px))]) @ self.inverse.T
        # hom[:, 2] = 1 / w of the pre-image, so only positive values are in front
        out = np.full((len(px), 3), np.nan)
        ok = hom[:, 2] > 1e-15
        out[ok, 0] = hom[ok, 0] / hom[ok, 2]
        out[ok, 1] = hom[ok, 1] / hom[ok, 2]
        out[ok, 2] = 0.0
        return out


@dataclass(frozen=True, eq=False)
class SimplifiedPinhole:
    """Pinhole camera: x = K (R X + t), single focal, square pixels, zero skew."""

    focal: float
    principal_point: tuple[float, float]
    rotation: np.ndarray
    translation: np.ndarray

    model = "pinhole"

    def __post_init__(self):
        if not (math.isfinite(self.focal) and self.focal > 0):
            raise CameraError("focal must be positive and finite")
        r = _as_matrix(self.rotation, (3, 3))
        if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-9 or abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise CameraError("rotation is not a proper orthonormal matrix")
        object.__setattr__(self, "focal", float(self.focal))
        object.__setattr__(
            self, "principal_point", tuple(float(v) for v in self.principal_point)
        )
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", _as_matrix(self.translation, (3,)))

    def __eq__(self, other):
        return (
            type(other) is type(self)
            and self.focal == other.focal
            and self.principal_point == other.principal_point
            and np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )

    def __hash__(self):
        return hash((self.focal, self.principal_point, self.rotation.tobytes()))

    @property
    def k1(self) -> float:
        return 0.0

    @property
    def k2(self) -> float:
        return 0.0

    @property
    def K(self) -> np.ndarray:
        px, py = self.principal_point
        return np.array([[self.focal, 0.0, px], [0.0, self.focal, py], [0.0, 0.0, 1.0]])

    @property
    def center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    def _distort(self, xn):
        return xn

    def _radius2_limit(self) -> float:
        return math.inf

    def _undistort(self, xd):
        return xd

    def project_points(self, points) -> tuple[np.ndarray, np.ndarray]:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        cam = pts @ self.rotation.T + self.translation
        z = cam[:, 2]
        status = np.where(z > DEPTH_EPS, Status.OK, Status.BEHIND_CAMERA).astype(np.int8)
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = cam[:, :2] / z[:, None]
        limit = self._radius2_limit()
        if limit < math.inf:
            beyond = (status == Status.OK) & ~(np.sum(xn * xn, axis=1) < limit)
            status[beyond] = Status.OUTSIDE_LENS
        xd = self._distort(xn)
        uv = xd * self.focal + np.asarray(self.principal_point)
        uv[status != Status.OK] = np.nan
        return uv, status

    def rays(self, pixels) -> np.ndarray:
        """World-frame ray directions through pixels (not normalized)."""
        px = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
        xd = (px - np.asarray(self.principal_point)) / self.focal
        xn = self._undistort(xd)
        d_cam = np.column_stack([xn, np.ones(len(xn))])
        return d_cam @ self.rotation

    def ground_points(self, pixels) -> np.ndarray:
        d = self.rays(pixels)
        c = self.center
        out = np.full((len(d), 3), np.nan)
        ok = np.abs(d[:, 2]) >= 1e-12
        with np.errstate(divide="ignore", invalid="ignore"):
            s = -c[2] / d[:, 2]
        ok &= s > 0
        out[ok] = c[None, :] + s[ok, None] * d[ok]
        out[ok, 2] = 0.0
        return out


@dataclass(frozen=True, eq=False)
class PinholeRadial(SimplifiedPinhole):
    """Simplified pinhole with radial distortion ``1 + k1 r^2 + k2 r^4``."""

    k1: float = 0.0
    k2: float = 0.0

    model = "pinhole_radial"

    def __post_init__(self):
        super().__post_init__()
        if not (math.isfinite(self.k1) and math.isfinite(self.k2)):
            raise CameraError("distortion coefficients must be finite")
        object.__setattr__(self, "k1", float(self.k1))
        object.__setattr__(self, "k2", float(self.k2))

    def __eq__(self, other):
        return super().__eq__(other) and self.k1 == other.k1 and self.k2 == other.k2

    def __hash__(self):
        return super().__hash__()

    @property
    def base(self) -> SimplifiedPinhole:
        return SimplifiedPinhole(self.focal, self.principal_point, self.rotation, self.translation)

    @classmethod
    def from_pinhole(cls, cam: SimplifiedPinhole, k1: float = 0.0, k2: float = 0.0):
        return cls(cam.focal, cam.principal_point, cam.rotation, cam.translation, k1, k2)

    def _distort(self, xn):
        if self.k1 == 0.0 and self.k2 == 0.0:
            return xn
        return distort(xn, self.k1, self.k2)

    def _undistort(self, xd):
        return undistort(xd, self.k1, self.k2)

    def _radius2_limit(self) -> float:
        return monotonic_radius2(self.k1, self.k2)


CameraModel = Union[Homography, SimplifiedPinhole, PinholeRadial]


def project(camera: CameraModel, world_point: Sequence[float]) -> Projection2D:
    """Project one world point (meters) to pixels."""
    p = np.asarray(world_point, dtype=float)
    if p.shape != (3,) or not np.all(np.isfinite(p)):
        raise ValueError("world_point must be a finite 3-vector")
    uv, status = camera.project_points(p[None, :])
    s = Status(int(status[0]))
    if s is not Status.OK:
        return Projection2D(None, _REASONS[s])
    return Projection2D((float(uv[0, 0]), float(uv[0, 1])))


def project_polyline(
    camera: CameraModel, points, image_size: Optional[tuple[int, int]] = None
) -> list[np.ndarray]:
    """Project a 3D polyline, splitting it at unprojectable vertices.

    Returns the pieces that keep at least two vertices. Vertices outside the
    image are kept; ``image_size`` is accepted for interface symmetry only.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("a polyline needs at least two vertices")
    uv, status = camera.project_points(pts)
    return split_pieces(uv, status == Status.OK)


def split_pieces(uv: np.ndarray, ok: np.ndarray) -> list[np.ndarray]:
    pieces = []
    n = len(ok)
    i = 0
    while i < n:
        if not ok[i]:
            i += 1
            continue
        j = i
        while j < n and ok[j]:
            j += 1
        if j - i >= 2:
            pieces.append(uv[i:j].copy())
        i = j
    return pieces


def ray_to_ground(camera: CameraModel, image_point: Sequence[float]) -> np.ndarray:
    """Back-project one pixel onto the Z = 0 plane."""
    px = np.asarray(image_point, dtype=float).reshape(1, 2)
    if isinstance(camera, Homography):
        g = camera.ground_points(px)[0]
        if not np.all(np.isfinite(g)):
            raise NoIntersectionError("pixel lies on or beyond the homography's vanishing line")
        return g
    d = camera.rays(px)[0]
    if abs(d[2]) < 1e-12:
        raise NoIntersectionError("ray is parallel to the ground plane")
    c = camera.center
    s = -c[2] / d[2]
    if s <= 0:
        raise NoIntersectionError("ray meets the ground plane behind the camera")
    g = c + s * d
    g[2] = 0.0
    return g


def ground_homography_of(
    camera: SimplifiedPinhole, ignore_distortion: bool = False
) -> Homography:
    """Homography ``K [r1 r2 t]`` equivalent to the camera on the ground plane.

    Distortion cannot be represented; a camera with non-zero coefficients is
    refused unless ``ignore_distortion`` is set.
    """
    if isinstance(camera, Homography):
        return camera
    if (camera.k1 != 0.0 or camera.k2 != 0.0) and not ignore_distortion:
        raise DistortionDroppedError(
            "camera has radial distortion; pass ignore_distortion=True to drop it"
        )
    r = camera.rotation
    m = camera.K @ np.column_stack([r[:, 0], r[:, 1], camera.translation])
    return Homography(m)


def shift_world(camera: CameraModel, offset: Sequence[float]) -> CameraModel:
    """Camera that images world point X where ``camera`` images X + offset."""
    o = np.asarray(offset, dtype=float)
    if isinstance(camera, Homography):
        if o.shape[0] == 3 and o[2] != 0.0:
            raise CameraError("a homography cannot be shifted off the ground plane")
        t = np.array([[1.0, 0.0, o[0]], [0.0, 1.0, o[1]], [0.0, 0.0, 1.0]])
        return Homography(camera.h @ t)
    t_new = camera.translation + camera.rotation @ o
    if isinstance(camera, PinholeRadial):
        return PinholeRadial(
            camera.focal, camera.principal_point, camera.rotation, t_new, camera.k1, camera.k2
        )
    return SimplifiedPinhole(camera.focal, camera.principal_point, camera.rotation, t_new)


def as_pinhole_radial(camera: SimplifiedPinhole) -> PinholeRadial:
    if isinstance(camera, PinholeRadial):
        return camera
    return PinholeRadial.from_pinhole(camera)


def with_params(camera: PinholeRadial, **changes) -> PinholeRadial:
    values = dict(
        focal=camera.focal,
        principal_point=camera.principal_point,
        rotation=camera.rotation,
        translation=camera.translation,
        k1=camera.k1,
        k2=camera.k2,
    )
    values.update(changes)
    return PinholeRadial(**values)


MODEL_TAGS = {
    "homography": Homography,
    "pinhole": SimplifiedPinhole,
    "pinhole_radial": PinholeRadial,
}


def model_tag(camera: CameraModel) -> str:
    return type(camera).model
