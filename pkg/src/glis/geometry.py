"""Oriented 3D box algebra: IoU, camera projection, and 2D-to-3D box lifting.

Boxes are gravity-aligned: the heading angle rotates about the vertical
(z) axis, so box-box intersection factors into a bird's-eye-view polygon
overlap times a vertical interval overlap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


class GeometryError(ValueError):
    """Base class for geometry input errors."""


class BehindCameraError(GeometryError):
    """Point projects to non-positive depth (behind the camera plane)."""


class EmptyFrustumError(GeometryError):
    """No point of the cloud projects inside the given 2D box."""


class InsufficientSupportError(GeometryError):
    """Too few points survive frustum selection and trimming to fit a box."""


def normalize_heading(theta: float) -> float:
    """Map an angle to the canonical interval [-pi, pi)."""
    return (theta + math.pi) % TWO_PI - math.pi


@dataclass(frozen=True)
class Point3:
    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise GeometryError(f"non-finite point coordinates: {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)


@dataclass(frozen=True)
class PointCloud:
    """Ordered set of 3D points, stored as an (N, 3) float array."""

    xyz: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.xyz, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 3 or arr.shape[0] < 1:
            raise GeometryError(f"point cloud must be (N, 3) with N >= 1, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise GeometryError("point cloud contains non-finite values")
        object.__setattr__(self, "xyz", arr)

    @classmethod
    def from_points(cls, points: list[Point3]) -> "PointCloud":
        return cls(np.array([[p.x, p.y, p.z] for p in points], dtype=float))

    def __len__(self) -> int:
        return int(self.xyz.shape[0])


@dataclass(frozen=True)
class Box3D:
    """Oriented 3D box: center (x, y, z), size (l, w, h), heading theta.

    l, w, h are the extents along the box's local x, y, z axes before the
    heading rotation. theta is normalized to [-pi, pi) at construction.
    """

    x: float
    y: float
    z: float
    l: float
    w: float
    h: float
    theta: float = 0.0

    def __post_init__(self) -> None:
        vals = (self.x, self.y, self.z, self.l, self.w, self.h, self.theta)
        if not all(math.isfinite(v) for v in vals):
            raise GeometryError(f"non-finite box parameters: {vals}")
        if self.l <= 0 or self.w <= 0 or self.h <= 0:
            raise GeometryError(f"box sizes must be positive, got l={self.l} w={self.w} h={self.h}")
        object.__setattr__(self, "theta", normalize_heading(self.theta))

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @property
    def volume(self) -> float:
        return self.l * self.w * self.h

    def as_list(self) -> list[float]:
        """Serialization order [x, y, z, l, w, h, theta]."""
        return [self.x, self.y, self.z, self.l, self.w, self.h, self.theta]

    @classmethod
    def from_list(cls, values) -> "Box3D":
        if len(values) != 7:
            raise GeometryError(f"box list must have 7 entries, got {len(values)}")
        return cls(*(float(v) for v in values))


@dataclass(frozen=True)
class Box2D:
    """Axis-aligned image-plane box in pixels."""

    u_min: float
    v_min: float
    u_max: float
    v_max: float

    def __post_init__(self) -> None:
        if not (self.u_min < self.u_max and self.v_min < self.v_max):
            raise GeometryError(f"degenerate 2D box: {self}")

    def contains(self, u: float, v: float) -> bool:
        return self.u_min <= u <= self.u_max and self.v_min <= v <= self.v_max


@dataclass(frozen=True)
class ProjectionMatrix:
    """3x4 matrix mapping homogeneous world points to homogeneous pixels."""

    m: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        arr = np.asarray(self.m, dtype=float)
        if arr.shape != (3, 4):
            raise GeometryError(f"projection matrix must be 3x4, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise GeometryError("projection matrix contains non-finite entries")
        object.__setattr__(self, "m", arr)

    @classmethod
    def identity(cls) -> "ProjectionMatrix":
        return cls(np.hstack([np.eye(3), np.zeros((3, 1))]))


def project_point(m: ProjectionMatrix, p: Point3) -> tuple[float, float, float]:
    """Project a world point to pixel coordinates.

    Returns (u, v, depth) where depth is the homogeneous w-component.
    Raises BehindCameraError when depth <= 0.
    """
    h = m.m @ np.array([p.x, p.y, p.z, 1.0])
    depth = float(h[2])
    if depth <= 0.0:
        raise BehindCameraError(f"point {p} projects to depth {depth}")
    return float(h[0]) / depth, float(h[1]) / depth, depth


def iou_2d(a: Box2D, b: Box2D) -> float:
    """Standard axis-aligned intersection-over-union of two image boxes."""
    iw = min(a.u_max, b.u_max) - max(a.u_min, b.u_min)
    ih = min(a.v_max, b.v_max) - max(a.v_min, b.v_min)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    area_a = (a.u_max - a.u_min) * (a.v_max - a.v_min)
    area_b = (b.u_max - b.u_min) * (b.v_max - b.v_min)
    return inter / (area_a + area_b - inter)


# Bottom face counter-clockwise from (+x, +y), then the top face in the
# same x/y order. Local-frame corner signs, before rotation/translation.
_CORNER_SIGNS = np.array(
    [
        [+1, +1, -1],
        [-1, +1, -1],
        [-1, -1, -1],
        [+1, -1, -1],
        [+1, +1, +1],
        [-1, +1, +1],
        [-1, -1, +1],
        [+1, -1, +1],
    ],
    dtype=float,
)


def corners(b: Box3D) -> np.ndarray:
    """The 8 vertices of a box as an (8, 3) array, fixed documented order."""
    local = _CORNER_SIGNS * (np.array([b.l, b.w, b.h]) / 2.0)
    c, s = math.cos(b.theta), math.sin(b.theta)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return local @ rot.T + b.center


def bev_rectangle(b: Box3D) -> np.ndarray:
    """Bird's-eye-view footprint: 4 (x, y) vertices, counter-clockwise."""
    return corners(b)[:4, :2]


def _clip_polygon(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex CCW subject by a convex CCW clip."""
    output = [tuple(p) for p in subject]
    n = len(clip)
    for i in range(n):
        if not output:
            break
        a = clip[i]
        b = clip[(i + 1) % n]
        edge = (b[0] - a[0], b[1] - a[1])
        inputs = output
        output = []
        for j, p in enumerate(inputs):
            q = inputs[j - 1]
            p_in = edge[0] * (p[1] - a[1]) - edge[1] * (p[0] - a[0]) >= 0.0
            q_in = edge[0] * (q[1] - a[1]) - edge[1] * (q[0] - a[0]) >= 0.0
            if p_in:
                if not q_in:
                    output.append(_edge_intersection(q, p, a, b))
                output.append(p)
            elif q_in:
                output.append(_edge_intersection(q, p, a, b))
    return np.array(output) if output else np.empty((0, 2))


def _edge_intersection(p, q, a, b) -> tuple[float, float]:
    """Intersection of segment p-q with the infinite line through a-b."""
    d1 = (q[0] - p[0], q[1] - p[1])
    d2 = (b[0] - a[0], b[1] - a[1])
    denom = d1[0] * d2[1] - d1[1] * d2[0]
    if denom == 0.0:
        return tuple(p)  # parallel: degenerate contact, any point on overlap
    t = ((a[0] - p[0]) * d2[1] - (a[1] - p[1]) * d2[0]) / denom
    return (p[0] + t * d1[0], p[1] + t * d1[1])


def _shoelace_area(poly: np.ndarray) -> float:
    if poly.shape[0] < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def iou_3d(a: Box3D, b: Box3D) -> float:
    """Exact rotated-box IoU.

    Intersection is the BEV convex-polygon overlap of the two heading-rotated
    rectangles times the vertical interval overlap; union is vol(a) + vol(b)
    minus the intersection. Degenerate overlaps (shared edges) yield 0 area.
    """
    # canonical operand order makes symmetry exact (clipping rounds
    # differently depending on which polygon is the clip window)
    if (b.x, b.y, b.z, b.l, b.w, b.h, b.theta) < (a.x, a.y, a.z, a.l, a.w, a.h, a.theta):
        a, b = b, a
    z_lo = max(a.z - a.h / 2.0, b.z - b.h / 2.0)
    z_hi = min(a.z + a.h / 2.0, b.z + b.h / 2.0)
    dz = z_hi - z_lo
    if dz <= 0.0:
        return 0.0
    bev = _clip_polygon(bev_rectangle(a), bev_rectangle(b))
    inter = _shoelace_area(bev) * dz
    if inter <= 0.0:
        return 0.0
    union = a.volume + b.volume - inter
    return min(max(inter / union, 0.0), 1.0)


def lift_box_2d_to_3d(
    cloud: PointCloud,
    m: ProjectionMatrix,
    box2d: Box2D,
    trim: float = 0.05,
) -> Box3D:
    """Fit an axis-aligned 3D box to the cloud points that project into box2d.

    Points with positive depth whose (u, v) lands inside box2d are selected;
    per-axis percentile clipping at the trim fraction rejects outliers; the
    returned box (theta = 0) is the tight hull of the survivors.

    Raises EmptyFrustumError when nothing projects into the box and
    InsufficientSupportError when fewer than 5 points survive trimming.
    """
    if not 0.0 <= trim < 0.5:
        raise GeometryError(f"trim must be in [0, 0.5), got {trim}")
    pts = cloud.xyz
    h = m.m @ np.vstack([pts.T, np.ones(len(cloud))])
    depth = h[2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = h[0] / depth
        v = h[1] / depth
    inside = (
        (depth > 0.0)
        & (u >= box2d.u_min)
        & (u <= box2d.u_max)
        & (v >= box2d.v_min)
        & (v <= box2d.v_max)
    )
    selected = pts[inside]
    if selected.shape[0] == 0:
        raise EmptyFrustumError(f"no point projects inside {box2d}")
    if trim > 0.0:
        lo = np.quantile(selected, trim, axis=0)
        hi = np.quantile(selected, 1.0 - trim, axis=0)
        keep = ((selected >= lo) & (selected <= hi)).all(axis=1)
        selected = selected[keep]
    if selected.shape[0] < 5:
        raise InsufficientSupportError(
            f"only {selected.shape[0]} points survive trimming (need 5)"
        )
    mins = selected.min(axis=0)
    maxs = selected.max(axis=0)
    center = (mins + maxs) / 2.0
    # half-extents measured from the rounded center keep containment exact
    # in float arithmetic; the 1e-6 floor guards flat clusters (hull only grows)
    half = np.maximum(maxs - center, center - mins)
    sizes = np.maximum(2.0 * half, 1e-6)
    return Box3D(center[0], center[1], center[2], sizes[0], sizes[1], sizes[2], 0.0)
