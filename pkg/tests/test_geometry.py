import math

import numpy as np
import pytest

from glis.geometry import (
    BehindCameraError,
    Box2D,
    Box3D,
    EmptyFrustumError,
    GeometryError,
    InsufficientSupportError,
    Point3,
    PointCloud,
    ProjectionMatrix,
    corners,
    iou_2d,
    iou_3d,
    lift_box_2d_to_3d,
    normalize_heading,
    project_point,
)

from conftest import make_grid_cube
from oracles import monte_carlo_iou, points_in_box, random_box


class TestTypes:
    def test_box3d_rejects_nonpositive_sizes(self):
        with pytest.raises(GeometryError):
            Box3D(0, 0, 0, 0.0, 1, 1)
        with pytest.raises(GeometryError):
            Box3D(0, 0, 0, 1, -2, 1)

    def test_box3d_normalizes_heading(self):
        assert Box3D(0, 0, 0, 1, 1, 1, math.pi).theta == pytest.approx(-math.pi)
        assert Box3D(0, 0, 0, 1, 1, 1, 3 * math.pi).theta == pytest.approx(-math.pi)
        assert Box3D(0, 0, 0, 1, 1, 1, -0.5).theta == pytest.approx(-0.5)

    def test_heading_interval_is_half_open(self):
        assert normalize_heading(math.pi) == pytest.approx(-math.pi)
        assert -math.pi <= normalize_heading(7.0) < math.pi

    def test_box2d_rejects_inverted(self):
        with pytest.raises(GeometryError):
            Box2D(2, 0, 1, 1)

    def test_point_cloud_requires_points(self):
        with pytest.raises(GeometryError):
            PointCloud(np.zeros((0, 3)))
        with pytest.raises(GeometryError):
            PointCloud(np.array([[0.0, np.nan, 0.0]]))

    def test_box_list_round_trip(self):
        b = Box3D(1, 2, 3, 4, 5, 6, 0.25)
        assert Box3D.from_list(b.as_list()) == b


class TestProjectPoint:
    def test_identity_projection(self):
        m = ProjectionMatrix.identity()
        assert project_point(m, Point3(0, 0, 1)) == (0.0, 0.0, 1.0)

    def test_dehomogenization(self):
        m = ProjectionMatrix.identity()
        assert project_point(m, Point3(2, 4, 2)) == (1.0, 2.0, 2.0)

    def test_behind_camera(self):
        m = ProjectionMatrix.identity()
        with pytest.raises(BehindCameraError):
            project_point(m, Point3(0, 0, -1))

    def test_matches_matrix_multiply_oracle(self, rng):
        for _ in range(50):
            m = ProjectionMatrix(rng.normal(size=(3, 4)))
            p = Point3(*rng.normal(size=3))
            h = m.m @ np.array([p.x, p.y, p.z, 1.0])
            if h[2] <= 0:
                with pytest.raises(BehindCameraError):
                    project_point(m, p)
                continue
            u, v, d = project_point(m, p)
            assert abs(u - h[0] / h[2]) <= 1e-12
            assert abs(v - h[1] / h[2]) <= 1e-12
            assert abs(d - h[2]) <= 1e-12


class TestIou2d:
    def test_identical(self):
        a = Box2D(0, 0, 2, 2)
        assert iou_2d(a, a) == 1.0

    def test_disjoint(self):
        assert iou_2d(Box2D(0, 0, 1, 1), Box2D(5, 5, 6, 6)) == 0.0

    def test_closed_form_overlap(self):
        # overlap 1x2 = 2, union 4 + 4 - 2 = 6
        assert iou_2d(Box2D(0, 0, 2, 2), Box2D(1, 0, 3, 2)) == pytest.approx(1 / 3)


class TestCorners:
    def test_unit_cube(self):
        pts = corners(Box3D(0, 0, 0, 1, 1, 1))
        assert sorted(map(tuple, np.abs(pts))) == [(0.5, 0.5, 0.5)] * 8

    def test_quarter_turn_swaps_extents(self):
        b = Box3D(0, 0, 0, 2, 1, 1, 0)
        r = Box3D(0, 0, 0, 2, 1, 1, math.pi / 2)
        ext = lambda box: corners(box).max(axis=0) - corners(box).min(axis=0)
        assert np.allclose(ext(b), [2, 1, 1])
        assert np.allclose(ext(r), [1, 2, 1])

    def test_distances_match_sizes(self, rng):
        for _ in range(20):
            b = random_box(rng)
            pts = corners(b)
            hull_lo, hull_hi = pts.min(axis=0), pts.max(axis=0)
            assert (hull_lo <= b.center).all() and (b.center <= hull_hi).all()
            # edges of the bottom face and a vertical edge
            assert np.linalg.norm(pts[0] - pts[1]) == pytest.approx(b.l)
            assert np.linalg.norm(pts[1] - pts[2]) == pytest.approx(b.w)
            assert np.linalg.norm(pts[0] - pts[4]) == pytest.approx(b.h)
            # face and space diagonals
            assert np.linalg.norm(pts[0] - pts[2]) == pytest.approx(math.hypot(b.l, b.w))
            assert np.linalg.norm(pts[0] - pts[6]) == pytest.approx(
                math.sqrt(b.l**2 + b.w**2 + b.h**2)
            )


class TestIou3d:
    def test_identical_box(self):
        b = Box3D(0.3, -1.2, 0.5, 1.5, 0.8, 2.0, 0.7)
        assert abs(iou_3d(b, b) - 1.0) <= 1e-9

    def test_axis_aligned_half_offset(self):
        a = Box3D(0, 0, 0, 1, 1, 1)
        b = Box3D(0.5, 0, 0, 1, 1, 1)
        assert iou_3d(a, b) == pytest.approx(1 / 3, abs=1e-12)

    def test_rotated_45_degrees(self, rng):
        a = Box3D(0, 0, 0, 1, 1, 1)
        r = Box3D(0, 0, 0, 1, 1, 1, math.pi / 4)
        value = iou_3d(a, r)
        assert value == pytest.approx(0.7071, abs=5e-4)
        mc = monte_carlo_iou(a, r, 1_000_000)
        assert abs(value - mc) <= 0.005

    def test_disjoint(self):
        assert iou_3d(Box3D(0, 0, 0, 1, 1, 1), Box3D(5, 5, 5, 1, 1, 1)) == 0.0

    def test_shared_edge_is_zero_not_error(self):
        a = Box3D(0, 0, 0, 1, 1, 1)
        b = Box3D(1.0, 0, 0, 1, 1, 1)  # faces touch exactly
        assert iou_3d(a, b) == 0.0

    def test_symmetry(self, rng):
        for _ in range(50):
            a, b = random_box(rng), random_box(rng)
            assert iou_3d(a, b) == iou_3d(b, a)

    def test_rigid_transform_invariance(self, rng):
        for _ in range(30):
            a, b = random_box(rng), random_box(rng)
            base = iou_3d(a, b)
            dtheta = rng.uniform(-math.pi, math.pi)
            tx, ty, tz = rng.uniform(-5, 5, size=3)
            c, s = math.cos(dtheta), math.sin(dtheta)

            def moved(box):
                nx = c * box.x - s * box.y + tx
                ny = s * box.x + c * box.y + ty
                return Box3D(nx, ny, box.z + tz, box.l, box.w, box.h, box.theta + dtheta)

            assert abs(iou_3d(moved(a), moved(b)) - base) <= 1e-6

    def test_monte_carlo_agreement(self, rng):
        for _ in range(40):
            a, b = random_box(rng), random_box(rng)
            mc = monte_carlo_iou(a, b, 200_000)
            assert abs(iou_3d(a, b) - mc) <= 0.02


class TestLift:
    def test_tight_fit_no_trim(self):
        pts = make_grid_cube((0.0, 0.0, 5.0), 1.0)
        cloud = PointCloud(pts)
        m = ProjectionMatrix.identity()
        box = lift_box_2d_to_3d(cloud, m, Box2D(-1, -1, 1, 1), trim=0.0)
        assert np.allclose([box.x, box.y, box.z], [0, 0, 5])
        assert np.allclose([box.l, box.w, box.h], [1, 1, 1])
        assert box.theta == 0.0

    def test_outlier_rejected_with_trim(self):
        cube = make_grid_cube((0.0, 0.0, 5.0), 1.0)
        outlier = np.array([[0.1 * 40.0, 0.0, 40.0]])  # projects to (0.1, 0) inside the box
        cloud = PointCloud(np.vstack([cube, outlier]))
        m = ProjectionMatrix.identity()
        box = lift_box_2d_to_3d(cloud, m, Box2D(-1, -1, 1, 1), trim=0.05)
        assert np.allclose([box.x, box.y, box.z], [0, 0, 5])
        assert np.allclose([box.l, box.w, box.h], [1, 1, 1])

    def test_empty_frustum(self):
        cloud = PointCloud(make_grid_cube((0.0, 0.0, 5.0), 1.0))
        m = ProjectionMatrix.identity()
        with pytest.raises(EmptyFrustumError):
            lift_box_2d_to_3d(cloud, m, Box2D(10, 10, 11, 11), trim=0.0)

    def test_insufficient_support(self):
        cloud = PointCloud(np.array([[0.0, 0.0, 5.0]] * 3))
        m = ProjectionMatrix.identity()
        with pytest.raises(InsufficientSupportError):
            lift_box_2d_to_3d(cloud, m, Box2D(-1, -1, 1, 1), trim=0.0)

    def test_output_contains_all_survivors(self, rng):
        for _ in range(10):
            pts = rng.uniform([-1, -1, 3], [1, 1, 6], size=(200, 3))
            cloud = PointCloud(pts)
            m = ProjectionMatrix.identity()
            box2d = Box2D(-0.4, -0.4, 0.4, 0.4)
            try:
                box = lift_box_2d_to_3d(cloud, m, box2d, trim=0.1)
            except (EmptyFrustumError, InsufficientSupportError):
                continue
            h = m.m @ np.vstack([pts.T, np.ones(len(pts))])
            u, v, d = h[0] / h[2], h[1] / h[2], h[2]
            inside = (d > 0) & (u >= -0.4) & (u <= 0.4) & (v >= -0.4) & (v <= 0.4)
            sel = pts[inside]
            lo = np.quantile(sel, 0.1, axis=0)
            hi = np.quantile(sel, 0.9, axis=0)
            survivors = sel[((sel >= lo) & (sel <= hi)).all(axis=1)]
            assert points_in_box(box, survivors).all()

    def test_trim_bounds_checked(self):
        cloud = PointCloud(make_grid_cube((0, 0, 5), 1.0))
        with pytest.raises(GeometryError):
            lift_box_2d_to_3d(cloud, ProjectionMatrix.identity(), Box2D(-1, -1, 1, 1), trim=0.5)
