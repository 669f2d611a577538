"""Tests for distortion, rectification, projection and triangulation."""

import json

import numpy as np
import pytest

from app.exceptions import ConfigError
from app.schemas.camera import CameraIntrinsics, CameraRig
from app.services.stereo_geometry import (
    BehindCamera,
    DegenerateDisparity,
    DegenerateDistortion,
    apply_distortion,
    disparity_for_depth,
    from_sensor_frame,
    load_rig,
    project,
    project_many,
    rectify_points,
    to_sensor_frame,
    triangulate,
    triangulate_many,
    undistort,
)


def _make_points(rng, n: int = 1000) -> np.ndarray:
    """Random points in front of the rig, 30-60 mm deep."""
    return np.column_stack([rng.uniform(-10, 20, n), rng.uniform(-10, 10, n), rng.uniform(30, 60, n)])


# ---------------------------------------------------------------------------
# Triangulation
# ---------------------------------------------------------------------------

def test_triangulation_round_trip_1000_points(ideal_rig, rng):
    points = _make_points(rng)
    left, right = project_many(points, ideal_rig)
    np.testing.assert_allclose(triangulate_many(left, right, ideal_rig), points, atol=1e-6)


def test_triangulation_round_trip_on_table_rig(table_rig, rng):
    points = _make_points(rng, 200)
    left, right = project_many(points, table_rig)
    np.testing.assert_allclose(triangulate_many(left, right, table_rig), points, atol=1e-6)


def test_disparity_matches_depth_law(ideal_rig):
    left, right = project(np.array([3.0, -2.0, 50.0]), ideal_rig)
    d = right[0] - left[0]
    assert d == pytest.approx(-ideal_rig.baseline * ideal_rig.focal / 50.0)
    assert d == pytest.approx(disparity_for_depth(50.0, ideal_rig))


def test_triangulate_single_pair(ideal_rig):
    point = np.array([1.0, 2.0, 40.0])
    left, right = project(point, ideal_rig)
    np.testing.assert_allclose(triangulate(left, right, ideal_rig), point, atol=1e-9)


def test_zero_disparity_is_degenerate(ideal_rig):
    with pytest.raises(DegenerateDisparity):
        triangulate([300.0, 200.0], [300.0, 200.0], ideal_rig)


def test_positive_disparity_is_degenerate(ideal_rig):
    with pytest.raises(DegenerateDisparity):
        triangulate([300.0, 200.0], [310.0, 200.0], ideal_rig)


def test_point_behind_camera_is_rejected(ideal_rig):
    with pytest.raises(BehindCamera):
        project(np.array([0.0, 0.0, -5.0]), ideal_rig)


# ---------------------------------------------------------------------------
# Distortion and rectification
# ---------------------------------------------------------------------------

def test_undistort_inverts_distortion(table_rig):
    cam = table_rig.left
    pixels = np.array([[250.0, 200.0], [315.0, 240.0], [400.0, 300.0]])
    np.testing.assert_allclose(undistort(apply_distortion(pixels, cam), cam), pixels, atol=1e-6)


def test_undistort_is_identity_without_coefficients(ideal_rig):
    pixels = np.array([[12.5, 30.0], [600.0, 470.0]])
    np.testing.assert_array_equal(undistort(pixels, ideal_rig.left), pixels)


def test_undistort_reports_divergence():
    cam = CameraIntrinsics(fx=100.0, fy=100.0, cx=0.0, cy=0.0, k1=-50.0, k2=40.0)
    with pytest.raises(DegenerateDistortion):
        undistort(np.array([[400.0, 400.0]]), cam)


def test_raw_projection_rectifies_back(table_rig, rng):
    points = np.column_stack([rng.uniform(0, 12, 50), rng.uniform(-6, 6, 50), rng.uniform(45, 55, 50)])
    raw_left, raw_right = project_many(points, table_rig, distort=True)
    left = rectify_points(raw_left, "left", table_rig)
    right = rectify_points(raw_right, "right", table_rig)
    np.testing.assert_allclose(triangulate_many(left, right, table_rig), points, atol=1e-3)


def test_rectify_rejects_unknown_side(ideal_rig):
    with pytest.raises(ValueError):
        rectify_points([[1.0, 2.0]], "middle", ideal_rig)


# ---------------------------------------------------------------------------
# Sensor frame
# ---------------------------------------------------------------------------

def test_sensor_frame_round_trip(rng):
    points = _make_points(rng, 20)
    sensor = to_sensor_frame(points, 6.25, 50.0)
    np.testing.assert_allclose(from_sensor_frame(sensor, 6.25, 50.0), points)


def test_sensor_frame_points_towards_cameras():
    sensor = to_sensor_frame(np.array([[6.25, 0.0, 45.0]]), 6.25, 50.0)
    np.testing.assert_allclose(sensor, [[0.0, 0.0, 5.0]])


def test_sensor_origin_sits_midway_between_the_cameras(ideal_rig):
    half = 0.5 * ideal_rig.baseline
    left, right = project_many(np.array([[half, 0.0, 50.0]]), ideal_rig)
    # world origin is the left camera, so the midpoint projects symmetrically
    assert left[0, 0] - ideal_rig.left.cx == pytest.approx(ideal_rig.left.cx - right[0, 0])
    sensor = to_sensor_frame(triangulate_many(left, right, ideal_rig), half, 50.0)
    np.testing.assert_allclose(sensor, [[0.0, 0.0, 0.0]], atol=1e-9)


# ---------------------------------------------------------------------------
# Rig loading
# ---------------------------------------------------------------------------

def test_shipped_rig_rotation_is_orthonormal(table_rig):
    r = table_rig.rotation
    np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-9)
    assert table_rig.baseline == pytest.approx(np.linalg.norm([12.49, -0.08, 0.59]))


def test_load_rig_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_rig(tmp_path / "missing.json")


def test_load_rig_rejects_non_rotation(tmp_path):
    data = {
        "left": {"fx": 400.0, "fy": 400.0, "cx": 320.0, "cy": 240.0},
        "right": {"fx": 400.0, "fy": 400.0, "cx": 320.0, "cy": 240.0},
        "R": [[1.0, 0.2, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        "t": [12.5, 0.0, 0.0],
    }
    path = tmp_path / "rig.json"
    path.write_text(json.dumps(data))
    with pytest.raises(ConfigError):
        load_rig(path)


def test_ideal_rig_is_rectified(ideal_rig):
    assert ideal_rig.is_rectified
    assert isinstance(ideal_rig, CameraRig)
