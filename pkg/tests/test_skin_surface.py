"""Tests for the thin-plate surface fits and the marker-to-skin offset."""

import numpy as np
import pytest

from app.models.objects import GaussianSurface
from app.models.patch import pose_invert
from app.schemas.scene import PatchPose, PressSpec
from app.services.simulator import deform_skin, place_markers
from app.services.skin_surface import (
    FitDegenerate,
    fit_surface,
    offset_to_skin,
    reconstruct_skin,
    reconstruct_skin_detailed,
    sensor_to_global,
    surface_normals,
)


def _make_grid(n: int = 7, pitch: float = 2.0) -> np.ndarray:
    """(n*n, 2) square grid centred on the origin."""
    axis = (np.arange(n) - (n - 1) / 2.0) * pitch
    gx, gy = np.meshgrid(axis, axis)
    return np.column_stack([gx.ravel(), gy.ravel()])


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

def test_fit_interpolates_points(rng):
    xy = _make_grid()
    z = np.sin(xy[:, 0] / 3.0) + 0.1 * xy[:, 1]
    s = fit_surface(np.column_stack([xy, z]))
    np.testing.assert_allclose(s.evaluate(xy), z, atol=1e-6)


def test_fit_reproduces_planes_exactly(rng):
    xy = rng.uniform(-5, 5, (30, 2))
    points = np.column_stack([xy, 0.1 * xy[:, 0] - 0.2 * xy[:, 1] + 3.0])
    s = fit_surface(points)
    query = rng.uniform(-3, 3, (20, 2))
    np.testing.assert_allclose(s.evaluate(query), 0.1 * query[:, 0] - 0.2 * query[:, 1] + 3.0, atol=1e-8)


def test_smoothing_does_not_interpolate():
    xy = _make_grid()
    z = np.where((xy[:, 0] == 0) & (xy[:, 1] == 0), 1.0, 0.0)
    s = fit_surface(np.column_stack([xy, z]), smoothing=10.0)
    assert s.evaluate([[0.0, 0.0]])[0] < 1.0


def test_too_few_points():
    with pytest.raises(FitDegenerate):
        fit_surface(np.zeros((5, 3)))


def test_collinear_sites():
    t = np.arange(8.0)
    with pytest.raises(FitDegenerate):
        fit_surface(np.column_stack([t, 2.0 * t, np.zeros(8)]))


def test_duplicate_sites():
    points = np.column_stack([_make_grid(3), np.zeros(9)])
    points = np.vstack([points, [points[4, 0], points[4, 1], 1.0]])
    with pytest.raises(FitDegenerate):
        fit_surface(points)


def test_non_finite_points():
    points = np.column_stack([_make_grid(3), np.zeros(9)])
    points[2, 2] = np.nan
    with pytest.raises(FitDegenerate):
        fit_surface(points)


# ---------------------------------------------------------------------------
# Normals
# ---------------------------------------------------------------------------

def test_normals_match_finite_differences():
    xy = _make_grid(9, 1.5)
    s = fit_surface(np.column_stack([xy, 0.05 * xy[:, 0] ** 2 - 0.03 * xy[:, 0] * xy[:, 1]]))
    query = np.array([[0.3, -0.7], [1.1, 1.4], [-2.0, 0.5]])
    h = 1e-5
    dx = (s.evaluate(query + [h, 0.0]) - s.evaluate(query - [h, 0.0])) / (2 * h)
    dy = (s.evaluate(query + [0.0, h]) - s.evaluate(query - [0.0, h])) / (2 * h)
    expected = np.column_stack([-dx, -dy, np.ones(len(query))])
    expected /= np.linalg.norm(expected, axis=1, keepdims=True)

    oriented = surface_normals(s, query)
    np.testing.assert_allclose(oriented.normals, expected, atol=1e-6)
    assert np.all(oriented.normals[:, 2] > 0)
    assert not oriented.boundary.any()


def test_hull_and_outside_points_are_boundary():
    xy = _make_grid(5)
    s = fit_surface(np.column_stack([xy, np.zeros(len(xy))]))
    oriented = surface_normals(s, np.array([[-4.0, -4.0], [0.0, 0.0], [20.0, 0.0]]))
    assert oriented.boundary.tolist() == [True, False, True]


# ---------------------------------------------------------------------------
# Skin offset
# ---------------------------------------------------------------------------

def test_flat_markers_give_skin_plane_below(skin):
    markers = np.column_stack([_make_grid(), np.zeros(49)])
    surface = reconstruct_skin(markers, skin)
    query = _make_grid(5, 2.5)
    np.testing.assert_allclose(surface.evaluate(query), -2.0, atol=1e-6)


def test_offset_moves_against_normals(skin):
    markers = np.column_stack([_make_grid(), 0.2 * _make_grid()[:, 0]])
    result = reconstruct_skin_detailed(markers, skin)
    shift = result.skin_points - markers
    np.testing.assert_allclose(np.linalg.norm(shift, axis=1), skin.offset, atol=1e-9)
    np.testing.assert_allclose(offset_to_skin(result.oriented_markers, 2.0), result.skin_points)


def test_gaussian_skin_is_recovered(skin):
    obj = GaussianSurface(5.0, 50.0)
    press = PressSpec()
    field = deform_skin(obj, press, skin)
    markers = pose_invert(place_markers(field, skin), field.pose)

    surface = reconstruct_skin(markers, skin)
    query = _make_grid(9, 2.0)
    truth = obj.height(query[:, 0], query[:, 1]) - field.pose.translation[2]
    assert np.abs(surface.evaluate(query) - truth).max() < 0.1


def test_sensor_to_global_applies_pose():
    pose = PatchPose(translation=(10.0, -5.0, 2.0), yaw_deg=90.0)
    out = sensor_to_global(np.array([[1.0, 0.0, 0.0]]), pose)
    np.testing.assert_allclose(out, [[10.0, -4.0, 2.0]], atol=1e-12)
