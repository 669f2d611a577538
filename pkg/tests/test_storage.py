"""Tests for artifact I/O."""

import numpy as np
import pytest

from app.models.marker import Blob
from app.models.patch import ContactPatch, HeightGrid
from app.schemas.pipeline import CalibrationResult
from app.schemas.scene import PatchPose
from app.services import storage
from app.services.storage import ArtifactError


def _make_grid() -> HeightGrid:
    """3x4 raster with one absent cell."""
    heights = np.arange(12, dtype=float).reshape(3, 4) * 0.1 - 0.3
    mask = np.ones((3, 4), dtype=bool)
    mask[1, 2] = False
    return HeightGrid(heights=heights, mask=mask, origin=(-1.0, 2.0), resolution=0.25)


# ---------------------------------------------------------------------------
# Atomic writes
# ---------------------------------------------------------------------------

def test_atomic_write_creates_parent_directories(tmp_path):
    path = storage.write_text(tmp_path / "a" / "b" / "note.txt", "hello")
    assert path.read_text() == "hello"


def test_failed_write_leaves_target_untouched(tmp_path):
    target = tmp_path / "data.txt"
    target.write_text("old")
    with pytest.raises(RuntimeError):
        with storage.atomic_path(target) as tmp:
            tmp.write_text("partial")
            raise RuntimeError("interrupted")
    assert target.read_text() == "old"
    assert sorted(p.name for p in tmp_path.iterdir()) == ["data.txt"]


def test_json_model_round_trip(tmp_path):
    result = CalibrationResult(n_gel=1.49, residual_rms=0.01, n_pairs=40, trials=5)
    path = storage.write_json(tmp_path / "calibration.json", result)
    loaded = storage.read_model(path, CalibrationResult)
    assert loaded.n_gel == pytest.approx(1.49)
    assert loaded.trials == 5


# ---------------------------------------------------------------------------
# Tables and patches
# ---------------------------------------------------------------------------

def test_points_round_trip(tmp_path, rng):
    points = rng.normal(size=(20, 3))
    storage.write_points(tmp_path / "points.csv", points)
    np.testing.assert_allclose(storage.read_points(tmp_path / "points.csv"), points, rtol=1e-12)


def test_missing_columns_are_reported(tmp_path):
    path = tmp_path / "points.csv"
    path.write_text("x,y\n1,2\n")
    with pytest.raises(ArtifactError):
        storage.read_points(path)


def test_non_numeric_pixels_are_an_artifact_error(tmp_path):
    path = tmp_path / "frame.csv"
    path.write_text("u,v\nabc,def\n")
    with pytest.raises(ArtifactError, match="non-numeric"):
        storage.read_pixels(path)


def test_missing_table_is_an_artifact_error(tmp_path):
    with pytest.raises(ArtifactError, match="not found"):
        storage.read_pixels(tmp_path / "absent.csv")


def test_detections_round_trip(tmp_path):
    detections = {"rest_left": [Blob(10.5, 20.25, 2.0, 0.8), Blob(30.0, 40.0, 2.2, 0.5)], "rest_right": [Blob(5.0, 6.0, 1.9, 0.7)]}
    storage.write_detections(tmp_path / "detections.csv", detections)
    loaded = storage.read_detections(tmp_path / "detections.csv")
    assert sorted(loaded) == ["rest_left", "rest_right"]
    assert loaded["rest_left"][0].center == pytest.approx((10.5, 20.25))
    assert len(loaded["rest_left"]) == 2


def test_patch_round_trip(tmp_path):
    patch = ContactPatch(7, np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 1.5], [0.0, 1.0, 2.0]]), PatchPose(translation=(1.0, 2.0, 3.0), yaw_deg=30.0))
    csv_path = storage.write_patch(tmp_path, patch, boundary_count=2, ply=False)
    assert csv_path.name == "patch_0007.csv"
    assert storage.read_json(tmp_path / "patch_0007.json")["boundary_count"] == 2

    loaded = storage.read_patch(csv_path)
    assert loaded.contact_id == 7
    assert loaded.pose.yaw_deg == pytest.approx(30.0)
    np.testing.assert_allclose(loaded.points, patch.points)
    assert storage.list_patches(tmp_path) == [csv_path]


def test_patch_without_sidecar_uses_file_name(tmp_path):
    storage.write_points(tmp_path / "patch_0012.csv", np.zeros((3, 3)))
    assert storage.read_patch(tmp_path / "patch_0012.csv").contact_id == 12


def test_ply_round_trip(tmp_path):
    pytest.importorskip("open3d")
    points = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.5], [0.0, 1.0, 0.25]])
    normals = np.tile([0.0, 0.0, 1.0], (3, 1))
    storage.write_ply(tmp_path / "cloud.ply", points, normals)
    loaded, loaded_normals = storage.read_ply(tmp_path / "cloud.ply")
    np.testing.assert_allclose(loaded, points, atol=1e-6)
    np.testing.assert_allclose(loaded_normals, normals, atol=1e-6)


# ---------------------------------------------------------------------------
# Heightmaps
# ---------------------------------------------------------------------------

def test_heightmap_csv_round_trip(tmp_path):
    grid = _make_grid()
    storage.write_height_grid(grid, tmp_path / "h.csv", tmp_path / "h.png", tmp_path / "h.json")
    loaded, meta = storage.read_heightmap(tmp_path / "h.csv")
    assert meta.shape == (3, 4)
    assert meta.origin == (-1.0, 2.0)
    assert np.isnan(loaded[1, 2])
    np.testing.assert_allclose(loaded[grid.mask], grid.heights[grid.mask], rtol=1e-12)


def test_heightmap_png_round_trip(tmp_path):
    grid = _make_grid()
    meta = storage.write_height_grid(grid, tmp_path / "h.csv", tmp_path / "h.png", tmp_path / "h.json")
    loaded, _ = storage.read_heightmap(tmp_path / "h.png")
    np.testing.assert_allclose(loaded[grid.mask], grid.heights[grid.mask], atol=meta.z_scale)
    assert loaded[1, 2] == pytest.approx(meta.z_offset)


def test_heightmap_shape_must_match_sidecar(tmp_path):
    storage.write_height_grid(_make_grid(), tmp_path / "h.csv", tmp_path / "h.png", tmp_path / "h.json")
    (tmp_path / "h.csv").write_text("0,0\n0,0\n")
    with pytest.raises(ArtifactError):
        storage.read_heightmap(tmp_path / "h.csv")


def test_heightmap_needs_sidecar(tmp_path):
    (tmp_path / "h.csv").write_text("0,0\n0,0\n")
    with pytest.raises(FileNotFoundError):
        storage.read_heightmap(tmp_path / "h.csv")
