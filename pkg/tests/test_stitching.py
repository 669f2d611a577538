"""Tests for overlap classification, merging, rasterization and the mollifier."""

import numpy as np
import pytest

from app.models.objects import GaussianSurface
from app.models.patch import ContactPatch, HeightGrid
from app.schemas.sensor import SkinParams, StitchParams
from app.services import evaluation, simulator
from app.services.stitching import (
    KernelUnresolved,
    classify_overlap,
    extract_contiguous,
    flatness,
    merge_patches,
    mollifier_integral,
    mollifier_kernel,
    mollify_grid,
    naive_union,
    rasterize,
    stitch,
)


def _make_patch(contact_id: int, x0: float, x1: float, z: float = 0.0, spacing: float = 0.5) -> ContactPatch:
    """Flat rectangular patch over x in [x0, x1], y in [0, 5]."""
    gx, gy = np.meshgrid(np.arange(x0, x1 + 1e-9, spacing), np.arange(0.0, 5.0 + 1e-9, spacing))
    points = np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, z)])
    return ContactPatch(contact_id=contact_id, points=points)


def _make_grid(heights: np.ndarray, mask: np.ndarray | None = None, resolution: float = 0.125) -> HeightGrid:
    mask = np.ones(heights.shape, dtype=bool) if mask is None else mask
    return HeightGrid(heights=heights, mask=mask, origin=(0.0, 0.0), resolution=resolution)


# ---------------------------------------------------------------------------
# Overlap and merging
# ---------------------------------------------------------------------------

def test_overlap_split_is_exhaustive():
    a, b = _make_patch(0, 0.0, 10.0), _make_patch(1, 5.0, 15.0)
    split = classify_overlap(a, b, StitchParams(overlap_threshold=0.6))
    assert np.all(split.a_overlap ^ split.a_nonoverlap)
    assert np.all(split.b_overlap ^ split.b_nonoverlap)
    np.testing.assert_array_equal(split.a_overlap, a.points[:, 0] >= 4.5 - 1e-9)
    np.testing.assert_array_equal(split.b_overlap, b.points[:, 0] <= 10.5 + 1e-9)


def test_disjoint_patches_do_not_overlap():
    split = classify_overlap(_make_patch(0, 0.0, 4.0), _make_patch(1, 10.0, 14.0))
    assert split.overlap_count == 0


def test_lower_points_win_the_overlap():
    a, b = _make_patch(0, 0.0, 10.0, z=0.0), _make_patch(1, 5.0, 15.0, z=1.0)
    lower = extract_contiguous(a, b, classify_overlap(a, b))
    assert len(lower) > 0
    assert np.all(lower[:, 2] == 0.0)


def test_ties_go_to_the_earlier_contact():
    a, b = _make_patch(0, 0.0, 10.0), _make_patch(1, 5.0, 15.0)
    merged = merge_patches([a, b])
    overlap = (merged.points[:, 0] >= 5.0) & (merged.points[:, 0] <= 10.0)
    assert np.all(merged.contact_ids[overlap] == 0)


def test_merge_drops_raised_overlap_points():
    a, b = _make_patch(0, 0.0, 10.0, z=0.0), _make_patch(1, 5.0, 15.0, z=1.0)
    merged = merge_patches([a, b])
    inner = (merged.points[:, 0] > 5.5) & (merged.points[:, 0] < 9.5)
    assert np.all(merged.points[inner, 2] == 0.0)
    assert merged.points[:, 0].max() == pytest.approx(15.0)
    assert len(merged) < len(naive_union([a, b]))


def test_single_patch_merge_is_identity():
    a = _make_patch(3, 0.0, 4.0)
    merged = merge_patches([a])
    np.testing.assert_array_equal(merged.points, a.points)
    assert set(merged.contact_ids.tolist()) == {3}


def test_merge_needs_patches():
    with pytest.raises(ValueError):
        merge_patches([])


def test_zigzag_merge_beats_naive_union():
    obj = GaussianSurface(5.0, 50.0)
    skin = SkinParams()
    plan = simulator.plan_zigzag((-15.0, 15.0, -15.0, 15.0), 15.0)
    patches = [
        simulator.simulate_patch(obj, press, skin, spacing=0.5, periphery_bias=0.3, contact_id=k)
        for k, press in enumerate(plan.presses)
    ]
    merged = merge_patches(patches)
    naive = naive_union(patches)
    assert evaluation.surface_rms(merged.points, obj) < evaluation.surface_rms(naive.points, obj)


# ---------------------------------------------------------------------------
# Rasterization
# ---------------------------------------------------------------------------

def test_rasterize_reproduces_grid_points():
    patch = _make_patch(0, 0.0, 2.0, z=1.5, spacing=0.25)
    grid = rasterize(patch.points, 0.25)
    assert grid.shape == (21, 9)
    assert grid.mask.all()
    np.testing.assert_allclose(grid.heights, 1.5)


def test_rasterize_leaves_gaps_absent():
    points = np.array([[0.0, 0.0, 1.0], [0.4, 0.0, 1.0], [5.3, 0.0, 2.0]])
    grid = rasterize(points, 1.0)
    assert grid.shape == (1, 6)
    assert grid.mask.tolist() == [[True, True, False, False, False, True]]


def test_rasterize_support_fills_fine_grid():
    patch = _make_patch(0, 0.0, 2.0, spacing=0.25)
    sparse = rasterize(patch.points, 0.125)
    filled = rasterize(patch.points, 0.125, support=0.25)
    assert not sparse.mask.all()
    assert filled.mask.all()


def test_rasterize_rejects_bad_resolution():
    with pytest.raises(ValueError):
        rasterize(np.zeros((3, 3)), 0.0)


# ---------------------------------------------------------------------------
# Mollifier
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("epsilon", [0.25, 1.0, 3.0])
def test_mollifier_has_unit_integral(epsilon):
    assert mollifier_integral(epsilon) == pytest.approx(1.0, abs=1e-6)


def test_discrete_kernel_sums_to_one():
    kernel = mollifier_kernel(0.25, 0.0625)
    assert kernel.sum() == pytest.approx(1.0, abs=1e-12)
    assert kernel.shape == (9, 9)


def test_coarse_grid_cannot_resolve_kernel():
    with pytest.raises(KernelUnresolved):
        mollifier_kernel(0.25, 0.2)


def test_mollifier_preserves_constants():
    smoothed = mollify_grid(_make_grid(np.full((20, 24), 3.0)), 0.25)
    np.testing.assert_allclose(smoothed.heights, 3.0, atol=1e-9)


def test_mollifier_preserves_constants_around_holes():
    mask = np.ones((20, 20), dtype=bool)
    mask[8:12, 8:12] = False
    smoothed = mollify_grid(_make_grid(np.where(mask, -2.0, 0.0), mask), 0.25)
    np.testing.assert_allclose(smoothed.heights[mask], -2.0, atol=1e-9)
    assert np.all(smoothed.heights[~mask] == 0.0)


def test_mollifier_preserves_occupied_mean(rng):
    heights = rng.normal(0.0, 1.0, (16, 16))
    smoothed = mollify_grid(_make_grid(heights), 0.25)
    assert smoothed.occupied_mean() == pytest.approx(heights.mean(), abs=1e-8)
    assert smoothed.heights.std() < heights.std()


def test_capped_boundary_scaling_warns(caplog):
    mask = np.ones((20, 20), dtype=bool)
    mask[8:12, 8:12] = False
    grid = _make_grid(np.where(mask, 1.0, 0.0), mask)
    with caplog.at_level("WARNING", logger="app.services.stitching"):
        smoothed = mollify_grid(grid, 0.25, max_iter=1)
    assert "Boundary scaling stopped" in caplog.text
    assert smoothed.heights.shape == (20, 20)
    np.testing.assert_array_equal(smoothed.mask, mask)
    assert np.all(np.isfinite(smoothed.heights))


def test_stitch_params_carry_the_scaling_cap(caplog):
    params = StitchParams(sinkhorn_max_iter=1)
    with caplog.at_level("WARNING", logger="app.services.stitching"):
        surface = stitch([_make_patch(0, 0.0, 6.0, z=0.5), _make_patch(1, 4.0, 10.0, z=0.5)], params)
    assert "after 1 iterations" in caplog.text
    assert surface.grid is not None
    with pytest.raises(ValueError):
        StitchParams(sinkhorn_max_iter=0)


def test_stitch_flat_patches_stays_flat():
    surface = stitch([_make_patch(0, 0.0, 6.0, z=0.5), _make_patch(1, 4.0, 10.0, z=0.5)])
    assert surface.grid is not None
    assert flatness(surface.grid.to_points()) == pytest.approx(0.0, abs=1e-9)


def test_flatness_inside_region():
    points = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 0.2], [9.0, 9.0, 5.0]])
    assert flatness(points) == pytest.approx(5.0)
    assert flatness(points, (-1.0, 2.0, -1.0, 2.0)) == pytest.approx(0.2)
    assert np.isnan(flatness(points, (20.0, 30.0, 20.0, 30.0)))
