"""Tests for the forward model: lattices, contact, optics, scans and presets."""

import numpy as np
import pytest

from app.models.objects import GaussianSurface
from app.models.patch import HeightGrid, pose_invert
from app.schemas.scene import HeightmapObject, PressSpec, SceneConfig
from app.schemas.sensor import PATTERN_TABLE, PatternKind, RefractionParams
from app.services import simulator, storage
from app.services.stereo_geometry import from_sensor_frame, project_many


def _rest_markers(skin) -> np.ndarray:
    field = simulator.deform_skin(None, PressSpec(), skin)
    return pose_invert(simulator.place_markers(field, skin), field.pose)


# ---------------------------------------------------------------------------
# Lattices
# ---------------------------------------------------------------------------

def test_hex_lattice_counts_and_centre():
    sites = simulator.hex_lattice(7, 2.54)
    assert sites.shape == (127, 2)
    np.testing.assert_allclose(sites[0], [0.0, 0.0], atol=1e-12)
    r = np.hypot(sites[:, 0], sites[:, 1])
    assert np.all(np.diff(np.round(r, 9)) >= 0)


@pytest.mark.parametrize("kind", list(PatternKind))
def test_pattern_lattice_matches_expected_count(kind):
    spec = PATTERN_TABLE[kind]
    assert len(simulator.pattern_lattice(spec, 2.54)) == spec.expected_count


def test_footprint_radius_of_default_pattern():
    assert simulator.footprint_radius(PATTERN_TABLE[PatternKind.HEXAGON], 1.0) == pytest.approx(6.0)


# ---------------------------------------------------------------------------
# Contact model
# ---------------------------------------------------------------------------

def test_rest_markers_lie_on_the_marker_plane(skin):
    markers = _rest_markers(skin)
    assert markers.shape == (127, 3)
    np.testing.assert_allclose(markers[:, 2], 0.0, atol=1e-12)


def test_skin_conforms_to_the_object(skin):
    obj = GaussianSurface(5.0, 50.0)
    field = simulator.deform_skin(obj, PressSpec(press_depth=3.0), skin)
    x = np.array([0.0, 4.0, 12.0])
    y = np.zeros(3)
    np.testing.assert_allclose(field.height(x, y), np.maximum(obj.height(x, y), 2.0))
    assert field.in_contact(x, y).tolist() == [True, True, False]


def test_markers_sit_offset_along_the_normal(skin):
    obj = GaussianSurface(5.0, 50.0)
    field = simulator.deform_skin(obj, PressSpec(), skin)
    markers = simulator.place_markers(field, skin)
    # apex normal is vertical
    np.testing.assert_allclose(markers[0], [0.0, 0.0, 5.0 + skin.offset], atol=1e-9)
    assert np.all(markers[1:, 2] < 5.0 + skin.offset)


def test_press_pose_places_sensor_above_the_plane(skin):
    pose = simulator.press_pose(PressSpec(center=(1.0, 2.0), press_depth=4.0, approach=5.0, rotation_deg=30.0), skin)
    assert pose.translation == pytest.approx((1.0, 2.0, 1.0 + skin.offset))
    assert pose.yaw_deg == 30.0


# ---------------------------------------------------------------------------
# Optics
# ---------------------------------------------------------------------------

def test_unit_index_observation_is_plain_projection(ideal_rig, skin):
    markers = _rest_markers(skin) + np.array([0.0, 0.0, 1.0])
    obs = simulator.observe(markers, ideal_rig, RefractionParams(n_gel=1.0), shuffle=False)
    left, right = project_many(from_sensor_frame(markers, 0.5 * ideal_rig.baseline, 50.0), ideal_rig)
    np.testing.assert_allclose(obs.left, left, atol=1e-9)
    np.testing.assert_allclose(obs.right, right, atol=1e-9)


def test_scalar_mode_scales_depth_change(ideal_rig, refr):
    rest = np.array([[0.0, 0.0, 0.0]])
    obs = simulator.observe(rest + [0.0, 0.0, 5.0], ideal_rig, refr, rest=rest, shuffle=False)
    assert obs.apparent_points[0, 2] == pytest.approx(50.0 - 5.0 / 1.51)


def test_shuffled_rows_follow_marker_ids(ideal_rig, refr, skin, rng):
    markers = _rest_markers(skin)
    plain = simulator.observe(markers, ideal_rig, refr, shuffle=False)
    shuffled = simulator.observe(markers, ideal_rig, refr, rng=rng)
    assert sorted(shuffled.marker_ids.tolist()) == list(range(127))
    assert not np.array_equal(shuffled.marker_ids, np.arange(127))
    np.testing.assert_allclose(shuffled.left, plain.left[shuffled.marker_ids])


def test_unknown_refraction_mode(ideal_rig, refr):
    with pytest.raises(ValueError):
        simulator.observe(np.zeros((1, 3)), ideal_rig, refr, mode="prism")


def test_render_peaks_at_marker():
    img = simulator.render(np.array([[20.0, 30.0]]), image_size=(64, 48), sigma=2.0)
    assert img.shape == (48, 64)
    assert img[30, 20] == pytest.approx(1.0)
    assert img.min() >= 0.0 and img.max() <= 1.0
    assert img[0, 63] == 0.0


def test_render_stereo_is_side_by_side(ideal_rig, refr, skin):
    obs = simulator.observe(_rest_markers(skin), ideal_rig, refr, shuffle=False)
    img = simulator.render_stereo(obs, ideal_rig, 50.0)
    assert img.shape == (ideal_rig.image_height, 2 * ideal_rig.image_width)


# ---------------------------------------------------------------------------
# Scans and scenes
# ---------------------------------------------------------------------------

def test_zigzag_covers_corners_in_boustrophedon_order():
    plan = simulator.plan_zigzag((0.0, 30.0, 0.0, 15.0), 15.0)
    centres = [p.center for p in plan.presses]
    assert centres == [(0.0, 0.0), (15.0, 0.0), (30.0, 0.0), (30.0, 15.0), (15.0, 15.0), (0.0, 15.0)]


def test_zigzag_of_a_point_is_one_press():
    plan = simulator.plan_zigzag((5.0, 5.0, 2.0, 2.0), 15.0)
    assert [p.center for p in plan.presses] == [(5.0, 2.0)]


def test_zigzag_rejects_bad_step():
    with pytest.raises(ValueError):
        simulator.plan_zigzag((0.0, 10.0, 0.0, 10.0), 0.0)


def test_rotated_repeats():
    presses = simulator.rotated_repeats(PressSpec(rotation_deg=10.0))
    assert [p.rotation_deg for p in presses] == pytest.approx([10.0, 130.0, 250.0])


def test_simulated_press_truth(ideal_rig):
    sim = simulator.simulate_press(SceneConfig(), PressSpec(), ideal_rig)
    assert len(sim.rest.left) == len(sim.pressed.left) == 127
    assert sim.pressed_markers[:, 2].max() > 4.0
    assert sim.images == {}


def test_scene_does_not_depend_on_jobs(ideal_rig):
    config = simulator.build_preset("zigzag-gaussian").model_copy(update={"pixel_jitter": 0.1})
    serial = simulator.simulate_scene(config, ideal_rig, seed=7, jobs=1)
    parallel = simulator.simulate_scene(config, ideal_rig, seed=7, jobs=4)
    assert len(serial) == 9
    for a, b in zip(serial, parallel):
        np.testing.assert_array_equal(a.pressed.left, b.pressed.left)
        np.testing.assert_array_equal(a.pressed.marker_ids, b.pressed.marker_ids)


def test_simulated_patch_follows_the_skin(skin):
    obj = GaussianSurface(5.0, 50.0)
    patch = simulator.simulate_patch(obj, PressSpec(center=(2.0, 1.0)), skin, spacing=0.5)
    radius = simulator.footprint_radius(skin.pattern, skin.marker_pitch)
    r = np.hypot(patch.points[:, 0] - 2.0, patch.points[:, 1] - 1.0)
    assert r.max() <= radius + 1e-9
    np.testing.assert_allclose(patch.points[:, 2], obj.height(patch.points[:, 0], patch.points[:, 1]))


def test_periphery_bias_raises_the_rim(skin):
    obj = GaussianSurface(5.0, 50.0)
    plain = simulator.simulate_patch(obj, PressSpec(), skin, spacing=0.5)
    biased = simulator.simulate_patch(obj, PressSpec(), skin, spacing=0.5, periphery_bias=0.3)
    lift = biased.points[:, 2] - plain.points[:, 2]
    assert 0.25 < lift.max() <= 0.3
    assert lift[np.argmin(np.hypot(plain.points[:, 0], plain.points[:, 1]))] == pytest.approx(0.0)


def test_calibration_sweep_in_scalar_mode(ideal_rig, refr):
    pairs = simulator.calibration_sweep(ideal_rig, refr, trials=2)
    assert len(pairs) == 16
    assert {p.trial for p in pairs} == {0, 1}
    for p in pairs:
        assert p.observed_disp == pytest.approx(p.true_disp / 1.51, abs=1e-6)


@pytest.mark.parametrize("scenario, frames", [("slow_vertical", 3), ("horizontal", 3), ("rapid_diagonal", 2)])
def test_tracking_sequences(scenario, frames):
    assert len(simulator.tracking_sequence(scenario)) == frames


def test_unknown_tracking_scenario():
    with pytest.raises(ValueError):
        simulator.tracking_sequence("spiral")


# ---------------------------------------------------------------------------
# Objects and presets
# ---------------------------------------------------------------------------

def test_heightmap_object_is_resolved_against_scene_dir(tmp_path):
    grid = HeightGrid(heights=np.full((10, 10), 1.5), mask=np.ones((10, 10), dtype=bool), origin=(-5.0, -5.0), resolution=1.0)
    storage.write_height_grid(grid, tmp_path / "obj.csv", tmp_path / "obj.png", tmp_path / "obj.json")
    surface = simulator.make_surface(HeightmapObject(path="obj.csv"), tmp_path)
    assert surface.height(np.array([0.0]), np.array([0.0]))[0] == pytest.approx(1.5)


def test_preset_names_are_buildable():
    for name in simulator.preset_names():
        assert simulator.build_preset(name).name == name


def test_sine_preset_presses_halfway():
    config = simulator.build_preset("sine-w15")
    assert config.object.omega == pytest.approx(np.pi / 15.0)
    assert config.plan.presses[0].plane_height == pytest.approx(-2.5)


def test_unknown_preset():
    with pytest.raises(ValueError):
        simulator.build_preset("teapot")
