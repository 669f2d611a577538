"""Seeded scene series: stereo matching, rapid jumps and preset round trips."""

import pytest

from app.schemas.sensor import SkinParams
from app.services import dtrc, evaluation, pipeline, simulator

pytestmark = pytest.mark.slow


def _oracle_map(coded, obs) -> dict[int, int]:
    rows = [int(((obs.left - m.position) ** 2).sum(axis=1).argmin()) for m in coded.markers]
    return {m.id: int(obs.marker_ids[row]) for m, row in zip(coded.markers, rows)}


@pytest.mark.parametrize("index", range(100))
def test_stereo_matching_is_exact(index, ideal_rig):
    config, press = simulator.matching_scene(index, ideal_rig)
    spec = config.skin.pattern
    for obs in (press.rest, press.pressed):
        disparity = dtrc.code_stereo_pair(obs.left, obs.right, spec)
        assert len(disparity) == spec.expected_count
        assert evaluation.stereo_mismatches(disparity, obs) == 0


@pytest.mark.parametrize("seed", range(10))
def test_rapid_jump_keeps_ids(seed):
    spec = SkinParams().pattern
    prev, curr = simulator.tracking_sequence("rapid_diagonal", seed=seed)
    assert _oracle_map(dtrc.code_frame(prev.left, spec), prev) == _oracle_map(dtrc.code_frame(curr.left, spec), curr)


@pytest.mark.parametrize("name", ["gaussian-s50", "gaussian-s16.7", "gaussian-s10"])
def test_gaussian_preset_round_trip(name, table_rig):
    config = simulator.build_preset(name)
    presses = simulator.simulate_scene(config, table_rig, seed=0)
    result = pipeline.reconstruct_simulated(config, presses, table_rig)[0]
    assert evaluation.surface_rms(result.patch.points, simulator.make_surface(config.object)) <= 0.15


def test_sine_preset_upper_surface(table_rig):
    config = simulator.build_preset("sine-w15")
    presses = simulator.simulate_scene(config, table_rig, seed=0)
    result = pipeline.reconstruct_simulated(config, presses, table_rig)[0]
    upper, _ = evaluation.sine_errors(result.patch.points, simulator.make_surface(config.object))
    assert upper <= 0.2
