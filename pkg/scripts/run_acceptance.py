"""
Run the simulated acceptance scenarios and log a pass/fail summary.

Covers triangulation, stereo matching over seeded scenes, the refraction
error term and calibration, full-pipeline round trips on the Gaussian and
sine presets, the mollifier normalization and the 3x3 zigzag stitch
against the naive union.

Usage:
    python -m scripts.run_acceptance
"""

import logging
import time
from dotenv import load_dotenv
load_dotenv()

import numpy as np

from app.config import settings
from app.exceptions import PipelineError
from app.models.objects import GaussianSurface
from app.models.optics import RayGeometry
from app.schemas.sensor import RefractionParams, SkinParams, StitchParams
from app.services import dtrc, evaluation, pipeline, refraction, simulator, stitching
from app.services.stereo_geometry import load_rig, project_many, triangulate_many

logging.basicConfig(level=settings.log_level)
logger = logging.getLogger(__name__)


def check_triangulation(rig) -> bool:
    rng = np.random.default_rng(settings.seed)
    points = np.column_stack([rng.uniform(-10, 20, 1000), rng.uniform(-10, 10, 1000), rng.uniform(30, 60, 1000)])
    left, right = project_many(points, rig)
    err = float(np.abs(triangulate_many(left, right, rig) - points).max())
    logger.info(f"  triangulation round trip: max error {err:.2e} mm")
    return err <= 1e-6


def check_calibration(rig) -> bool:
    result = pipeline.calibrate_simulated(rig, RefractionParams(n_gel=1.51), seed=settings.seed)
    logger.info(f"  simulated sweep: n_gel {result.n_gel:.4f}")
    return abs(result.n_gel - 1.51) <= 0.01


ERROR_TERM_REFERENCE = -0.0066
ERROR_TERM_TOL = 5e-4


def check_stereo_matching(rig, scenes: int = 100) -> bool:
    mismatched = 0
    for index in range(scenes):
        config, press = simulator.matching_scene(index, rig)
        for obs in (press.rest, press.pressed):
            try:
                disparity = dtrc.code_stereo_pair(obs.left, obs.right, config.skin.pattern)
            except PipelineError as e:
                logger.info(f"  scene {index}: {type(e).__name__}: {str(e)}")
                return False
            mismatched += evaluation.stereo_mismatches(disparity, obs)
    logger.info(f"  stereo matching over {scenes} scenes: {mismatched} mismatched pairs")
    return mismatched == 0


def check_error_term() -> bool:
    params = RefractionParams()
    g = RayGeometry.from_angles_deg(10.0, 8.0, params.relative_index, 1.0, 1.1)
    e = refraction.error_term(g, params)
    logger.info(f"  error term at (10 deg, 8 deg, bc/ac 1.1): {e:+.4f}")
    return abs(e - ERROR_TERM_REFERENCE) <= ERROR_TERM_TOL


def check_round_trips(rig) -> bool:
    ok = True
    for name in ("gaussian-s50", "gaussian-s16.7", "gaussian-s10", "sine-w15"):
        config = simulator.build_preset(name)
        presses = simulator.simulate_scene(config, rig, seed=settings.seed)
        result = pipeline.reconstruct_simulated(config, presses, rig)[0]
        truth = simulator.make_surface(config.object)
        if name.startswith("sine"):
            upper, _ = evaluation.sine_errors(result.patch.points, truth)
            logger.info(f"  {name}: upper-surface RMS {upper:.4f} mm")
            ok &= upper <= 0.2
        else:
            rms = evaluation.surface_rms(result.patch.points, truth)
            logger.info(f"  {name}: RMS {rms:.4f} mm")
            ok &= rms <= 0.15
    return ok


def check_mollifier() -> bool:
    integral = stitching.mollifier_integral(0.25)
    logger.info(f"  mollifier integral at eps 0.25 mm: {integral:.9f}")
    return abs(integral - 1.0) <= 1e-6


def check_stitching() -> bool:
    obj = GaussianSurface(5.0, 50.0)
    skin = SkinParams()
    plan = simulator.plan_zigzag((-15.0, 15.0, -15.0, 15.0), 15.0)
    patches = [
        simulator.simulate_patch(obj, press, skin, spacing=0.5, periphery_bias=0.3, contact_id=k)
        for k, press in enumerate(plan.presses)
    ]
    params = StitchParams()
    merged = stitching.merge_patches(patches, params)
    naive = stitching.naive_union(patches)
    merged_rms = evaluation.surface_rms(merged.points, obj)
    naive_rms = evaluation.surface_rms(naive.points, obj)
    logger.info(f"  zigzag stitch: merged RMS {merged_rms:.4f} mm, naive union {naive_rms:.4f} mm")
    return merged_rms < naive_rms


def main():
    rig = load_rig()
    checks = {
        "triangulation": lambda: check_triangulation(rig),
        "stereo matching": lambda: check_stereo_matching(rig),
        "error term": check_error_term,
        "calibration": lambda: check_calibration(rig),
        "round trips": lambda: check_round_trips(rig),
        "mollifier": check_mollifier,
        "stitching": check_stitching,
    }
    failed = []
    for name, check in checks.items():
        started = time.perf_counter()
        logger.info(f"Running {name}")
        passed = check()
        logger.info(f"{name}: {'PASS' if passed else 'FAIL'} ({time.perf_counter() - started:.1f} s)")
        if not passed:
            failed.append(name)
    logger.info(f"Acceptance complete: {len(checks) - len(failed)}/{len(checks)} passed")
    return 1 if failed else 0


if __name__ == "__main__":
    raise SystemExit(main())
