"""
Per-press inverse pipeline and the scene, calibration, stitching and
evaluation workflows behind the command line.

Scene directory layout:
    scene.json      SceneConfig
    manifest.json   ScanManifest (press poses, frame space, marker depth)
    truth.json      ground-truth markers and id maps
    press_XXXX/     rest_left.csv, rest_right.csv, pressed_left.csv,
                    pressed_right.csv and optionally rest.png, pressed.png
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from app.exceptions import ConfigError, PipelineError
from app.models.marker import Blob, DisparityFrame
from app.models.patch import ContactPatch, HeightGrid, pose_apply, yaw_matrix
from app.schemas.camera import CameraRig
from app.schemas.pipeline import CalibrationResult, EvaluationSummary, PipelineConfig
from app.schemas.scene import PressRecord, ScanManifest, SceneConfig
from app.schemas.sensor import RefractionParams, StitchParams
from app.services import dtrc, evaluation, refraction, simulator, skin_surface, storage, stitching
from app.services.marker_detection import blobs_to_points, detect_markers, load_gray_image, nominal_marker_radius_px, split_stereo_frame
from app.services.stereo_geometry import rectify_points, to_sensor_frame, triangulate_many

logger = logging.getLogger(__name__)

FRAME_FILES = ("rest_left", "rest_right", "pressed_left", "pressed_right")


def press_dirname(contact_id: int) -> str:
    return f"press_{contact_id:04d}"


# ---------------------------------------------------------------------------
# Scenes
# ---------------------------------------------------------------------------

def scan_manifest(config: SceneConfig, records: list[PressRecord], rig: CameraRig) -> ScanManifest:
    return ScanManifest(
        scene=config.name,
        frame_space=config.frame_space,
        marker_depth=config.marker_depth,
        baseline_midpoint=0.5 * rig.baseline,
        presses=records,
    )


def write_scene(directory: str | Path, config: SceneConfig, presses: list[simulator.SimulatedPress], rig: CameraRig) -> ScanManifest:
    """Write the frames, manifest, config and truth of a simulated scene."""
    directory = Path(directory)
    records = []
    truth = {"presses": []}
    for sim in presses:
        press_dir = directory / press_dirname(sim.contact_id)
        storage.write_pixels(press_dir / "rest_left.csv", sim.rest.left)
        storage.write_pixels(press_dir / "rest_right.csv", sim.rest.right)
        storage.write_pixels(press_dir / "pressed_left.csv", sim.pressed.left)
        storage.write_pixels(press_dir / "pressed_right.csv", sim.pressed.right)
        for name, img in sim.images.items():
            storage.write_gray_png(press_dir / f"{name}.png", img)
        records.append(PressRecord(contact_id=sim.contact_id, directory=press_dir.name, press=sim.press, pose=sim.pose))
        truth["presses"].append(
            {
                "contact_id": sim.contact_id,
                "rest_ids": sim.rest.marker_ids.tolist(),
                "pressed_ids": sim.pressed.marker_ids.tolist(),
                "rest_markers": sim.rest_markers.tolist(),
                "pressed_markers": sim.pressed_markers.tolist(),
            }
        )

    manifest = scan_manifest(config, records, rig)
    storage.write_json(directory / "scene.json", config)
    storage.write_json(directory / "truth.json", truth)
    storage.write_json(directory / "manifest.json", manifest)
    logger.info(f"Wrote scene '{config.name}' with {len(records)} press(es) to {directory}")
    return manifest


def read_scene(directory: str | Path) -> tuple[SceneConfig, ScanManifest]:
    """
    Raises:
        ConfigError: If the directory has no scene.json or manifest.json
    """
    directory = Path(directory)
    for name in ("scene.json", "manifest.json"):
        if not (directory / name).exists():
            raise ConfigError(f"{directory} is not a scene directory (missing {name})")
    return storage.read_model(directory / "scene.json", SceneConfig), storage.read_model(directory / "manifest.json", ScanManifest)


# ---------------------------------------------------------------------------
# Per-press reconstruction
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class PressResult:
    contact_id: int
    patch: ContactPatch
    boundary_count: int
    rest: DisparityFrame
    pressed: DisparityFrame
    markers: np.ndarray


@dataclass
class SceneReport:
    written: list[Path] = field(default_factory=list)
    skipped: dict[int, str] = field(default_factory=dict)


def load_refraction(config: PipelineConfig) -> RefractionParams:
    """Refraction parameters, taken from the calibration file when one is configured."""
    if config.calibration_path is None:
        return config.refraction
    result = storage.read_model(config.calibration_path, CalibrationResult)
    logger.info(f"Using calibrated n_gel={result.n_gel:.4f} from {config.calibration_path}")
    return result.to_params()


def detect_stereo(path: Path, rig: CameraRig, config: PipelineConfig, marker_depth: float) -> tuple[list[Blob], list[Blob]]:
    """Marker blobs of the two halves of a side-by-side stereo image."""
    left_img, right_img = split_stereo_frame(load_gray_image(path))
    radius = nominal_marker_radius_px(rig, marker_depth)
    left = detect_markers(left_img, detector=config.detector, marker_radius_px=radius)
    right = detect_markers(right_img, detector=config.detector, marker_radius_px=radius)
    logger.debug(f"{path.name}: {len(left)} left / {len(right)} right detections")
    return left, right


def load_press_frames(
    press_dir: Path,
    rig: CameraRig,
    config: PipelineConfig,
    marker_depth: float,
    from_images: bool = False,
) -> tuple[dict[str, np.ndarray], dict[str, list[Blob]]]:
    """
    Marker pixels of the four frames of a press, read from the pixel CSVs
    or detected on rest.png and pressed.png.

    Returns:
        (pixels per frame name, blobs per frame name; empty unless
        detected from images)
    """
    if not from_images:
        return {name: storage.read_pixels(press_dir / f"{name}.csv") for name in FRAME_FILES}, {}
    detections: dict[str, list[Blob]] = {}
    for state in ("rest", "pressed"):
        detections[f"{state}_left"], detections[f"{state}_right"] = detect_stereo(press_dir / f"{state}.png", rig, config, marker_depth)
    return {name: blobs_to_points(blobs) for name, blobs in detections.items()}, detections


def corrected_markers(
    frames: dict[str, np.ndarray],
    rig: CameraRig,
    config: PipelineConfig,
    refr: RefractionParams,
    frame_space: str = "rectified",
) -> tuple[np.ndarray, DisparityFrame, DisparityFrame]:
    """
    Code, match and triangulate the rest and pressed frames, then scale
    each marker's observed depth change by n_gel.

    Returns:
        (world points ordered by marker id, rest disparities, pressed
        disparities)
    """
    if frame_space == "raw":
        frames = {name: rectify_points(pts, name.split("_")[1], rig) for name, pts in frames.items()}
    spec = config.pattern
    rest = dtrc.code_stereo_pair(frames["rest_left"], frames["rest_right"], spec, "rest")
    pressed = dtrc.code_stereo_pair(frames["pressed_left"], frames["pressed_right"], spec, "pressed")

    rest_pts = triangulate_many(rest.left, rest.right, rig)
    pressed_pts = triangulate_many(pressed.left, pressed.right, rig)
    # both frames carry the full id set, ordered by id
    if not np.array_equal(rest.ids, pressed.ids):
        raise dtrc.MatchCardinalityError("rest and pressed frames carry different marker ids")

    corrected = pressed_pts.copy()
    corrected[:, 2] = refraction.correct_depth(rest_pts[:, 2], pressed_pts[:, 2] - rest_pts[:, 2], refr)
    return corrected, rest, pressed


def reconstruct_press(
    frames: dict[str, np.ndarray],
    record: PressRecord,
    manifest: ScanManifest,
    rig: CameraRig,
    config: PipelineConfig,
    refr: RefractionParams,
) -> PressResult:
    """
    Full inverse pipeline for one press: markers in the world frame, then
    the sensor frame, skin reconstruction and the global patch.
    """
    world, rest, pressed = corrected_markers(frames, rig, config, refr, manifest.frame_space)
    sensor = to_sensor_frame(world, manifest.baseline_midpoint, manifest.marker_depth)
    recon = skin_surface.reconstruct_skin_detailed(sensor, config.skin)

    samples = recon.skin_surface.sample_grid(config.patch_spacing)
    if len(samples) == 0:
        raise skin_surface.FitDegenerate(f"press {record.contact_id}: skin footprint holds no samples at spacing {config.patch_spacing}")
    oriented = skin_surface.surface_normals(recon.skin_surface, samples)
    normals = oriented.normals @ yaw_matrix(record.pose.yaw_deg).T
    patch = ContactPatch(
        contact_id=record.contact_id,
        points=pose_apply(samples, record.pose),
        pose=record.pose,
        normals=normals,
    )
    boundary = int(recon.oriented_markers.boundary.sum())
    return PressResult(record.contact_id, patch, boundary, rest, pressed, sensor)


def reconstruct_simulated(
    config: SceneConfig,
    presses: list[simulator.SimulatedPress],
    rig: CameraRig,
    pipeline_config: PipelineConfig | None = None,
) -> list[PressResult]:
    """Run the inverse pipeline on in-memory simulated presses."""
    pipeline_config = pipeline_config or PipelineConfig(skin=config.skin, refraction=config.refraction, patch_spacing=config.patch_spacing)
    records = [PressRecord(contact_id=s.contact_id, directory=press_dirname(s.contact_id), press=s.press, pose=s.pose) for s in presses]
    manifest = scan_manifest(config, records, rig)
    results = []
    for sim, record in zip(presses, records):
        frames = {
            "rest_left": sim.rest.left,
            "rest_right": sim.rest.right,
            "pressed_left": sim.pressed.left,
            "pressed_right": sim.pressed.right,
        }
        results.append(reconstruct_press(frames, record, manifest, rig, pipeline_config, pipeline_config.refraction))
    return results


def reconstruct_scene(
    scene_dir: str | Path,
    output_dir: str | Path,
    config: PipelineConfig,
    rig: CameraRig,
    jobs: int = 1,
    from_images: bool = False,
) -> SceneReport:
    """
    Reconstruct every press of a scene and write one patch per press:
    patch_XXXX.csv and .json, the pressed-frame disparities in
    patch_XXXX_disparity.csv and, with from_images, the detected blobs in
    patch_XXXX_detections.csv. Presses that fail are logged and skipped.

    Raises:
        PipelineError: If every press fails
    """
    scene_dir = Path(scene_dir)
    _, manifest = read_scene(scene_dir)
    refr = load_refraction(config)

    def run(record: PressRecord) -> tuple[PressResult, dict[str, list[Blob]]] | str:
        try:
            frames, detections = load_press_frames(scene_dir / record.directory, rig, config, manifest.marker_depth, from_images)
            return reconstruct_press(frames, record, manifest, rig, config, refr), detections
        except PipelineError as e:
            return f"{type(e).__name__}: {str(e)}"

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        outcomes = list(pool.map(run, manifest.presses))

    report = SceneReport()
    for record, outcome in zip(manifest.presses, outcomes):
        if isinstance(outcome, str):
            logger.warning(f"Skipping press {record.contact_id}: {outcome}")
            report.skipped[record.contact_id] = outcome
            continue
        result, detections = outcome
        stem = storage.patch_stem(record.contact_id)
        path = storage.write_patch(output_dir, result.patch, result.boundary_count)
        storage.write_disparity(Path(output_dir) / f"{stem}_disparity.csv", result.pressed)
        if detections:
            storage.write_detections(Path(output_dir) / f"{stem}_detections.csv", detections)
        report.written.append(path)

    logger.info(f"Reconstructed {len(report.written)} of {len(manifest.presses)} press(es) from {scene_dir}")
    if not report.written:
        raise PipelineError(f"all {len(manifest.presses)} press(es) of {scene_dir} failed")
    return report


# ---------------------------------------------------------------------------
# Calibration
# ---------------------------------------------------------------------------

def calibrate_directory(sweep_dir: str | Path, n_air: float = RefractionParams().n_air) -> CalibrationResult:
    """
    Fit n_gel from every sweep CSV in a directory. Files without a trial
    column count as one trial each.

    Raises:
        ConfigError: If the directory holds no CSV files
    """
    paths = sorted(Path(sweep_dir).glob("*.csv"))
    if not paths:
        raise ConfigError(f"no calibration sweep CSV files in {sweep_dir}")
    pairs = []
    for trial, path in enumerate(paths):
        file_pairs = refraction.read_sweep_csv(path)
        has_trials = "trial" in pd.read_csv(path, nrows=0).columns
        pairs.extend(p if has_trials else replace(p, trial=trial) for p in file_pairs)
    return refraction.calibrate_n_gel(pairs, n_air)


def calibrate_simulated(rig: CameraRig, refr: RefractionParams, seed: int = 0, mode: str = "scalar", trials: int = 5) -> CalibrationResult:
    """Run the simulated sweep (1 mm steps to 8 mm) and fit n_gel."""
    pairs = simulator.calibration_sweep(rig, refr, trials=trials, mode=mode, seed=seed)
    return refraction.calibrate_n_gel(pairs, refr.n_air)


# ---------------------------------------------------------------------------
# Stitching
# ---------------------------------------------------------------------------

def load_patches(patch_dir: str | Path) -> list[ContactPatch]:
    """
    Raises:
        ConfigError: If the directory holds no patch files
    """
    paths = storage.list_patches(patch_dir)
    if not paths:
        raise ConfigError(f"no patch files in {patch_dir}")
    return [storage.read_patch(path) for path in paths]


def stitch_directory(patch_dir: str | Path, output_dir: str | Path, params: StitchParams) -> tuple[np.ndarray, HeightGrid]:
    """
    Merge, rasterize and mollify the patches of a directory; writes
    merged.csv, merged.ply (when open3d is installed) and the heightmap
    as CSV, 16-bit PNG and sidecar.
    """
    patches = load_patches(patch_dir)
    surface = stitching.stitch(patches, params)
    output_dir = Path(output_dir)
    storage.write_points(output_dir / "merged.csv", surface.points)
    if storage.ply_available():
        storage.write_ply(output_dir / "merged.ply", surface.points)
    storage.write_height_grid(surface.grid, output_dir / "heightmap.csv", output_dir / "heightmap.png", output_dir / "heightmap.json")
    logger.info(f"Stitched {len(patches)} patch(es) into {len(surface.points)} points, {surface.grid.occupied} raster cells")
    return surface.points, surface.grid


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def load_reconstruction(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"reconstruction file not found: {path}")
    if path.suffix.lower() == ".ply":
        return storage.read_ply(path)[0]
    return storage.read_points(path)


def evaluate_files(recon_path: str | Path, scene_dir: str | Path, output_dir: str | Path, bins=None) -> EvaluationSummary:
    """Compare a reconstruction with the scene's object; writes profile.csv and summary.json."""
    config, _ = read_scene(scene_dir)
    truth = simulator.make_surface(config.object, Path(scene_dir))
    summary, profile = evaluation.evaluate(load_reconstruction(recon_path), truth, bins)
    output_dir = Path(output_dir)
    if profile is not None:
        storage.write_table(output_dir / "profile.csv", profile.to_frame())
    storage.write_json(output_dir / "summary.json", summary)
    return summary
