"""
Command line for the stereo tactile reconstruction pipeline.

Usage:
    python -m app.main [--seed N] [--jobs N] [--log-level LEVEL] [--output DIR] <command> ...

Commands:
    simulate      write a simulated scene (frames, manifest, truth)
    calibrate     fit n_gel from a sweep directory or a simulated sweep
    reconstruct   rebuild one skin patch per press of a scene
    stitch        merge, rasterize and mollify a directory of patches
    evaluate      compare a reconstruction with the scene's object
    pattern-info  print the marker pattern table

Exit codes: 0 success, 1 usage or config error, 2 data or algorithm failure.
"""

from dotenv import load_dotenv
load_dotenv()

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from app.config import settings
from app.exceptions import ConfigError, PipelineError
from app.schemas.pipeline import PipelineConfig
from app.schemas.scene import SceneConfig
from app.schemas.sensor import PATTERN_TABLE, RefractionParams, StitchParams
from app.services import pipeline, refraction, simulator, storage
from app.services.stereo_geometry import load_rig

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAILURE = 2


class CliParser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors as ConfigError instead of exiting"""

    def error(self, message):
        raise ConfigError(message)


def build_parser() -> CliParser:
    parser = CliParser(prog="stereotac", description="Stereo tactile 3D reconstruction")
    parser.add_argument("--seed", type=int, default=None, help="Random seed (default: STEREOTAC_SEED)")
    parser.add_argument("--jobs", type=int, default=None, help="Presses processed in parallel")
    parser.add_argument("--log-level", default=None, help="Logging level (default: STEREOTAC_LOG_LEVEL)")
    parser.add_argument("--output", type=Path, default=None, help="Output directory")
    parser.add_argument("--rig", type=Path, default=None, help="Camera rig JSON (default: shipped rig)")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    sim = commands.add_parser("simulate", help="Write a simulated scene")
    source = sim.add_mutually_exclusive_group(required=True)
    source.add_argument("--preset", choices=simulator.preset_names())
    source.add_argument("--scene", type=Path, help="Scene config JSON")
    sim.add_argument("--render", action="store_true", help="Also write rendered stereo PNG frames")
    sim.add_argument("--noise", type=float, default=None, help="Image noise sigma for rendered frames")
    sim.add_argument("--jitter", type=float, default=None, help="Marker pixel jitter sigma")
    sim.add_argument("--refraction-mode", choices=("scalar", "snell"), default=None)

    cal = commands.add_parser("calibrate", help="Fit the gel refractive index")
    cal.add_argument("sweep_dir", type=Path, nargs="?", help="Directory of calibration sweep CSVs")
    cal.add_argument("--simulate", action="store_true", help="Run the simulated sweep instead")
    cal.add_argument("--n-gel", type=float, default=RefractionParams().n_gel, help="True index of the simulated sweep")
    cal.add_argument("--trials", type=int, default=5)
    cal.add_argument("--refraction-mode", choices=("scalar", "snell"), default="scalar")

    rec = commands.add_parser("reconstruct", help="Reconstruct one patch per press")
    rec.add_argument("scene_dir", type=Path)
    rec.add_argument("--config", type=Path, help="PipelineConfig JSON")
    rec.add_argument("--calibration", type=Path, help="Calibration result JSON")
    rec.add_argument("--from-images", action="store_true", help="Detect markers on rendered PNG frames")

    st = commands.add_parser("stitch", help="Merge a directory of patches")
    st.add_argument("patch_dir", type=Path)
    st.add_argument("--resolution", type=float, default=None, help="Raster resolution in mm")
    st.add_argument("--epsilon", type=float, default=None, help="Mollifier radius in mm")
    st.add_argument("--overlap", type=float, default=None, help="Overlap threshold in mm")

    ev = commands.add_parser("evaluate", help="Compare a reconstruction with a scene's object")
    ev.add_argument("recon", type=Path, help="Patch CSV, merged.csv or PLY")
    ev.add_argument("scene_dir", type=Path)
    ev.add_argument("--bin-width", type=float, default=1.0, help="Radial bin width in mm")

    commands.add_parser("pattern-info", help="Print the marker pattern table")
    return parser


def _rig(args, scene: SceneConfig | None = None):
    path = args.rig or (scene.rig_path if scene is not None and scene.rig_path is not None else None)
    return load_rig(path or settings.rig_path)


def cmd_simulate(args, output: Path, seed: int, jobs: int) -> str:
    if args.preset == "calibration-sweep":
        pairs = simulator.calibration_sweep(_rig(args), RefractionParams(), mode=args.refraction_mode or "scalar", seed=seed)
        path = storage.write_table(output / "sweep.csv", refraction.sweep_frame(pairs))
        return f"Wrote calibration sweep with {len(pairs)} pairs to {path}"

    if args.scene is not None:
        if not args.scene.exists():
            raise ConfigError(f"scene file not found: {args.scene}")
        config = storage.read_model(args.scene, SceneConfig)
        base_dir = args.scene.parent
    else:
        config = simulator.build_preset(args.preset)
        base_dir = None
    updates = {}
    if args.render:
        updates["render"] = True
    if args.noise is not None:
        updates["image_noise"] = args.noise
    if args.jitter is not None:
        updates["pixel_jitter"] = args.jitter
    if args.refraction_mode is not None:
        updates["refraction_mode"] = args.refraction_mode
    if updates:
        config = SceneConfig.model_validate({**config.model_dump(), **updates})

    rig = _rig(args, config)
    presses = simulator.simulate_scene(config, rig, seed=seed, jobs=jobs, base_dir=base_dir)
    pipeline.write_scene(output, config, presses, rig)
    return f"Wrote scene '{config.name}' with {len(presses)} press(es) to {output}"


def cmd_calibrate(args, output: Path, seed: int, jobs: int) -> str:
    if args.simulate:
        refr = RefractionParams(n_gel=args.n_gel)
        result = pipeline.calibrate_simulated(_rig(args), refr, seed=seed, mode=args.refraction_mode, trials=args.trials)
    elif args.sweep_dir is not None:
        if not args.sweep_dir.is_dir():
            raise ConfigError(f"sweep directory not found: {args.sweep_dir}")
        result = pipeline.calibrate_directory(args.sweep_dir)
    else:
        raise ConfigError("calibrate needs a sweep directory or --simulate")
    path = storage.write_json(output / "calibration.json", result)
    return f"n_gel = {result.n_gel:.4f} (residual RMS {result.residual_rms:.4f} mm, {result.n_pairs} pairs) -> {path}"


def cmd_reconstruct(args, output: Path, seed: int, jobs: int) -> str:
    scene, _ = pipeline.read_scene(args.scene_dir)
    if args.config is not None:
        if not args.config.exists():
            raise ConfigError(f"pipeline config not found: {args.config}")
        config = storage.read_model(args.config, PipelineConfig)
    else:
        config = PipelineConfig(skin=scene.skin, refraction=scene.refraction, patch_spacing=scene.patch_spacing)
    if args.calibration is not None:
        config = PipelineConfig.model_validate({**config.model_dump(), "calibration_path": args.calibration})
    rig = load_rig(args.rig or config.rig_path or scene.rig_path or settings.rig_path)

    report = pipeline.reconstruct_scene(args.scene_dir, output, config, rig, jobs=jobs, from_images=args.from_images)
    lines = [f"Reconstructed {len(report.written)} patch(es) into {output}"]
    lines += [f"skipped press {cid}: {reason}" for cid, reason in sorted(report.skipped.items())]
    return "\n".join(lines)


def cmd_stitch(args, output: Path, seed: int, jobs: int) -> str:
    updates = {}
    if args.resolution is not None:
        updates["raster_resolution"] = args.resolution
        updates["mollify_resolution"] = args.resolution
    if args.epsilon is not None:
        updates["mollifier_epsilon"] = args.epsilon
    if args.overlap is not None:
        updates["overlap_threshold"] = args.overlap
    params = StitchParams(**updates)
    points, grid = pipeline.stitch_directory(args.patch_dir, output, params)
    return f"Merged {len(points)} points into a {grid.shape[0]}x{grid.shape[1]} heightmap in {output}"


def cmd_evaluate(args, output: Path, seed: int, jobs: int) -> str:
    config, _ = pipeline.read_scene(args.scene_dir)
    bins = None
    if args.bin_width <= 0:
        raise ConfigError(f"--bin-width must be positive, got {args.bin_width}")
    recon = pipeline.load_reconstruction(args.recon)
    if config.object.kind == "gaussian":
        cx, cy = config.object.center
        r_max = float(np.hypot(recon[:, 0] - cx, recon[:, 1] - cy).max())
        bins = np.arange(0.0, r_max + args.bin_width, args.bin_width)
    summary = pipeline.evaluate_files(args.recon, args.scene_dir, output, bins)
    line = f"{summary.truth_kind}: RMS {summary.rms:.4f} mm, max {summary.max_error:.4f} mm over {summary.samples} samples"
    if summary.upper_rms is not None:
        line += f"; upper RMS {summary.upper_rms:.4f} mm, valley gap {summary.valley_gap:.4f} mm"
    return line


def cmd_pattern_info(args, output: Path, seed: int, jobs: int) -> str:
    rows = [f"{'pattern':<10} {'l':>3} {'m':>3} {'markers':>8}"]
    for kind, spec in PATTERN_TABLE.items():
        rows.append(f"{kind.value:<10} {spec.l:>3} {spec.m:>3} {spec.expected_count:>8}")
    return "\n".join(rows)


COMMANDS = {
    "simulate": cmd_simulate,
    "calibrate": cmd_calibrate,
    "reconstruct": cmd_reconstruct,
    "stitch": cmd_stitch,
    "evaluate": cmd_evaluate,
    "pattern-info": cmd_pattern_info,
}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    logging.basicConfig(level=(args.log_level or settings.log_level).upper())
    output = args.output or settings.output_dir
    seed = args.seed if args.seed is not None else settings.seed
    jobs = args.jobs if args.jobs is not None else settings.jobs

    try:
        summary = COMMANDS[args.command](args, output, seed, jobs)
    except (ConfigError, ValidationError, FileNotFoundError) as e:
        logger.error(f"{args.command}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except PipelineError as e:
        logger.error(f"{args.command} failed: {type(e).__name__}: {e}")
        print(f"failed: {e}", file=sys.stderr)
        return EXIT_FAILURE
    except ValueError as e:
        logger.error(f"{args.command}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    print(summary)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
