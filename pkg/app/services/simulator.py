"""
Forward model of the sensor used as the oracle for the inverse pipeline.

Frames:
    global  object coordinates, z up (towards the cameras)
    sensor  origin at the centre of the rest marker plane, z towards the
            cameras; global = yaw(sensor) + translation
    world   stereo frame of stereo_geometry; X = x_s + b/2, Y = -y_s,
            Z = marker_depth - z_s

The skin is a perfectly conforming membrane: its height is the maximum of
the object and the pressed rest shape. Pins stay perpendicular to the
skin, so every marker sits H + T above its skin point along the skin
normal.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from app.models.marker import StereoObservation
from app.models.objects import FlatSurface, GaussianSurface, HeightmapSurface, ObjectSurface, SineSurface
from app.models.optics import DisplacementPair
from app.models.patch import ContactPatch, pose_invert, yaw_matrix
from app.schemas.camera import CameraRig
from app.schemas.scene import (
    FlatObject,
    GaussianObject,
    HeightmapObject,
    ObjectSpec,
    PatchPose,
    PressSpec,
    ScanPlan,
    SceneConfig,
    SineObject,
)
from app.schemas.sensor import PATTERN_TABLE, PatternKind, PatternSpec, RefractionParams, SkinParams
from app.services import storage
from app.services.marker_detection import nominal_marker_radius_px
from app.services.refraction import trace_refracted_pixel
from app.services.stereo_geometry import from_sensor_frame, project, triangulate_many

logger = logging.getLogger(__name__)

CIRCULAR_WARP = 0.1
CIRCULAR_DOME_DEPTH = 3.0


# ---------------------------------------------------------------------------
# Marker lattices
# ---------------------------------------------------------------------------

def hex_lattice(layers: int, pitch: float) -> np.ndarray:
    """Hexagonal lattice of 3m(m-1)+1 sites, centre first."""
    k = layers - 1
    sites = []
    for q in range(-k, k + 1):
        for r in range(-k, k + 1):
            if abs(q + r) <= k:
                sites.append((pitch * (q + 0.5 * r), pitch * r * np.sqrt(3.0) / 2.0))
    sites = np.array(sites, dtype=float)
    order = np.lexsort((np.arctan2(sites[:, 1], sites[:, 0]), np.round(np.hypot(sites[:, 0], sites[:, 1]), 9)))
    return sites[order]


def square_lattice(layers: int, pitch: float) -> np.ndarray:
    k = layers - 1
    idx = np.arange(-k, k + 1) * pitch
    gx, gy = np.meshgrid(idx, idx)
    return np.column_stack([gx.ravel(), gy.ravel()])


def circular_lattice(layers: int, pitch: float, warp: float = CIRCULAR_WARP) -> np.ndarray:
    """Hexagonal topology, radially stretched towards the rim: r' = r (1 + warp (r / R)^2)."""
    sites = hex_lattice(layers, pitch)
    r = np.hypot(sites[:, 0], sites[:, 1])
    outer = r.max() if r.max() > 0 else 1.0
    return sites * (1.0 + warp * (r / outer) ** 2)[:, None]


def pattern_lattice(spec: PatternSpec, pitch: float, rotation_deg: float = 0.0) -> np.ndarray:
    """Sensor-frame (x, y) marker sites for a pattern."""
    if spec.kind == PatternKind.SQUARE:
        sites = square_lattice(spec.m, pitch)
    elif spec.kind == PatternKind.CIRCULAR:
        sites = circular_lattice(spec.m, pitch)
    else:
        sites = hex_lattice(spec.m, pitch)
    return sites @ yaw_matrix(rotation_deg)[:2, :2].T


def footprint_radius(spec: PatternSpec, pitch: float) -> float:
    """Radius of the outermost marker site."""
    sites = pattern_lattice(spec, pitch)
    return float(np.hypot(sites[:, 0], sites[:, 1]).max())


# ---------------------------------------------------------------------------
# Objects
# ---------------------------------------------------------------------------

def load_heightmap(path: str | Path, sidecar: str | Path | None = None) -> HeightmapSurface:
    """Heightmap object from a 16-bit PNG or CSV grid plus its JSON sidecar."""
    grid, meta = storage.read_heightmap(path, sidecar)
    grid = np.where(np.isfinite(grid), grid, np.nanmin(grid))
    return HeightmapSurface(grid, meta.resolution, meta.origin)


def make_surface(spec: ObjectSpec, base_dir: Path | None = None) -> ObjectSurface:
    if isinstance(spec, GaussianObject):
        return GaussianSurface(spec.height, spec.sigma2, spec.center[0], spec.center[1])
    if isinstance(spec, SineObject):
        return SineSurface(spec.amplitude, spec.omega)
    if isinstance(spec, FlatObject):
        return FlatSurface(spec.height)
    if isinstance(spec, HeightmapObject):
        path = spec.path if base_dir is None or spec.path.is_absolute() else base_dir / spec.path
        sidecar = spec.sidecar
        if sidecar is not None and base_dir is not None and not sidecar.is_absolute():
            sidecar = base_dir / sidecar
        return load_heightmap(path, sidecar)
    raise ValueError(f"unsupported object spec: {spec!r}")


# ---------------------------------------------------------------------------
# Contact model
# ---------------------------------------------------------------------------

def press_pose(press: PressSpec, skin: SkinParams) -> PatchPose:
    """Sensor pose at the bottom of a press."""
    return PatchPose(
        translation=(press.center[0], press.center[1], press.plane_height + skin.offset),
        yaw_deg=press.rotation_deg,
    )


@dataclass(frozen=True, eq=False)
class SkinField:
    """
    Skin height over the footprint of one press, in the global frame.
    `surface` is None for an uncontacted skin at rest.
    """
    surface: ObjectSurface | None
    plane: float
    pose: PatchPose
    radius: float
    dome_depth: float = 0.0
    slip: tuple[float, float] = (0.0, 0.0)

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.pose.translation[:2], dtype=float)

    def _rim(self) -> float:
        return 1.05 * self.radius

    def rest_height(self, x, y) -> np.ndarray:
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        if self.dome_depth == 0.0:
            return np.full(x.shape, self.plane)
        r2 = (x - self.center[0]) ** 2 + (y - self.center[1]) ** 2
        return self.plane - self.dome_depth * np.clip(1.0 - r2 / self._rim() ** 2, 0.0, None)

    def rest_gradient(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        if self.dome_depth == 0.0:
            return np.zeros(x.shape), np.zeros(x.shape)
        dx, dy = x - self.center[0], y - self.center[1]
        inside = dx ** 2 + dy ** 2 < self._rim() ** 2
        k = 2.0 * self.dome_depth / self._rim() ** 2
        return np.where(inside, k * dx, 0.0), np.where(inside, k * dy, 0.0)

    def in_contact(self, x, y) -> np.ndarray:
        if self.surface is None:
            return np.zeros(np.broadcast(x, y).shape, dtype=bool)
        return self.surface.height(x, y) >= self.rest_height(x, y)

    def height(self, x, y) -> np.ndarray:
        rest = self.rest_height(x, y)
        if self.surface is None:
            return rest
        return np.maximum(self.surface.height(x, y), rest)

    def gradient(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        gx, gy = self.rest_gradient(x, y)
        if self.surface is None:
            return gx, gy
        ox, oy = self.surface.gradient(x, y)
        contact = self.in_contact(x, y)
        return np.where(contact, ox, gx), np.where(contact, oy, gy)

    def normal(self, x, y) -> np.ndarray:
        gx, gy = self.gradient(x, y)
        n = np.stack([-gx, -gy, np.ones_like(gx)], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)


def skin_radius(skin: SkinParams) -> float:
    return footprint_radius(skin.pattern, skin.marker_pitch) + skin.marker_pitch


def default_dome_depth(skin: SkinParams, dome_depth: float | None = None) -> float:
    if dome_depth is not None:
        return dome_depth
    return CIRCULAR_DOME_DEPTH if skin.pattern.kind == PatternKind.CIRCULAR else 0.0


def deform_skin(obj: ObjectSurface | None, press: PressSpec, skin: SkinParams, dome_depth: float | None = None) -> SkinField:
    """
    Skin height = max(object, pressed rest shape) over the circular footprint.
    Pass obj=None for the skin at rest.
    """
    return SkinField(
        surface=obj,
        plane=press.plane_height,
        pose=press_pose(press, skin),
        radius=skin_radius(skin),
        dome_depth=default_dome_depth(skin, dome_depth),
        slip=press.slip,
    )


def place_markers(skin_field: SkinField, skin: SkinParams, rotation_deg: float = 0.0) -> np.ndarray:
    """
    Global marker positions: skin point below each (slipped) lattice site
    plus (H + T) along the skin normal.

    Returns:
        (N, 3) markers ordered as the pattern lattice
    """
    sites = pattern_lattice(skin.pattern, skin.marker_pitch, rotation_deg) + np.asarray(skin_field.slip, dtype=float)
    xy = sites @ yaw_matrix(skin_field.pose.yaw_deg)[:2, :2].T + skin_field.center
    base = np.column_stack([xy, skin_field.height(xy[:, 0], xy[:, 1])])
    return base + skin.offset * skin_field.normal(xy[:, 0], xy[:, 1])


# ---------------------------------------------------------------------------
# Optics
# ---------------------------------------------------------------------------

def observe(
    markers,
    rig: CameraRig,
    refr: RefractionParams,
    rest=None,
    marker_depth: float = 50.0,
    mode: str = "scalar",
    interface_depth: float = 40.0,
    frame_space: str = "rectified",
    jitter: float = 0.0,
    rng: np.random.Generator | None = None,
    shuffle: bool = True,
) -> StereoObservation:
    """
    Stereo pixel frames of sensor-frame markers seen through the gel.

    In "scalar" mode each marker appears at depth Z_rest + (Z - Z_rest) / n_gel,
    where Z_rest is its depth in `rest` (or the marker plane). In "snell"
    mode every camera ray is traced through a flat interface at
    `interface_depth`.

    Returns:
        StereoObservation; row k of both frames is marker `marker_ids[k]`
    """
    world = from_sensor_frame(markers, 0.5 * rig.baseline, marker_depth)
    rest_world = from_sensor_frame(rest, 0.5 * rig.baseline, marker_depth) if rest is not None else None

    if mode == "scalar":
        rest_z = rest_world[:, 2] if rest_world is not None else np.full(len(world), marker_depth)
        apparent = world.copy()
        apparent[:, 2] = rest_z + (world[:, 2] - rest_z) / refr.n_gel
        left, right = project(apparent, rig, distort=frame_space == "raw")
        left, right = np.atleast_2d(left), np.atleast_2d(right)
    elif mode == "snell":
        centres = (np.zeros(3), np.array([rig.baseline, 0.0, 0.0]))
        seen_left = np.array([trace_refracted_pixel(p, centres[0], interface_depth, refr) for p in world])
        seen_right = np.array([trace_refracted_pixel(p, centres[1], interface_depth, refr) for p in world])
        left = np.atleast_2d(project(seen_left, rig, distort=frame_space == "raw")[0])
        right = np.atleast_2d(project(seen_right, rig, distort=frame_space == "raw")[1])
        apparent = None
    else:
        raise ValueError(f"unknown refraction mode {mode!r}")

    if jitter > 0:
        rng = rng if rng is not None else np.random.default_rng()
        left = left + rng.normal(0.0, jitter, left.shape)
        right = right + rng.normal(0.0, jitter, right.shape)

    ids = np.arange(len(world))
    if shuffle and rng is not None:
        ids = rng.permutation(len(world))
    if apparent is None and frame_space == "rectified":
        apparent = triangulate_many(left[ids], right[ids], rig)
    elif apparent is not None:
        apparent = apparent[ids]
    return StereoObservation(left=left[ids], right=right[ids], marker_ids=ids, apparent_points=apparent)


def render(frame, image_size: tuple[int, int] = (640, 480), sigma: float = 4.42, noise: float = 0.0, rng: np.random.Generator | None = None) -> np.ndarray:
    """
    Gaussian spots of peak intensity 1 on a black background.

    Args:
        frame: (N, 2) marker pixels (u, v)
        image_size: (width, height)
        sigma: Spot standard deviation in pixels
        noise: Standard deviation of additive Gaussian pixel noise

    Returns:
        (height, width) image in [0, 1]
    """
    width, height = image_size
    img = np.zeros((height, width))
    half = int(np.ceil(4.0 * sigma))
    for u, v in np.asarray(frame, dtype=float).reshape(-1, 2):
        c0, c1 = max(int(np.floor(u)) - half, 0), min(int(np.floor(u)) + half + 2, width)
        r0, r1 = max(int(np.floor(v)) - half, 0), min(int(np.floor(v)) + half + 2, height)
        if c0 >= c1 or r0 >= r1:
            continue
        cols = np.arange(c0, c1)
        rows = np.arange(r0, r1)
        spot = np.exp(-((cols[None, :] - u) ** 2 + (rows[:, None] - v) ** 2) / (2.0 * sigma ** 2))
        img[r0:r1, c0:c1] = np.maximum(img[r0:r1, c0:c1], spot)
    if noise > 0:
        rng = rng if rng is not None else np.random.default_rng()
        img = img + rng.normal(0.0, noise, img.shape)
    return np.clip(img, 0.0, 1.0)


def render_stereo(obs: StereoObservation, rig: CameraRig, marker_depth: float, noise: float = 0.0, rng=None) -> np.ndarray:
    """Side-by-side (left | right) rendering of one observation."""
    size = (rig.image_width, rig.image_height)
    sigma = nominal_marker_radius_px(rig, marker_depth)
    left = render(obs.left, size, sigma, noise, rng)
    right = render(obs.right, size, sigma, noise, rng)
    return np.hstack([left, right])


# ---------------------------------------------------------------------------
# Scans and scenes
# ---------------------------------------------------------------------------

def plan_zigzag(region: tuple[float, float, float, float], step: float, press_depth: float = 5.0, approach: float = 5.0) -> ScanPlan:
    """
    Boustrophedon press grid over (xmin, xmax, ymin, ymax) with spacing at
    most `step`, including the region corners.
    """
    xmin, xmax, ymin, ymax = region
    if xmax < xmin or ymax < ymin or step <= 0:
        raise ValueError(f"invalid zigzag region {region} or step {step}")

    def axis(lo: float, hi: float) -> np.ndarray:
        count = int(np.ceil((hi - lo) / step - 1e-9)) + 1 if hi > lo else 1
        return np.linspace(lo, hi, count) if count > 1 else np.array([0.5 * (lo + hi)])

    xs, ys = axis(xmin, xmax), axis(ymin, ymax)
    presses = []
    for row, y in enumerate(ys):
        for x in (xs if row % 2 == 0 else xs[::-1]):
            presses.append(PressSpec(center=(float(x), float(y)), press_depth=press_depth, approach=approach))
    return ScanPlan(presses=presses, step=step)


def rotated_repeats(press: PressSpec, n: int = 3) -> list[PressSpec]:
    """The same press repeated with the sensor turned by 360/n degrees each time."""
    return [press.model_copy(update={"rotation_deg": press.rotation_deg + k * 360.0 / n}) for k in range(n)]


@dataclass(eq=False)
class SimulatedPress:
    contact_id: int
    press: PressSpec
    pose: PatchPose
    rest: StereoObservation
    pressed: StereoObservation
    rest_markers: np.ndarray
    pressed_markers: np.ndarray
    skin_field: SkinField
    images: dict[str, np.ndarray] = field(default_factory=dict)


def simulate_press(
    config: SceneConfig,
    press: PressSpec,
    rig: CameraRig,
    contact_id: int = 0,
    rng: np.random.Generator | None = None,
    obj: ObjectSurface | None = None,
) -> SimulatedPress:
    """Rest and pressed stereo frames of one press, plus the ground truth behind them."""
    rng = rng if rng is not None else np.random.default_rng(0)
    surface = obj if obj is not None else make_surface(config.object)
    skin = config.skin
    rotation = config.lattice_rotation_deg

    rest_press = press.model_copy(update={"slip": (0.0, 0.0)})
    rest_field = deform_skin(None, rest_press, skin, config.dome_depth)
    pressed_field = deform_skin(surface, press, skin, config.dome_depth)
    pose = pressed_field.pose

    rest_markers = pose_invert(place_markers(rest_field, skin, rotation), rest_field.pose)
    pressed_markers = pose_invert(place_markers(pressed_field, skin, rotation), pose)

    common = dict(
        marker_depth=config.marker_depth,
        mode=config.refraction_mode,
        interface_depth=config.interface_depth,
        frame_space=config.frame_space,
        jitter=config.pixel_jitter,
    )
    rest = observe(rest_markers, rig, config.refraction, rest=rest_markers, rng=rng, **common)
    pressed = observe(pressed_markers, rig, config.refraction, rest=rest_markers, rng=rng, **common)

    result = SimulatedPress(contact_id, press, pose, rest, pressed, rest_markers, pressed_markers, pressed_field)
    if config.render:
        result.images["rest"] = render_stereo(rest, rig, config.marker_depth, config.image_noise, rng)
        result.images["pressed"] = render_stereo(pressed, rig, config.marker_depth, config.image_noise, rng)
    logger.debug(f"Simulated press {contact_id} at {press.center} (depth {press.press_depth} mm)")
    return result


def simulate_scene(config: SceneConfig, rig: CameraRig, seed: int = 0, jobs: int = 1, base_dir: Path | None = None) -> list[SimulatedPress]:
    """
    Simulate every press of the scan plan. Each press draws from its own
    generator spawned from `seed`, so results do not depend on `jobs`.
    """
    obj = make_surface(config.object, base_dir)
    presses = config.plan.presses
    seeds = np.random.SeedSequence(seed).spawn(len(presses))

    def run(index: int) -> SimulatedPress:
        return simulate_press(config, presses[index], rig, index, np.random.default_rng(seeds[index]), obj)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(pool.map(run, range(len(presses))))
    logger.info(f"Simulated scene '{config.name}': {len(results)} press(es), seed {seed}")
    return results


def simulate_patch(
    obj: ObjectSurface,
    press: PressSpec,
    skin: SkinParams,
    spacing: float = 0.25,
    periphery_bias: float = 0.0,
    contact_id: int = 0,
    dome_depth: float | None = None,
) -> ContactPatch:
    """
    Dense ground-truth skin patch in the global frame over the disk of the
    outermost marker radius R. An optional bias * (r / R)^4 is added to
    mimic heights overestimated towards the periphery.
    """
    skin_field = deform_skin(obj, press, skin, dome_depth)
    radius = footprint_radius(skin.pattern, skin.marker_pitch)
    offsets = np.arange(-np.floor(radius / spacing), np.floor(radius / spacing) + 1) * spacing
    gx, gy = np.meshgrid(offsets, offsets)
    local = np.column_stack([gx.ravel(), gy.ravel()])
    r = np.hypot(local[:, 0], local[:, 1])
    local, r = local[r <= radius], r[r <= radius]
    xy = local @ yaw_matrix(press.rotation_deg)[:2, :2].T + np.asarray(press.center, dtype=float)
    z = skin_field.height(xy[:, 0], xy[:, 1]) + periphery_bias * (r / radius) ** 4
    points = np.column_stack([xy, z])
    return ContactPatch(contact_id=contact_id, points=points, pose=skin_field.pose, normals=skin_field.normal(xy[:, 0], xy[:, 1]))


TRACKING_SCENARIOS = ("slow_vertical", "horizontal", "rapid_diagonal")


def tracking_sequence(
    scenario: str,
    skin: SkinParams | None = None,
    rig: CameraRig | None = None,
    marker_depth: float = 50.0,
    refraction: RefractionParams | None = None,
    seed: int | None = 0,
) -> list[StereoObservation]:
    """
    Frames of a Gaussian-bump contact for the tracking experiments.

    slow_vertical   three frames pressed 1 mm apart
    horizontal      two 1 mm lateral moves at constant depth
    rapid_diagonal  2 mm deeper and 2 mm to the left between two frames
    """
    skin = skin if skin is not None else SkinParams()
    rig = rig if rig is not None else CameraRig.ideal()
    refraction = refraction if refraction is not None else RefractionParams()
    if scenario == "slow_vertical":
        presses = [PressSpec(press_depth=d) for d in (3.0, 4.0, 5.0)]
    elif scenario == "horizontal":
        presses = [PressSpec(press_depth=4.0, slip=(s, 0.0)) for s in (0.0, 1.0, 2.0)]
    elif scenario == "rapid_diagonal":
        presses = [PressSpec(press_depth=3.0), PressSpec(press_depth=5.0, slip=(-2.0, 0.0))]
    else:
        raise ValueError(f"unknown tracking scenario {scenario!r}; expected one of {TRACKING_SCENARIOS}")

    obj = GaussianSurface(5.0, 50.0)
    rng = np.random.default_rng(seed) if seed is not None else None
    rest_field = deform_skin(None, PressSpec(), skin)
    rest = pose_invert(place_markers(rest_field, skin), rest_field.pose)
    frames = []
    for press in presses:
        pressed_field = deform_skin(obj, press, skin)
        markers = pose_invert(place_markers(pressed_field, skin), pressed_field.pose)
        frames.append(observe(markers, rig, refraction, rest=rest, marker_depth=marker_depth, rng=rng))
    return frames


def calibration_sweep(
    rig: CameraRig,
    refraction: RefractionParams,
    steps: int = 8,
    step_mm: float = 1.0,
    trials: int = 5,
    marker_depth: float = 50.0,
    mode: str = "scalar",
    interface_depth: float = 40.0,
    jitter: float = 0.0,
    seed: int = 0,
    pitch: float = 2.54,
    radius: float | None = None,
) -> list[DisplacementPair]:
    """
    Skinless flat marker array moved towards the cameras in `step_mm` steps.
    The observed displacement of a step is the mean triangulated
    displacement of the markers within `radius` of the array centre
    (default: the centre marker and its first ring).
    """
    sites = hex_lattice(PATTERN_TABLE[PatternKind.HEXAGON].m, pitch)
    radius = 1.01 * pitch if radius is None else radius
    sites = sites[np.hypot(sites[:, 0], sites[:, 1]) <= radius]
    rest = np.column_stack([sites, np.zeros(len(sites))])
    seeds = np.random.SeedSequence(seed).spawn(trials)

    pairs = []
    for trial, trial_seed in enumerate(seeds):
        rng = np.random.default_rng(trial_seed)
        common = dict(marker_depth=marker_depth, mode=mode, interface_depth=interface_depth, jitter=jitter, rng=rng, shuffle=False)
        base = observe(rest, rig, refraction, rest=rest, **common)
        base_points = triangulate_many(base.left, base.right, rig)
        for step in range(1, steps + 1):
            moved = rest + np.array([0.0, 0.0, step * step_mm])
            obs = observe(moved, rig, refraction, rest=rest, **common)
            points = triangulate_many(obs.left, obs.right, rig)
            observed = float(np.linalg.norm(points - base_points, axis=1).mean())
            pairs.append(DisplacementPair(true_disp=step * step_mm, observed_disp=observed, trial=trial, step_index=step))
    logger.info(f"Simulated calibration sweep: {trials} trial(s) x {steps} steps ({mode} refraction)")
    return pairs


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

GAUSSIAN_PRESETS = {
    "gaussian-s50": 50.0,
    "gaussian-s16.7": 50.0 / 3.0,
    "gaussian-s10": 10.0,
    "gaussian-s5": 5.0,
    "gaussian-s1.7": 5.0 / 3.0,
}
SINE_PRESETS = {
    "sine-w15": np.pi / 15.0,
    "sine-w7.5": 2.0 * np.pi / 15.0,
    "sine-w10": np.pi / 5.0,
    "sine-w3.75": 4.0 * np.pi / 15.0,
    "sine-w5": 2.0 * np.pi / 5.0,
}
OTHER_PRESETS = ("flat", "zigzag-gaussian", "calibration-sweep")


def preset_names() -> list[str]:
    return [*GAUSSIAN_PRESETS, *SINE_PRESETS, *OTHER_PRESETS]


def build_preset(name: str) -> SceneConfig:
    """
    Scene config for a named preset.

    Raises:
        ValueError: If the preset is unknown
    """
    if name in GAUSSIAN_PRESETS:
        return SceneConfig(name=name, object=GaussianObject(height=5.0, sigma2=GAUSSIAN_PRESETS[name]))
    if name in SINE_PRESETS:
        plan = ScanPlan(presses=[PressSpec(press_depth=5.0, approach=2.5)])
        return SceneConfig(name=name, object=SineObject(amplitude=2.5, omega=SINE_PRESETS[name]), plan=plan)
    if name == "flat":
        return SceneConfig(name=name, object=FlatObject())
    if name == "zigzag-gaussian":
        return SceneConfig(name=name, object=GaussianObject(), plan=plan_zigzag((-15.0, 15.0, -15.0, 15.0), 15.0))
    if name == "calibration-sweep":
        return SceneConfig(name=name, object=FlatObject())
    raise ValueError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")


MATCHING_PRESETS = ("gaussian-s50", "gaussian-s16.7", "gaussian-s10", "sine-w15", "flat")


def matching_scene(index: int, rig: CameraRig | None = None, jitter: float = 0.05) -> tuple[SceneConfig, SimulatedPress]:
    """
    Press `index` of the seeded scene series used for stereo matching
    checks. Presets cycle with the index, the press centre is offset by
    up to 1 mm and every pixel is jittered.
    """
    rig = rig if rig is not None else CameraRig.ideal()
    rng = np.random.default_rng(index)
    config = build_preset(MATCHING_PRESETS[index % len(MATCHING_PRESETS)]).model_copy(update={"pixel_jitter": jitter})
    press = config.plan.presses[0]
    cx, cy = press.center
    dx, dy = rng.uniform(-1.0, 1.0, size=2)
    press = press.model_copy(update={"center": (cx + float(dx), cy + float(dy))})
    return config, simulate_press(config, press, rig, contact_id=index, rng=rng)
