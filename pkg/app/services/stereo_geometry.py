"""
Pinhole stereo model: lens distortion, rectification, forward projection
and disparity triangulation.

World frame: origin at the left (reference) optical centre, x along the
baseline, z along the mean optical axis. Rectified pixels are expressed
in the reference intrinsics (f_l, x_c, y_c), so that for a point at
depth z the disparity d = u_r - u_l equals -b * f_l / z.

The world origin is not the baseline midpoint. Everything downstream of
triangulation works in the sensor frame instead (`to_sensor_frame`),
which is centred midway between the cameras, at x = b / 2 in world
coordinates, on the rest marker plane.
"""

import logging
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from app.config import settings
from app.exceptions import ConfigError, PipelineError
from app.schemas.camera import CameraIntrinsics, CameraRig

logger = logging.getLogger(__name__)

D_MIN = 0.05
UNDISTORT_MAX_ITER = 50
UNDISTORT_TOL = 1e-10


class DegenerateDistortion(PipelineError):
    """Raised when iterative undistortion does not converge"""
    pass


class DegenerateDisparity(PipelineError):
    """Raised when a disparity is too small (or of the wrong sign) to triangulate"""
    pass


class BehindCamera(PipelineError):
    """Raised when projecting a point that is not in front of the cameras"""
    pass


def _as_points(p, width: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(p, dtype=float)
    single = arr.ndim == 1
    return arr.reshape(-1, width), single


def _restore(arr: np.ndarray, single: bool) -> np.ndarray:
    return arr[0] if single else arr


def _distortion_terms(x: np.ndarray, y: np.ndarray, cam: CameraIntrinsics):
    r2 = x * x + y * y
    radial = 1.0 + cam.k1 * r2 + cam.k2 * r2 * r2
    dx = 2.0 * cam.p1 * x * y + cam.p2 * (r2 + 2.0 * x * x)
    dy = cam.p1 * (r2 + 2.0 * y * y) + 2.0 * cam.p2 * x * y
    return radial, dx, dy


def apply_distortion(p, cam: CameraIntrinsics) -> np.ndarray:
    """
    Map ideal pinhole pixels to distorted pixels (Brown-Conrady).

    Args:
        p: (2,) or (N, 2) pixel coordinates
        cam: Camera intrinsics holding k1, k2, p1, p2

    Returns:
        Distorted pixels with the same shape as `p`
    """
    pts, single = _as_points(p, 2)
    x = (pts[:, 0] - cam.cx) / cam.fx
    y = (pts[:, 1] - cam.cy) / cam.fy
    radial, dx, dy = _distortion_terms(x, y, cam)
    out = np.column_stack([cam.cx + cam.fx * (x * radial + dx), cam.cy + cam.fy * (y * radial + dy)])
    return _restore(out, single)


def undistort(p, cam: CameraIntrinsics) -> np.ndarray:
    """
    Invert `apply_distortion` by fixed-point iteration.

    Args:
        p: (2,) or (N, 2) distorted pixel coordinates
        cam: Camera intrinsics

    Returns:
        Ideal pinhole pixels with the same shape as `p`

    Raises:
        DegenerateDistortion: If the iteration has not converged to
            1e-10 px after 50 iterations
    """
    pts, single = _as_points(p, 2)
    if not np.all(np.isfinite(pts)):
        raise DegenerateDistortion("undistort received non-finite pixel coordinates")
    if not cam.has_distortion:
        return _restore(pts.copy(), single)

    xd = (pts[:, 0] - cam.cx) / cam.fx
    yd = (pts[:, 1] - cam.cy) / cam.fy
    x, y = xd.copy(), yd.copy()
    scale = max(cam.fx, cam.fy)
    for iteration in range(UNDISTORT_MAX_ITER):
        radial, dx, dy = _distortion_terms(x, y, cam)
        x_new = (xd - dx) / radial
        y_new = (yd - dy) / radial
        step = np.max(np.hypot(x_new - x, y_new - y)) * scale
        x, y = x_new, y_new
        if not np.isfinite(step):
            break
        if step < UNDISTORT_TOL:
            out = np.column_stack([cam.cx + cam.fx * x, cam.cy + cam.fy * y])
            return _restore(out, single)
    raise DegenerateDistortion(
        f"undistortion did not converge within {UNDISTORT_MAX_ITER} iterations; "
        f"distortion coefficients (k1={cam.k1}, k2={cam.k2}) are degenerate for these pixels"
    )


def rectify_points(p, side: str, rig: CameraRig) -> np.ndarray:
    """
    Convert raw camera pixels into rectified pixels of the world frame.

    Args:
        p: (2,) or (N, 2) raw pixels of the `side` camera
        side: "left" or "right"
        rig: Stereo rig

    Returns:
        Rectified pixels in the reference intrinsics
    """
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    cam = rig.left if side == "left" else rig.right
    pts, single = _as_points(p, 2)
    ideal = undistort(pts, cam)
    rays = np.column_stack([
        (ideal[:, 0] - cam.cx) / cam.fx,
        (ideal[:, 1] - cam.cy) / cam.fy,
        np.ones(len(ideal)),
    ])
    if side == "right":
        rays = rays @ rig.rotation.T
    rays = rays @ rig.rectifying_rotation.T
    if np.any(rays[:, 2] <= 0):
        raise BehindCamera("rectified ray points away from the world z axis")
    ref = rig.left
    out = np.column_stack([ref.cx + ref.fx * rays[:, 0] / rays[:, 2], ref.cy + ref.fy * rays[:, 1] / rays[:, 2]])
    return _restore(out, single)


def project(p, rig: CameraRig, distort: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """
    Project world points into both cameras.

    Args:
        p: (3,) or (N, 3) world points in mm
        rig: Stereo rig
        distort: If False return rectified pixels, else raw distorted
            pixels of each physical camera

    Returns:
        (left_pixels, right_pixels)

    Raises:
        BehindCamera: If any point has z <= 0 in a camera frame
    """
    pts, single = _as_points(p, 3)
    if np.any(pts[:, 2] <= 0):
        raise BehindCamera(f"{int(np.sum(pts[:, 2] <= 0))} point(s) at or behind the camera plane")
    ref = rig.left

    if not distort:
        left = np.column_stack([ref.cx + ref.fx * pts[:, 0] / pts[:, 2], ref.cy + ref.fy * pts[:, 1] / pts[:, 2]])
        right = np.column_stack([
            ref.cx + ref.fx * (pts[:, 0] - rig.baseline) / pts[:, 2],
            ref.cy + ref.fy * pts[:, 1] / pts[:, 2],
        ])
        return _restore(left, single), _restore(right, single)

    in_left = pts @ rig.rectifying_rotation
    in_right = (in_left - rig.translation) @ rig.rotation
    pixels = []
    for name, cam, cam_pts in (("left", rig.left, in_left), ("right", rig.right, in_right)):
        if np.any(cam_pts[:, 2] <= 0):
            raise BehindCamera(f"point(s) behind the {name} camera")
        ideal = np.column_stack([cam.cx + cam.fx * cam_pts[:, 0] / cam_pts[:, 2], cam.cy + cam.fy * cam_pts[:, 1] / cam_pts[:, 2]])
        pixels.append(_restore(apply_distortion(ideal, cam), single))
    return pixels[0], pixels[1]


def triangulate_many(left, right, rig: CameraRig) -> np.ndarray:
    """
    Triangulate matched rectified pixels.

    Args:
        left: (N, 2) rectified left pixels
        right: (N, 2) rectified right pixels
        rig: Stereo rig

    Returns:
        (N, 3) world points in mm

    Raises:
        DegenerateDisparity: If any |d| <= d_min or d has the wrong sign
    """
    pl, _ = _as_points(left, 2)
    pr, _ = _as_points(right, 2)
    if pl.shape != pr.shape:
        raise ValueError(f"left/right shapes differ: {pl.shape} vs {pr.shape}")
    d = pr[:, 0] - pl[:, 0]
    bad = np.flatnonzero(~(d < -D_MIN))
    if len(bad):
        raise DegenerateDisparity(
            f"{len(bad)} disparity value(s) not below -{D_MIN} px (first: d={d[bad[0]]:.4f} at index {bad[0]})"
        )
    ref = rig.left
    b = rig.baseline
    z = b * ref.fx / -d
    x = b * (pl[:, 0] - ref.cx) / -d
    y = (pl[:, 1] - ref.cy) * z / ref.fy
    return np.column_stack([x, y, z])


def triangulate(pl, pr, rig: CameraRig) -> np.ndarray:
    """Triangulate one rectified pixel pair; returns (x, y, z) in mm."""
    return triangulate_many(np.reshape(pl, (1, 2)), np.reshape(pr, (1, 2)), rig)[0]


def disparity_for_depth(z, rig: CameraRig):
    """Disparity d = u_r - u_l of a point at depth z."""
    return -rig.baseline * rig.focal / np.asarray(z, dtype=float)


def load_rig(path: str | Path | None = None) -> CameraRig:
    """
    Load a camera rig from JSON.

    Args:
        path: Rig file; defaults to the configured rig

    Returns:
        Validated CameraRig

    Raises:
        ConfigError: If the file is missing or does not validate
    """
    rig_path = Path(path) if path is not None else settings.rig_path
    if not rig_path.exists():
        raise ConfigError(f"Rig file not found: {rig_path}")
    try:
        rig = CameraRig.model_validate_json(rig_path.read_text())
    except ValidationError as e:
        raise ConfigError(f"Invalid rig file {rig_path}: {e}")
    logger.info(f"Loaded rig from {rig_path} (baseline {rig.baseline:.3f} mm, f_l {rig.focal:.2f} px)")
    return rig


def project_many(points, rig: CameraRig, distort: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """project() for an (N, 3) array; always returns (N, 2) pixel arrays."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    left, right = project(pts, rig, distort=distort)
    return np.atleast_2d(left), np.atleast_2d(right)


def to_sensor_frame(points, baseline_midpoint: float, marker_depth: float) -> np.ndarray:
    """
    World points to the sensor frame: origin on the optical axis midway
    between the cameras at the rest marker depth, z towards the cameras.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    return np.column_stack([pts[:, 0] - baseline_midpoint, -pts[:, 1], marker_depth - pts[:, 2]])


def from_sensor_frame(points, baseline_midpoint: float, marker_depth: float) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    return np.column_stack([pts[:, 0] + baseline_midpoint, -pts[:, 1], marker_depth - pts[:, 2]])
