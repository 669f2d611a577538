"""
Sub-pixel marker detection with a scale-normalized Determinant-of-Hessian
blob detector.

Images are 2-D float arrays (rows = v, columns = u) with intensities in
[0, 1]; markers appear as bright spots on a dark background.
"""

import logging
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter, maximum_filter

from app.exceptions import PipelineError
from app.models.marker import Blob
from app.schemas.camera import CameraRig
from app.schemas.sensor import DetectorSettings

logger = logging.getLogger(__name__)

MARKER_DIAMETER_MM = 1.0
DEFAULT_SETTINGS = DetectorSettings()


class MalformedFrame(PipelineError):
    """Raised when an image cannot be used as a (stereo) frame"""
    pass


def check_gray_image(img) -> np.ndarray:
    """Validate and return a float gray image in [0, 1]."""
    arr = np.asarray(img, dtype=float)
    if arr.ndim != 2 or arr.size == 0:
        raise MalformedFrame(f"expected a non-empty 2-D gray image, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise MalformedFrame("image contains non-finite intensities")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise MalformedFrame(f"intensities must lie in [0, 1], got [{arr.min():.3f}, {arr.max():.3f}]")
    return arr


def split_stereo_frame(img) -> tuple[np.ndarray, np.ndarray]:
    """
    Split a side-by-side stereo frame into left and right halves.

    Raises:
        MalformedFrame: If the width is odd
    """
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise MalformedFrame(f"expected a 2-D frame, got shape {arr.shape}")
    width = arr.shape[1]
    if width % 2:
        raise MalformedFrame(f"stereo frame width must be even, got {width}")
    half = width // 2
    return arr[:, :half].copy(), arr[:, half:].copy()


def nominal_marker_radius_px(rig: CameraRig, depth: float, diameter: float = MARKER_DIAMETER_MM) -> float:
    """Projected marker radius in pixels at the given depth."""
    return 0.5 * diameter * rig.focal / depth


def hessian_response(img: np.ndarray, sigma: float) -> np.ndarray:
    """Scale-normalized determinant of Hessian; zero where the blob is dark."""
    lyy = gaussian_filter(img, sigma, order=(2, 0), mode="nearest")
    lxx = gaussian_filter(img, sigma, order=(0, 2), mode="nearest")
    lxy = gaussian_filter(img, sigma, order=(1, 1), mode="nearest")
    response = sigma ** 4 * (lxx * lyy - lxy ** 2)
    # Bright blobs have negative Laplacian
    response[(lxx + lyy) >= 0] = 0.0
    return response


def _subpixel_offset(patch: np.ndarray) -> tuple[float, float]:
    """Peak offset (du, dv) of a 3x3 response patch from a quadratic fit."""
    gu = 0.5 * (patch[1, 2] - patch[1, 0])
    gv = 0.5 * (patch[2, 1] - patch[0, 1])
    huu = patch[1, 2] - 2.0 * patch[1, 1] + patch[1, 0]
    hvv = patch[2, 1] - 2.0 * patch[1, 1] + patch[0, 1]
    huv = 0.25 * (patch[2, 2] - patch[2, 0] - patch[0, 2] + patch[0, 0])
    hessian = np.array([[huu, huv], [huv, hvv]])
    det = np.linalg.det(hessian)
    if det > 0 and huu < 0:
        du, dv = -np.linalg.solve(hessian, [gu, gv])
        if abs(du) <= 1.0 and abs(dv) <= 1.0:
            return float(du), float(dv)
    # Fall back to independent parabolas
    du = -gu / huu if huu < 0 else 0.0
    dv = -gv / hvv if hvv < 0 else 0.0
    return float(np.clip(du, -0.5, 0.5)), float(np.clip(dv, -0.5, 0.5))


def detect_markers(
    img,
    scale_range: tuple[float, float] | None = None,
    threshold: float | None = None,
    detector: DetectorSettings = DEFAULT_SETTINGS,
    marker_radius_px: float = 4.42,
) -> list[Blob]:
    """
    Detect bright circular markers.

    Args:
        img: Gray image in [0, 1]
        scale_range: (sigma_min, sigma_max) in pixels; defaults to the
            detector settings, else to [0.5, 2] x `marker_radius_px`
        threshold: Absolute response threshold; defaults to
            `relative_threshold` times the frame maximum
        detector: Detector settings
        marker_radius_px: Nominal projected marker radius

    Returns:
        Blobs ordered by decreasing strength (empty if nothing qualifies)
    """
    image = check_gray_image(img)
    sigma_min, sigma_max = scale_range if scale_range is not None else detector.scale_range(marker_radius_px)
    if not 0 < sigma_min < sigma_max:
        raise ValueError(f"invalid scale range ({sigma_min}, {sigma_max})")

    sigmas = np.geomspace(sigma_min, sigma_max, detector.num_scales)
    stack = np.stack([hessian_response(image, s) for s in sigmas])
    best = stack.max(axis=0)
    best_scale = stack.argmax(axis=0)

    peak = float(best.max())
    if peak <= detector.absolute_floor:
        logger.debug("No blob response above the absolute floor")
        return []
    cutoff = threshold if threshold is not None else detector.relative_threshold * peak

    is_peak = (best == maximum_filter(best, size=3, mode="constant", cval=0.0)) & (best > cutoff)
    is_peak[[0, -1], :] = False
    is_peak[:, [0, -1]] = False
    rows, cols = np.nonzero(is_peak)
    order = np.argsort(-best[rows, cols], kind="stable")

    accepted: list[Blob] = []
    centres = np.zeros((0, 2))
    radii = np.zeros(0)
    for i in order:
        r, c = rows[i], cols[i]
        k = best_scale[r, c]
        sigma = float(sigmas[k])
        du, dv = _subpixel_offset(stack[k, r - 1:r + 2, c - 1:c + 2])
        u = float(np.clip(c + du, 0, image.shape[1] - 1))
        v = float(np.clip(r + dv, 0, image.shape[0] - 1))
        # Suppress within one blob diameter of a stronger detection
        diameter = 2.0 * np.sqrt(2.0) * sigma
        if len(accepted):
            dist = np.hypot(centres[:, 0] - u, centres[:, 1] - v)
            if np.any(dist < np.maximum(diameter, radii)):
                continue
        accepted.append(Blob(u=u, v=v, scale=sigma, strength=float(best[r, c])))
        centres = np.vstack([centres, [u, v]])
        radii = np.append(radii, diameter)

    logger.debug(f"Detected {len(accepted)} blobs (threshold {cutoff:.3e}, peak {peak:.3e})")
    return accepted


def blobs_to_points(blobs: list[Blob]) -> np.ndarray:
    return np.array([[b.u, b.v] for b in blobs], dtype=float).reshape(-1, 2)


def load_gray_image(path: str | Path) -> np.ndarray:
    """
    Read an 8-bit PNG/PGM (or 16-bit PNG) as floats in [0, 1].

    Raises:
        MalformedFrame: If the file cannot be decoded
    """
    try:
        with Image.open(path) as im:
            if im.mode in ("I;16", "I;16B", "I"):
                data = np.asarray(im, dtype=float) / 65535.0
            else:
                data = np.asarray(im.convert("L"), dtype=float) / 255.0
    except (OSError, ValueError) as e:
        raise MalformedFrame(f"Could not read image {path}: {str(e)}")
    return np.clip(data, 0.0, 1.0)
