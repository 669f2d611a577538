"""
Refractive depth correction.

The acrylic board and gel are treated as one transparent body with an
effective index n_gel. A marker displacement |P1 P2| inside the body is
seen by the cameras as a shorter displacement |P1' P2'|; their ratio
approaches n_gel / n_air for small ray angles, and the residual is the
error term E.
"""

import logging

import numpy as np
import pandas as pd
from scipy.optimize import brentq

from app.exceptions import PipelineError
from app.models.optics import DisplacementPair, RayGeometry
from app.schemas.pipeline import CalibrationResult
from app.schemas.sensor import RefractionParams

logger = logging.getLogger(__name__)

SINGULAR_TOL = 1e-12
DEFAULT_PARAMS = RefractionParams()


class SingularGeometry(PipelineError):
    """Raised when the displacement ratio has a vanishing denominator"""
    pass


class DegenerateCalibration(PipelineError):
    """Raised when calibration data cannot determine a refractive index"""
    pass


def snell_angles(theta2, theta4, params: RefractionParams = DEFAULT_PARAMS) -> tuple[np.ndarray, np.ndarray]:
    """
    Air-side angles (theta1, theta3) from the gel-side angles, radians.

    Raises:
        SingularGeometry: On total internal reflection
    """
    s1 = params.relative_index * np.sin(np.asarray(theta2, dtype=float))
    s3 = params.relative_index * np.sin(np.asarray(theta4, dtype=float))
    if np.any(s1 >= 1.0) or np.any(s3 >= 1.0):
        raise SingularGeometry("ray angles exceed the critical angle of the gel/air interface")
    return np.arcsin(s1), np.arcsin(s3)


def _ratio_terms(theta2, theta4, bc_over_ac, params: RefractionParams):
    theta1, theta3 = snell_angles(theta2, theta4, params)
    ac, bc = 1.0, np.asarray(bc_over_ac, dtype=float)
    num = ac * np.sin(theta4) * np.cos(theta2) - bc * np.sin(theta2) * np.cos(theta4)
    den = ac * np.sin(theta4) * np.cos(theta1) - bc * np.sin(theta2) * np.cos(theta3)
    return num, den


def displacement_ratio(g: RayGeometry, params: RefractionParams = DEFAULT_PARAMS) -> float:
    """
    True-to-observed displacement ratio |P1 P2| / |P1' P2'| for one ray pair.

    theta1 and theta3 are recovered from theta2 and theta4 with Snell's law;
    the angles stored on `g` for the air side are not used.

    Raises:
        SingularGeometry: If the denominator magnitude is below 1e-12
    """
    num, den = _ratio_terms(g.theta2, g.theta4, g.bc / g.ac, params)
    if abs(den) < SINGULAR_TOL:
        raise SingularGeometry(
            f"displacement ratio is singular at theta2={np.degrees(g.theta2):.3f} deg, "
            f"theta4={np.degrees(g.theta4):.3f} deg, bc/ac={g.bc / g.ac:.3f}"
        )
    return float(params.relative_index * num / den)


def error_term(g: RayGeometry, params: RefractionParams = DEFAULT_PARAMS) -> float:
    """E such that the displacement ratio equals (n_gel / n_air)(1 + E)."""
    return displacement_ratio(g, params) / params.relative_index - 1.0


def error_surface(theta2_grid, theta4_grid, bc_over_ac: float, params: RefractionParams = DEFAULT_PARAMS) -> np.ndarray:
    """
    Sampled error term over a (theta2, theta4) grid in degrees.

    Returns:
        Array of shape (len(theta2_grid), len(theta4_grid)); singular
        samples are NaN
    """
    t2, t4 = np.meshgrid(np.radians(theta2_grid), np.radians(theta4_grid), indexing="ij")
    num, den = _ratio_terms(t2, t4, bc_over_ac, params)
    with np.errstate(divide="ignore", invalid="ignore"):
        surface = num / den - 1.0
    surface[np.abs(den) < SINGULAR_TOL] = np.nan
    return surface


def correct_depth(z_prime, observed_delta, params: RefractionParams = DEFAULT_PARAMS):
    """z_c = z' + n_gel * observed displacement."""
    return z_prime + params.n_gel * np.asarray(observed_delta, dtype=float)


def apparent_displacement(true_delta, params: RefractionParams = DEFAULT_PARAMS):
    """Observed displacement of a true displacement seen through the gel."""
    return np.asarray(true_delta, dtype=float) / params.n_gel


def average_trials(pairs: list[DisplacementPair]) -> list[DisplacementPair]:
    """Average observed displacements per step across repeated trials."""
    if not pairs:
        return []
    frame = pd.DataFrame(
        [{"step_index": p.step_index, "true": p.true_disp, "observed": p.observed_disp} for p in pairs]
    )
    grouped = frame.groupby("step_index", sort=True).mean()
    return [
        DisplacementPair(true_disp=float(row.true), observed_disp=float(row.observed), trial=0, step_index=int(step))
        for step, row in grouped.iterrows()
    ]


def calibrate_n_gel(data: list[DisplacementPair], n_air: float = DEFAULT_PARAMS.n_air) -> CalibrationResult:
    """
    Fit n_gel as the least-squares slope through the origin of true
    against observed displacements. Pairs of all trials are pooled.

    Raises:
        DegenerateCalibration: Fewer than 2 pairs, or every observed
            displacement is zero
    """
    if len(data) < 2:
        raise DegenerateCalibration(f"need at least 2 displacement pairs, got {len(data)}")
    true = np.array([p.true_disp for p in data], dtype=float)
    observed = np.array([p.observed_disp for p in data], dtype=float)
    denom = float(observed @ observed)
    if denom == 0.0:
        raise DegenerateCalibration("all observed displacements are zero")
    if len(np.unique(observed)) < 2:
        logger.warning("Calibration pairs share a single observed displacement; slope rests on one value")

    slope = float(true @ observed / denom)
    residual = true - slope * observed
    rms = float(np.sqrt(np.mean(residual ** 2)))
    trials = len({p.trial for p in data})
    logger.info(f"Calibrated n_gel={slope:.4f} from {len(data)} pairs over {trials} trial(s), residual RMS {rms:.4f} mm")
    return CalibrationResult(n_gel=slope, n_air=n_air, residual_rms=rms, n_pairs=len(data), trials=trials)


def crossing_point(origin, target, interface_z: float, params: RefractionParams = DEFAULT_PARAMS) -> np.ndarray:
    """
    Point where the refracted ray from `origin` (air side) to `target`
    (gel side) meets the flat interface z = interface_z.

    The crossing satisfies n_air sin(theta_air) = n_gel sin(theta_gel),
    solved with brentq along the horizontal segment between the two points.
    """
    o = np.asarray(origin, dtype=float)
    p = np.asarray(target, dtype=float)
    h1 = interface_z - o[2]
    h2 = p[2] - interface_z
    if h1 <= 0 or h2 <= 0:
        raise SingularGeometry(f"interface z={interface_z} must lie strictly between {o[2]} and {p[2]}")
    offset = p[:2] - o[:2]
    dist = float(np.hypot(*offset))
    if dist < 1e-12:
        return np.array([o[0], o[1], interface_z])

    def snell_residual(s: float) -> float:
        return params.n_air * s / np.hypot(s, h1) - params.n_gel * (dist - s) / np.hypot(dist - s, h2)

    s = brentq(snell_residual, 0.0, dist, xtol=1e-14)
    xy = o[:2] + offset * (s / dist)
    return np.array([xy[0], xy[1], interface_z])


def trace_refracted_pixel(target, camera_center, interface_z: float, params: RefractionParams = DEFAULT_PARAMS) -> np.ndarray:
    """
    Apparent position of a submerged point for one camera: the point on the
    straight camera ray through the interface crossing, at the target depth.
    Projecting it gives the pixel at which the camera sees the target.
    """
    c = np.asarray(camera_center, dtype=float)
    p = np.asarray(target, dtype=float)
    x = crossing_point(c, p, interface_z, params)
    scale = (p[2] - c[2]) / (x[2] - c[2])
    return c + (x - c) * scale


def read_sweep_csv(path) -> list[DisplacementPair]:
    """
    Read a calibration sweep CSV (step_index, true_disp_mm, observed_disp_mm
    and an optional trial column).
    """
    frame = pd.read_csv(path)
    missing = {"step_index", "true_disp_mm", "observed_disp_mm"} - set(frame.columns)
    if missing:
        raise DegenerateCalibration(f"{path}: missing columns {sorted(missing)}")
    if "trial" not in frame.columns:
        frame["trial"] = 0
    return [
        DisplacementPair(
            true_disp=float(row.true_disp_mm),
            observed_disp=float(row.observed_disp_mm),
            trial=int(row.trial),
            step_index=int(row.step_index),
        )
        for row in frame.itertuples(index=False)
    ]


def sweep_frame(pairs: list[DisplacementPair]) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "step_index": [p.step_index for p in pairs],
            "true_disp_mm": [p.true_disp for p in pairs],
            "observed_disp_mm": [p.observed_disp for p in pairs],
            "trial": [p.trial for p in pairs],
        }
    )
