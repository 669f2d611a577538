"""
Reconstruction error metrics against analytic object surfaces.

A reconstruction is either a SurfaceModel (evaluated on samples inside its
footprint) or an (N, 3) point set such as a merged scan. Both live in the
global frame.
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from app.exceptions import PipelineError
from app.models.marker import DisparityFrame, StereoObservation
from app.models.objects import GaussianSurface, ObjectSurface, SineSurface
from app.models.surface import SurfaceModel
from app.schemas.pipeline import EvaluationSummary, ProfileBin

logger = logging.getLogger(__name__)

DEFAULT_SPACING = 0.25
DEFAULT_BIN_WIDTH = 1.0


class FootprintMismatch(PipelineError):
    """Raised when a reconstruction has no samples on the evaluated support"""
    pass


@dataclass(frozen=True, eq=False)
class ErrorProfile:
    """
    Mean absolute error per bin. `edges` has one more entry than `error`;
    bins without samples hold NaN and are reported as absent.
    """
    edges: np.ndarray
    error: np.ndarray
    curvature: np.ndarray | None
    counts: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def present(self) -> np.ndarray:
        return self.counts > 0

    def to_bins(self) -> list[ProfileBin]:
        bins = []
        for k in range(len(self.error)):
            curvature = None if self.curvature is None else float(self.curvature[k])
            error = float(self.error[k]) if self.present[k] else None
            bins.append(ProfileBin(r_low=float(self.edges[k]), r_high=float(self.edges[k + 1]), error=error, curvature=curvature, samples=int(self.counts[k])))
        return bins

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "r_low": self.edges[:-1],
                "r_high": self.edges[1:],
                "error_mm": self.error,
                "curvature_per_mm": self.curvature if self.curvature is not None else np.full(len(self.error), np.nan),
                "samples": self.counts,
            }
        )


def mean_curvature_gaussian(r, h: float, sigma2: float) -> np.ndarray:
    """
    Mean curvature of z = h exp(-r^2 / 2 sigma2), signed positive on the
    cap; equals h / sigma2 at the apex.
    """
    r = np.asarray(r, dtype=float)
    f = h * np.exp(-(r ** 2) / (2.0 * sigma2))
    slope = -r / sigma2 * f
    second = (r ** 2 / sigma2 ** 2 - 1.0 / sigma2) * f
    # f'(r) / r without the r = 0 singularity
    slope_over_r = -f / sigma2
    w = 1.0 + slope ** 2
    return -0.5 * (second / w ** 1.5 + slope_over_r / np.sqrt(w))


def _samples(recon, spacing: float) -> np.ndarray:
    if isinstance(recon, SurfaceModel):
        return recon.sample_grid(spacing)
    pts = np.asarray(recon, dtype=float).reshape(-1, 3)
    return pts[np.all(np.isfinite(pts), axis=1)]


def _restrict(pts: np.ndarray, region: tuple[float, float, float, float] | None) -> np.ndarray:
    if region is None:
        return pts
    xmin, xmax, ymin, ymax = region
    inside = (pts[:, 0] >= xmin) & (pts[:, 0] <= xmax) & (pts[:, 1] >= ymin) & (pts[:, 1] <= ymax)
    return pts[inside]


def _residuals(recon, truth: ObjectSurface, spacing: float, region=None) -> tuple[np.ndarray, np.ndarray]:
    pts = _restrict(_samples(recon, spacing), region)
    if len(pts) == 0:
        raise FootprintMismatch("reconstruction has no samples on the evaluated support")
    return pts, pts[:, 2] - truth.height(pts[:, 0], pts[:, 1])


def radial_error(recon, truth: ObjectSurface, bins=None, spacing: float = DEFAULT_SPACING) -> ErrorProfile:
    """
    Mean |recon - truth| per radial bin about the truth centre.

    Args:
        recon: SurfaceModel or (N, 3) points in the global frame
        truth: Object surface; Gaussian truths get their mean curvature
            attached per bin
        bins: Monotone bin edges in mm, or None for 1 mm bins out to the
            farthest sample
        spacing: Sample spacing used for SurfaceModel reconstructions

    Returns:
        ErrorProfile; empty bins are absent (NaN error, zero count)
    """
    pts, residual = _residuals(recon, truth, spacing)
    cx, cy = (truth.cx, truth.cy) if isinstance(truth, GaussianSurface) else (0.0, 0.0)
    r = np.hypot(pts[:, 0] - cx, pts[:, 1] - cy)

    if bins is None:
        edges = np.arange(0.0, r.max() + DEFAULT_BIN_WIDTH, DEFAULT_BIN_WIDTH)
        if len(edges) < 2:
            edges = np.array([0.0, DEFAULT_BIN_WIDTH])
    else:
        edges = np.asarray(bins, dtype=float)
        if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
            raise ValueError("bins must be a strictly increasing sequence of at least two edges")

    which = np.digitize(r, edges) - 1
    keep = (which >= 0) & (which < len(edges) - 1)
    frame = pd.DataFrame({"bin": which[keep], "error": np.abs(residual[keep])})
    stats = frame.groupby("bin")["error"].agg(["mean", "size"])

    error = np.full(len(edges) - 1, np.nan)
    counts = np.zeros(len(edges) - 1, dtype=int)
    error[stats.index.to_numpy()] = stats["mean"].to_numpy()
    counts[stats.index.to_numpy()] = stats["size"].to_numpy()

    curvature = None
    if isinstance(truth, GaussianSurface):
        curvature = mean_curvature_gaussian(0.5 * (edges[:-1] + edges[1:]), truth.height_mm, truth.sigma2)
    absent = int((counts == 0).sum())
    if absent:
        logger.debug(f"Radial profile has {absent} empty bin(s) out of {len(counts)}")
    return ErrorProfile(edges=edges, error=error, curvature=curvature, counts=counts)


def aggregate_profiles(profiles: list[ErrorProfile]) -> ErrorProfile:
    """
    Average the bin errors of repeated measurements (e.g. rotated presses).
    A bin is absent only if it is absent in every profile.
    """
    if not profiles:
        raise ValueError("aggregate_profiles needs at least one profile")
    edges = profiles[0].edges
    for profile in profiles[1:]:
        if profile.edges.shape != edges.shape or not np.allclose(profile.edges, edges):
            raise ValueError("profiles must share the same bin edges")
    stacked = np.vstack([p.error for p in profiles])
    counts = np.vstack([p.counts for p in profiles]).sum(axis=0)
    present = ~np.isnan(stacked)
    hits = present.sum(axis=0)
    error = np.full(len(edges) - 1, np.nan)
    error[hits > 0] = np.where(present, stacked, 0.0).sum(axis=0)[hits > 0] / hits[hits > 0]
    return ErrorProfile(edges=edges, error=error, curvature=profiles[0].curvature, counts=counts)


def sine_errors(recon, truth: SineSurface, spacing: float = DEFAULT_SPACING) -> tuple[float, float]:
    """
    Upper-surface RMS over truth z > 0 and the valley gap
    min(recon) - min(truth), taken per period and averaged.

    Returns:
        (upper_rms, valley_gap) in mm; a term with no support is NaN
    """
    if not isinstance(truth, SineSurface):
        raise ValueError(f"sine_errors needs a sine truth surface, got {truth.kind}")
    pts, residual = _residuals(recon, truth, spacing)
    true_z = pts[:, 2] - residual

    upper = true_z > 0
    upper_rms = float(np.sqrt(np.mean(residual[upper] ** 2))) if upper.any() else float("nan")

    period = np.floor(pts[:, 0] / truth.period).astype(int)
    frame = pd.DataFrame({"period": period, "recon": pts[:, 2], "truth": true_z})
    frame = frame[frame.groupby("period")["truth"].transform("min") < 0]
    if frame.empty:
        valley_gap = float("nan")
    else:
        lows = frame.groupby("period").agg(recon=("recon", "min"), truth=("truth", "min"))
        valley_gap = float((lows["recon"] - lows["truth"]).mean())
    return upper_rms, valley_gap


def surface_rms(recon, truth: ObjectSurface, region: tuple[float, float, float, float] | None = None, spacing: float = DEFAULT_SPACING) -> float:
    """RMS of recon - truth over the sampled support, optionally inside (xmin, xmax, ymin, ymax)."""
    _, residual = _residuals(recon, truth, spacing, region)
    return float(np.sqrt(np.mean(residual ** 2)))


def evaluate(recon, truth: ObjectSurface, bins=None, spacing: float = DEFAULT_SPACING) -> tuple[EvaluationSummary, ErrorProfile | None]:
    """
    Metrics matching the truth kind: radial profile for Gaussian truths,
    sine errors for sine truths and plain RMS for everything else.
    """
    pts, residual = _residuals(recon, truth, spacing)
    summary = EvaluationSummary(
        truth_kind=truth.kind,
        rms=float(np.sqrt(np.mean(residual ** 2))),
        max_error=float(np.abs(residual).max()),
        samples=len(pts),
    )
    profile = None
    if isinstance(truth, GaussianSurface):
        profile = radial_error(pts, truth, bins)
        summary.profile = profile.to_bins()
    elif isinstance(truth, SineSurface):
        summary.upper_rms, summary.valley_gap = sine_errors(pts, truth)
    logger.info(f"Evaluated {len(pts)} samples against {truth.kind} truth: RMS {summary.rms:.4f} mm")
    return summary, profile


def stereo_mismatches(frame: DisparityFrame, obs: StereoObservation) -> int:
    """
    Coded stereo pairs whose left and right pixels belong to different
    simulated markers. Each coded pixel is located by its nearest row in
    the observation.
    """
    left_rows = cKDTree(obs.left).query(frame.left)[1]
    right_rows = cKDTree(obs.right).query(frame.right)[1]
    return int(np.sum(obs.marker_ids[left_rows] != obs.marker_ids[right_rows]))
