"""
Marker-to-skin surface correction.

A thin-plate spline F_m is fitted through the triangulated markers, each
marker is moved against the unit normal of F_m by the pin offset H + T,
and a second spline F_s is fitted through the moved points.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.spatial import Delaunay, QhullError
from scipy.spatial.distance import cdist

from app.exceptions import PipelineError
from app.models.patch import pose_apply
from app.models.surface import OrientedPoints, SurfaceModel, tps_kernel
from app.schemas.scene import PatchPose
from app.schemas.sensor import SkinParams

logger = logging.getLogger(__name__)

MIN_POINTS = 6
FIT_TOLERANCE = 1e-6


class FitDegenerate(PipelineError):
    """Raised when a point configuration cannot define a surface"""
    pass


@dataclass(frozen=True, eq=False)
class SkinReconstruction:
    marker_surface: SurfaceModel
    oriented_markers: OrientedPoints
    skin_points: np.ndarray
    skin_surface: SurfaceModel


def fit_surface(points, smoothing: float = 0.0) -> SurfaceModel:
    """
    Fit a thin-plate spline height field z = f(x, y).

    Args:
        points: (N, 3) points, N >= 6
        smoothing: Regularization added to the kernel diagonal; 0 interpolates

    Returns:
        SurfaceModel reproducing linear fields exactly

    Raises:
        FitDegenerate: Too few points, duplicate (x, y) sites, or sites
            that are collinear
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) < MIN_POINTS:
        raise FitDegenerate(f"need at least {MIN_POINTS} points to fit a surface, got {len(pts)}")
    if not np.all(np.isfinite(pts)):
        raise FitDegenerate("surface points contain non-finite values")

    shift = pts[:, :2].mean(axis=0)
    xy = pts[:, :2] - shift
    z = pts[:, 2]
    extent = max(np.ptp(xy, axis=0).max(), 1e-12)
    if len(np.unique(np.round(xy / extent, 9), axis=0)) != len(xy):
        raise FitDegenerate("duplicate (x, y) sites in surface points")

    poly_basis = np.column_stack([np.ones(len(xy)), xy])
    if np.linalg.matrix_rank(np.column_stack([np.ones(len(xy)), xy / extent]), tol=1e-9) < 3:
        raise FitDegenerate("surface points are collinear in (x, y)")

    n = len(xy)
    kernel = tps_kernel(cdist(xy, xy)) + smoothing * np.eye(n)
    system = np.zeros((n + 3, n + 3))
    system[:n, :n] = kernel
    system[:n, n:] = poly_basis
    system[n:, :n] = poly_basis.T
    rhs = np.concatenate([z, np.zeros(3)])
    try:
        solution = scipy.linalg.solve(system, rhs, assume_a="sym")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as e:
        raise FitDegenerate(f"thin-plate system is singular: {str(e)}")

    try:
        hull = Delaunay(xy + shift)
    except QhullError as e:
        raise FitDegenerate(f"surface footprint is degenerate: {str(e)}")

    model = SurfaceModel(
        centers=xy,
        weights=solution[:n],
        poly=solution[n:],
        shift=shift,
        values=z,
        hull=hull,
    )
    if smoothing == 0.0:
        residual = float(np.max(np.abs(model.evaluate(pts[:, :2]) - z)))
        if residual > FIT_TOLERANCE:
            logger.warning(f"Surface interpolation residual {residual:.2e} mm exceeds {FIT_TOLERANCE:.0e}")
    return model


def surface_normals(s: SurfaceModel, at) -> OrientedPoints:
    """
    Unit normals of F(x, y, z) = f(x, y) - z, oriented to +z.

    Args:
        s: Surface model
        at: (N, 2) or (N, 3) query points; (x, y) positions are used and
            missing z is evaluated on the surface

    Returns:
        OrientedPoints; points outside the footprint hull or on a hull
        vertex are flagged as boundary
    """
    q = np.atleast_2d(np.asarray(at, dtype=float))
    xy = q[:, :2]
    positions = q[:, :3] if q.shape[1] >= 3 else np.column_stack([xy, s.evaluate(xy)])
    grad = s.gradient(xy)
    normals = np.column_stack([-grad[:, 0], -grad[:, 1], np.ones(len(xy))])
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)

    boundary = ~s.footprint_contains(xy)
    hull_sites = s.points[s.hull_vertices(), :2]
    if len(hull_sites):
        scale = max(np.ptp(s.points[:, :2], axis=0).max(), 1.0)
        boundary |= cdist(xy, hull_sites).min(axis=1) < 1e-9 * scale
    return OrientedPoints(positions=positions, normals=normals, boundary=boundary)


def offset_to_skin(pts: OrientedPoints, skin: SkinParams | float) -> np.ndarray:
    """P_s = P - (H + T) N for every oriented point."""
    distance = skin.offset if isinstance(skin, SkinParams) else float(skin)
    return pts.positions - distance * pts.normals


def reconstruct_skin_detailed(marker_points, skin: SkinParams, smoothing: float = 0.0) -> SkinReconstruction:
    marker_surface = fit_surface(marker_points, smoothing=smoothing)
    oriented = surface_normals(marker_surface, np.asarray(marker_points, dtype=float).reshape(-1, 3))
    skin_points = offset_to_skin(oriented, skin)
    skin_surface = fit_surface(skin_points, smoothing=smoothing)
    flagged = int(oriented.boundary.sum())
    logger.debug(f"Reconstructed skin from {len(skin_points)} markers ({flagged} boundary normals)")
    return SkinReconstruction(marker_surface, oriented, skin_points, skin_surface)


def reconstruct_skin(marker_points, skin: SkinParams, smoothing: float = 0.0) -> SurfaceModel:
    """
    Fit F_m, offset the markers along its inverse normals and fit F_s.

    Raises:
        FitDegenerate: If either fit is degenerate
    """
    return reconstruct_skin_detailed(marker_points, skin, smoothing).skin_surface


def sensor_to_global(points, pose: PatchPose) -> np.ndarray:
    """Map sensor-frame points into the global frame with the press pose."""
    return pose_apply(points, pose)
