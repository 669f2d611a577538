"""
Multi-contact stitching: overlap classification, lower-point extraction,
pairwise merging, rasterization and mollifier smoothing.

All patches are in the global frame. Overlap is decided in the (x, y)
plane only.
"""

import logging
from dataclasses import dataclass
from functools import cache

import numpy as np
from scipy.integrate import quad
from scipy.ndimage import convolve
from scipy.spatial import cKDTree

from app.exceptions import PipelineError
from app.models.patch import ContactPatch, GlobalSurface, HeightGrid
from app.schemas.sensor import StitchParams

logger = logging.getLogger(__name__)

DEFAULT_PARAMS = StitchParams()
RASTER_NEIGHBOURS = 8


class KernelUnresolved(PipelineError):
    """Raised when the raster is too coarse to resolve the mollifier"""
    pass


@dataclass(frozen=True, eq=False)
class OverlapSplit:
    """Overlap flags for the points of two patches; each side is an exhaustive, disjoint split"""
    a_overlap: np.ndarray
    b_overlap: np.ndarray

    @property
    def a_nonoverlap(self) -> np.ndarray:
        return ~self.a_overlap

    @property
    def b_nonoverlap(self) -> np.ndarray:
        return ~self.b_overlap

    @property
    def overlap_count(self) -> int:
        return int(self.a_overlap.sum() + self.b_overlap.sum())


def _nearest_xy(source: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    dist, idx = cKDTree(target[:, :2]).query(source[:, :2], k=1)
    return dist, idx


def _split(a: np.ndarray, b: np.ndarray, threshold: float) -> OverlapSplit:
    dist_a, _ = _nearest_xy(a, b)
    dist_b, _ = _nearest_xy(b, a)
    return OverlapSplit(a_overlap=dist_a <= threshold, b_overlap=dist_b <= threshold)


def classify_overlap(a: ContactPatch, b: ContactPatch, p: StitchParams = DEFAULT_PARAMS) -> OverlapSplit:
    """
    Flag each point whose nearest (x, y) neighbour in the other patch lies
    within the overlap threshold.
    """
    split = _split(a.points, b.points, p.overlap_threshold)
    logger.debug(
        f"Contacts {a.contact_id}/{b.contact_id}: {int(split.a_overlap.sum())} + {int(split.b_overlap.sum())} overlap points"
    )
    return split


def _lower_of_pairs(
    a: np.ndarray, a_ids: np.ndarray, b: np.ndarray, b_ids: np.ndarray, split: OverlapSplit
) -> tuple[np.ndarray, np.ndarray]:
    a_idx = np.flatnonzero(split.a_overlap)
    b_idx = np.flatnonzero(split.b_overlap)
    if len(a_idx) == 0 or len(b_idx) == 0:
        return np.zeros((0, 3)), np.zeros(0, dtype=int)

    # Pairs from both directions, deduplicated
    _, nn_ab = _nearest_xy(a[a_idx], b[b_idx])
    _, nn_ba = _nearest_xy(b[b_idx], a[a_idx])
    pairs = np.unique(
        np.vstack([
            np.column_stack([a_idx, b_idx[nn_ab]]),
            np.column_stack([a_idx[nn_ba], b_idx]),
        ]),
        axis=0,
    )
    za, zb = a[pairs[:, 0], 2], b[pairs[:, 1], 2]
    keep_a = (za < zb) | ((za == zb) & (a_ids[pairs[:, 0]] <= b_ids[pairs[:, 1]]))

    winners_a = np.unique(pairs[keep_a, 0])
    winners_b = np.unique(pairs[~keep_a, 1])
    points = np.vstack([a[winners_a], b[winners_b]])
    ids = np.concatenate([a_ids[winners_a], b_ids[winners_b]])
    return points, ids


def extract_contiguous(a: ContactPatch, b: ContactPatch, split: OverlapSplit) -> np.ndarray:
    """
    R_lower: for every cross-patch nearest-neighbour pair of overlap points,
    the member with the lower z (the earlier contact on ties).
    """
    points, _ = _lower_of_pairs(
        a.points, np.full(len(a), a.contact_id), b.points, np.full(len(b), b.contact_id), split
    )
    return points


def _merge_pair(
    a: np.ndarray, a_ids: np.ndarray, b: np.ndarray, b_ids: np.ndarray, p: StitchParams
) -> tuple[np.ndarray, np.ndarray]:
    split = _split(a, b, p.overlap_threshold)
    lower, lower_ids = _lower_of_pairs(a, a_ids, b, b_ids, split)
    points = np.vstack([a[split.a_nonoverlap], b[split.b_nonoverlap], lower])
    ids = np.concatenate([a_ids[split.a_nonoverlap], b_ids[split.b_nonoverlap], lower_ids])
    return points, ids


def merge_patches(patches: list[ContactPatch], p: StitchParams = DEFAULT_PARAMS) -> GlobalSurface:
    """
    Left fold of pairwise merges in contact order: R_new = R_lower and the
    non-overlap points of both sides.
    """
    if not patches:
        raise ValueError("merge_patches needs at least one patch")
    points = patches[0].points.copy()
    ids = np.full(len(points), patches[0].contact_id, dtype=int)
    for patch in patches[1:]:
        before = len(points) + len(patch)
        points, ids = _merge_pair(points, ids, patch.points, np.full(len(patch), patch.contact_id, dtype=int), p)
        logger.debug(f"Merged contact {patch.contact_id}: {before} -> {len(points)} points")
    logger.info(f"Merged {len(patches)} patches into {len(points)} points")
    return GlobalSurface(points=points, contact_ids=ids)


def naive_union(patches: list[ContactPatch]) -> GlobalSurface:
    if not patches:
        raise ValueError("naive_union needs at least one patch")
    points = np.vstack([patch.points for patch in patches])
    ids = np.concatenate([np.full(len(patch), patch.contact_id, dtype=int) for patch in patches])
    return GlobalSurface(points=points, contact_ids=ids)


def rasterize(points, resolution: float, support: float | None = None) -> HeightGrid:
    """
    Inverse-distance-weighted heights on a regular grid anchored at the
    minimum (x, y) of the points. Cells with no point within `support`
    (default: one cell width) are absent.
    """
    if resolution <= 0:
        raise ValueError(f"resolution must be positive, got {resolution}")
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("rasterize needs at least one point")

    origin = pts[:, :2].min(axis=0)
    span = pts[:, :2].max(axis=0) - origin
    cols, rows = (np.floor(span / resolution + 1e-9).astype(int) + 1)
    xs = origin[0] + np.arange(cols) * resolution
    ys = origin[1] + np.arange(rows) * resolution
    gx, gy = np.meshgrid(xs, ys)
    centres = np.column_stack([gx.ravel(), gy.ravel()])

    k = min(RASTER_NEIGHBOURS, len(pts))
    radius = support if support is not None else resolution
    dist, idx = cKDTree(pts[:, :2]).query(centres, k=k, distance_upper_bound=radius)
    dist = dist.reshape(len(centres), k)
    idx = idx.reshape(len(centres), k)
    valid = np.isfinite(dist)
    safe_idx = np.where(valid, idx, 0)
    z = pts[safe_idx, 2]

    exact = valid & (dist < 1e-12)
    with np.errstate(divide="ignore"):
        weights = np.where(valid, 1.0 / np.maximum(dist, 1e-12), 0.0)
    weights = np.where(exact.any(axis=1, keepdims=True), exact.astype(float), weights)
    total = weights.sum(axis=1)
    occupied = total > 0
    heights = np.zeros(len(centres))
    heights[occupied] = (weights[occupied] * z[occupied]).sum(axis=1) / total[occupied]

    grid = HeightGrid(
        heights=heights.reshape(rows, cols),
        mask=occupied.reshape(rows, cols),
        origin=(float(origin[0]), float(origin[1])),
        resolution=float(resolution),
    )
    logger.debug(f"Rasterized {len(pts)} points into {rows}x{cols} cells ({grid.occupied} occupied)")
    return grid


@cache
def mollifier_norm() -> float:
    """I = 2 pi int_0^1 exp(-1 / (1 - rho^2)) rho d rho."""
    value, _ = quad(lambda r: np.exp(-1.0 / (1.0 - r * r)) * r, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13)
    return 2.0 * np.pi * value


def mollifier(r, epsilon: float) -> np.ndarray:
    """phi_eps(r) = eps^-2 phi(r / eps), with phi normalized to unit integral."""
    rho = np.asarray(r, dtype=float) / epsilon
    inside = rho < 1.0
    out = np.zeros_like(rho)
    out[inside] = np.exp(-1.0 / (1.0 - rho[inside] ** 2))
    return out / (mollifier_norm() * epsilon ** 2)


def mollifier_integral(epsilon: float) -> float:
    """Continuous integral of phi_eps over the plane (1 by construction)."""
    value, _ = quad(lambda r: mollifier(r, epsilon) * r, 0.0, epsilon, epsabs=1e-14, epsrel=1e-13)
    return 2.0 * np.pi * value


def mollifier_kernel(epsilon: float, resolution: float) -> np.ndarray:
    """
    Discrete mollifier on a square stencil, normalized to sum 1.

    Raises:
        KernelUnresolved: If resolution > epsilon / 2
    """
    if resolution > 0.5 * epsilon + 1e-12:
        raise KernelUnresolved(
            f"grid resolution {resolution} mm cannot resolve a mollifier of radius {epsilon} mm (need <= {0.5 * epsilon})"
        )
    half = int(np.ceil(epsilon / resolution))
    offsets = np.arange(-half, half + 1) * resolution
    dx, dy = np.meshgrid(offsets, offsets)
    kernel = mollifier(np.hypot(dx, dy), epsilon) * resolution ** 2
    return kernel / kernel.sum()


def _sinkhorn_scaling(kernel: np.ndarray, mask: np.ndarray, max_iter: int, tol: float) -> np.ndarray:
    """Symmetric scaling s with s * K(s) = 1 over the occupied cells."""
    occupied = mask.astype(float)

    def apply(values):
        return convolve(values * occupied, kernel, mode="constant", cval=0.0) * occupied

    scale = occupied.copy()
    for iteration in range(max_iter):
        row_sums = scale * apply(scale)
        err = np.max(np.abs(row_sums[mask] - 1.0)) if mask.any() else 0.0
        if err < tol:
            logger.debug(f"Boundary scaling converged after {iteration} iterations")
            return scale
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(mask, np.sqrt(scale / apply(scale)), 0.0)
    logger.warning(f"Boundary scaling stopped at residual {err:.2e} after {max_iter} iterations")
    return scale


def mollify_grid(
    grid: HeightGrid,
    epsilon: float,
    max_iter: int = DEFAULT_PARAMS.sinkhorn_max_iter,
    tol: float = DEFAULT_PARAMS.sinkhorn_tol,
) -> HeightGrid:
    """
    Convolve occupied cells with phi_eps. Near edges and holes the kernel
    is rescaled over the occupied support so that constants and the
    occupied mean are both preserved.

    The rescaling stops after `max_iter` iterations; if its row sums are
    still further than `tol` from 1 a warning is logged and the last
    scaling is used.
    """
    kernel = mollifier_kernel(epsilon, grid.resolution)
    mask = grid.mask
    scale = _sinkhorn_scaling(kernel, mask, max_iter, tol)
    occupied = mask.astype(float)
    weighted = np.where(mask, scale * grid.heights, 0.0)
    smoothed = scale * convolve(weighted, kernel, mode="constant", cval=0.0) * occupied
    return HeightGrid(heights=np.where(mask, smoothed, 0.0), mask=mask.copy(), origin=grid.origin, resolution=grid.resolution)


def mollify(surface: GlobalSurface, p: StitchParams = DEFAULT_PARAMS) -> GlobalSurface:
    """
    Smooth the rasterized heights of a merged surface with the mollifier.
    Surfaces without a grid are rasterized at `p.mollify_resolution` first.

    Raises:
        KernelUnresolved: If the grid resolution exceeds epsilon / 2
    """
    grid = surface.grid
    if grid is None:
        grid = rasterize(surface.points, p.mollify_resolution, support=max(p.raster_resolution, p.mollify_resolution))
    smoothed = mollify_grid(grid, p.mollifier_epsilon, p.sinkhorn_max_iter, p.sinkhorn_tol)
    return GlobalSurface(points=surface.points, contact_ids=surface.contact_ids, grid=smoothed)


def stitch(patches: list[ContactPatch], p: StitchParams = DEFAULT_PARAMS) -> GlobalSurface:
    """
    merge_patches, rasterize at the mollify resolution, then mollify.
    Cells within one raster cell of a merged point are occupied, so a
    patch sampled at the raster resolution leaves no holes in the finer
    mollify grid.
    """
    merged = merge_patches(patches, p)
    support = max(p.raster_resolution, p.mollify_resolution)
    grid = rasterize(merged.points, p.mollify_resolution, support=support)
    return mollify(GlobalSurface(merged.points, merged.contact_ids, grid), p)


def flatness(points, region: tuple[float, float, float, float] | None = None) -> float:
    """max(z) - min(z), optionally inside (xmin, xmax, ymin, ymax)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if region is not None:
        xmin, xmax, ymin, ymax = region
        inside = (pts[:, 0] >= xmin) & (pts[:, 0] <= xmax) & (pts[:, 1] >= ymin) & (pts[:, 1] <= ymax)
        pts = pts[inside]
    if len(pts) == 0:
        return float("nan")
    return float(pts[:, 2].max() - pts[:, 2].min())
