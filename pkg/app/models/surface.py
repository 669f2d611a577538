"""
Surface models z = f(x, y) and oriented point sets.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay
from scipy.spatial.distance import cdist


def tps_kernel(r: np.ndarray) -> np.ndarray:
    """Thin-plate kernel r^2 log r, zero at r = 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        out = r ** 2 * np.log(r)
    return np.where(r > 0, out, 0.0)


def tps_kernel_slope(r: np.ndarray) -> np.ndarray:
    """(2 log r + 1); the gradient of r^2 log r is this times (x - x_i)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 2.0 * np.log(r) + 1.0
    return np.where(r > 0, out, 0.0)


@dataclass(frozen=True, eq=False)
class SurfaceModel:
    """
    Thin-plate spline height field with exact linear reproduction.

    Centres are stored relative to `shift` to keep the system well
    conditioned; `weights` are the radial coefficients and `poly` the
    (a0, ax, ay) linear part in shifted coordinates.
    """
    centers: np.ndarray
    weights: np.ndarray
    poly: np.ndarray
    shift: np.ndarray
    values: np.ndarray
    hull: Delaunay | None = field(default=None, compare=False, repr=False)

    def _local(self, xy) -> np.ndarray:
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        return xy[:, :2] - self.shift

    def evaluate(self, xy) -> np.ndarray:
        """Heights at (N, 2) query points."""
        q = self._local(xy)
        r = cdist(q, self.centers)
        return tps_kernel(r) @ self.weights + self.poly[0] + q @ self.poly[1:]

    def gradient(self, xy) -> np.ndarray:
        """(N, 2) array of (df/dx, df/dy)."""
        q = self._local(xy)
        r = cdist(q, self.centers)
        slope = tps_kernel_slope(r) * self.weights[None, :]
        gx = (slope * (q[:, 0:1] - self.centers[None, :, 0])).sum(axis=1) + self.poly[1]
        gy = (slope * (q[:, 1:2] - self.centers[None, :, 1])).sum(axis=1) + self.poly[2]
        return np.stack([gx, gy], axis=-1)

    def __call__(self, x, y) -> np.ndarray:
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return self.evaluate(np.stack([x.ravel(), y.ravel()], axis=-1)).reshape(x.shape)

    @property
    def points(self) -> np.ndarray:
        """Defining points in world coordinates, (N, 3)."""
        return np.column_stack([self.centers + self.shift, self.values])

    def footprint_contains(self, xy) -> np.ndarray:
        xy = np.atleast_2d(np.asarray(xy, dtype=float))[:, :2]
        if self.hull is None:
            return np.ones(len(xy), dtype=bool)
        return self.hull.find_simplex(xy) >= 0

    def hull_vertices(self) -> np.ndarray:
        if self.hull is None:
            return np.zeros(0, dtype=int)
        return np.unique(self.hull.convex_hull.ravel())

    def sample_grid(self, spacing: float) -> np.ndarray:
        """Regular samples inside the footprint, (M, 3)."""
        xy = self.centers + self.shift
        lo = np.floor(xy.min(axis=0) / spacing) * spacing
        hi = xy.max(axis=0)
        xs = np.arange(lo[0], hi[0] + 0.5 * spacing, spacing)
        ys = np.arange(lo[1], hi[1] + 0.5 * spacing, spacing)
        gx, gy = np.meshgrid(xs, ys)
        grid = np.column_stack([gx.ravel(), gy.ravel()])
        grid = grid[self.footprint_contains(grid)]
        return np.column_stack([grid, self.evaluate(grid)]) if len(grid) else np.zeros((0, 3))


@dataclass(frozen=True, eq=False)
class OrientedPoints:
    """Positions (N, 3) with unit normals (N, 3); `boundary` flags extrapolated normals"""
    positions: np.ndarray
    normals: np.ndarray
    boundary: np.ndarray

    def __len__(self) -> int:
        return len(self.positions)
