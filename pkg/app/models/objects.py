"""
Ground-truth object surfaces z = g(x, y) used by the simulator and the
evaluation metrics.
"""

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator


class ObjectSurface:
    """Height field with gradient access. Subclasses vectorise over x, y arrays."""
    kind = "object"

    def height(self, x, y) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def normal(self, x, y) -> np.ndarray:
        """Unit normals pointing to +z, shape (..., 3)."""
        gx, gy = self.gradient(x, y)
        n = np.stack([-gx, -gy, np.ones_like(gx)], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)


@dataclass(frozen=True)
class FlatSurface(ObjectSurface):
    level: float = 0.0
    kind = "flat"

    def height(self, x, y):
        return np.full(np.broadcast(x, y).shape, self.level, dtype=float)

    def gradient(self, x, y):
        shape = np.broadcast(x, y).shape
        return np.zeros(shape), np.zeros(shape)


@dataclass(frozen=True)
class GaussianSurface(ObjectSurface):
    height_mm: float = 5.0
    sigma2: float = 50.0
    cx: float = 0.0
    cy: float = 0.0
    kind = "gaussian"

    def radius(self, x, y):
        return np.hypot(np.asarray(x, dtype=float) - self.cx, np.asarray(y, dtype=float) - self.cy)

    def height(self, x, y):
        dx = np.asarray(x, dtype=float) - self.cx
        dy = np.asarray(y, dtype=float) - self.cy
        return self.height_mm * np.exp(-(dx ** 2 + dy ** 2) / (2.0 * self.sigma2))

    def gradient(self, x, y):
        dx = np.asarray(x, dtype=float) - self.cx
        dy = np.asarray(y, dtype=float) - self.cy
        z = self.height(x, y)
        return -dx / self.sigma2 * z, -dy / self.sigma2 * z


@dataclass(frozen=True)
class SineSurface(ObjectSurface):
    amplitude: float = 2.5
    omega: float = np.pi / 15
    kind = "sine"

    @property
    def period(self) -> float:
        return 2.0 * np.pi / self.omega

    def height(self, x, y):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.amplitude * np.sin(self.omega * x), np.broadcast(x, y).shape).copy()

    def gradient(self, x, y):
        x = np.asarray(x, dtype=float)
        shape = np.broadcast(x, y).shape
        gx = np.broadcast_to(self.amplitude * self.omega * np.cos(self.omega * x), shape).copy()
        return gx, np.zeros(shape)


class HeightmapSurface(ObjectSurface):
    """
    Bilinear heightmap. grid[row, col] is the height at
    (origin_x + col * resolution, origin_y + row * resolution).
    """
    kind = "heightmap"

    def __init__(self, grid: np.ndarray, resolution: float, origin: tuple[float, float] = (0.0, 0.0)):
        self.grid = np.asarray(grid, dtype=float)
        self.resolution = float(resolution)
        self.origin = (float(origin[0]), float(origin[1]))
        rows, cols = self.grid.shape
        self.xs = self.origin[0] + np.arange(cols) * self.resolution
        self.ys = self.origin[1] + np.arange(rows) * self.resolution
        gy, gx = np.gradient(self.grid, self.resolution)
        options = dict(method="linear", bounds_error=False, fill_value=None)
        self._height = RegularGridInterpolator((self.ys, self.xs), self.grid, **options)
        self._gx = RegularGridInterpolator((self.ys, self.xs), gx, **options)
        self._gy = RegularGridInterpolator((self.ys, self.xs), gy, **options)

    @property
    def extent(self) -> tuple[float, float, float, float]:
        return (self.xs[0], self.xs[-1], self.ys[0], self.ys[-1])

    def _query(self, interpolator, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        pts = np.stack([y.ravel(), x.ravel()], axis=-1)
        return interpolator(pts).reshape(x.shape)

    def height(self, x, y):
        return self._query(self._height, x, y)

    def gradient(self, x, y):
        return self._query(self._gx, x, y), self._query(self._gy, x, y)
