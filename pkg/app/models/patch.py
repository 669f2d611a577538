"""
Contact patches, merged surfaces and raster height grids.
"""

from dataclasses import dataclass, field

import numpy as np

from app.schemas.scene import PatchPose


def yaw_matrix(yaw_deg: float) -> np.ndarray:
    c, s = np.cos(np.radians(yaw_deg)), np.sin(np.radians(yaw_deg))
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def pose_apply(points: np.ndarray, pose: PatchPose) -> np.ndarray:
    """Sensor frame points (N, 3) to the global frame."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    return points @ yaw_matrix(pose.yaw_deg).T + np.asarray(pose.translation, dtype=float)


def pose_invert(points: np.ndarray, pose: PatchPose) -> np.ndarray:
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    return (points - np.asarray(pose.translation, dtype=float)) @ yaw_matrix(pose.yaw_deg)


@dataclass(eq=False)
class ContactPatch:
    contact_id: int
    points: np.ndarray
    pose: PatchPose = field(default_factory=PatchPose)
    normals: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if len(self.points) == 0:
            raise ValueError(f"contact patch {self.contact_id} has no points")
        if not np.all(np.isfinite(self.points)):
            raise ValueError(f"contact patch {self.contact_id} has non-finite points")

    def __len__(self) -> int:
        return len(self.points)


@dataclass(eq=False)
class HeightGrid:
    """
    Raster heights; heights[row, col] belongs to the cell centred at
    (origin_x + col * resolution, origin_y + row * resolution).
    Cells where `mask` is False are absent.
    """
    heights: np.ndarray
    mask: np.ndarray
    origin: tuple[float, float]
    resolution: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.heights.shape

    @property
    def occupied(self) -> int:
        return int(self.mask.sum())

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        rows, cols = self.heights.shape
        xs = self.origin[0] + np.arange(cols) * self.resolution
        ys = self.origin[1] + np.arange(rows) * self.resolution
        return np.meshgrid(xs, ys)

    def to_points(self) -> np.ndarray:
        gx, gy = self.cell_centers()
        return np.column_stack([gx[self.mask], gy[self.mask], self.heights[self.mask]])

    def occupied_mean(self) -> float:
        return float(self.heights[self.mask].mean()) if self.occupied else float("nan")


@dataclass(eq=False)
class GlobalSurface:
    """Merged points R_new with per-point provenance, optionally rasterized and smoothed"""
    points: np.ndarray
    contact_ids: np.ndarray
    grid: HeightGrid | None = None

    def __len__(self) -> int:
        return len(self.points)
