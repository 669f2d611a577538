"""
Pydantic schemas for the stereo camera rig.

The rig file uses the flat key layout of the calibration export
(fx, fy, cx, cy, k1, k2, p1, p2 per camera, R row-major, t in mm).
"""

import logging
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

logger = logging.getLogger(__name__)

ORTHONORMAL_TOLERANCE = 1e-9
# Published matrices are rounded to four decimals
REPAIRABLE_TOLERANCE = 1e-3


class CameraIntrinsics(BaseModel):
    """Pinhole intrinsics with Brown-Conrady distortion"""
    fx: float = Field(gt=0)
    fy: float = Field(gt=0)
    cx: float
    cy: float
    k1: float = 0.0
    k2: float = 0.0
    p1: float = 0.0
    p2: float = 0.0

    model_config = ConfigDict(frozen=True)

    @property
    def focal_length(self) -> tuple[float, float]:
        return (self.fx, self.fy)

    @property
    def principal_point(self) -> tuple[float, float]:
        return (self.cx, self.cy)

    @property
    def has_distortion(self) -> bool:
        return any(c != 0.0 for c in (self.k1, self.k2, self.p1, self.p2))

    def without_distortion(self) -> "CameraIntrinsics":
        return self.model_copy(update={"k1": 0.0, "k2": 0.0, "p1": 0.0, "p2": 0.0})


def nearest_rotation(matrix: np.ndarray) -> np.ndarray:
    """Project a 3x3 matrix onto SO(3) with the polar decomposition."""
    u, _, vt = np.linalg.svd(matrix)
    rotation = u @ vt
    if np.linalg.det(rotation) < 0:
        u[:, -1] *= -1
        rotation = u @ vt
    return rotation


class CameraRig(BaseModel):
    """
    Stereo pair. `R` and `t` are the pose of the right camera in the
    left camera frame: X_left = R @ X_right + t, t in mm.
    """
    left: CameraIntrinsics
    right: CameraIntrinsics
    R: list[list[float]] = Field(default_factory=lambda: np.eye(3).tolist())
    t: list[float]
    image_width: int = Field(default=640, gt=0)
    image_height: int = Field(default=480, gt=0)

    model_config = ConfigDict(frozen=True)

    @field_validator("R")
    @classmethod
    def check_rotation(cls, value: list[list[float]]) -> list[list[float]]:
        matrix = np.asarray(value, dtype=float)
        if matrix.shape != (3, 3):
            raise ValueError(f"R must be 3x3, got shape {matrix.shape}")
        deviation = np.abs(matrix @ matrix.T - np.eye(3)).max()
        if deviation <= ORTHONORMAL_TOLERANCE and np.linalg.det(matrix) > 0:
            return matrix.tolist()
        if deviation <= REPAIRABLE_TOLERANCE:
            logger.warning(f"Rotation deviates from orthonormal by {deviation:.2e}; projecting onto SO(3)")
            return nearest_rotation(matrix).tolist()
        raise ValueError(f"R is not a rotation (orthonormality error {deviation:.2e})")

    @field_validator("t")
    @classmethod
    def check_translation(cls, value: list[float]) -> list[float]:
        if len(value) != 3:
            raise ValueError(f"t must have 3 components, got {len(value)}")
        if np.linalg.norm(value) <= 0:
            raise ValueError("baseline must be positive")
        return value

    @model_validator(mode="after")
    def check_principal_points(self) -> "CameraRig":
        for name, cam in (("left", self.left), ("right", self.right)):
            if not (0 <= cam.cx <= self.image_width and 0 <= cam.cy <= self.image_height):
                raise ValueError(
                    f"{name} principal point ({cam.cx}, {cam.cy}) outside "
                    f"{self.image_width}x{self.image_height} image"
                )
        return self

    @property
    def rotation(self) -> np.ndarray:
        return np.asarray(self.R, dtype=float)

    @property
    def translation(self) -> np.ndarray:
        return np.asarray(self.t, dtype=float)

    @property
    def baseline(self) -> float:
        return float(np.linalg.norm(self.t))

    @property
    def focal(self) -> float:
        """Reference focal length f_l used by the disparity law."""
        return self.left.fx

    @property
    def rectifying_rotation(self) -> np.ndarray:
        """
        Rotation from the left camera frame into the world frame: x along
        the baseline, z along the mean optical axis.
        """
        e1 = self.translation / self.baseline
        axis = np.array([0.0, 0.0, 1.0]) + self.rotation[:, 2]
        e2 = np.cross(axis, e1)
        e2 /= np.linalg.norm(e2)
        e3 = np.cross(e1, e2)
        return np.vstack([e1, e2, e3])

    @property
    def is_rectified(self) -> bool:
        return bool(np.allclose(self.rectifying_rotation, np.eye(3), atol=1e-12)
                    and np.allclose(self.rotation, np.eye(3), atol=1e-12))

    @classmethod
    def ideal(
        cls,
        baseline: float = 12.5,
        focal: float = 442.37,
        cx: float = 315.67,
        cy: float = 237.97,
        width: int = 640,
        height: int = 480,
    ) -> "CameraRig":
        """Rectified, distortion-free rig with identical intrinsics."""
        cam = CameraIntrinsics(fx=focal, fy=focal, cx=cx, cy=cy)
        return cls(left=cam, right=cam, t=[baseline, 0.0, 0.0], image_width=width, image_height=height)
