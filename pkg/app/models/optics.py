"""
Ray geometry through the air/gel interface and calibration samples.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RayGeometry:
    """
    Two rays crossing the interface at A and B. theta1/theta3 are the angles
    on the air side, theta2/theta4 on the gel side (radians); ac and bc are
    the distances of A and B from the interface point C on the optical axis.
    """
    theta1: float
    theta2: float
    theta3: float
    theta4: float
    ac: float = 1.0
    bc: float = 1.1

    def __post_init__(self):
        for name in ("theta1", "theta2", "theta3", "theta4"):
            value = getattr(self, name)
            if not 0.0 < value < 0.5 * np.pi:
                raise ValueError(f"{name} must lie in (0, pi/2), got {value}")
        if self.ac <= 0 or self.bc <= 0:
            raise ValueError(f"|AC| and |BC| must be positive, got {self.ac}, {self.bc}")

    @classmethod
    def from_angles_deg(cls, theta2: float, theta4: float, relative_index: float, ac: float = 1.0, bc: float = 1.1) -> "RayGeometry":
        """Build from the gel-side angles in degrees; air-side angles follow from Snell's law."""
        t2, t4 = np.radians(theta2), np.radians(theta4)
        s1 = relative_index * np.sin(t2)
        s3 = relative_index * np.sin(t4)
        if s1 >= 1.0 or s3 >= 1.0:
            raise ValueError(f"total internal reflection at theta2={theta2}, theta4={theta4}")
        return cls(float(np.arcsin(s1)), float(t2), float(np.arcsin(s3)), float(t4), ac, bc)


@dataclass(frozen=True)
class DisplacementPair:
    """True marker displacement |P1 P2| and its observed (refracted) counterpart, in mm"""
    true_disp: float
    observed_disp: float
    trial: int = 0
    step_index: int = 0

    def __post_init__(self):
        if self.true_disp < 0 or self.observed_disp < 0:
            raise ValueError(f"displacements must be non-negative, got {self.true_disp}, {self.observed_disp}")
