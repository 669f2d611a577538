"""
Pydantic schemas for sensor-side parameters: marker pattern, skin,
refraction, blob detector and stitching.
"""

from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class PatternKind(str, Enum):
    """Marker layouts supported by the ring coder"""
    CIRCULAR = "circular"
    HEXAGON = "hexagon"
    SQUARE = "square"


def expected_count(kind: PatternKind, layers: int) -> int:
    """Marker count of a complete pattern with `layers` rings (centre included)."""
    if kind == PatternKind.SQUARE:
        return (2 * layers - 1) ** 2
    return 3 * layers * (layers - 1) + 1


class PatternSpec(BaseModel):
    """Ring-coding parameters: reciprocal links per internal marker and layer count"""
    kind: PatternKind = PatternKind.HEXAGON
    l: int = 12
    m: int = Field(default=7, ge=1)
    expected_count: int | None = None

    model_config = ConfigDict(frozen=True)

    @field_validator("l")
    @classmethod
    def check_links(cls, value: int) -> int:
        if value not in (12, 16):
            raise ValueError(f"links per internal marker must be 12 or 16, got {value}")
        return value

    @model_validator(mode="after")
    def fill_count(self) -> "PatternSpec":
        if self.expected_count is None:
            object.__setattr__(self, "expected_count", expected_count(self.kind, self.m))
        return self

    @property
    def neighbours(self) -> int:
        """Geometric neighbours of an internal marker (links are counted both ways)."""
        return self.l // 2


# Link/layer table for the three skin modules
PATTERN_TABLE: dict[PatternKind, PatternSpec] = {
    PatternKind.CIRCULAR: PatternSpec(kind=PatternKind.CIRCULAR, l=12, m=9),
    PatternKind.HEXAGON: PatternSpec(kind=PatternKind.HEXAGON, l=12, m=7),
    PatternKind.SQUARE: PatternSpec(kind=PatternKind.SQUARE, l=16, m=6),
}


class SkinParams(BaseModel):
    """Pin height H, skin thickness T and marker pitch, all in mm"""
    pin_height: float = Field(default=1.5, gt=0)
    skin_thickness: float = Field(default=0.5, gt=0)
    marker_pitch: float = Field(default=2.54, gt=0)
    pattern: PatternSpec = Field(default_factory=lambda: PATTERN_TABLE[PatternKind.HEXAGON])

    model_config = ConfigDict(frozen=True)

    @property
    def offset(self) -> float:
        """Marker-to-skin distance H + T."""
        return self.pin_height + self.skin_thickness


class RefractionParams(BaseModel):
    n_gel: float = Field(default=1.51, ge=1.0)
    n_air: float = Field(default=1.00027, ge=1.0)

    model_config = ConfigDict(frozen=True)

    @property
    def relative_index(self) -> float:
        return self.n_gel / self.n_air


class DetectorSettings(BaseModel):
    """Determinant-of-Hessian blob detector settings (scales in pixels)"""
    sigma_min: float | None = Field(default=None, gt=0)
    sigma_max: float | None = Field(default=None, gt=0)
    num_scales: int = Field(default=5, ge=2)
    relative_threshold: float = Field(default=0.1, gt=0, lt=1)
    absolute_floor: float = Field(default=1e-9, ge=0)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def check_range(self) -> "DetectorSettings":
        if self.sigma_min is not None and self.sigma_max is not None and self.sigma_min >= self.sigma_max:
            raise ValueError(f"sigma_min ({self.sigma_min}) must be below sigma_max ({self.sigma_max})")
        return self

    def scale_range(self, marker_radius_px: float) -> tuple[float, float]:
        """Explicit range if configured, else [0.5, 2] times the projected marker radius."""
        low = self.sigma_min if self.sigma_min is not None else 0.5 * marker_radius_px
        high = self.sigma_max if self.sigma_max is not None else 2.0 * marker_radius_px
        return (low, high)


class StitchParams(BaseModel):
    overlap_threshold: float = Field(default=0.6, gt=0)
    mollifier_epsilon: float = Field(default=0.25, gt=0)
    raster_resolution: float = Field(default=0.25, gt=0)
    # Resolution used when the raster is mollified (must resolve the kernel)
    mollify_resolution: float = Field(default=0.125, gt=0)
    # Cap and tolerance of the boundary rescaling of the mollifier
    sinkhorn_max_iter: int = Field(default=1000, ge=1)
    sinkhorn_tol: float = Field(default=1e-12, gt=0)

    model_config = ConfigDict(frozen=True)
