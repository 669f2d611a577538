"""
Pydantic schemas for simulated scenes, scan plans and scan manifests.
"""

from pathlib import Path
from typing import Annotated, Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .sensor import PatternKind, RefractionParams, SkinParams


class GaussianObject(BaseModel):
    """z = h exp(-((x-x0)^2 + (y-y0)^2) / 2 sigma2)"""
    kind: Literal["gaussian"] = "gaussian"
    height: float = 5.0
    sigma2: float = Field(default=50.0, gt=0)
    center: tuple[float, float] = (0.0, 0.0)


class SineObject(BaseModel):
    """z = amplitude sin(omega x)"""
    kind: Literal["sine"] = "sine"
    amplitude: float = 2.5
    omega: float = Field(gt=0)


class FlatObject(BaseModel):
    kind: Literal["flat"] = "flat"
    height: float = 0.0


class HeightmapObject(BaseModel):
    """Heightmap ingested from a 16-bit PNG or CSV grid plus its sidecar"""
    kind: Literal["heightmap"] = "heightmap"
    path: Path
    sidecar: Path | None = None


ObjectSpec = Annotated[
    GaussianObject | SineObject | FlatObject | HeightmapObject,
    Field(discriminator="kind"),
]


class PressSpec(BaseModel):
    """One tap of the sensor; heights in the object (global) frame"""
    center: tuple[float, float] = (0.0, 0.0)
    press_depth: float = Field(default=5.0, ge=0)
    approach: float = 5.0
    rotation_deg: float = 0.0
    slip: tuple[float, float] = (0.0, 0.0)

    @property
    def plane_height(self) -> float:
        """Height of the undeformed skin plane at the bottom of the press."""
        return self.approach - self.press_depth


class ScanPlan(BaseModel):
    presses: list[PressSpec] = Field(min_length=1)
    step: float = Field(default=15.0, gt=0)


class PatchPose(BaseModel):
    """Sensor frame to global frame: yaw about z, then translation (mm)"""
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    yaw_deg: float = 0.0


class SceneConfig(BaseModel):
    name: str = "scene"
    object: ObjectSpec = Field(default_factory=GaussianObject)
    skin: SkinParams = Field(default_factory=SkinParams)
    refraction: RefractionParams = Field(default_factory=RefractionParams)
    plan: ScanPlan = Field(default_factory=lambda: ScanPlan(presses=[PressSpec()]))
    rig_path: Path | None = None
    # Rest depth of the marker plane along the world z axis (mm)
    marker_depth: float = Field(default=50.0, gt=0)
    frame_space: Literal["rectified", "raw"] = "rectified"
    refraction_mode: Literal["scalar", "snell"] = "scalar"
    # Air/acrylic interface depth for the snell trace (mm)
    interface_depth: float = Field(default=40.0, gt=0)
    dome_depth: float | None = None
    lattice_rotation_deg: float = 0.0
    pixel_jitter: float = Field(default=0.0, ge=0)
    image_noise: float = Field(default=0.0, ge=0)
    render: bool = False
    periphery_bias: float = 0.0
    patch_spacing: float = Field(default=0.25, gt=0)

    @model_validator(mode="after")
    def check_interface(self) -> "SceneConfig":
        if self.refraction_mode == "snell" and self.interface_depth >= self.marker_depth:
            raise ValueError("interface_depth must lie between the cameras and the markers")
        return self

    @property
    def pattern_kind(self) -> PatternKind:
        return self.skin.pattern.kind


class PressRecord(BaseModel):
    contact_id: int
    directory: str
    press: PressSpec
    pose: PatchPose


class ScanManifest(BaseModel):
    scene: str
    frame_space: Literal["rectified", "raw"] = "rectified"
    marker_depth: float
    baseline_midpoint: float
    presses: list[PressRecord]


class HeightmapSidecar(BaseModel):
    """Grid geometry for heightmap files: cell (0, 0) sits at `origin`"""
    origin: tuple[float, float] = (0.0, 0.0)
    resolution: float = Field(gt=0)
    z_offset: float = 0.0
    z_scale: float = Field(default=1.0, gt=0)
    shape: tuple[int, int] | None = None
