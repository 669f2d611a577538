from datetime import datetime, timezone
from pathlib import Path

from pydantic import BaseModel, Field, model_validator

from .sensor import DetectorSettings, PatternSpec, RefractionParams, SkinParams, StitchParams


class PipelineConfig(BaseModel):
    """Everything the inverse pipeline needs besides the frames themselves"""
    rig_path: Path | None = None
    skin: SkinParams = Field(default_factory=SkinParams)
    refraction: RefractionParams = Field(default_factory=RefractionParams)
    calibration_path: Path | None = None
    detector: DetectorSettings = Field(default_factory=DetectorSettings)
    stitch: StitchParams = Field(default_factory=StitchParams)
    output_dir: Path = Path("output")
    patch_spacing: float = Field(default=0.25, gt=0)

    @model_validator(mode="after")
    def check_files(self) -> "PipelineConfig":
        for name in ("rig_path", "calibration_path"):
            path = getattr(self, name)
            if path is not None and not Path(path).exists():
                raise ValueError(f"{name} does not exist: {path}")
        return self

    @property
    def pattern(self) -> PatternSpec:
        return self.skin.pattern


class CalibrationResult(BaseModel):
    n_gel: float = Field(gt=0)
    n_air: float = 1.00027
    residual_rms: float = Field(ge=0)
    n_pairs: int
    trials: int = 1
    timestamp: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))

    def to_params(self) -> RefractionParams:
        return RefractionParams(n_gel=self.n_gel, n_air=self.n_air)


class ProfileBin(BaseModel):
    r_low: float
    r_high: float
    error: float | None = None
    curvature: float | None = None
    samples: int = 0


class EvaluationSummary(BaseModel):
    truth_kind: str
    rms: float | None = None
    max_error: float | None = None
    upper_rms: float | None = None
    valley_gap: float | None = None
    profile: list[ProfileBin] = Field(default_factory=list)
    samples: int = 0
