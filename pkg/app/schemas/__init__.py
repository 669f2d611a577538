from .camera import CameraIntrinsics, CameraRig, nearest_rotation
from .sensor import (
    PATTERN_TABLE,
    DetectorSettings,
    PatternKind,
    PatternSpec,
    RefractionParams,
    SkinParams,
    StitchParams,
    expected_count,
)
from .scene import (
    FlatObject,
    GaussianObject,
    HeightmapObject,
    HeightmapSidecar,
    ObjectSpec,
    PatchPose,
    PressRecord,
    PressSpec,
    ScanManifest,
    ScanPlan,
    SceneConfig,
    SineObject,
)
from .pipeline import CalibrationResult, EvaluationSummary, PipelineConfig, ProfileBin

__all__ = [
    "CameraIntrinsics",
    "CameraRig",
    "nearest_rotation",
    "PATTERN_TABLE",
    "DetectorSettings",
    "PatternKind",
    "PatternSpec",
    "RefractionParams",
    "SkinParams",
    "StitchParams",
    "expected_count",
    "FlatObject",
    "GaussianObject",
    "HeightmapObject",
    "HeightmapSidecar",
    "ObjectSpec",
    "PatchPose",
    "PressRecord",
    "PressSpec",
    "ScanManifest",
    "ScanPlan",
    "SceneConfig",
    "SineObject",
    "CalibrationResult",
    "EvaluationSummary",
    "PipelineConfig",
    "ProfileBin",
]
