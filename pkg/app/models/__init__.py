from .marker import (
    Blob,
    CodedFrame,
    CodedMarker,
    DisparityEntry,
    DisparityFrame,
    MarkerMesh,
    StereoObservation,
    TrackStep,
)
from .optics import DisplacementPair, RayGeometry
from .objects import FlatSurface, GaussianSurface, HeightmapSurface, ObjectSurface, SineSurface
from .surface import OrientedPoints, SurfaceModel
from .patch import ContactPatch, GlobalSurface, HeightGrid, pose_apply, pose_invert, yaw_matrix

__all__ = [
    "Blob",
    "CodedFrame",
    "CodedMarker",
    "DisparityEntry",
    "DisparityFrame",
    "MarkerMesh",
    "StereoObservation",
    "TrackStep",
    "DisplacementPair",
    "RayGeometry",
    "FlatSurface",
    "GaussianSurface",
    "HeightmapSurface",
    "ObjectSurface",
    "SineSurface",
    "OrientedPoints",
    "SurfaceModel",
    "ContactPatch",
    "GlobalSurface",
    "HeightGrid",
    "pose_apply",
    "pose_invert",
    "yaw_matrix",
]
