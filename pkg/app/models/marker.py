"""
Marker-level domain objects: detected blobs, Delaunay meshes and
ring-coded frames.

Pixel arrays are (N, 2) float arrays of (u, v), u along image columns.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Blob:
    u: float
    v: float
    scale: float
    strength: float

    @property
    def center(self) -> tuple[float, float]:
        return (self.u, self.v)


@dataclass(frozen=True, eq=False)
class MarkerMesh:
    """Marker graph. `links` counts each undirected edge once per endpoint direction."""
    nodes: np.ndarray
    neighbours: tuple[frozenset[int], ...]

    @property
    def size(self) -> int:
        return len(self.nodes)

    def links(self, index: int) -> int:
        return 2 * len(self.neighbours[index])

    def link_counts(self) -> np.ndarray:
        return np.array([2 * len(n) for n in self.neighbours], dtype=int)

    def is_adjacent(self, a: int, b: int) -> bool:
        return b in self.neighbours[a]

    def edges(self) -> set[tuple[int, int]]:
        return {(a, b) for a, nbrs in enumerate(self.neighbours) for b in nbrs if a < b}


@dataclass(frozen=True)
class CodedMarker:
    id: int
    u: float
    v: float
    layer: int
    ring_index: int

    @property
    def position(self) -> tuple[float, float]:
        return (self.u, self.v)


@dataclass(frozen=True)
class CodedFrame:
    """Markers sorted by id; ids are 0..n-1 in (layer, ring_index) order"""
    markers: tuple[CodedMarker, ...]
    frame_id: str = ""

    def __len__(self) -> int:
        return len(self.markers)

    @property
    def ids(self) -> np.ndarray:
        return np.array([m.id for m in self.markers], dtype=int)

    @property
    def positions(self) -> np.ndarray:
        return np.array([[m.u, m.v] for m in self.markers], dtype=float).reshape(-1, 2)

    def by_id(self) -> dict[int, CodedMarker]:
        return {m.id: m for m in self.markers}

    def layer_sizes(self) -> list[int]:
        if not self.markers:
            return []
        sizes = np.bincount([m.layer for m in self.markers])
        return sizes.tolist()


@dataclass(frozen=True)
class DisparityEntry:
    id: int
    left: tuple[float, float]
    right: tuple[float, float]
    layer: int = 0
    ring_index: int = 0

    @property
    def d(self) -> float:
        return self.right[0] - self.left[0]


@dataclass(frozen=True)
class DisparityFrame:
    entries: tuple[DisparityEntry, ...]
    frame_id: str = ""

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def ids(self) -> np.ndarray:
        return np.array([e.id for e in self.entries], dtype=int)

    @property
    def left(self) -> np.ndarray:
        return np.array([e.left for e in self.entries], dtype=float).reshape(-1, 2)

    @property
    def right(self) -> np.ndarray:
        return np.array([e.right for e in self.entries], dtype=float).reshape(-1, 2)

    @property
    def disparities(self) -> np.ndarray:
        return np.array([e.d for e in self.entries], dtype=float)


@dataclass(frozen=True)
class TrackStep:
    id: int
    displacement: tuple[float, float]


@dataclass
class StereoObservation:
    """Pixel frames of one stereo capture plus the simulator's id map (oracle only)"""
    left: np.ndarray
    right: np.ndarray
    marker_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    apparent_points: np.ndarray | None = None
