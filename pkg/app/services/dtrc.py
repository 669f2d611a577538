"""
Delaunay ring coding of marker arrays.

Markers are linked into a Delaunay mesh, the edge ring (markers with
fewer than `l` reciprocal links) is peeled off and labelled circularly,
and the mesh is rebuilt on the remaining markers until `m` rings have
been removed. Labels are assigned in (layer, ring_index) order, so the
same marker receives the same id in the left and right images and in
consecutive frames.
"""

import logging

import numpy as np
from scipy.spatial import Delaunay, QhullError, cKDTree

from app.exceptions import PipelineError
from app.models.marker import CodedFrame, CodedMarker, DisparityEntry, DisparityFrame, MarkerMesh, TrackStep
from app.schemas.sensor import PatternSpec

logger = logging.getLogger(__name__)

# Triangles with height below this fraction of their longest edge are slivers
# (collinear rim markers pushed off line by jitter, bowed rims)
SLIVER_RATIO = 0.1


class MeshDegenerate(PipelineError):
    """Raised when the marker centres cannot be triangulated"""
    pass


class RingTopologyError(PipelineError):
    """Raised when the edge markers do not form a single closed ring"""
    pass


class PatternMismatch(PipelineError):
    """Raised when the peel does not reproduce the expected pattern"""
    pass


class MatchCardinalityError(PipelineError):
    """Raised when two coded frames do not carry the same set of ids"""
    pass


def _is_collinear(points: np.ndarray) -> bool:
    centred = points - points.mean(axis=0)
    scale = max(np.abs(centred).max(), 1e-12)
    return np.linalg.matrix_rank(centred / scale, tol=1e-9) < 2


def _add_quad_diagonals(points: np.ndarray, simplices: np.ndarray, neighbours: list[set[int]]) -> None:
    """
    Link the opposite corners of every quad split by a Delaunay diagonal,
    so that grid markers reach their 8 queen-move neighbours.
    """
    opposite: dict[tuple[int, int], list[int]] = {}
    for tri in simplices:
        for k in range(3):
            a, b, c = tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]
            opposite.setdefault((min(a, b), max(a, b)), []).append(c)

    def longest(a: int, b: int, c: int) -> bool:
        ab = np.linalg.norm(points[a] - points[b])
        return ab >= np.linalg.norm(points[a] - points[c]) and ab >= np.linalg.norm(points[b] - points[c])

    for (a, b), others in opposite.items():
        if len(others) != 2:
            continue
        c, d = others
        if not (longest(a, b, c) and longest(a, b, d)):
            continue
        # The new diagonal must cross the old one (convex quad)
        cd = points[d] - points[c]
        side_a = cd[0] * (points[a][1] - points[c][1]) - cd[1] * (points[a][0] - points[c][0])
        side_b = cd[0] * (points[b][1] - points[c][1]) - cd[1] * (points[b][0] - points[c][0])
        if side_a * side_b < 0:
            neighbours[c].add(d)
            neighbours[d].add(c)


def build_mesh(points, spec: PatternSpec) -> MarkerMesh:
    """
    Link marker centres into a mesh.

    Args:
        points: (N, 2) marker centres
        spec: Pattern spec; l = 16 adds the quad diagonals of square grids

    Returns:
        MarkerMesh with symmetric adjacency

    Raises:
        MeshDegenerate: Fewer than 3 points, or collinear/duplicate input
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 3:
        raise MeshDegenerate(f"need at least 3 markers to build a mesh, got {len(pts)}")
    if _is_collinear(pts):
        raise MeshDegenerate("marker centres are collinear")
    try:
        tri = Delaunay(pts)
    except QhullError as e:
        raise MeshDegenerate(f"Delaunay triangulation failed: {str(e)}")
    if len(np.unique(tri.simplices)) != len(pts):
        raise MeshDegenerate("duplicate or coincident marker centres")

    a, b, c = (pts[tri.simplices[:, k]] for k in range(3))
    area = 0.5 * np.abs((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
    longest = np.max([np.hypot(*(b - a).T), np.hypot(*(c - b).T), np.hypot(*(a - c).T)], axis=0)
    simplices = tri.simplices[2.0 * area > SLIVER_RATIO * longest ** 2]

    neighbours: list[set[int]] = [set() for _ in range(len(pts))]
    for s in simplices:
        for i in range(3):
            for j in range(3):
                if i != j:
                    neighbours[s[i]].add(int(s[j]))
    if spec.l == 16:
        _add_quad_diagonals(pts, simplices, neighbours)

    return MarkerMesh(nodes=pts, neighbours=tuple(frozenset(n) for n in neighbours))


def _angular_order(points: np.ndarray, indices: np.ndarray) -> np.ndarray:
    """
    Counter-clockwise order about the centroid.

    The ring starts at the smallest angle >= -pi / n for n nodes, half the
    mean node spacing below the 0 rad ray. A node lying on that ray keeps
    the lead when jitter or disparity nudges it to either side.
    """
    sub = points[indices]
    centre = sub.mean(axis=0)
    lead = np.pi / len(indices)
    angles = np.mod(np.arctan2(sub[:, 1] - centre[1], sub[:, 0] - centre[0]) + lead, 2.0 * np.pi)
    return indices[np.argsort(angles, kind="stable")]


def extract_edge_ring(mesh: MarkerMesh, spec: PatternSpec) -> np.ndarray:
    """
    Ordered ring of edge nodes (link count < l).

    Returns:
        Node indices in circular order

    Raises:
        RingTopologyError: If there are no edge nodes or they do not form
            one closed cycle of the mesh
    """
    counts = mesh.link_counts()
    edge = np.flatnonzero(counts < spec.l)
    if len(edge) == 0:
        raise RingTopologyError("mesh has no edge nodes")
    ring = _angular_order(mesh.nodes, edge)
    if len(ring) >= 2:
        for a, b in zip(ring, np.roll(ring, -1)):
            if len(ring) == 2 and a > b:
                continue
            if not mesh.is_adjacent(int(a), int(b)):
                raise RingTopologyError(
                    f"edge ring of {len(ring)} nodes is not a closed cycle (nodes {a} and {b} are not linked)"
                )
    return ring


def peel_rings(points, spec: PatternSpec) -> list[np.ndarray]:
    """
    Peel exactly `spec.m` rings off the marker set.

    Returns:
        One array of point indices per layer, outermost first

    Raises:
        PatternMismatch: If the peel does not take exactly m layers
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    remaining = np.arange(len(pts))
    rings: list[np.ndarray] = []
    for layer in range(spec.m):
        if len(remaining) == 0:
            raise PatternMismatch(f"markers exhausted after {layer} of {spec.m} layers")
        sub = pts[remaining]
        if len(remaining) < 3 or _is_collinear(sub):
            local = _angular_order(sub, np.arange(len(remaining)))
        else:
            try:
                mesh = build_mesh(sub, spec)
                local = extract_edge_ring(mesh, spec)
            except (MeshDegenerate, RingTopologyError) as e:
                raise PatternMismatch(f"layer {layer}: {str(e)}") from e
        rings.append(remaining[local])
        remaining = np.setdiff1d(remaining, remaining[local], assume_unique=True)
        logger.debug(f"Peeled layer {layer}: {len(local)} markers, {len(remaining)} left")
    if len(remaining):
        raise PatternMismatch(f"{len(remaining)} markers left after {spec.m} layers")
    return rings


def code_frame(points, spec: PatternSpec, frame_id: str = "") -> CodedFrame:
    """
    Assign ring-coded ids to a frame of marker centres.

    Args:
        points: (N, 2) marker centres
        spec: Pattern spec (N must equal spec.expected_count)
        frame_id: Optional label carried into the result

    Returns:
        CodedFrame with ids 0..N-1 in (layer, ring_index) order

    Raises:
        PatternMismatch: Wrong marker count, wrong number of layers or
            leftover markers
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) != spec.expected_count:
        raise PatternMismatch(f"frame {frame_id!r}: {len(pts)} markers detected, pattern expects {spec.expected_count}")
    rings = peel_rings(pts, spec)
    markers = []
    next_id = 0
    for layer, ring in enumerate(rings):
        for ring_index, idx in enumerate(ring):
            markers.append(CodedMarker(id=next_id, u=float(pts[idx, 0]), v=float(pts[idx, 1]), layer=layer, ring_index=ring_index))
            next_id += 1
    return CodedFrame(markers=tuple(markers), frame_id=frame_id)


def match_stereo(left: CodedFrame, right: CodedFrame) -> DisparityFrame:
    """
    Pair left and right markers by id; d = u_r - u_l.

    Raises:
        MatchCardinalityError: If the id sets differ
    """
    lmap, rmap = left.by_id(), right.by_id()
    if set(lmap) != set(rmap) or len(lmap) != len(left) or len(rmap) != len(right):
        raise MatchCardinalityError(
            f"left frame has {len(lmap)} ids, right frame has {len(rmap)}; "
            f"{len(set(lmap) ^ set(rmap))} ids unmatched"
        )
    entries = tuple(
        DisparityEntry(id=i, left=lmap[i].position, right=rmap[i].position, layer=lmap[i].layer, ring_index=lmap[i].ring_index)
        for i in sorted(lmap)
    )
    return DisparityFrame(entries=entries, frame_id=left.frame_id or right.frame_id)


def code_stereo_pair(left_points, right_points, spec: PatternSpec, frame_id: str = "") -> DisparityFrame:
    left = code_frame(left_points, spec, frame_id=f"{frame_id}:left" if frame_id else "left")
    right = code_frame(right_points, spec, frame_id=f"{frame_id}:right" if frame_id else "right")
    disparity = match_stereo(left, right)
    return DisparityFrame(entries=disparity.entries, frame_id=frame_id)


def track(prev: CodedFrame, curr: CodedFrame) -> list[TrackStep]:
    """
    Per-id pixel displacement between two coded frames.

    Raises:
        MatchCardinalityError: If the frames carry different ids
    """
    pmap, cmap = prev.by_id(), curr.by_id()
    if set(pmap) != set(cmap):
        raise MatchCardinalityError(f"cannot track: {len(set(pmap) ^ set(cmap))} ids differ between frames")
    return [
        TrackStep(id=i, displacement=(cmap[i].u - pmap[i].u, cmap[i].v - pmap[i].v))
        for i in sorted(pmap)
    ]


def track_nearest(prev_points, curr_points) -> np.ndarray:
    """
    Spatial nearest-neighbour baseline: for each previous marker, the index
    of the closest current marker.
    """
    curr = np.asarray(curr_points, dtype=float).reshape(-1, 2)
    prev = np.asarray(prev_points, dtype=float).reshape(-1, 2)
    _, idx = cKDTree(curr).query(prev, k=1)
    return np.asarray(idx, dtype=int)
