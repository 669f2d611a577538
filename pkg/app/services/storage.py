"""
Artifact storage for scenes, patches, calibration results and heightmaps.

Every write goes to a temporary file in the destination directory and is
then moved into place with os.replace, so readers never see a partial
artifact.

PLY support needs open3d, which is imported on first use.
"""

import importlib.util
import json
import logging
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import TypeVar

import numpy as np
import pandas as pd
from PIL import Image
from pydantic import BaseModel

from app.exceptions import PipelineError
from app.models.marker import Blob, DisparityFrame
from app.models.patch import ContactPatch, HeightGrid
from app.schemas.scene import HeightmapSidecar, PatchPose

logger = logging.getLogger(__name__)

ModelT = TypeVar("ModelT", bound=BaseModel)

PNG16_MAX = 65535


class ArtifactError(PipelineError):
    """Raised when an artifact file is missing columns or cannot be decoded"""
    pass


@contextmanager
def atomic_path(path: str | Path):
    """
    Yield a temporary path next to `path`; it replaces `path` when the
    block exits cleanly and is removed otherwise.
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", suffix=".tmp", dir=target.parent)
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def write_text(path: str | Path, text: str) -> Path:
    with atomic_path(path) as tmp:
        tmp.write_text(text)
    return Path(path)


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------

def write_json(path: str | Path, data: BaseModel | dict | list) -> Path:
    """Write a pydantic model or plain JSON data."""
    if isinstance(data, BaseModel):
        text = data.model_dump_json(indent=2)
    else:
        text = json.dumps(data, indent=2)
    return write_text(path, text + "\n")


def read_model(path: str | Path, model: type[ModelT]) -> ModelT:
    """
    Read and validate a JSON file.

    Raises:
        FileNotFoundError: If the file does not exist
        pydantic.ValidationError: If the content does not validate
    """
    return model.model_validate_json(Path(path).read_text())


def read_json(path: str | Path):
    return json.loads(Path(path).read_text())


# ---------------------------------------------------------------------------
# CSV tables
# ---------------------------------------------------------------------------

def write_table(path: str | Path, frame: pd.DataFrame) -> Path:
    with atomic_path(path) as tmp:
        frame.to_csv(tmp, index=False, na_rep="nan")
    return Path(path)


def read_table(path: str | Path, columns: list[str]) -> pd.DataFrame:
    """
    Read a CSV and check that it carries `columns`.

    Raises:
        ArtifactError: If the file is missing, is not CSV or lacks columns
    """
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError:
        raise ArtifactError(f"{path}: not found")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise ArtifactError(f"Could not parse {path}: {str(e)}")
    missing = set(columns) - set(frame.columns)
    if missing:
        raise ArtifactError(f"{path}: missing columns {sorted(missing)}")
    return frame


def write_pixels(path: str | Path, frame) -> Path:
    """Marker pixel frame as u,v rows."""
    pts = np.asarray(frame, dtype=float).reshape(-1, 2)
    return write_table(path, pd.DataFrame({"u": pts[:, 0], "v": pts[:, 1]}))


def read_numeric(path: str | Path, columns: list[str]) -> np.ndarray:
    """
    Raises:
        ArtifactError: If a cell of `columns` is not a number
    """
    frame = read_table(path, columns)
    try:
        return frame[columns].to_numpy(dtype=float)
    except ValueError as e:
        raise ArtifactError(f"{path}: non-numeric values in {columns} ({str(e)})")


def read_pixels(path: str | Path) -> np.ndarray:
    pts = read_numeric(path, ["u", "v"])
    if not np.all(np.isfinite(pts)):
        raise ArtifactError(f"{path}: non-finite marker pixels")
    return pts


def write_points(path: str | Path, points) -> Path:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    return write_table(path, pd.DataFrame({"x": pts[:, 0], "y": pts[:, 1], "z": pts[:, 2]}))


def read_points(path: str | Path) -> np.ndarray:
    return read_numeric(path, ["x", "y", "z"])


def write_detections(path: str | Path, detections: dict[str, list[Blob]]) -> Path:
    """Blobs per frame id as frame_id,u,v,scale,strength rows."""
    rows = [
        {"frame_id": frame_id, "u": b.u, "v": b.v, "scale": b.scale, "strength": b.strength}
        for frame_id, blobs in detections.items()
        for b in blobs
    ]
    frame = pd.DataFrame(rows, columns=["frame_id", "u", "v", "scale", "strength"])
    return write_table(path, frame)


def read_detections(path: str | Path) -> dict[str, list[Blob]]:
    frame = read_table(path, ["frame_id", "u", "v", "scale", "strength"])
    out: dict[str, list[Blob]] = {}
    for row in frame.itertuples(index=False):
        out.setdefault(str(row.frame_id), []).append(Blob(float(row.u), float(row.v), float(row.scale), float(row.strength)))
    return out


def write_disparity(path: str | Path, frame: DisparityFrame) -> Path:
    """Coded stereo matches as id,layer,ring_index,u_l,v_l,u_r,v_r,d rows."""
    table = pd.DataFrame(
        {
            "id": [e.id for e in frame.entries],
            "layer": [e.layer for e in frame.entries],
            "ring_index": [e.ring_index for e in frame.entries],
            "u_l": [e.left[0] for e in frame.entries],
            "v_l": [e.left[1] for e in frame.entries],
            "u_r": [e.right[0] for e in frame.entries],
            "v_r": [e.right[1] for e in frame.entries],
            "d": [e.d for e in frame.entries],
        }
    )
    return write_table(path, table)


# ---------------------------------------------------------------------------
# Images
# ---------------------------------------------------------------------------

def write_gray_png(path: str | Path, img) -> Path:
    """Write a [0, 1] image as 8-bit grayscale PNG."""
    data = np.round(np.clip(np.asarray(img, dtype=float), 0.0, 1.0) * 255.0).astype(np.uint8)
    with atomic_path(path) as tmp:
        Image.fromarray(data, mode="L").save(tmp, format="PNG")
    return Path(path)


# ---------------------------------------------------------------------------
# Point clouds
# ---------------------------------------------------------------------------

def ply_available() -> bool:
    return importlib.util.find_spec("open3d") is not None


def _open3d():
    try:
        import open3d
    except ImportError as e:
        raise ArtifactError(f"PLY support needs open3d: {str(e)}")
    return open3d


def write_ply(path: str | Path, points, normals=None) -> Path:
    o3d = _open3d()
    cloud = o3d.geometry.PointCloud()
    cloud.points = o3d.utility.Vector3dVector(np.asarray(points, dtype=float).reshape(-1, 3))
    if normals is not None:
        cloud.normals = o3d.utility.Vector3dVector(np.asarray(normals, dtype=float).reshape(-1, 3))
    with atomic_path(path) as tmp:
        ply_tmp = tmp.with_suffix(".ply")
        if not o3d.io.write_point_cloud(str(ply_tmp), cloud, write_ascii=True):
            raise ArtifactError(f"open3d could not write {path}")
        os.replace(ply_tmp, tmp)
    return Path(path)


def read_ply(path: str | Path) -> tuple[np.ndarray, np.ndarray | None]:
    o3d = _open3d()
    cloud = o3d.io.read_point_cloud(str(path))
    points = np.asarray(cloud.points, dtype=float)
    if len(points) == 0:
        raise ArtifactError(f"{path}: no points")
    normals = np.asarray(cloud.normals, dtype=float) if cloud.has_normals() else None
    return points, normals


# ---------------------------------------------------------------------------
# Contact patches
# ---------------------------------------------------------------------------

def patch_stem(contact_id: int) -> str:
    return f"patch_{contact_id:04d}"


def write_patch(directory: str | Path, patch: ContactPatch, boundary_count: int = 0, ply: bool | None = None) -> Path:
    """
    Write patch_XXXX.csv (x,y,z), patch_XXXX.json (contact id, pose,
    boundary flag count) and patch_XXXX.ply. With ply=None the PLY is
    written whenever open3d is installed.

    Returns:
        Path of the CSV file
    """
    directory = Path(directory)
    stem = patch_stem(patch.contact_id)
    csv_path = write_points(directory / f"{stem}.csv", patch.points)
    meta = {
        "contact_id": patch.contact_id,
        "pose": patch.pose.model_dump(),
        "points": len(patch),
        "boundary_count": int(boundary_count),
    }
    write_json(directory / f"{stem}.json", meta)
    if ply is None:
        ply = ply_available()
    if ply:
        write_ply(directory / f"{stem}.ply", patch.points, patch.normals)
    return csv_path


def read_patch(csv_path: str | Path) -> ContactPatch:
    """Read a patch CSV and its JSON sidecar when present."""
    csv_path = Path(csv_path)
    points = read_points(csv_path)
    sidecar = csv_path.with_suffix(".json")
    if sidecar.exists():
        meta = read_json(sidecar)
        return ContactPatch(int(meta["contact_id"]), points, PatchPose.model_validate(meta["pose"]))
    contact_id = int(csv_path.stem.split("_")[-1]) if csv_path.stem.split("_")[-1].isdigit() else 0
    return ContactPatch(contact_id, points)


def list_patches(directory: str | Path) -> list[Path]:
    return sorted(Path(directory).glob("patch_*.csv"))


# ---------------------------------------------------------------------------
# Heightmaps
# ---------------------------------------------------------------------------

def write_height_grid(grid: HeightGrid, csv_path: str | Path, png_path: str | Path, sidecar_path: str | Path) -> HeightmapSidecar:
    """
    Write a raster as a CSV grid (absent cells are `nan`), a 16-bit PNG and
    the JSON sidecar mapping pixel values back to mm. Absent cells are 0 in
    the PNG.
    """
    heights = np.where(grid.mask, grid.heights, np.nan)
    with atomic_path(csv_path) as tmp:
        pd.DataFrame(heights).to_csv(tmp, index=False, header=False, na_rep="nan")

    present = heights[grid.mask]
    z_offset = float(present.min()) if len(present) else 0.0
    z_range = float(present.max()) - z_offset if len(present) else 0.0
    z_scale = z_range / PNG16_MAX if z_range > 0 else 1.0
    pixels = np.where(grid.mask, np.round((np.nan_to_num(heights) - z_offset) / z_scale), 0)
    data = np.clip(pixels, 0, PNG16_MAX).astype(np.uint16)
    with atomic_path(png_path) as tmp:
        Image.fromarray(data, mode="I;16").save(tmp, format="PNG")

    sidecar = HeightmapSidecar(
        origin=grid.origin,
        resolution=grid.resolution,
        z_offset=z_offset,
        z_scale=z_scale,
        shape=grid.shape,
    )
    write_json(sidecar_path, sidecar)
    return sidecar


def _default_sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def read_heightmap(path: str | Path, sidecar: str | Path | None = None) -> tuple[np.ndarray, HeightmapSidecar]:
    """
    Read a heightmap grid in mm. PNG pixels are mapped through the sidecar's
    z_offset + z_scale * value; CSV grids hold mm directly.

    Raises:
        FileNotFoundError: If the grid or sidecar is missing
        ArtifactError: If the grid cannot be decoded or its shape differs
            from the sidecar's
    """
    path = Path(path)
    meta = read_model(Path(sidecar) if sidecar is not None else _default_sidecar(path), HeightmapSidecar)
    if path.suffix.lower() == ".png":
        try:
            with Image.open(path) as im:
                raw = np.asarray(im, dtype=float)
        except OSError as e:
            raise ArtifactError(f"Could not read heightmap {path}: {str(e)}")
        grid = meta.z_offset + meta.z_scale * raw
    else:
        try:
            grid = pd.read_csv(path, header=None).to_numpy(dtype=float)
        except (pd.errors.ParserError, pd.errors.EmptyDataError, ValueError) as e:
            raise ArtifactError(f"Could not read heightmap {path}: {str(e)}")
    if grid.ndim != 2 or min(grid.shape) < 2:
        raise ArtifactError(f"{path}: heightmap must be a 2-D grid of at least 2x2 cells, got {grid.shape}")
    if meta.shape is not None and tuple(meta.shape) != grid.shape:
        raise ArtifactError(f"{path}: grid shape {grid.shape} does not match sidecar shape {tuple(meta.shape)}")
    logger.debug(f"Read {grid.shape[0]}x{grid.shape[1]} heightmap from {path}")
    return grid, meta
