"""Anatomical slice sections: slab membership, 2D rasters, incident edges.

Planes are slabs of finite thickness (voxels are points, so a geometric
plane would almost always be empty); the default thickness is the atlas
voxel pitch. Slab axes: sagittal selects on x (left/right), horizontal on
z (upper/lower), coronal on y (front/back).

Boundary convention: ``voxels_in_slab`` is closed on both faces
(|pos - coord| <= thickness/2), so a plane through a voxel's exact
coordinate includes it and adjacent slabs in a stack may share boundary
voxels. For stacks that must cover every voxel exactly once use
``boundary="half_open"``: closed on the lower face, open on the upper;
make the stack's final slab closed (the default mode) to pick up voxels
sitting exactly on the top face.

Raster grid: slab voxels are binned on the two in-plane axes into square
cells of the atlas pitch. The origin is the cell-grid-aligned floor of
the minimal in-plane coordinates; column index = floor((u - origin_u) /
cell), row index = floor((v - origin_v) / cell); a cell's value is the
mean of its voxels' signal at the requested time point; cells without
voxels are empty (NaN). Rows are written in ascending-v order both in the
PGM and the JSON sidecar.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .atlas import Atlas
from .connectome import EdgeSet
from .errors import BoundsError
from .signals import SignalSet

SAGITTAL = "sagittal"
HORIZONTAL = "horizontal"
CORONAL = "coronal"

_AXIS_INDEX = {SAGITTAL: 0, HORIZONTAL: 2, CORONAL: 1}
_INPLANE = {SAGITTAL: (1, 2), HORIZONTAL: (0, 1), CORONAL: (0, 2)}


@dataclass(frozen=True)
class SlicePlane:
    axis: str
    coordinate_mm: float
    thickness_mm: float | None = None  # None -> atlas spacing at use time

    def __post_init__(self):
        if self.axis not in _AXIS_INDEX:
            raise ValueError(f"axis must be one of {sorted(_AXIS_INDEX)}, got {self.axis!r}")
        if self.thickness_mm is not None and not (self.thickness_mm > 0):
            raise ValueError(f"thickness_mm must be positive, got {self.thickness_mm}")


def plane_axis_map(axis: str) -> int:
    """Spatial axis index selected by a plane kind (x=0, y=1, z=2)."""
    try:
        return _AXIS_INDEX[axis]
    except KeyError:
        raise ValueError(f"axis must be one of {sorted(_AXIS_INDEX)}, got {axis!r}") from None


def _thickness(atlas: Atlas, plane: SlicePlane) -> float:
    return plane.thickness_mm if plane.thickness_mm is not None else atlas.spacing_mm


def voxels_in_slab(atlas: Atlas, plane: SlicePlane, boundary: str = "closed") -> list[int]:
    """Voxel ids inside the slab, sorted ascending.

    boundary "closed": |pos - coord| <= t/2 on both faces.
    boundary "half_open": lower face closed, upper face open.
    """
    ax = plane_axis_map(plane.axis)
    half = 0.5 * _thickness(atlas, plane)
    coords = atlas.positions[:, ax]
    if boundary == "closed":
        mask = np.abs(coords - plane.coordinate_mm) <= half
    elif boundary == "half_open":
        mask = (coords >= plane.coordinate_mm - half) & (coords < plane.coordinate_mm + half)
    else:
        raise ValueError(f"boundary must be 'closed' or 'half_open', got {boundary!r}")
    return atlas.ids[mask].tolist()


@dataclass(frozen=True, eq=False)
class SliceRaster:
    axis_u: int
    axis_v: int
    origin_mm: tuple[float, float]
    cell_mm: float
    values: np.ndarray = field(repr=False)  # (rows, cols), NaN = empty cell
    time_index: int = 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def raster(atlas: Atlas, s: SignalSet, plane: SlicePlane, t: int) -> SliceRaster:
    """Bin slab voxels into in-plane cells; cell value = mean signal at t.

    Slab voxels missing from the signal set are ignored. An empty slab
    yields a 1x1 all-empty raster.
    """
    if not (0 <= t < s.n_timepoints):
        raise BoundsError(f"time index {t} outside [0, {s.n_timepoints})")
    au, av = _INPLANE[plane.axis]
    cell = atlas.spacing_mm
    ids = voxels_in_slab(atlas, plane)
    present = [vid for vid in ids if _has_voxel(s, vid)]
    if not present:
        return SliceRaster(axis_u=au, axis_v=av, origin_mm=(0.0, 0.0), cell_mm=cell,
                           values=np.full((1, 1), np.nan), time_index=t)
    rows_in_atlas = np.searchsorted(atlas.ids, present)
    u = atlas.positions[rows_in_atlas, au]
    v = atlas.positions[rows_in_atlas, av]
    origin_u = float(np.floor(u.min() / cell) * cell)
    origin_v = float(np.floor(v.min() / cell) * cell)
    col = np.floor((u - origin_u) / cell).astype(np.int64)
    row = np.floor((v - origin_v) / cell).astype(np.int64)
    n_rows = int(row.max()) + 1
    n_cols = int(col.max()) + 1
    vals = np.array([s.values[s.row_of(vid), t] for vid in present])
    flat = row * n_cols + col
    sums = np.bincount(flat, weights=vals, minlength=n_rows * n_cols)
    counts = np.bincount(flat, minlength=n_rows * n_cols)
    grid = np.full(n_rows * n_cols, np.nan)
    occupied = counts > 0
    grid[occupied] = sums[occupied] / counts[occupied]
    return SliceRaster(axis_u=au, axis_v=av, origin_mm=(origin_u, origin_v),
                       cell_mm=cell, values=grid.reshape(n_rows, n_cols), time_index=t)


def _has_voxel(s: SignalSet, vid: int) -> bool:
    row = int(np.searchsorted(s.voxel_ids, vid))
    return row < len(s.voxel_ids) and s.voxel_ids[row] == vid


def edges_from_slice(edges: EdgeSet, slab_voxels) -> EdgeSet:
    """Edges whose source voxel lies inside the slab."""
    slab = np.asarray(sorted(set(slab_voxels)), dtype=np.int64)
    keep = np.isin(edges.src, slab)
    return edges.take(np.nonzero(keep)[0])


def raster_payload(r: SliceRaster, plane: SlicePlane, thickness_mm: float) -> dict:
    """JSON-ready sidecar document with exact cell values (null = empty)."""
    rows = [[None if np.isnan(x) else x for x in row] for row in r.values.tolist()]
    return {
        "axis": plane.axis,
        "coordinate_mm": plane.coordinate_mm,
        "thickness_mm": thickness_mm,
        "t": r.time_index,
        "origin_mm": list(r.origin_mm),
        "cell_mm": r.cell_mm,
        "rows": rows,
    }


def export_raster(r: SliceRaster, plane: SlicePlane, thickness_mm: float, path_prefix) -> tuple[str, str]:
    """Write <prefix>.pgm (P2, values clamped to [0,1] onto 0..255, empty=0)
    and <prefix>.json (exact floats). Returns the two paths."""
    pgm_path = f"{path_prefix}.pgm"
    json_path = f"{path_prefix}.json"
    n_rows, n_cols = r.values.shape
    filled = np.where(np.isnan(r.values), 0.0, np.clip(r.values, 0.0, 1.0))
    quant = np.rint(filled * 255.0).astype(np.int64)
    with open(pgm_path, "w", encoding="utf-8", newline="\n") as f:
        f.write("P2\n")
        f.write(f"{n_cols} {n_rows}\n255\n")
        for row in quant:
            f.write(" ".join(str(int(x)) for x in row))
            f.write("\n")
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump(raster_payload(r, plane, thickness_mm), f)
    return pgm_path, json_path
