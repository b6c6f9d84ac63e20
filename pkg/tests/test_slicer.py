import json
import math

import numpy as np
import pytest

from dtbengine import (
    BIOLOGICAL,
    BoundsError,
    SlicePlane,
    SplitMix64,
    edges_from_slice,
    export_raster,
    make_atlas,
    make_signal_set,
    minmax_normalize,
    plane_axis_map,
    raster,
    top_fraction,
    voxels_in_slab,
)


def test_plane_axis_map():
    assert plane_axis_map("sagittal") == 0    # left/right
    assert plane_axis_map("horizontal") == 2  # upper/lower
    assert plane_axis_map("coronal") == 1     # front/back
    with pytest.raises(ValueError):
        plane_axis_map("oblique")


def test_slab_boundary_inclusive():
    atlas = make_atlas("human", 1.0, [{
        "label": 1, "name": "r", "functional": True,
        "voxels": [{"id": 0, "pos": [2.5, 0.0, 0.0]}],
    }])
    plane = SlicePlane(axis="sagittal", coordinate_mm=3.0, thickness_mm=1.0)
    assert voxels_in_slab(atlas, plane) == [0]  # |2.5 - 3.0| == t/2, inclusive
    far = SlicePlane(axis="sagittal", coordinate_mm=99.0, thickness_mm=1.0)
    assert voxels_in_slab(atlas, far) == []


def test_slab_matches_exhaustive_scan(f1):
    coords = f1.atlas.positions[:, 0]
    mid = float(np.median(coords))
    plane = SlicePlane(axis="sagittal", coordinate_mm=mid, thickness_mm=6.0)
    got = voxels_in_slab(f1.atlas, plane)
    expected = sorted(
        vid for vid, v in f1.atlas.voxel_index.items()
        if abs(v.position_mm[0] - mid) <= 3.0
    )
    assert got == expected
    assert len(got) > 0


def test_slab_monotone_in_thickness(f1):
    mid = float(np.median(f1.atlas.positions[:, 2]))
    thin = set(voxels_in_slab(f1.atlas, SlicePlane("horizontal", mid, 2.0)))
    thick = set(voxels_in_slab(f1.atlas, SlicePlane("horizontal", mid, 8.0)))
    assert thin <= thick


def test_slab_stack_coverage(f1):
    """Closed slabs cover every voxel at least once; half-open exactly once."""
    axis = "coronal"
    ax = plane_axis_map(axis)
    coords = f1.atlas.positions[:, ax]
    thickness = 7.0
    lo = math.floor(coords.min()) - 0.5
    n_slabs = math.ceil((coords.max() - lo) / thickness) + 1
    centers = [lo + (k + 0.5) * thickness for k in range(n_slabs)]

    closed_counts = {vid: 0 for vid in f1.atlas.voxel_index}
    half_counts = {vid: 0 for vid in f1.atlas.voxel_index}
    for k, c in enumerate(centers):
        plane = SlicePlane(axis, c, thickness)
        for vid in voxels_in_slab(f1.atlas, plane, boundary="closed"):
            closed_counts[vid] += 1
        # final slab stays closed so voxels on the top face are not lost
        mode = "closed" if k == n_slabs - 1 else "half_open"
        for vid in voxels_in_slab(f1.atlas, plane, boundary=mode):
            half_counts[vid] += 1
    assert all(c >= 1 for c in closed_counts.values())
    assert all(c == 1 for c in half_counts.values())


def test_raster_single_voxel():
    atlas = make_atlas("human", 2.0, [{
        "label": 1, "name": "r", "functional": True,
        "voxels": [{"id": 0, "pos": [0.0, 1.0, 1.0]}],
    }])
    s = make_signal_set(BIOLOGICAL, 800.0, {0: [0.7]})
    r = raster(atlas, s, SlicePlane("sagittal", 0.0, 2.0), 0)
    assert r.values.shape == (1, 1)
    assert r.values[0, 0] == 0.7
    assert r.time_index == 0
    assert (r.axis_u, r.axis_v) == (1, 2)


def test_raster_empty_slab():
    atlas = make_atlas("human", 2.0, [{
        "label": 1, "name": "r", "functional": True,
        "voxels": [{"id": 0, "pos": [0.0, 0.0, 0.0]}],
    }])
    s = make_signal_set(BIOLOGICAL, 800.0, {0: [0.7]})
    r = raster(atlas, s, SlicePlane("sagittal", 50.0, 2.0), 0)
    assert r.values.shape == (1, 1)
    assert np.isnan(r.values).all()


def test_raster_out_of_range_t(f1):
    plane = SlicePlane("sagittal", 0.0, 5.0)
    with pytest.raises(BoundsError):
        raster(f1.atlas, f1.bold_biological, plane, 10_000)


def _raster_oracle(atlas, s, plane, t):
    """Brute-force binning with the documented grid convention."""
    ax = plane_axis_map(plane.axis)
    au, av = {"sagittal": (1, 2), "horizontal": (0, 1), "coronal": (0, 2)}[plane.axis]
    half = 0.5 * plane.thickness_mm
    cell = atlas.spacing_mm
    members = [
        v for v in atlas.voxel_index.values()
        if abs(v.position_mm[ax] - plane.coordinate_mm) <= half
    ]
    if not members:
        return None
    origin_u = math.floor(min(v.position_mm[au] for v in members) / cell) * cell
    origin_v = math.floor(min(v.position_mm[av] for v in members) / cell) * cell
    cells = {}
    for v in members:
        col = math.floor((v.position_mm[au] - origin_u) / cell)
        row = math.floor((v.position_mm[av] - origin_v) / cell)
        cells.setdefault((row, col), []).append(float(s.series(v.id)[t]))
    return (origin_u, origin_v), {k: sum(vs) / len(vs) for k, vs in cells.items()}


def test_raster_matches_brute_force_oracle(f1):
    s = minmax_normalize(f1.bold_biological)
    plane = SlicePlane("horizontal", float(np.median(f1.atlas.positions[:, 2])), 6.0)
    r = raster(f1.atlas, s, plane, 0)
    origin, cells = _raster_oracle(f1.atlas, s, plane, 0)
    assert r.origin_mm == origin
    occupied = {(i, j) for i, j in zip(*np.nonzero(~np.isnan(r.values)))}
    assert occupied == set(cells)
    for (row, col), mean in cells.items():
        assert r.values[row, col] == pytest.approx(mean, rel=1e-12)


def test_raster_cell_values_within_contributor_range(f1):
    s = minmax_normalize(f1.bold_biological)
    plane = SlicePlane("coronal", float(np.median(f1.atlas.positions[:, 1])), 6.0)
    r = raster(f1.atlas, s, plane, 5)
    ids = voxels_in_slab(f1.atlas, plane)
    vals = [float(s.series(v)[5]) for v in ids]
    occupied = r.values[~np.isnan(r.values)]
    assert occupied.min() >= min(vals) - 1e-12
    assert occupied.max() <= max(vals) + 1e-12


def test_edges_from_slice(f1):
    edges = top_fraction(f1.dti, 0.1)
    all_ids = f1.atlas.ids.tolist()
    assert len(edges_from_slice(edges, all_ids)) == len(edges)
    assert len(edges_from_slice(edges, [])) == 0
    plane = SlicePlane("sagittal", float(np.median(f1.atlas.positions[:, 0])), 6.0)
    slab = voxels_in_slab(f1.atlas, plane)
    got = edges_from_slice(edges, slab)
    member = set(slab)
    expected = [i for i in range(len(edges)) if int(edges.src[i]) in member]
    assert got.src.tolist() == edges.src[expected].tolist()


def test_export_raster_files(tmp_path, f1):
    s = minmax_normalize(f1.bold_biological)
    plane = SlicePlane("sagittal", float(np.median(f1.atlas.positions[:, 0])), 6.0)
    r = raster(f1.atlas, s, plane, 3)
    prefix = tmp_path / "slice_sagittal_0_t3"
    pgm_path, json_path = export_raster(r, plane, 6.0, prefix)

    lines = open(pgm_path).read().splitlines()
    assert lines[0] == "P2"
    n_cols, n_rows = map(int, lines[1].split())
    assert (n_rows, n_cols) == r.values.shape
    assert lines[2] == "255"
    pixels = [int(x) for row in lines[3:] for x in row.split()]
    assert len(pixels) == n_rows * n_cols
    assert all(0 <= p <= 255 for p in pixels)

    doc = json.loads(open(json_path).read())
    assert doc["axis"] == "sagittal"
    assert doc["thickness_mm"] == 6.0
    assert doc["t"] == 3
    assert doc["cell_mm"] == f1.atlas.spacing_mm
    rows = doc["rows"]
    assert len(rows) == n_rows and len(rows[0]) == n_cols
    # sidecar carries exact floats; PGM quantizes the same values
    for i in range(n_rows):
        for j in range(n_cols):
            v = rows[i][j]
            q = pixels[i * n_cols + j]
            if v is None:
                assert q == 0
            else:
                assert r.values[i, j] == v
                assert q == round(min(max(v, 0.0), 1.0) * 255)
