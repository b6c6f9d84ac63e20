"""Session-scoped scene assembly over an immutable dataset store.

A DatasetStore holds one loaded dataset (atlas + BOLD sets + DTI) with
everything precomputed that snapshots need: normalized signals in per-set
and shared-range modes, region mean series, per-voxel means, the full
ranked edge set, the region adjacency, and optional bundled polylines.
Stores are shared read-only between sessions.

Sessions hold the user's live exploration state (time index, threshold,
selection, visited set, compare mode, active slice). Mutations are
last-writer-wins; a snapshot is a pure function of (store, state): the
same state always yields byte-identical payloads (no wall-clock fields).
Idle sessions expire after ``session_ttl`` seconds (default 30 min).

Snapshot layout::

    {dataset_id, session_id, time_index, threshold_tau, compare_mode,
     color_range_mode, dt_ms, n_timepoints,
     spheres:   [{label, name, center_mm, radius, color, highlighted, group}],
     polylines: [{points, weight, color_stops}],
     charts:    [{voxel_id, anchor_mm, series, mean_color}],
     raster:    <slice sidecar document> | null}

Sphere radius encodes voxel count (volume-proportional); sphere color is
the region-mean ramp at the current time; compare mode adds a second
sphere group shifted laterally by 1.2x the scene width, colored from the
twin set. Polylines are the threshold-filtered edges restricted to the
selection scope (all edges when nothing is selected), drawn from the
bundled geometry when a bundle artifact is attached. Charts cover the
voxels of the selected regions.
"""

from __future__ import annotations

import json
import time
import uuid
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import slicer
from .atlas import Atlas, functional_regions, load_atlas, region_by_label, region_sphere_radius
from .connectome import (
    ConnectivityMatrix,
    RegionAdjacency,
    direction_gradient,
    global_normalize,
    load_dti,
    region_adjacency,
    top_fraction,
)
from .errors import BoundsError, NotFoundError
from .fdeb import Polyline, load_bundles
from .signals import (
    BIOLOGICAL,
    DTB,
    SignalSet,
    compare_sets,
    encode_region_color,
    load_bold,
    minmax_normalize,
    shared_range_normalize,
)

DEFAULT_TAU = 0.9
DEFAULT_SESSION_TTL = 30 * 60.0


@dataclass
class SessionState:
    session_id: str
    dataset_id: str
    time_index: int = 0
    threshold_tau: float = DEFAULT_TAU
    selected_regions: set[int] = dc_field(default_factory=set)
    visited_regions: list[int] = dc_field(default_factory=list)
    compare_mode: bool = False
    color_range_mode: str = "shared"  # or "per-set"
    slice_plane: slicer.SlicePlane | None = None

    def to_payload(self) -> dict:
        return {
            "session_id": self.session_id,
            "dataset_id": self.dataset_id,
            "time_index": self.time_index,
            "threshold_tau": self.threshold_tau,
            "selected_regions": sorted(self.selected_regions),
            "visited_regions": list(self.visited_regions),
            "compare_mode": self.compare_mode,
            "color_range_mode": self.color_range_mode,
            "slice": None if self.slice_plane is None else {
                "axis": self.slice_plane.axis,
                "coordinate_mm": self.slice_plane.coordinate_mm,
                "thickness_mm": self.slice_plane.thickness_mm,
            },
        }


class DatasetStore:
    """Immutable, precomputed dataset shared by all sessions."""

    def __init__(self, dataset_id: str, atlas: Atlas, bio: SignalSet,
                 dtb: SignalSet | None, dti: ConnectivityMatrix,
                 bundles: list[Polyline] | None = None, manifest: dict | None = None):
        self.dataset_id = dataset_id
        self.atlas = atlas
        self.bio_raw = bio
        self.dtb_raw = dtb
        self.manifest = manifest or {}

        self.norm = {("per-set", BIOLOGICAL): minmax_normalize(bio)}
        if dtb is not None:
            self.norm[("per-set", DTB)] = minmax_normalize(dtb)
            shared_bio, shared_dtb = shared_range_normalize(bio, dtb)
            self.norm[("shared", BIOLOGICAL)] = shared_bio
            self.norm[("shared", DTB)] = shared_dtb
        else:
            self.norm[("shared", BIOLOGICAL)] = self.norm[("per-set", BIOLOGICAL)]

        self.functional = functional_regions(atlas)
        self._rows_by_region = {
            r.label: [bio.row_of(vid) for vid in r.voxel_ids] for r in atlas.regions
        }
        # region mean series per normalization mode and source, (R_functional, T)
        self.region_series = {}
        for key, sig in self.norm.items():
            self.region_series[key] = np.vstack(
                [sig.values[self._rows_by_region[r.label]].mean(axis=0)
                 for r in self.functional]
            ) if self.functional else np.zeros((0, sig.n_timepoints))
        # per-voxel means of the per-set-normalized biological signal
        norm_bio = self.norm[("per-set", BIOLOGICAL)]
        self.voxel_mean = dict(zip(norm_bio.voxel_ids.tolist(),
                                   norm_bio.values.mean(axis=1).tolist()))

        self.matrix = dti if dti.normalized else global_normalize(dti)
        self.edge_set = top_fraction(self.matrix, 1.0)
        self.adjacency: RegionAdjacency = region_adjacency(self.matrix, atlas)

        # endpoint geometry, precomputed as plain lists for cheap payloads
        rows_s = np.searchsorted(atlas.ids, self.edge_set.src)
        rows_d = np.searchsorted(atlas.ids, self.edge_set.dst)
        straight = np.stack([atlas.positions[rows_s], atlas.positions[rows_d]], axis=1)
        self._edge_points: list[list[list[float]]] = straight.tolist()
        self._edge_weights: list[float] = self.edge_set.weight.tolist()
        self._edge_src_labels = atlas.region_label_of[rows_s]
        if bundles:
            by_pair = {(pl.src, pl.dst): pl.points.tolist() for pl in bundles}
            for i in range(len(self.edge_set)):
                key = (int(self.edge_set.src[i]), int(self.edge_set.dst[i]))
                pts = by_pair.get(key)
                if pts is not None:
                    self._edge_points[i] = pts
        self.bundles = bundles or []

        self._sphere_base = []
        span = atlas.positions[:, 0].max() - atlas.positions[:, 0].min() if len(atlas.ids) else 0.0
        self.compare_offset = 1.2 * float(span)
        for r in self.functional:
            self._sphere_base.append({
                "label": r.label,
                "name": r.name,
                "center_mm": list(r.centroid_mm),
                "radius": region_sphere_radius(r, scale=atlas.spacing_mm),
            })

    @property
    def n_timepoints(self) -> int:
        return self.bio_raw.n_timepoints

    @property
    def has_dtb(self) -> bool:
        return self.dtb_raw is not None

    def describe(self) -> dict:
        return {
            "id": self.dataset_id,
            "species": self.atlas.species,
            "n_regions": len(self.atlas.regions),
            "n_functional_regions": len(self.functional),
            "n_voxels": self.atlas.n_voxels,
            "n_timepoints": self.n_timepoints,
            "dt_ms": self.bio_raw.dt_ms,
            "n_connections": self.matrix.entry_count,
            "has_dtb": self.has_dtb,
            "has_bundles": bool(self.bundles),
        }


def load_store(store_dir, dataset_id: str | None = None) -> DatasetStore:
    """Build a DatasetStore from a store directory (see synthgen layout)."""
    d = Path(store_dir)
    manifest = {}
    mpath = d / "manifest.json"
    if mpath.exists():
        with open(mpath, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    files = manifest.get("files", {})
    atlas = load_atlas(d / files.get("atlas", "atlas.json"))
    bio = load_bold(d / files.get("bold_biological", "bold_biological.csv"), atlas, BIOLOGICAL)
    dtb = None
    dtb_path = d / files.get("bold_dtb", "bold_dtb.csv")
    if dtb_path.exists():
        dtb = load_bold(dtb_path, atlas, DTB)
    dti = load_dti(d / files.get("dti", "dti.csv"), atlas)
    bundles = None
    bpath = d / files.get("bundles", "bundles.json")
    if bpath.exists():
        _, bundles = load_bundles(bpath)
    return DatasetStore(
        dataset_id=dataset_id or d.name,
        atlas=atlas, bio=bio, dtb=dtb, dti=dti, bundles=bundles, manifest=manifest,
    )


class SceneService:
    """Registry of datasets plus server-held sessions with idle expiry."""

    def __init__(self, session_ttl: float = DEFAULT_SESSION_TTL, clock=time.monotonic):
        self._stores: dict[str, DatasetStore] = {}
        self._sessions: dict[str, SessionState] = {}
        self._last_access: dict[str, float] = {}
        self._ttl = session_ttl
        self._clock = clock

    # -- datasets ---------------------------------------------------------

    def add_store(self, store: DatasetStore) -> None:
        self._stores[store.dataset_id] = store

    def datasets(self) -> list[dict]:
        return [self._stores[k].describe() for k in sorted(self._stores)]

    def store(self, dataset_id: str | None = None) -> DatasetStore:
        if dataset_id is None:
            if len(self._stores) == 1:
                return next(iter(self._stores.values()))
            raise NotFoundError("dataset id required when several datasets are loaded")
        try:
            return self._stores[dataset_id]
        except KeyError:
            raise NotFoundError(f"unknown dataset {dataset_id!r}") from None

    # -- session lifecycle ------------------------------------------------

    def open_session(self, dataset_id: str) -> SessionState:
        store = self.store(dataset_id)
        sid = uuid.uuid4().hex
        state = SessionState(session_id=sid, dataset_id=store.dataset_id)
        self._sessions[sid] = state
        self._last_access[sid] = self._clock()
        return state

    def session(self, session_id: str) -> SessionState:
        self._expire_idle()
        try:
            state = self._sessions[session_id]
        except KeyError:
            raise NotFoundError(f"unknown or expired session {session_id!r}") from None
        self._last_access[session_id] = self._clock()
        return state

    def _expire_idle(self) -> None:
        now = self._clock()
        dead = [sid for sid, ts in self._last_access.items() if now - ts > self._ttl]
        for sid in dead:
            self._sessions.pop(sid, None)
            self._last_access.pop(sid, None)

    # -- mutations (last-writer-wins; each returns the new full state) ----

    def update_state(self, session_id: str, t: int | None = None,
                     tau: float | None = None, compare: bool | None = None,
                     color_range: str | None = None) -> SessionState:
        state = self.session(session_id)
        store = self.store(state.dataset_id)
        if t is not None:
            if not (0 <= t < store.n_timepoints):
                raise BoundsError(f"time index {t} outside [0, {store.n_timepoints})")
            state.time_index = int(t)
        if tau is not None:
            if not (0.0 <= tau <= 1.0):
                raise BoundsError(f"threshold {tau} outside [0, 1]")
            state.threshold_tau = float(tau)
        if compare is not None:
            if compare and not store.has_dtb:
                raise BoundsError("dataset has no twin set to compare against")
            state.compare_mode = bool(compare)
        if color_range is not None:
            if color_range not in ("per-set", "shared"):
                raise BoundsError(f"color_range must be 'per-set' or 'shared', got {color_range!r}")
            state.color_range_mode = color_range
        return state

    def select_region(self, session_id: str, label: int) -> SessionState:
        state = self.session(session_id)
        store = self.store(state.dataset_id)
        region_by_label(store.atlas, label)  # raises NotFoundError on bad label
        state.selected_regions.add(int(label))
        if label not in state.visited_regions:
            state.visited_regions.append(int(label))
        return state

    def reset_navigation(self, session_id: str) -> SessionState:
        """Clear the selection; keep the visited trail highlighted."""
        state = self.session(session_id)
        state.selected_regions.clear()
        return state

    def set_slice(self, session_id: str, axis: str | None, coord: float | None = None,
                  thickness: float | None = None) -> SessionState:
        state = self.session(session_id)
        if axis is None:
            state.slice_plane = None
        else:
            state.slice_plane = slicer.SlicePlane(
                axis=axis, coordinate_mm=float(coord), thickness_mm=thickness
            )
        return state

    def navigate_next(self, session_id: str, from_label: int) -> list[tuple[int, float]]:
        state = self.session(session_id)
        store = self.store(state.dataset_id)
        region_by_label(store.atlas, from_label)
        return store.adjacency.neighbors(int(from_label))

    # -- queries ----------------------------------------------------------

    def snapshot(self, session_id: str, t: int | None = None, tau: float | None = None,
                 compare: bool | None = None) -> dict:
        """Render-ready payload for the session (optionally updating state)."""
        if t is not None or tau is not None or compare is not None:
            self.update_state(session_id, t=t, tau=tau, compare=compare)
        state = self.session(session_id)
        store = self.store(state.dataset_id)
        return build_snapshot(store, state)

    def slice_payload(self, dataset_id: str | None, axis: str, coord: float,
                      t: int, thickness: float | None = None) -> dict:
        store = self.store(dataset_id)
        plane = slicer.SlicePlane(axis=axis, coordinate_mm=coord, thickness_mm=thickness)
        sig = store.norm[("per-set", BIOLOGICAL)]
        r = slicer.raster(store.atlas, sig, plane, t)
        eff_thickness = thickness if thickness is not None else store.atlas.spacing_mm
        return slicer.raster_payload(r, plane, eff_thickness)

    def compare_payload(self, dataset_id: str | None, scope: str = "all") -> dict:
        store = self.store(dataset_id)
        if not store.has_dtb:
            raise NotFoundError("dataset has no twin set to compare")
        kwargs = {}
        if scope == "all" or scope == "":
            pass
        elif scope.startswith("region:"):
            kwargs = {"atlas": store.atlas, "region_labels": [int(scope[7:])]}
        elif scope.startswith("voxel:"):
            kwargs = {"voxel_ids": [int(scope[6:])]}
        else:
            raise BoundsError(f"scope must be 'all', 'region:<label>' or 'voxel:<id>', got {scope!r}")
        rep = compare_sets(store.bio_raw, store.dtb_raw, **kwargs)
        return {"scope": scope or "all", "pearson_r": rep.pearson_r, "lag": rep.lag,
                "degenerate": rep.degenerate}

    def bundles_payload(self, dataset_id: str | None = None) -> dict:
        store = self.store(dataset_id)
        return {
            "edges": [
                {"src": pl.src, "dst": pl.dst, "weight": pl.weight,
                 "points": pl.points.tolist()}
                for pl in store.bundles
            ]
        }


def build_snapshot(store: DatasetStore, state: SessionState) -> dict:
    """Pure snapshot assembly; identical state gives identical payloads."""
    t = state.time_index
    mode = state.color_range_mode
    highlighted = state.selected_regions | set(state.visited_regions)

    spheres = []
    groups = [BIOLOGICAL]
    if state.compare_mode and store.has_dtb:
        groups.append(DTB)
    for group in groups:
        key = (mode, group)
        if key not in store.region_series:
            key = ("per-set", group)
        series = store.region_series[key]
        offset = store.compare_offset if group == DTB else 0.0
        for i, base in enumerate(store._sphere_base):
            color = encode_region_color(float(series[i, t]))
            center = base["center_mm"]
            if offset:
                center = [center[0] + offset, center[1], center[2]]
            spheres.append({
                "label": base["label"],
                "name": base["name"],
                "center_mm": center,
                "radius": base["radius"],
                "color": list(color),
                "highlighted": base["label"] in highlighted,
                "group": group,
            })

    # same keep rule as threshold_filter, evaluated as an index mask so the
    # precomputed per-edge geometry can be reused
    full = store.edge_set
    mask = (full.rank_pct > state.threshold_tau) | (full.rank_pct == 1.0)
    if state.selected_regions:
        sel = np.isin(store._edge_src_labels, sorted(state.selected_regions))
        mask &= sel
    stops = [list(c) for c in direction_gradient(2)]
    polylines = [
        {
            "points": store._edge_points[i],
            "weight": store._edge_weights[i],
            "color_stops": stops,
        }
        for i in np.nonzero(mask)[0]
    ]

    charts = []
    norm_bio = store.norm[("per-set", BIOLOGICAL)]
    for label in sorted(state.selected_regions):
        region = region_by_label(store.atlas, label)
        for vid in region.voxel_ids:
            row = norm_bio.row_of(vid)
            mean_color = encode_region_color(store.voxel_mean[vid])
            charts.append({
                "voxel_id": int(vid),
                "anchor_mm": list(store.atlas.voxel_index[vid].position_mm),
                "series": norm_bio.values[row].tolist(),
                "mean_color": list(mean_color),
            })

    raster_doc = None
    if state.slice_plane is not None:
        sig = store.norm[("per-set", BIOLOGICAL)]
        r = slicer.raster(store.atlas, sig, state.slice_plane, t)
        eff = state.slice_plane.thickness_mm
        raster_doc = slicer.raster_payload(
            r, state.slice_plane, eff if eff is not None else store.atlas.spacing_mm
        )

    return {
        "dataset_id": store.dataset_id,
        "session_id": state.session_id,
        "time_index": t,
        "threshold_tau": state.threshold_tau,
        "compare_mode": state.compare_mode,
        "color_range_mode": mode,
        "dt_ms": store.bio_raw.dt_ms,
        "n_timepoints": store.n_timepoints,
        "spheres": spheres,
        "polylines": polylines,
        "charts": charts,
        "raster": raster_doc,
    }
