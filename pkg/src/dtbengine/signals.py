"""Per-voxel BOLD time series: storage, aggregation, encodings, comparison.

A SignalSet is immutable after load; every operation here is pure, so
concurrent reads and per-region parallel evaluation are unrestricted.

BOLD file format (CSV, LF line endings)::

    dt_ms,n_timepoints
    voxel_id,v0,v1,...,v{T-1}
    ...

Binary variant: magic ``DTBB``, little-endian u32 voxel count, u32 T,
f64 dt_ms, then per voxel u32 id followed by T f32 values.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from .atlas import Atlas, Region
from .errors import BoundsError, FormatError, NotFoundError, ShapeError

BIOLOGICAL = "biological"
DTB = "dtb"

_BOLD_MAGIC = b"DTBB"


class ColorRGBA(NamedTuple):
    r: float
    g: float
    b: float
    a: float


@dataclass(frozen=True, eq=False)
class SignalSet:
    """BOLD series for a set of voxels, all of identical length T >= 1."""

    source: str
    dt_ms: float
    voxel_ids: np.ndarray = field(repr=False)  # ascending int64
    values: np.ndarray = field(repr=False)     # (n_voxels, T) float64

    def __post_init__(self):
        if self.source not in (BIOLOGICAL, DTB):
            raise FormatError(f"source must be '{BIOLOGICAL}' or '{DTB}', got {self.source!r}")
        if not (self.dt_ms > 0):
            raise FormatError(f"dt_ms must be positive, got {self.dt_ms}")
        if self.values.ndim != 2 or self.values.shape[1] < 1:
            raise FormatError("series must be a non-empty 2-d array")
        if len(self.voxel_ids) != len(self.values):
            raise FormatError("voxel id count does not match series count")

    @property
    def n_timepoints(self) -> int:
        return self.values.shape[1]

    @property
    def n_voxels(self) -> int:
        return len(self.voxel_ids)

    def row_of(self, voxel_id: int) -> int:
        row = int(np.searchsorted(self.voxel_ids, voxel_id))
        if row >= len(self.voxel_ids) or self.voxel_ids[row] != voxel_id:
            raise NotFoundError(f"voxel {voxel_id} not in signal set")
        return row

    def series(self, voxel_id: int) -> np.ndarray:
        return self.values[self.row_of(voxel_id)]


def make_signal_set(source: str, dt_ms: float, series: dict[int, Iterable[float]] | None = None,
                    voxel_ids=None, values=None) -> SignalSet:
    """Build a SignalSet from a {voxel_id: series} map or aligned arrays.

    Rows are stored in ascending voxel-id order. Raises FormatError on
    ragged series or duplicate ids.
    """
    if series is not None:
        ids = sorted(series)
        rows = [np.asarray(series[i], dtype=np.float64) for i in ids]
        lengths = {len(r) for r in rows}
        if len(lengths) > 1:
            raise FormatError(f"series lengths differ: {sorted(lengths)}")
        voxel_ids = np.array(ids, dtype=np.int64)
        values = np.vstack(rows) if rows else np.zeros((0, 1))
    else:
        voxel_ids = np.asarray(voxel_ids, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        order = np.argsort(voxel_ids, kind="stable")
        voxel_ids = voxel_ids[order]
        values = values[order]
    if len(np.unique(voxel_ids)) != len(voxel_ids):
        raise FormatError("duplicate voxel id in signal set")
    return SignalSet(source=source, dt_ms=float(dt_ms), voxel_ids=voxel_ids, values=values)


def load_bold(path, atlas: Atlas, source: str) -> SignalSet:
    """Load a BOLD file (CSV or DTBB binary) and validate against the atlas."""
    with open(path, "rb") as f:
        head = f.read(4)
    if head == _BOLD_MAGIC:
        s = _load_bold_binary(path, source)
    else:
        s = _load_bold_csv(path, source)
    known = set(atlas.ids.tolist())
    for vid in s.voxel_ids.tolist():
        if vid not in known:
            raise FormatError(f"voxel {vid} not present in atlas")
    return s


def _load_bold_csv(path, source: str) -> SignalSet:
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        parts = header.split(",")
        if len(parts) != 2:
            raise FormatError(f"BOLD header must be 'dt_ms,n_timepoints', got {header!r}")
        try:
            dt_ms, t = float(parts[0]), int(parts[1])
        except ValueError as exc:
            raise FormatError(f"bad BOLD header {header!r}") from exc
        ids = []
        rows = []
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            try:
                ids.append(int(fields[0]))
                rows.append(np.array(fields[1:], dtype=np.float64))
            except ValueError as exc:
                raise FormatError(f"bad BOLD record at line {lineno}") from exc
            if len(rows[-1]) != t:
                raise FormatError(
                    f"voxel {ids[-1]}: series length {len(rows[-1])} != header T {t}"
                )
    if not ids:
        raise FormatError("BOLD file has no records")
    return make_signal_set(source, dt_ms, dict(zip(ids, rows)))


def _load_bold_binary(path, source: str) -> SignalSet:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != _BOLD_MAGIC:
        raise FormatError("not a DTBB file")
    count, t = struct.unpack_from("<II", raw, 4)
    (dt_ms,) = struct.unpack_from("<d", raw, 12)
    off = 20
    rec = 4 + 4 * t
    if len(raw) != off + count * rec:
        raise FormatError("DTBB payload size does not match header counts")
    ids = np.empty(count, dtype=np.int64)
    values = np.empty((count, t), dtype=np.float64)
    for i in range(count):
        (vid,) = struct.unpack_from("<I", raw, off)
        ids[i] = vid
        values[i] = np.frombuffer(raw, dtype="<f4", count=t, offset=off + 4)
        off += rec
    return make_signal_set(source, dt_ms, dict(zip(ids.tolist(), values)))


def save_bold(s: SignalSet, path, binary: bool = False) -> None:
    if binary:
        with open(path, "wb") as f:
            f.write(_BOLD_MAGIC)
            f.write(struct.pack("<IId", s.n_voxels, s.n_timepoints, s.dt_ms))
            v32 = s.values.astype("<f4")
            for i, vid in enumerate(s.voxel_ids.tolist()):
                f.write(struct.pack("<I", vid))
                f.write(v32[i].tobytes())
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(f"{s.dt_ms!r},{s.n_timepoints}\n")
            for i, vid in enumerate(s.voxel_ids.tolist()):
                f.write(str(vid))
                f.write(",")
                f.write(",".join(repr(x) for x in s.values[i].tolist()))
                f.write("\n")


def minmax_normalize(s: SignalSet) -> SignalSet:
    """Map every value by (v - min)/(max - min) over the whole set.

    A constant set maps to all zeros.
    """
    lo = float(s.values.min())
    hi = float(s.values.max())
    if hi == lo:
        values = np.zeros_like(s.values)
    else:
        values = (s.values - lo) / (hi - lo)
    return SignalSet(source=s.source, dt_ms=s.dt_ms, voxel_ids=s.voxel_ids, values=values)


def shared_range_normalize(a: SignalSet, b: SignalSet) -> tuple[SignalSet, SignalSet]:
    """Normalize both sets against their union min/max.

    This is the honest mode for side-by-side comparison: a weaker set
    stays visibly weaker instead of being stretched to full range.
    """
    lo = min(float(a.values.min()), float(b.values.min()))
    hi = max(float(a.values.max()), float(b.values.max()))
    if hi == lo:
        va = np.zeros_like(a.values)
        vb = np.zeros_like(b.values)
    else:
        va = (a.values - lo) / (hi - lo)
        vb = (b.values - lo) / (hi - lo)
    return (
        SignalSet(source=a.source, dt_ms=a.dt_ms, voxel_ids=a.voxel_ids, values=va),
        SignalSet(source=b.source, dt_ms=b.dt_ms, voxel_ids=b.voxel_ids, values=vb),
    )


def _check_t(s: SignalSet, t: int) -> None:
    if not (0 <= t < s.n_timepoints):
        raise BoundsError(f"time index {t} outside [0, {s.n_timepoints})")


def region_mean(s: SignalSet, region: Region, t: int) -> float:
    """Arithmetic mean over the region's member voxels at time t."""
    _check_t(s, t)
    rows = [s.row_of(vid) for vid in region.voxel_ids]
    return float(s.values[rows, t].mean())


def voxel_mean_over_time(s: SignalSet, voxel_id: int) -> float:
    return float(s.series(voxel_id).mean())


def peak_time(s: SignalSet, regions: Iterable[Region]) -> int:
    """Time index with the highest mean over all member voxels.

    Ties break toward the smallest index (np.argmax convention).
    """
    regions = list(regions)
    if not regions:
        raise ValueError("peak_time needs at least one region")
    rows = [s.row_of(vid) for r in regions for vid in r.voxel_ids]
    mean_series = s.values[rows].mean(axis=0)
    return int(np.argmax(mean_series))


def encode_region_color(v: float) -> ColorRGBA:
    """Region activity ramp: transparent green -> yellow -> opaque red.

    Breakpoints: v=0 -> (0,1,0,0); v=0.5 -> (1,1,0,1); v=1 -> (1,0,0,1).
    Alpha rises linearly over v in [0, 0.25] and saturates at 1 above.
    Input is clamped to [0, 1].
    """
    v = min(1.0, max(0.0, float(v)))
    if v <= 0.5:
        r, g = 2.0 * v, 1.0
    else:
        r, g = 1.0, 2.0 * (1.0 - v)
    a = min(1.0, v / 0.25) if v > 0 else 0.0
    return ColorRGBA(r, g, 0.0, a)


def encode_voxel_color(v: float) -> tuple[ColorRGBA, float]:
    """Voxel activity ramp: transparent black -> emissive white (linear).

    Returns (color, emissive); rgb = (v,v,v), alpha = v, emissive = v.
    """
    v = min(1.0, max(0.0, float(v)))
    return ColorRGBA(v, v, v, v), v


class ComparisonReport(NamedTuple):
    pearson_r: float
    lag: int
    degenerate: bool


def _scope_voxels(a: SignalSet, b: SignalSet, atlas: Atlas | None,
                  region_labels, voxel_ids) -> list[int]:
    if region_labels is not None:
        if atlas is None:
            raise ValueError("region scope requires an atlas")
        labels = set(region_labels)
        known = {r.label for r in atlas.regions}
        for lab in labels:
            if lab not in known:
                raise NotFoundError(f"no region with label {lab}")
        return [
            vid for r in atlas.regions if r.label in labels for vid in r.voxel_ids
        ]
    if voxel_ids is not None:
        return list(voxel_ids)
    if not np.array_equal(a.voxel_ids, b.voxel_ids):
        raise ShapeError("sets cover different voxels; give an explicit scope")
    return a.voxel_ids.tolist()


def compare_sets(a: SignalSet, b: SignalSet, atlas: Atlas | None = None,
                 region_labels=None, voxel_ids=None) -> ComparisonReport:
    """Pearson correlation and best-aligning lag of two scope-mean series.

    The scope selects voxels (whole set by default, or by region labels /
    explicit voxel ids); both sets must carry every scope voxel and share
    T. ``lag`` is the shift s in [-T//2, T//2] maximizing the Pearson
    correlation computed over the overlapping window; positive lag means b
    trails a. Ties prefer the smallest |s|, then the negative shift.
    Constant series give pearson_r = 0 with degenerate=True.
    """
    if a.n_timepoints != b.n_timepoints:
        raise ShapeError(
            f"sets differ in T: {a.n_timepoints} != {b.n_timepoints}"
        )
    wanted = _scope_voxels(a, b, atlas, region_labels, voxel_ids)
    sa = a.values[[a.row_of(vid) for vid in wanted]].mean(axis=0)
    sb = b.values[[b.row_of(vid) for vid in wanted]].mean(axis=0)

    da = sa - sa.mean()
    db = sb - sb.mean()
    denom = float(np.sqrt((da @ da) * (db @ db)))
    if denom == 0.0:
        return ComparisonReport(pearson_r=0.0, lag=0, degenerate=True)
    pearson_r = float(da @ db) / denom

    lag = _best_lag(sa, sb)
    return ComparisonReport(pearson_r=pearson_r, lag=lag, degenerate=False)


def _best_lag(sa: np.ndarray, sb: np.ndarray) -> int:
    t_len = len(sa)
    half = t_len // 2
    best_key = None
    best_s = 0
    for s in range(-half, half + 1):
        if s >= 0:
            x, y = sa[: t_len - s], sb[s:]
        else:
            x, y = sa[-s:], sb[: t_len + s]
        if len(x) < 2:
            continue
        dx = x - x.mean()
        dy = y - y.mean()
        den = float(np.sqrt((dx @ dx) * (dy @ dy)))
        if den == 0.0:
            continue
        v = float(dx @ dy) / den
        key = (v, -abs(s), -s)
        if best_key is None or key > best_key:
            best_key, best_s = key, s
    return best_s


def top_regions(s: SignalSet, atlas: Atlas, t: int, k: int) -> list[tuple[int, float]]:
    """The k highest region means at time t, descending; ties by label."""
    _check_t(s, t)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    means = []
    for r in atlas.regions:
        if not r.voxel_ids:
            continue
        means.append((r.label, region_mean(s, r, t)))
    means.sort(key=lambda lm: (-lm[1], lm[0]))
    return means[:k]
