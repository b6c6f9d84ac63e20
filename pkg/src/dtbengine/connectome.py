"""DTI structural connectivity: sparse directed voxel-pair weights.

Storage is a sparse edge list, not a dense matrix: at full brain scale a
"fully connected" voxel matrix would hold ~5e8 pairs, far beyond desk
scope. Entries are directed (source -> target); symmetrization is an
explicit transform. Everything is immutable after construction and all
queries are pure.

Edge-list file format (CSV)::

    n_voxels,n_entries
    src,dst,weight
    ...

Binary variant: magic ``DTBC``, little-endian u32 n_voxels, u64
n_entries, then (u32 src, u32 dst, f32 weight) triples.

Threshold semantics: every edge carries ``rank_pct``, the fraction of
edges in its originating matrix with weight <= its own (ties share the
higher value), so the heaviest edge has rank 1 and the lightest has
rank 1/N. ``threshold_filter(edges, tau)`` keeps the edges above the tau
rank quantile: for distinct weights and integral tau*N exactly
(1 - tau) * N edges survive, so tau = 0.8 retains the top 20% by weight
and tau = 1 retains only the edges tied for the maximum.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .atlas import Atlas
from .errors import DegenerateInputError, FormatError, NotFoundError
from .signals import ColorRGBA

_DTI_MAGIC = b"DTBC"


class Edge(NamedTuple):
    src: int
    dst: int
    weight: float
    rank_pct: float


@dataclass(frozen=True, eq=False)
class ConnectivityMatrix:
    """Sparse directed connectivity; entries sorted by (src, dst)."""

    n_voxels: int
    src: np.ndarray = field(repr=False)
    dst: np.ndarray = field(repr=False)
    weight: np.ndarray = field(repr=False)
    normalized: bool = False

    @property
    def entry_count(self) -> int:
        return len(self.weight)

    @property
    def total_weight(self) -> float:
        return float(self.weight.sum())

    def entries(self) -> Iterator[tuple[tuple[int, int], float]]:
        for i in range(len(self.weight)):
            yield (int(self.src[i]), int(self.dst[i])), float(self.weight[i])


def make_matrix(n_voxels: int, src, dst, weight, normalized: bool = False) -> ConnectivityMatrix:
    """Validate and canonicalize entries (sorted by (src, dst), no dupes)."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    weight = np.asarray(weight, dtype=np.float64)
    if not (len(src) == len(dst) == len(weight)):
        raise FormatError("src/dst/weight lengths differ")
    if np.any(weight < 0):
        i = int(np.argmax(weight < 0))
        raise FormatError(f"negative weight {weight[i]} on entry ({src[i]}, {dst[i]})")
    loops = src == dst
    if np.any(loops):
        i = int(np.argmax(loops))
        raise FormatError(f"self-connection ({src[i]}, {dst[i]}) rejected")
    order = np.lexsort((dst, src))
    src, dst, weight = src[order], dst[order], weight[order]
    if len(src) > 1:
        dup = (src[1:] == src[:-1]) & (dst[1:] == dst[:-1])
        if np.any(dup):
            i = int(np.argmax(dup))
            raise FormatError(f"duplicate entry ({src[i]}, {dst[i]})")
    return ConnectivityMatrix(
        n_voxels=int(n_voxels), src=src, dst=dst, weight=weight, normalized=normalized
    )


def load_dti(path, atlas: Atlas) -> ConnectivityMatrix:
    """Load an edge-list file (CSV or DTBC binary), validated against the atlas."""
    with open(path, "rb") as f:
        head = f.read(4)
    if head == _DTI_MAGIC:
        m = _load_dti_binary(path)
    else:
        m = _load_dti_csv(path)
    known = set(atlas.ids.tolist())
    for arr in (m.src, m.dst):
        for vid in np.unique(arr).tolist():
            if vid not in known:
                raise FormatError(f"voxel {vid} not present in atlas")
    return m


def _load_dti_csv(path) -> ConnectivityMatrix:
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        parts = header.split(",")
        if len(parts) != 2:
            raise FormatError(f"DTI header must be 'n_voxels,n_entries', got {header!r}")
        try:
            n_voxels, n_entries = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise FormatError(f"bad DTI header {header!r}") from exc
        src = np.empty(n_entries, dtype=np.int64)
        dst = np.empty(n_entries, dtype=np.int64)
        weight = np.empty(n_entries, dtype=np.float64)
        i = 0
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            if i >= n_entries:
                raise FormatError(f"more than {n_entries} entries in file")
            fields = line.split(",")
            try:
                src[i], dst[i], weight[i] = int(fields[0]), int(fields[1]), float(fields[2])
            except (ValueError, IndexError) as exc:
                raise FormatError(f"bad DTI record at line {lineno}") from exc
            i += 1
        if i != n_entries:
            raise FormatError(f"header claims {n_entries} entries, file has {i}")
    return make_matrix(n_voxels, src, dst, weight)


def _load_dti_binary(path) -> ConnectivityMatrix:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != _DTI_MAGIC:
        raise FormatError("not a DTBC file")
    n_voxels, n_entries = struct.unpack_from("<IQ", raw, 4)
    if len(raw) != 16 + 12 * n_entries:
        raise FormatError("DTBC payload size does not match header counts")
    rec = np.frombuffer(raw, dtype=np.dtype([("s", "<u4"), ("d", "<u4"), ("w", "<f4")]),
                        count=n_entries, offset=16)
    return make_matrix(
        n_voxels,
        rec["s"].astype(np.int64),
        rec["d"].astype(np.int64),
        rec["w"].astype(np.float64),
    )


def save_dti(m: ConnectivityMatrix, path, binary: bool = False) -> None:
    if binary:
        with open(path, "wb") as f:
            f.write(_DTI_MAGIC)
            f.write(struct.pack("<IQ", m.n_voxels, m.entry_count))
            rec = np.empty(m.entry_count, dtype=np.dtype([("s", "<u4"), ("d", "<u4"), ("w", "<f4")]))
            rec["s"] = m.src
            rec["d"] = m.dst
            rec["w"] = m.weight.astype("<f4")
            f.write(rec.tobytes())
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(f"{m.n_voxels},{m.entry_count}\n")
            for s, d, w in zip(m.src.tolist(), m.dst.tolist(), m.weight.tolist()):
                f.write(f"{s},{d},{w!r}\n")


def global_normalize(m: ConnectivityMatrix) -> ConnectivityMatrix:
    """Divide every weight by the total so the matrix sums to 1.

    Division by a single positive constant cannot reorder weights, so
    edge ranking is preserved exactly.
    """
    total = m.weight.sum()
    if not (total > 0):
        raise DegenerateInputError("cannot normalize an all-zero matrix")
    return ConnectivityMatrix(
        n_voxels=m.n_voxels,
        src=m.src,
        dst=m.dst,
        weight=m.weight / total,
        normalized=True,
    )


@dataclass(frozen=True, eq=False)
class EdgeSet:
    """Edges with weight-rank percentiles carried from the source matrix."""

    src: np.ndarray = field(repr=False)
    dst: np.ndarray = field(repr=False)
    weight: np.ndarray = field(repr=False)
    rank_pct: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.weight)

    @property
    def edges(self) -> list[Edge]:
        return [
            Edge(int(s), int(d), float(w), float(r))
            for s, d, w, r in zip(self.src, self.dst, self.weight, self.rank_pct)
        ]

    def take(self, idx) -> "EdgeSet":
        return EdgeSet(self.src[idx], self.dst[idx], self.weight[idx], self.rank_pct[idx])


def _rank_pct(weights: np.ndarray) -> np.ndarray:
    sw = np.sort(weights)
    return np.searchsorted(sw, weights, side="right") / len(weights)


def top_fraction(m: ConnectivityMatrix, f: float) -> EdgeSet:
    """The ceil(f*N) heaviest entries, ties broken by ascending (src, dst).

    rank_pct is computed over the full matrix before cutting, so later
    threshold filters keep their meaning relative to the whole matrix.
    """
    if not (0 < f <= 1):
        raise ValueError(f"fraction must be in (0, 1], got {f}")
    n = m.entry_count
    if n == 0:
        raise DegenerateInputError("matrix has no entries")
    count = int(np.ceil(f * n))
    order = np.lexsort((m.dst, m.src, -m.weight))
    sel = order[:count]
    rank = _rank_pct(m.weight)
    return EdgeSet(m.src[sel], m.dst[sel], m.weight[sel], rank[sel])


def threshold_filter(edges: EdgeSet, tau: float, mode: str = "rank") -> EdgeSet:
    """Keep edges above the tau threshold.

    mode "rank" (default): keep edges whose weight-rank percentile
    exceeds tau (edges tied for the maximum always survive, so tau = 1
    yields exactly the max-weight ties and tau = 0 yields everything).
    mode "absolute": keep edges with raw weight >= tau.
    """
    if mode == "rank":
        if not (0 <= tau <= 1):
            raise ValueError(f"tau must be in [0, 1], got {tau}")
        keep = (edges.rank_pct > tau) | (edges.rank_pct == 1.0)
    elif mode == "absolute":
        keep = edges.weight >= tau
    else:
        raise ValueError(f"unknown threshold mode {mode!r}")
    return edges.take(np.nonzero(keep)[0])


@dataclass(frozen=True)
class RegionAdjacency:
    """Directed region-level aggregate of voxel-pair weights."""

    n_regions: int
    entries: dict[tuple[int, int], float]

    def neighbors(self, label: int) -> list[tuple[int, float]]:
        """Outgoing neighbors of a region, heaviest first, ties by label."""
        out = [(b, w) for (a, b), w in self.entries.items() if a == label]
        out.sort(key=lambda t: (-t[1], t[0]))
        return out


def region_adjacency(m: ConnectivityMatrix, atlas: Atlas) -> RegionAdjacency:
    """Sum voxel-pair weights into directed region pairs (a != b).

    Intra-region pairs are excluded. The reduction is a sequential
    bincount, so results are bitwise reproducible.
    """
    labels = sorted(r.label for r in atlas.regions)
    label_to_idx = {lab: i for i, lab in enumerate(labels)}
    lut_size = max(labels) + 1
    lut = np.full(lut_size, -1, dtype=np.int64)
    for lab, i in label_to_idx.items():
        lut[lab] = i
    row_src = np.searchsorted(atlas.ids, m.src)
    row_dst = np.searchsorted(atlas.ids, m.dst)
    la = lut[atlas.region_label_of[row_src]]
    lb = lut[atlas.region_label_of[row_dst]]
    cross = la != lb
    nr = len(labels)
    sums = np.bincount(la[cross] * nr + lb[cross], weights=m.weight[cross],
                       minlength=nr * nr)
    entries = {}
    for flat in np.nonzero(sums)[0]:
        a, b = divmod(int(flat), nr)
        entries[(labels[a], labels[b])] = float(sums[flat])
    return RegionAdjacency(n_regions=nr, entries=entries)


def edges_from_regions(edges: EdgeSet, atlas: Atlas, labels: Iterable[int]) -> EdgeSet:
    """Edges whose source voxel lies in any of the selected regions."""
    labels = set(labels)
    known = {r.label for r in atlas.regions}
    for lab in labels:
        if lab not in known:
            raise NotFoundError(f"no region with label {lab}")
    if not labels:
        return edges.take(np.zeros(0, dtype=np.int64))
    rows = np.searchsorted(atlas.ids, edges.src)
    src_labels = atlas.region_label_of[rows]
    keep = np.isin(src_labels, sorted(labels))
    return edges.take(np.nonzero(keep)[0])


GREEN = ColorRGBA(0.0, 1.0, 0.0, 1.0)
ORANGE = ColorRGBA(1.0, 0.5, 0.0, 1.0)


def direction_gradient(n_stops: int) -> list[ColorRGBA]:
    """Color stops along an edge, green at the source to orange at the target.

    Walking the stops from the target end is exactly the reversed list,
    which is what a reversed edge renders.
    """
    if n_stops < 2:
        raise ValueError(f"n_stops must be >= 2, got {n_stops}")
    stops = []
    for i in range(n_stops):
        t = i / (n_stops - 1)
        stops.append(ColorRGBA(
            GREEN.r + t * (ORANGE.r - GREEN.r),
            GREEN.g + t * (ORANGE.g - GREEN.g),
            GREEN.b + t * (ORANGE.b - GREEN.b),
            GREEN.a + t * (ORANGE.a - GREEN.a),
        ))
    return stops


def symmetrized(m: ConnectivityMatrix) -> ConnectivityMatrix:
    """Optional transform: store w(i,j)+w(j,i) in both directions."""
    key_fwd = m.src * m.n_voxels + m.dst
    key_rev = m.dst * m.n_voxels + m.src
    combined = dict(zip(key_fwd.tolist(), m.weight.tolist()))
    for k, w in zip(key_rev.tolist(), m.weight.tolist()):
        combined[k] = combined.get(k, 0.0) + w
    keys = np.array(sorted(combined), dtype=np.int64)
    return make_matrix(
        m.n_voxels,
        keys // m.n_voxels,
        keys % m.n_voxels,
        np.array([combined[int(k)] for k in keys]),
        normalized=False,
    )
