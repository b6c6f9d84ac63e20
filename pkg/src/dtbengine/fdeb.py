"""3D force-directed edge bundling.

Edges are subdivided into polylines whose interior control points move
under two forces: a spring pull toward the neighboring points on the same
polyline, and a compatibility-weighted attraction toward the same-index
point of every geometrically compatible edge. The attraction between
points p and q has magnitude c / max(||q - p||, eps) along the unit
direction toward q, with eps = 1e-6 x mean edge length bounding the force
near coincident points (exactly coincident points exert no force).

Compatibility of two straight edges is the product of four factors, each
in [0, 1]: angle |cos theta|; scale 2 / (l_avg/l_min + l_max/l_avg);
position l_avg / (l_avg + ||mid_P - mid_Q||); and visibility
min(V(P,Q), V(Q,P)) where V projects the other edge's endpoints onto this
edge's carrier line (an orthogonal 3D projection, equivalent to working in
the plane spanned by the edge direction and the midpoint displacement).
Pairs below ``compat_threshold`` do not interact.

The cycle schedule follows the usual bundling defaults: each cycle doubles
the subdivision, halves the step size, and decays the iteration count by
2/3 (floor 10). Within one iteration all forces are computed from the
previous positions (Jacobi double buffering), so per-edge work can run on
any number of workers with bit-identical results; endpoints are never
touched.

A note on the force law: a literal reading of dividing the point distance
by compatibility would blow up as compatibility approaches zero, so, in
line with the established bundling formulation, compatibility multiplies
the attraction and the threshold prunes incompatible pairs; distance
enters as an inverse-falloff magnitude. Both readings are documented here
deliberately.

Bundled-edge file (JSON)::

    {"params": {...}, "edges": [{"src": id, "dst": id, "weight": w,
                                 "points": [[x, y, z], ...]}, ...]}

Coordinates are serialized with full round-trip precision (>= 7
significant digits); re-import is exact up to float parsing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numba
import numpy as np
from numba import njit, prange

from .atlas import Atlas
from .errors import DegenerateInputError
from .connectome import EdgeSet


@dataclass(frozen=True)
class BundleParams:
    """Solver constants; defaults follow the standard bundling schedule.

    step_size of None means 0.04 x mean input edge length, resolved when
    bundling starts; the step is halved every cycle.
    """

    k_p: float = 0.1
    n_cycles: int = 6
    initial_subdivisions: int = 1
    iterations_per_cycle: int = 50
    step_size: float | None = None
    compat_threshold: float = 0.05

    def __post_init__(self):
        if not (self.k_p > 0):
            raise ValueError(f"k_p must be positive, got {self.k_p}")
        if self.n_cycles < 1:
            raise ValueError(f"n_cycles must be >= 1, got {self.n_cycles}")
        if self.initial_subdivisions < 1:
            raise ValueError("initial_subdivisions must be >= 1")
        if self.iterations_per_cycle < 1:
            raise ValueError("iterations_per_cycle must be >= 1")
        if self.step_size is not None and not (self.step_size > 0):
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if not (0 <= self.compat_threshold <= 1):
            raise ValueError("compat_threshold must be in [0, 1]")


_ITERATION_DECAY = 2.0 / 3.0
_ITERATION_FLOOR = 10


@dataclass(eq=False)
class Polyline:
    """Ordered 3D control points; first and last are the edge endpoints."""

    points: np.ndarray  # (n, 3) float64
    weight: float = 1.0
    src: int = -1
    dst: int = -1

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[0] < 2 or self.points.shape[1] != 3:
            raise ValueError("points must be an (n>=2, 3) array")


@dataclass(frozen=True)
class CompatibilityCache:
    """Symmetric pair -> compatibility map over an indexed edge list."""

    pairs: dict[tuple[int, int], float]

    def get(self, i: int, j: int) -> float:
        if i == j:
            return 1.0
        key = (i, j) if i < j else (j, i)
        return self.pairs.get(key, 0.0)


def _seg(p) -> np.ndarray:
    a = np.asarray(p, dtype=np.float64)
    if a.shape != (3,):
        raise ValueError("segment endpoints must be 3-vectors")
    return a


def _visibility(a0, a1, b0, b1) -> float:
    """V(A, B): how much of B's projection onto A's line overlaps A's middle."""
    d = a1 - a0
    ll = float(d @ d)
    t0 = float((b0 - a0) @ d) / ll
    t1 = float((b1 - a0) @ d) / ll
    i0 = a0 + t0 * d
    i1 = a0 + t1 * d
    im = 0.5 * (i0 + i1)
    am = 0.5 * (a0 + a1)
    seg = float(np.linalg.norm(i1 - i0))
    off = float(np.linalg.norm(am - im))
    if seg < 1e-300:
        return 1.0 if off < 1e-300 else 0.0
    return max(0.0, 1.0 - 2.0 * off / seg)


def compatibility(p0, p1, q0, q1) -> float:
    """Compatibility of segments (p0, p1) and (q0, q1), in [0, 1]."""
    p0, p1, q0, q1 = _seg(p0), _seg(p1), _seg(q0), _seg(q1)
    dp = p1 - p0
    dq = q1 - q0
    lp = float(np.linalg.norm(dp))
    lq = float(np.linalg.norm(dq))
    if lp == 0.0 or lq == 0.0:
        raise DegenerateInputError("zero-length segment has no compatibility")
    c_angle = abs(float(dp @ dq)) / (lp * lq)
    lavg = 0.5 * (lp + lq)
    c_scale = 2.0 / (lavg / min(lp, lq) + max(lp, lq) / lavg)
    mid_p = 0.5 * (p0 + p1)
    mid_q = 0.5 * (q0 + q1)
    c_pos = lavg / (lavg + float(np.linalg.norm(mid_p - mid_q)))
    c_vis = min(_visibility(p0, p1, q0, q1), _visibility(q0, q1, p0, p1))
    return c_angle * c_scale * c_pos * c_vis


def build_compatibility_cache(lines: Sequence[Polyline]) -> CompatibilityCache:
    """All-pairs cache over the given edges (endpoints only)."""
    pairs = {}
    for i in range(len(lines)):
        for j in range(i + 1, len(lines)):
            pairs[(i, j)] = compatibility(
                lines[i].points[0], lines[i].points[-1],
                lines[j].points[0], lines[j].points[-1],
            )
    return CompatibilityCache(pairs=pairs)


def subdivide(line: Polyline) -> Polyline:
    """Double the interval count by uniform arc-length resampling.

    Endpoints are copied bit-exactly; interior points land on the original
    polyline.
    """
    pts = line.points
    m = pts.shape[0] - 1
    new_pts = _resample(pts[None, :, :], 2 * m)[0]
    return Polyline(points=new_pts, weight=line.weight, src=line.src, dst=line.dst)


def _resample(pos: np.ndarray, m_new: int) -> np.ndarray:
    """Arc-length resample every polyline in (E, n_pts, 3) to m_new intervals."""
    n_edges, n_pts, _ = pos.shape
    out = np.empty((n_edges, m_new + 1, 3))
    _resample_kernel(pos, out)
    return out


@njit(cache=True, parallel=True)
def _resample_kernel(pos, out):
    n_edges, n_pts, _ = pos.shape
    m_new = out.shape[1] - 1
    for e in prange(n_edges):
        total = 0.0
        for i in range(1, n_pts):
            dx = pos[e, i, 0] - pos[e, i - 1, 0]
            dy = pos[e, i, 1] - pos[e, i - 1, 1]
            dz = pos[e, i, 2] - pos[e, i - 1, 2]
            total += np.sqrt(dx * dx + dy * dy + dz * dz)
        for k in range(3):
            out[e, 0, k] = pos[e, 0, k]
            out[e, m_new, k] = pos[e, n_pts - 1, k]
        seg_i = 1
        acc = 0.0  # arc length up to pos[e, seg_i - 1]
        seg_len = 0.0
        dx = pos[e, seg_i, 0] - pos[e, seg_i - 1, 0]
        dy = pos[e, seg_i, 1] - pos[e, seg_i - 1, 1]
        dz = pos[e, seg_i, 2] - pos[e, seg_i - 1, 2]
        seg_len = np.sqrt(dx * dx + dy * dy + dz * dz)
        for j in range(1, m_new):
            target = total * j / m_new
            while acc + seg_len < target and seg_i < n_pts - 1:
                acc += seg_len
                seg_i += 1
                dx = pos[e, seg_i, 0] - pos[e, seg_i - 1, 0]
                dy = pos[e, seg_i, 1] - pos[e, seg_i - 1, 1]
                dz = pos[e, seg_i, 2] - pos[e, seg_i - 1, 2]
                seg_len = np.sqrt(dx * dx + dy * dy + dz * dz)
            frac = 0.0 if seg_len <= 0.0 else (target - acc) / seg_len
            for k in range(3):
                out[e, j, k] = pos[e, seg_i - 1, k] + frac * (
                    pos[e, seg_i, k] - pos[e, seg_i - 1, k]
                )


def force_on_point(line: Polyline, i: int, others: Sequence[Polyline],
                   cache: CompatibilityCache, params: BundleParams,
                   mean_edge_length: float | None = None) -> np.ndarray:
    """Reference force on interior point i of ``line``.

    ``others`` are the remaining edges, indexed 1..len(others) in the
    cache with ``line`` itself at index 0. This is the plain-numpy mirror
    of the bundling kernel, kept for oracle checks and experimentation.
    """
    pts = line.points
    if not (0 < i < pts.shape[0] - 1):
        raise ValueError(f"i must be an interior index, got {i}")
    if mean_edge_length is None:
        chords = [np.linalg.norm(pl.points[-1] - pl.points[0]) for pl in [line, *others]]
        mean_edge_length = float(np.mean(chords))
    eps = 1e-6 * mean_edge_length
    force = params.k_p * ((pts[i - 1] - pts[i]) + (pts[i + 1] - pts[i]))
    for k, other in enumerate(others, start=1):
        c = cache.get(0, k)
        if c < params.compat_threshold:
            continue
        delta = other.points[i] - pts[i]
        d = float(np.linalg.norm(delta))
        if d > 0.0:
            force = force + (c / (d * max(d, eps))) * delta
    return force


@njit(cache=True)
def _pair_compat(starts, ends, i, j):
    dxi = ends[i, 0] - starts[i, 0]
    dyi = ends[i, 1] - starts[i, 1]
    dzi = ends[i, 2] - starts[i, 2]
    li = np.sqrt(dxi * dxi + dyi * dyi + dzi * dzi)
    dxj = ends[j, 0] - starts[j, 0]
    dyj = ends[j, 1] - starts[j, 1]
    dzj = ends[j, 2] - starts[j, 2]
    lj = np.sqrt(dxj * dxj + dyj * dyj + dzj * dzj)
    dot = dxi * dxj + dyi * dyj + dzi * dzj
    c_angle = abs(dot / (li * lj))
    lavg = 0.5 * (li + lj)
    c_scale = 2.0 / (lavg / min(li, lj) + max(li, lj) / lavg)
    mxi = (starts[i, 0] + ends[i, 0]) * 0.5
    myi = (starts[i, 1] + ends[i, 1]) * 0.5
    mzi = (starts[i, 2] + ends[i, 2]) * 0.5
    mxj = (starts[j, 0] + ends[j, 0]) * 0.5
    myj = (starts[j, 1] + ends[j, 1]) * 0.5
    mzj = (starts[j, 2] + ends[j, 2]) * 0.5
    dmid = np.sqrt((mxj - mxi) ** 2 + (myj - myi) ** 2 + (mzj - mzi) ** 2)
    c_pos = lavg / (lavg + dmid)
    c_vis = 1.0
    for swap in range(2):
        if swap == 0:
            ax, ay, az = starts[i, 0], starts[i, 1], starts[i, 2]
            dx, dy, dz = dxi, dyi, dzi
            px, py, pz = mxi, myi, mzi
            q0x, q0y, q0z = starts[j, 0], starts[j, 1], starts[j, 2]
            q1x, q1y, q1z = ends[j, 0], ends[j, 1], ends[j, 2]
        else:
            ax, ay, az = starts[j, 0], starts[j, 1], starts[j, 2]
            dx, dy, dz = dxj, dyj, dzj
            px, py, pz = mxj, myj, mzj
            q0x, q0y, q0z = starts[i, 0], starts[i, 1], starts[i, 2]
            q1x, q1y, q1z = ends[i, 0], ends[i, 1], ends[i, 2]
        ll = dx * dx + dy * dy + dz * dz
        t0 = ((q0x - ax) * dx + (q0y - ay) * dy + (q0z - az) * dz) / ll
        t1 = ((q1x - ax) * dx + (q1y - ay) * dy + (q1z - az) * dz) / ll
        i0x, i0y, i0z = ax + t0 * dx, ay + t0 * dy, az + t0 * dz
        i1x, i1y, i1z = ax + t1 * dx, ay + t1 * dy, az + t1 * dz
        imx, imy, imz = 0.5 * (i0x + i1x), 0.5 * (i0y + i1y), 0.5 * (i0z + i1z)
        seg = np.sqrt((i1x - i0x) ** 2 + (i1y - i0y) ** 2 + (i1z - i0z) ** 2)
        off = np.sqrt((px - imx) ** 2 + (py - imy) ** 2 + (pz - imz) ** 2)
        if seg < 1e-300:
            v = 1.0 if off < 1e-300 else 0.0
        else:
            v = max(0.0, 1.0 - 2.0 * off / seg)
        if v < c_vis:
            c_vis = v
    return c_angle * c_scale * c_pos * c_vis


@njit(cache=True, parallel=True)
def _count_compat(starts, ends, threshold, counts):
    n = starts.shape[0]
    for i in prange(n):
        k = 0
        for j in range(i + 1, n):
            if _pair_compat(starts, ends, i, j) >= threshold:
                k += 1
        counts[i] = k


@njit(cache=True, parallel=True)
def _fill_compat(starts, ends, threshold, offsets, pair_a, pair_b, pair_c):
    n = starts.shape[0]
    for i in prange(n):
        k = offsets[i]
        for j in range(i + 1, n):
            c = _pair_compat(starts, ends, i, j)
            if c >= threshold:
                pair_a[k] = i
                pair_b[k] = j
                pair_c[k] = c
                k += 1


@njit(cache=True, parallel=True)
def _iterate(pos, new_pos, indptr, indices, cvals, kp, step, eps):
    n_edges, n_pts, _ = pos.shape
    for e in prange(n_edges):
        for k in range(3):
            new_pos[e, 0, k] = pos[e, 0, k]
            new_pos[e, n_pts - 1, k] = pos[e, n_pts - 1, k]
        for i in range(1, n_pts - 1):
            for k in range(3):
                spring = kp * (pos[e, i - 1, k] + pos[e, i + 1, k] - 2.0 * pos[e, i, k])
                new_pos[e, i, k] = pos[e, i, k] + step * spring
        for p in range(indptr[e], indptr[e + 1]):
            q = indices[p]
            c = cvals[p]
            for i in range(1, n_pts - 1):
                dx = pos[q, i, 0] - pos[e, i, 0]
                dy = pos[q, i, 1] - pos[e, i, 1]
                dz = pos[q, i, 2] - pos[e, i, 2]
                d = np.sqrt(dx * dx + dy * dy + dz * dz)
                if d > 0.0:
                    w = step * c / (d * max(d, eps))
                    new_pos[e, i, 0] += w * dx
                    new_pos[e, i, 1] += w * dy
                    new_pos[e, i, 2] += w * dz


def _compatible_pairs(starts, ends, threshold):
    """Pruned pair list (i < j, row-major order) as a directed CSR."""
    n = starts.shape[0]
    counts = np.zeros(n, dtype=np.int64)
    _count_compat(starts, ends, threshold, counts)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    total = int(offsets[-1])
    pair_a = np.empty(total, dtype=np.int64)
    pair_b = np.empty(total, dtype=np.int64)
    pair_c = np.empty(total, dtype=np.float64)
    _fill_compat(starts, ends, threshold, offsets[:-1].copy(), pair_a, pair_b, pair_c)
    da = np.concatenate([pair_a, pair_b])
    db = np.concatenate([pair_b, pair_a])
    dc = np.concatenate([pair_c, pair_c])
    order = np.lexsort((db, da))
    da, db, dc = da[order], db[order], dc[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(da, minlength=n), out=indptr[1:])
    return indptr, db, dc


def from_edge_set(edges: EdgeSet, atlas: Atlas) -> list[Polyline]:
    """Straight 2-point polylines for an edge set, positions from the atlas."""
    rows_s = np.searchsorted(atlas.ids, edges.src)
    rows_d = np.searchsorted(atlas.ids, edges.dst)
    p0 = atlas.positions[rows_s]
    p1 = atlas.positions[rows_d]
    return [
        Polyline(points=np.stack([p0[i], p1[i]]), weight=float(edges.weight[i]),
                 src=int(edges.src[i]), dst=int(edges.dst[i]))
        for i in range(len(edges))
    ]


def bundle(lines: Sequence[Polyline], params: BundleParams | None = None,
           threads: int | None = None) -> list[Polyline]:
    """Bundle edges; returns polylines with 2**n_cycles x initial_subdivisions
    intervals, endpoints bit-identical to the inputs.

    Only the endpoints of the input polylines are used; the solver builds
    its own subdivision. Deterministic for fixed inputs and params,
    independent of the worker count (forces read only the previous
    iteration's positions).
    """
    if params is None:
        params = BundleParams()
    lines = list(lines)
    if not lines:
        return []
    starts = np.array([pl.points[0] for pl in lines], dtype=np.float64)
    ends = np.array([pl.points[-1] for pl in lines], dtype=np.float64)
    chords = np.linalg.norm(ends - starts, axis=1)
    if np.any(chords == 0.0):
        bad = int(np.argmax(chords == 0.0))
        raise DegenerateInputError(f"edge {bad} has coincident endpoints")
    mean_len = float(chords.mean())
    eps = 1e-6 * mean_len
    step = params.step_size if params.step_size is not None else 0.04 * mean_len

    if threads is not None:
        requested = max(1, int(threads))
        numba.set_num_threads(min(requested, numba.config.NUMBA_NUM_THREADS))

    indptr, indices, cvals = _compatible_pairs(starts, ends, params.compat_threshold)

    pos = _resample(np.stack([starts, ends], axis=1), params.initial_subdivisions)
    iters = float(params.iterations_per_cycle)
    for _ in range(params.n_cycles):
        pos = _resample(pos, 2 * (pos.shape[1] - 1))
        buf = np.empty_like(pos)
        for _ in range(max(_ITERATION_FLOOR, int(iters))):
            _iterate(pos, buf, indptr, indices, cvals, params.k_p, step, eps)
            pos, buf = buf, pos
        step *= 0.5
        iters *= _ITERATION_DECAY
    # restore exact endpoint bytes (the solver never moves them, but be explicit)
    pos[:, 0, :] = starts
    pos[:, -1, :] = ends
    return [
        Polyline(points=pos[i], weight=lines[i].weight, src=lines[i].src, dst=lines[i].dst)
        for i in range(len(lines))
    ]


def export_bundles(lines: Sequence[Polyline], path, params: BundleParams | None = None) -> None:
    """Write the bundled-edge JSON document."""
    doc = {
        "params": asdict(params) if params is not None else {},
        "edges": [
            {
                "src": pl.src,
                "dst": pl.dst,
                "weight": pl.weight,
                "points": pl.points.tolist(),
            }
            for pl in lines
        ],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f)


def load_bundles(path) -> tuple[dict, list[Polyline]]:
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    lines = [
        Polyline(points=np.array(e["points"], dtype=np.float64),
                 weight=float(e["weight"]), src=int(e["src"]), dst=int(e["dst"]))
        for e in doc["edges"]
    ]
    return doc.get("params", {}), lines
