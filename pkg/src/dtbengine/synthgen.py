"""Deterministic seeded generation of atlas / BOLD / DTI fixtures.

The real recordings behind this engine are not published, so tests and
demos run on synthetic stand-ins with planted, machine-checkable ground
truth. Generation is a pure function of the GenSpec: the same spec yields
byte-identical files on every run and platform (see ``rng`` for the
pinned random stream).

Construction, in stream order:

1. region voxel counts: one uniform per region over the configured range;
2. region centers: spherical shell directions (two uniforms) and a radius
   factor in [0.35, 0.9) of the species ellipsoid, one triple per region;
3. voxel positions: center + spacing * 1.2 * gaussian offsets;
4. BOLD: a slow common drive sin(2*pi*t/100) (phase-shifted so its crest
   coincides with the planted burst, making the burst time the global
   argmax), a per-region sinusoid (period 55..90, random phase, amplitude
   0.35), gaussian voxel noise (sd 0.12), and the optional burst: a
   gaussian bump (sd 10 samples) added to every voxel and doubled inside
   the burst region so that region dominates the ranking at the burst
   time;
5. the twin set: the biological series delayed by ``dtb_lag`` samples
   (leading samples hold the first value) and scaled by ``dtb_gain`` —
   delay and attenuation only, no nonlinearity;
6. DTI: rejection-sample exactly ``dti_edge_count`` distinct directed
   voxel pairs (no self-pairs), in ascending (src, dst) order, with
   weight exp(-distance/lambda) * (0.5 + uniform), lambda = half the mean
   ellipsoid semi-axis.

The manifest records every count plus the planted ground truth (burst
region/time, twin lag and gain) so tests can close the loop.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .atlas import Atlas, aal116_table, make_atlas
from .connectome import ConnectivityMatrix, make_matrix, save_dti
from .errors import SpecError
from .rng import SplitMix64
from .signals import BIOLOGICAL, DTB, SignalSet, make_signal_set, save_bold

_ELLIPSOID = {"human": (70.0, 85.0, 60.0), "macaque": (28.0, 35.0, 25.0)}
_DEFAULT_ELLIPSOID = (50.0, 60.0, 45.0)


@dataclass(frozen=True)
class BurstSpec:
    region_label: int
    time_index: int
    amplitude: float = 2.5


@dataclass(frozen=True)
class GenSpec:
    seed: int
    n_regions: int = 116
    voxels_per_region: tuple[int, int] = (8, 16)
    n_timepoints: int = 166
    dt_ms: float = 800.0
    burst: BurstSpec | None = BurstSpec(region_label=35, time_index=119)
    dti_edge_count: int = 20_000
    species: str = "human"
    spacing_mm: float = 3.0
    dtb_lag: int = 3
    dtb_gain: float = 0.8

    def __post_init__(self):
        if self.n_regions < 1:
            raise SpecError("n_regions must be positive")
        lo, hi = self.voxels_per_region
        if not (1 <= lo <= hi):
            raise SpecError(f"bad voxels_per_region range ({lo}, {hi})")
        if self.n_timepoints < 1:
            raise SpecError("n_timepoints must be positive")
        if not (self.dt_ms > 0):
            raise SpecError("dt_ms must be positive")
        if self.dti_edge_count < 1:
            raise SpecError("dti_edge_count must be positive")
        if self.burst is not None:
            if not (0 <= self.burst.time_index < self.n_timepoints):
                raise SpecError(
                    f"burst time {self.burst.time_index} outside [0, {self.n_timepoints})"
                )
            if not (1 <= self.burst.region_label <= self.n_regions):
                raise SpecError(f"burst region {self.burst.region_label} out of range")
        if self.dtb_lag < 0 or self.dtb_lag >= self.n_timepoints:
            raise SpecError("dtb_lag must be in [0, n_timepoints)")
        if not (self.dtb_gain > 0):
            raise SpecError("dtb_gain must be positive")


def human_preset(seed: int) -> GenSpec:
    """Paper-shaped human fixture: 116 labels, 92 functional, T=166 at 800 ms."""
    return GenSpec(seed=seed)


def macaque_preset(seed: int) -> GenSpec:
    """Smaller cross-species fixture with the same schema."""
    return GenSpec(
        seed=seed,
        n_regions=40,
        voxels_per_region=(6, 12),
        dti_edge_count=8_000,
        species="macaque",
        spacing_mm=1.5,
        burst=BurstSpec(region_label=7, time_index=119),
    )


F1_SEED = 42


def fixture_f1() -> GenSpec:
    """The standard fixture: human preset, seed 42, burst at t=119, lag 3."""
    return human_preset(F1_SEED)


@dataclass(frozen=True)
class GeneratedFixture:
    atlas: Atlas
    bold_biological: SignalSet
    bold_dtb: SignalSet
    dti: ConnectivityMatrix
    manifest: dict


def _region_names(spec: GenSpec) -> list[dict]:
    if spec.species == "human" and spec.n_regions == 116:
        return aal116_table()
    return [
        {"label": i + 1, "name": f"region_{i + 1:03d}", "functional": True}
        for i in range(spec.n_regions)
    ]


def gen_fixture(spec: GenSpec) -> GeneratedFixture:
    """Generate the full fixture for a spec (see module docstring)."""
    rng = SplitMix64(spec.seed)
    names = _region_names(spec)

    lo, hi = spec.voxels_per_region
    sizes = (lo + np.floor(rng.uniforms(spec.n_regions) * (hi - lo + 1))).astype(np.int64)
    sizes = np.minimum(sizes, hi)
    n_vox = int(sizes.sum())
    if spec.dti_edge_count > n_vox * (n_vox - 1):
        raise SpecError(
            f"dti_edge_count {spec.dti_edge_count} exceeds the "
            f"{n_vox * (n_vox - 1)} distinct directed pairs available"
        )

    semi = np.array(_ELLIPSOID.get(spec.species, _DEFAULT_ELLIPSOID))
    u = rng.uniforms(3 * spec.n_regions).reshape(spec.n_regions, 3)
    phi = 2.0 * np.pi * u[:, 0]
    costh = 2.0 * u[:, 1] - 1.0
    sinth = np.sqrt(1.0 - costh ** 2)
    shell = 0.35 + 0.55 * u[:, 2]
    centers = semi * shell[:, None] * np.column_stack(
        [sinth * np.cos(phi), sinth * np.sin(phi), costh]
    )

    offsets = spec.spacing_mm * 1.2 * rng.normals(3 * n_vox).reshape(n_vox, 3)
    region_of = np.repeat(np.arange(spec.n_regions), sizes)
    positions = centers[region_of] + offsets

    regions = []
    vid = 0
    for ri in range(spec.n_regions):
        count = int(sizes[ri])
        voxels = [
            {"id": vid + k, "pos": positions[vid + k].tolist()} for k in range(count)
        ]
        regions.append(
            {
                "label": names[ri]["label"],
                "name": names[ri]["name"],
                "functional": names[ri]["functional"],
                "voxels": voxels,
            }
        )
        vid += count
    atlas = make_atlas(spec.species, spec.spacing_mm, regions)

    t = np.arange(spec.n_timepoints, dtype=np.float64)
    if spec.burst is not None:
        common = np.cos(2.0 * np.pi * (t - spec.burst.time_index) / 100.0)
    else:
        common = np.sin(2.0 * np.pi * t / 100.0)
    periods = 55.0 + rng.uniforms(spec.n_regions) * 35.0
    phases = 2.0 * np.pi * rng.uniforms(spec.n_regions)
    latents = 0.35 * np.sin(
        2.0 * np.pi * t[None, :] / periods[:, None] + phases[:, None]
    )
    noise = 0.12 * rng.normals(n_vox * spec.n_timepoints).reshape(n_vox, spec.n_timepoints)
    bio = 1.0 + common[None, :] + latents[region_of] + noise
    if spec.burst is not None:
        bump = spec.burst.amplitude * np.exp(
            -0.5 * ((t - spec.burst.time_index) / 10.0) ** 2
        )
        bio += bump[None, :]
        burst_rows = region_of == _region_index(names, spec.burst.region_label)
        bio[burst_rows] += bump[None, :]

    dtb = np.empty_like(bio)
    lag = spec.dtb_lag
    if lag > 0:
        dtb[:, lag:] = bio[:, :-lag]
        dtb[:, :lag] = bio[:, :1]
    else:
        dtb[:] = bio
    dtb *= spec.dtb_gain

    voxel_ids = np.arange(n_vox, dtype=np.int64)
    bold_bio = make_signal_set(BIOLOGICAL, spec.dt_ms, voxel_ids=voxel_ids, values=bio)
    bold_dtb = make_signal_set(DTB, spec.dt_ms, voxel_ids=voxel_ids, values=dtb)

    keys = _sample_pairs(rng, n_vox, spec.dti_edge_count)
    src = keys // n_vox
    dst = keys % n_vox
    dist = np.linalg.norm(positions[src] - positions[dst], axis=1)
    lam = 0.5 * float(semi.mean())
    weights = np.exp(-dist / lam) * (0.5 + rng.uniforms(spec.dti_edge_count))
    dti = make_matrix(n_vox, src, dst, weights)

    manifest = {
        "seed": spec.seed,
        "species": spec.species,
        "spacing_mm": spec.spacing_mm,
        "n_regions": spec.n_regions,
        "n_functional_regions": sum(1 for r in names if r["functional"]),
        "n_voxels": n_vox,
        "voxel_counts": {str(names[i]["label"]): int(sizes[i]) for i in range(spec.n_regions)},
        "n_timepoints": spec.n_timepoints,
        "dt_ms": spec.dt_ms,
        "dti_edge_count": spec.dti_edge_count,
        "dtb_lag": spec.dtb_lag,
        "dtb_gain": spec.dtb_gain,
        "burst": asdict(spec.burst) if spec.burst is not None else None,
    }
    return GeneratedFixture(
        atlas=atlas, bold_biological=bold_bio, bold_dtb=bold_dtb, dti=dti,
        manifest=manifest,
    )


def _region_index(names: list[dict], label: int) -> int:
    for i, entry in enumerate(names):
        if entry["label"] == label:
            return i
    raise SpecError(f"burst region label {label} not in the name table")


def _sample_pairs(rng: SplitMix64, n_vox: int, target: int) -> np.ndarray:
    """Exactly ``target`` distinct directed pairs, ascending (src, dst) keys.

    Batched rejection sampling; batch sizes depend only on counts already
    drawn, so the consumed stream (and thus everything generated after the
    pairs) is deterministic.
    """
    keys = np.empty(0, dtype=np.int64)
    while keys.size < target:
        need = target - keys.size
        batch = int(need * 1.35) + 1024
        src = rng.integers(batch, n_vox)
        dst = rng.integers(batch, n_vox)
        fresh = src != dst
        candidate = src[fresh] * n_vox + dst[fresh]
        keys = np.unique(np.concatenate([keys, candidate]))
    return keys[:target]


_FILES = {
    "atlas": "atlas.json",
    "bold_biological": "bold_biological.csv",
    "bold_dtb": "bold_dtb.csv",
    "dti": "dti.csv",
    "manifest": "manifest.json",
}


def write_fixture(spec: GenSpec, out_dir, dti_binary: bool = False) -> GeneratedFixture:
    """Generate and write a fixture as a store directory.

    Layout: atlas.json, bold_biological.csv, bold_dtb.csv, dti.csv (or
    dti.bin with ``dti_binary``), manifest.json. Same spec -> identical
    bytes.
    """
    from .atlas import save_atlas  # local to avoid cycle at import time

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fx = gen_fixture(spec)
    files = dict(_FILES)
    if dti_binary:
        files["dti"] = "dti.bin"
    save_atlas(fx.atlas, out / files["atlas"])
    save_bold(fx.bold_biological, out / files["bold_biological"])
    save_bold(fx.bold_dtb, out / files["bold_dtb"])
    save_dti(fx.dti, out / files["dti"], binary=dti_binary)
    manifest = dict(fx.manifest)
    manifest["files"] = files
    with open(out / files["manifest"], "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    return GeneratedFixture(
        atlas=fx.atlas, bold_biological=fx.bold_biological, bold_dtb=fx.bold_dtb,
        dti=fx.dti, manifest=manifest,
    )
