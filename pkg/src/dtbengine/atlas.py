"""Hierarchical brain structure: labeled regions owning positioned voxels.

Coordinates follow a RAS-like convention: x grows to the right, y to the
front (anterior), z upward (superior). An atlas is immutable after
construction and safe for unrestricted concurrent reads.

Atlas file format (JSON, strict keys)::

    {
      "species": "human" | "macaque" | <other name>,
      "spacing_mm": <float>,
      "regions": [
        {"label": int, "name": str, "functional": bool,
         "voxels": [{"id": int, "pos": [x, y, z]}, ...]},
        ...
      ]
    }

Unknown keys are rejected. Region centroids are not serialized; they are
recomputed on load as the arithmetic mean of the member voxel positions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable

import numpy as np

from .errors import FormatError, NotFoundError

HUMAN = "human"
MACAQUE = "macaque"


@dataclass(frozen=True)
class Voxel:
    id: int
    position_mm: tuple[float, float, float]
    region_label: int


@dataclass(frozen=True)
class Region:
    label: int
    name: str
    voxel_ids: tuple[int, ...]
    centroid_mm: tuple[float, float, float]
    functional: bool


@dataclass(frozen=True, eq=False)
class Atlas:
    species: str
    spacing_mm: float
    regions: tuple[Region, ...]
    voxel_index: dict[int, Voxel]
    # flat views aligned on ascending voxel id, for vectorized queries
    ids: np.ndarray = field(repr=False)
    positions: np.ndarray = field(repr=False)
    region_label_of: np.ndarray = field(repr=False)

    @property
    def n_voxels(self) -> int:
        return len(self.voxel_index)

    def row_of(self, voxel_id: int) -> int:
        row = int(np.searchsorted(self.ids, voxel_id))
        if row >= len(self.ids) or self.ids[row] != voxel_id:
            raise NotFoundError(f"voxel {voxel_id} not in atlas")
        return row

    def __eq__(self, other) -> bool:
        if not isinstance(other, Atlas):
            return NotImplemented
        return (
            self.species == other.species
            and self.spacing_mm == other.spacing_mm
            and self.regions == other.regions
            and self.voxel_index == other.voxel_index
        )


def make_atlas(species: str, spacing_mm: float, regions: Iterable[dict]) -> Atlas:
    """Build and validate an Atlas from plain region dicts.

    Each region dict carries label, name, functional, and voxels
    (list of (id, (x, y, z)) pairs or {"id":..., "pos":...} dicts).
    Raises FormatError on duplicate labels, duplicate voxel ids, an empty
    region list, or a functional region without voxels.
    """
    region_list = list(regions)
    if not region_list:
        raise FormatError("atlas has no regions")
    if not (spacing_mm > 0):
        raise FormatError(f"spacing_mm must be positive, got {spacing_mm}")
    if not isinstance(species, str) or not species:
        raise FormatError("species must be a non-empty string")

    seen_labels: set[int] = set()
    seen_voxels: set[int] = set()
    built: list[Region] = []
    voxel_index: dict[int, Voxel] = {}
    for reg in region_list:
        label = int(reg["label"])
        if label <= 0:
            raise FormatError(f"region label must be a positive integer, got {label}")
        if label in seen_labels:
            raise FormatError(f"duplicate region label {label}")
        seen_labels.add(label)
        voxels = reg["voxels"]
        pairs = []
        for v in voxels:
            if isinstance(v, dict):
                vid, pos = int(v["id"]), v["pos"]
            else:
                vid, pos = int(v[0]), v[1]
            if vid in seen_voxels:
                raise FormatError(
                    f"voxel {vid} appears in more than one region (region {label})"
                )
            seen_voxels.add(vid)
            pos = (float(pos[0]), float(pos[1]), float(pos[2]))
            pairs.append((vid, pos))
        functional = bool(reg["functional"])
        if functional and not pairs:
            raise FormatError(f"functional region {label} has no voxels")
        if pairs:
            centroid = tuple(np.mean([p for _, p in pairs], axis=0).tolist())
        else:
            centroid = (0.0, 0.0, 0.0)  # placeholder; empty regions carry no geometry
        region = Region(
            label=label,
            name=str(reg["name"]),
            voxel_ids=tuple(vid for vid, _ in pairs),
            centroid_mm=centroid,
            functional=functional,
        )
        built.append(region)
        for vid, pos in pairs:
            voxel_index[vid] = Voxel(id=vid, position_mm=pos, region_label=label)

    ids = np.array(sorted(voxel_index), dtype=np.int64)
    positions = np.array([voxel_index[i].position_mm for i in ids], dtype=np.float64)
    positions = positions.reshape(len(ids), 3) if len(ids) else positions.reshape(0, 3)
    labels = np.array([voxel_index[i].region_label for i in ids], dtype=np.int64)
    return Atlas(
        species=species,
        spacing_mm=float(spacing_mm),
        regions=tuple(built),
        voxel_index=voxel_index,
        ids=ids,
        positions=positions,
        region_label_of=labels,
    )


_TOP_KEYS = {"species", "spacing_mm", "regions"}
_REGION_KEYS = {"label", "name", "functional", "voxels"}
_VOXEL_KEYS = {"id", "pos"}


def _check_keys(obj: dict, allowed: set, context: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise FormatError(f"unknown key(s) {sorted(unknown)} in {context}")
    missing = allowed - set(obj)
    if missing:
        raise FormatError(f"missing key(s) {sorted(missing)} in {context}")


def load_atlas(path) -> Atlas:
    """Load and validate an atlas file. Raises FormatError on any violation."""
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise FormatError(f"atlas file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise FormatError("atlas document must be a JSON object")
    _check_keys(doc, _TOP_KEYS, "atlas document")
    regions = doc["regions"]
    if not isinstance(regions, list):
        raise FormatError("'regions' must be a list")
    for reg in regions:
        _check_keys(reg, _REGION_KEYS, f"region {reg.get('label', '?')}")
        for v in reg["voxels"]:
            _check_keys(v, _VOXEL_KEYS, f"voxel in region {reg['label']}")
            if len(v["pos"]) != 3:
                raise FormatError(f"voxel {v['id']} position must have 3 components")
    return make_atlas(doc["species"], doc["spacing_mm"], regions)


def save_atlas(atlas: Atlas, path) -> None:
    doc = {
        "species": atlas.species,
        "spacing_mm": atlas.spacing_mm,
        "regions": [
            {
                "label": r.label,
                "name": r.name,
                "functional": r.functional,
                "voxels": [
                    {"id": vid, "pos": list(atlas.voxel_index[vid].position_mm)}
                    for vid in r.voxel_ids
                ],
            }
            for r in atlas.regions
        ],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f)


def functional_regions(atlas: Atlas) -> list[Region]:
    """Non-cerebellar regions, in ascending label order."""
    return sorted((r for r in atlas.regions if r.functional), key=lambda r: r.label)


def region_by_label(atlas: Atlas, label: int) -> Region:
    for r in atlas.regions:
        if r.label == label:
            return r
    raise NotFoundError(f"no region with label {label}")


def region_sphere_radius(region: Region, scale: float) -> float:
    """Display radius for a region sphere.

    Radius is scale * cbrt(voxel count) so sphere volume is proportional
    to the number of voxels the region owns.
    """
    if not (scale > 0):
        raise ValueError(f"scale must be positive, got {scale}")
    return scale * float(np.cbrt(len(region.voxel_ids)))


def aal116_table() -> list[dict]:
    """Bundled 116-label human name table: [{label, name, functional}, ...].

    92 labels are functional; the 24 cerebellum/vermis labels are not.
    """
    with resources.files(__package__).joinpath("data/aal116.json").open(
        "r", encoding="utf-8"
    ) as f:
        return json.load(f)
