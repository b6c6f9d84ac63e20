import filecmp
import json
from dataclasses import replace
from pathlib import Path

import pytest

from dtbengine import (
    BIOLOGICAL,
    DTB,
    BurstSpec,
    GenSpec,
    SpecError,
    compare_sets,
    fixture_f1,
    gen_fixture,
    human_preset,
    load_atlas,
    load_bold,
    load_dti,
    macaque_preset,
    peak_time,
    top_fraction,
    write_fixture,
)


def _tree_bytes(root: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(root.iterdir())}


def test_write_fixture_deterministic(tmp_path):
    spec = GenSpec(seed=42, n_regions=12, voxels_per_region=(4, 6),
                   n_timepoints=40, dti_edge_count=500,
                   burst=BurstSpec(region_label=3, time_index=20))
    write_fixture(spec, tmp_path / "a")
    write_fixture(spec, tmp_path / "b")
    a = _tree_bytes(tmp_path / "a")
    b = _tree_bytes(tmp_path / "b")
    assert a.keys() == b.keys()
    for name in a:
        assert a[name] == b[name], f"{name} differs between runs"


def test_different_seeds_differ(tmp_path):
    base = GenSpec(seed=1, n_regions=6, voxels_per_region=(3, 4),
                   n_timepoints=20, dti_edge_count=100, burst=None)
    fx1 = gen_fixture(base)
    fx2 = gen_fixture(replace(base, seed=2))
    assert fx1.atlas.positions.tolist() != fx2.atlas.positions.tolist()
    # same schema either way
    assert len(fx1.atlas.regions) == len(fx2.atlas.regions)


def test_generated_files_pass_all_loaders(f1_store_dir, f1):
    atlas = load_atlas(f1_store_dir / "atlas.json")
    assert atlas == f1.atlas
    bio = load_bold(f1_store_dir / "bold_biological.csv", atlas, BIOLOGICAL)
    dtb = load_bold(f1_store_dir / "bold_dtb.csv", atlas, DTB)
    dti = load_dti(f1_store_dir / "dti.csv", atlas)
    assert bio.n_timepoints == f1.manifest["n_timepoints"]
    assert dtb.n_timepoints == bio.n_timepoints
    assert dti.entry_count == f1.manifest["dti_edge_count"]
    manifest = json.loads((f1_store_dir / "manifest.json").read_text())
    assert manifest["n_voxels"] == atlas.n_voxels
    assert sum(manifest["voxel_counts"].values()) == atlas.n_voxels


def test_planted_burst_sets_peak(f1):
    burst = f1.manifest["burst"]
    assert peak_time(f1.bold_biological, f1.atlas.regions) == burst["time_index"]


def test_manifest_lag_recovered_by_compare(f1):
    rep = compare_sets(f1.bold_biological, f1.bold_dtb)
    assert rep.lag == f1.manifest["dtb_lag"]


def test_twin_is_lagged_and_scaled_copy(f1):
    lag = f1.manifest["dtb_lag"]
    gain = f1.manifest["dtb_gain"]
    bio = f1.bold_biological.values
    dtb = f1.bold_dtb.values
    assert dtb[:, lag:] == pytest.approx(gain * bio[:, :-lag], rel=1e-12)


def test_paper_count_fixture():
    spec = replace(fixture_f1(), dti_edge_count=380_360)
    fx = gen_fixture(spec)
    assert fx.dti.entry_count == 380_360
    top = top_fraction(fx.dti, 0.1)
    assert len(top) == 38_036


def test_macaque_preset():
    spec = macaque_preset(7)
    assert spec.species == "macaque"
    assert spec.n_regions < human_preset(7).n_regions
    fx = gen_fixture(spec)
    assert fx.atlas.species == "macaque"
    fx2 = gen_fixture(macaque_preset(8))
    assert fx.atlas.positions.tolist() != fx2.atlas.positions.tolist()
    assert {r.label for r in fx.atlas.regions} == {r.label for r in fx2.atlas.regions}


def test_infeasible_edge_count_rejected():
    spec = GenSpec(seed=1, n_regions=2, voxels_per_region=(2, 2),
                   n_timepoints=10, dti_edge_count=1_000_000, burst=None)
    with pytest.raises(SpecError, match="dti_edge_count"):
        gen_fixture(spec)


def test_bad_burst_time_rejected():
    with pytest.raises(SpecError, match="burst"):
        GenSpec(seed=1, n_timepoints=100,
                burst=BurstSpec(region_label=1, time_index=100))
