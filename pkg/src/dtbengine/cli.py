"""Command-line front door.

Subcommands: synth (generate fixtures), ingest (validate and store data),
bundle (run edge bundling), slice (export a section), stats (report
analytics), serve (run the HTTP API).

Exit codes: 0 success, 1 validation error, 2 I/O error. Outputs are
written to a temporary sibling and renamed on success, so a failing run
never leaves a partial overwrite behind. ``DTB_ENGINE_THREADS`` overrides
``--threads`` for bundling.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
import tempfile
from pathlib import Path

from .errors import EngineError

_EXIT_OK = 0
_EXIT_VALIDATION = 1
_EXIT_IO = 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dtbengine", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a deterministic synthetic store")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--preset", choices=["human", "macaque"], default="human")
    sp.add_argument("--dti-edges", type=int, default=None,
                    help="override the preset's DTI entry count")
    sp.add_argument("--out", required=True)

    ip = sub.add_parser("ingest", help="validate input files into a store directory")
    ip.add_argument("--atlas", required=True)
    ip.add_argument("--bold", required=True)
    ip.add_argument("--bold-dtb", default=None)
    ip.add_argument("--dti", required=True)
    ip.add_argument("--out", required=True)

    bp = sub.add_parser("bundle", help="bundle the heaviest connections")
    bp.add_argument("--edges", required=True, help="DTI edge-list file")
    bp.add_argument("--atlas", required=True)
    bp.add_argument("--fraction", type=float, default=0.1)
    bp.add_argument("--cycles", type=int, default=6)
    bp.add_argument("--kp", type=float, default=0.1)
    bp.add_argument("--threads", type=int, default=None)
    bp.add_argument("--out", default="bundles.json")

    lp = sub.add_parser("slice", help="export a slice section as PGM + JSON")
    lp.add_argument("--store", required=True)
    lp.add_argument("--axis", choices=["sagittal", "horizontal", "coronal"], required=True)
    lp.add_argument("--coord", type=float, required=True)
    lp.add_argument("--t", type=int, required=True)
    lp.add_argument("--thickness", type=float, default=None)
    lp.add_argument("--out", default=None, help="output prefix (default slice_<axis>_<coord>_t<t>)")

    tp = sub.add_parser("stats", help="report region means, peak time, twin comparison")
    tp.add_argument("--store", required=True)
    tp.add_argument("--top-regions", type=int, default=5)
    tp.add_argument("--t", type=int, default=None)
    tp.add_argument("--compare", action="store_true")
    tp.add_argument("--format", choices=["text", "json"], default="text")

    vp = sub.add_parser("serve", help="run the scene API")
    vp.add_argument("--store", required=True)
    vp.add_argument("--port", type=int, default=8000)
    vp.add_argument("--host", default="127.0.0.1")

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_VALIDATION
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return _EXIT_IO


def _dispatch(args) -> int:
    if args.command == "synth":
        return _cmd_synth(args)
    if args.command == "ingest":
        return _cmd_ingest(args)
    if args.command == "bundle":
        return _cmd_bundle(args)
    if args.command == "slice":
        return _cmd_slice(args)
    if args.command == "stats":
        return _cmd_stats(args)
    if args.command == "serve":
        return _cmd_serve(args)
    raise ValueError(f"unknown command {args.command!r}")


class _staged_dir:
    """Build outputs in a temp sibling, move into place only on success."""

    def __init__(self, target):
        self.target = Path(target)

    def __enter__(self) -> Path:
        self.target.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=self.target.name + ".tmp-",
                                         dir=self.target.parent))
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            shutil.rmtree(self.tmp, ignore_errors=True)
            return False
        if self.target.exists():
            if any(self.target.iterdir()):
                shutil.rmtree(self.tmp, ignore_errors=True)
                raise OSError(f"output directory {self.target} is not empty")
            self.target.rmdir()
        os.replace(self.tmp, self.target)
        return False


def _cmd_synth(args) -> int:
    from . import synthgen

    preset = synthgen.human_preset if args.preset == "human" else synthgen.macaque_preset
    spec = preset(args.seed)
    if args.dti_edges is not None:
        from dataclasses import replace
        spec = replace(spec, dti_edge_count=args.dti_edges)
    with _staged_dir(args.out) as tmp:
        fx = synthgen.write_fixture(spec, tmp)
    print(f"wrote {args.preset} store to {args.out}: "
          f"{fx.manifest['n_voxels']} voxels, {fx.manifest['dti_edge_count']} connections")
    return _EXIT_OK


def _cmd_ingest(args) -> int:
    from .atlas import load_atlas, save_atlas
    from .connectome import load_dti, save_dti
    from .signals import BIOLOGICAL, DTB, load_bold, save_bold

    atlas = load_atlas(args.atlas)
    bio = load_bold(args.bold, atlas, BIOLOGICAL)
    dtb = load_bold(args.bold_dtb, atlas, DTB) if args.bold_dtb else None
    dti = load_dti(args.dti, atlas)
    with _staged_dir(args.out) as tmp:
        files = {"atlas": "atlas.json", "bold_biological": "bold_biological.csv",
                 "dti": "dti.csv"}
        save_atlas(atlas, tmp / files["atlas"])
        save_bold(bio, tmp / files["bold_biological"])
        if dtb is not None:
            files["bold_dtb"] = "bold_dtb.csv"
            save_bold(dtb, tmp / files["bold_dtb"])
        save_dti(dti, tmp / files["dti"])
        manifest = {
            "files": files,
            "species": atlas.species,
            "n_regions": len(atlas.regions),
            "n_voxels": atlas.n_voxels,
            "n_timepoints": bio.n_timepoints,
            "dt_ms": bio.dt_ms,
            "dti_edge_count": dti.entry_count,
        }
        with open(tmp / "manifest.json", "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=1, sort_keys=True)
    print(f"ingested store at {args.out}: {atlas.n_voxels} voxels, "
          f"{dti.entry_count} connections")
    return _EXIT_OK


def _cmd_bundle(args) -> int:
    from . import fdeb
    from .atlas import load_atlas
    from .connectome import global_normalize, load_dti, top_fraction

    threads = args.threads
    env = os.environ.get("DTB_ENGINE_THREADS")
    if env:
        threads = int(env)

    atlas = load_atlas(args.atlas)
    matrix = global_normalize(load_dti(args.edges, atlas))
    edges = top_fraction(matrix, args.fraction)
    print(f"selected {len(edges)} edges")
    params = fdeb.BundleParams(k_p=args.kp, n_cycles=args.cycles)
    lines = fdeb.bundle(fdeb.from_edge_set(edges, atlas), params, threads=threads)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=out.name + ".tmp-", dir=out.parent)
    os.close(fd)
    try:
        fdeb.export_bundles(lines, tmp_name, params)
        os.replace(tmp_name, out)
    except BaseException:
        os.unlink(tmp_name)
        raise
    print(f"wrote {len(lines)} bundled polylines to {out}")
    return _EXIT_OK


def _cmd_slice(args) -> int:
    from . import slicer
    from .scene import load_store
    from .signals import BIOLOGICAL, minmax_normalize

    store_dir = Path(args.store)
    store = load_store(store_dir)
    sig = minmax_normalize(store.bio_raw)
    plane = slicer.SlicePlane(axis=args.axis, coordinate_mm=args.coord,
                              thickness_mm=args.thickness)
    r = slicer.raster(store.atlas, sig, plane, args.t)
    prefix = args.out or f"slice_{args.axis}_{args.coord:g}_t{args.t}"
    thickness = args.thickness if args.thickness is not None else store.atlas.spacing_mm
    pgm, sidecar = slicer.export_raster(r, plane, thickness, prefix)
    occupied = int((~_nan_mask(r)).sum())
    print(f"wrote {pgm} and {sidecar}: {r.values.shape[0]}x{r.values.shape[1]} cells, "
          f"{occupied} occupied")
    return _EXIT_OK


def _nan_mask(raster):
    import numpy as np

    return np.isnan(raster.values)


def _cmd_stats(args) -> int:
    from .scene import load_store
    from .signals import compare_sets, peak_time, top_regions

    store = load_store(Path(args.store))
    norm_bio = store.norm[("per-set", "biological")]
    peak = peak_time(norm_bio, store.functional)
    t = args.t if args.t is not None else peak
    ranked = top_regions(norm_bio, store.atlas, t, args.top_regions)

    report = {
        "dataset": store.dataset_id,
        "n_voxels": store.atlas.n_voxels,
        "n_timepoints": store.n_timepoints,
        "peak_time": peak,
        "t": t,
        "top_regions": [
            {"label": lab, "name": _region_name(store, lab), "mean": mean}
            for lab, mean in ranked
        ],
    }
    if args.compare:
        if not store.has_dtb:
            raise EngineError("store has no twin set; nothing to compare")
        rep = compare_sets(store.bio_raw, store.dtb_raw)
        report["compare"] = {
            "pearson_r": rep.pearson_r,
            "lag": rep.lag,
            "degenerate": rep.degenerate,
        }

    if args.format == "json":
        print(json.dumps(report, indent=1, sort_keys=True))
    else:
        print(f"dataset {report['dataset']}: {report['n_voxels']} voxels, "
              f"T={report['n_timepoints']}")
        print(f"peak time: {report['peak_time']}")
        print(f"top regions at t={report['t']}:")
        for row in report["top_regions"]:
            print(f"  {row['label']:>4}  {row['name']:<24} {row['mean']:.6f}")
        if "compare" in report:
            c = report["compare"]
            print(f"twin comparison: pearson_r={c['pearson_r']:.4f} lag={c['lag']}")
    return _EXIT_OK


def _region_name(store, label: int) -> str:
    from .atlas import region_by_label

    return region_by_label(store.atlas, label).name


def _cmd_serve(args) -> int:
    import uvicorn

    from .scene import SceneService, load_store
    from .server import create_app

    service = SceneService()
    service.add_store(load_store(Path(args.store)))
    app = create_app(service)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return _EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
