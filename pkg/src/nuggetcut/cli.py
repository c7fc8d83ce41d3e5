"""Command line entry points.

Subcommands: phantom (synthesize a test volume), segment (one-shot
segmentation), eval (DSC between two masks), report (tables, JSON, CSV
and figures from precomputed case rows), bench (recompute timing) and
serve (the HTTP service).

Every successful run prints one machine-readable JSON line on stdout.
Exit codes: 1 usage error, 2 I/O or file-format error, 3 algorithmic
error.  The NUGGETCUT_THREADS environment variable is reserved; compute
is currently single-threaded.
"""

from __future__ import annotations

import argparse
import json
import os
import statistics
import sys
import time

import numpy as np

from . import evalstat, phantom, segmenter, volume as volio
from .errors import (
    MetaImageParseError,
    NuggetCutError,
    UnsupportedFormatError,
    VolumeSizeError,
)
from .flowgraph import build_graph, extract_cut, max_flow
from .geometry import build_lattice, ray_template
from .report_figures import render_report_figures
from .segmenter import (
    OUT_OF_VOLUME_COST,
    RAY_COUNT_LEVELS,
    SegmentationParams,
    Session,
)

_IO_ERRORS = (OSError, MetaImageParseError, VolumeSizeError,
              UnsupportedFormatError, json.JSONDecodeError, KeyError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _parse_triple(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(
            f"expected X,Y,Z, got {text!r}"
        )
    return tuple(float(p) for p in parts)


def _result_line(payload: dict) -> None:
    print(json.dumps(payload))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nuggetcut",
                     description="Radial graph-cut volume segmentation")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("phantom", parents=[], help="synthesize a phantom")
    p.add_argument("--spec", required=True, help="PhantomSpec JSON file")
    p.add_argument("--out", required=True, help="output volume (.mhd)")
    p.add_argument("--truth", required=True, help="output ground truth (.mhd)")

    s = sub.add_parser("segment", help="one-shot segmentation")
    s.add_argument("--volume", required=True)
    s.add_argument("--seed", type=_parse_triple,
                   help="seed in world mm as X,Y,Z")
    s.add_argument("--seed-voxel", type=_parse_triple,
                   help="seed as integer voxel indices I,J,K")
    s.add_argument("--border", type=_parse_triple, action="append",
                   default=[], help="border seed in world mm (repeatable)")
    s.add_argument("--delta-r", type=int, default=1)
    s.add_argument("--rays", type=int, default=812,
                   choices=sorted(RAY_COUNT_LEVELS))
    s.add_argument("--nodes", type=int, default=40)
    s.add_argument("--radius", type=float, default=50.0)
    s.add_argument("--tau", default="AUTO",
                   help="AUTO or a fixed positive intensity threshold")
    s.add_argument("--strategy", choices=("threshold", "derivative"),
                   default="threshold")
    s.add_argument("--out", required=True, help="output mask (.mhd)")
    s.add_argument("--mesh", help="optional cut-surface OBJ output")
    s.add_argument("--timing", action="store_true",
                   help="include timing breakdown in the result line")

    e = sub.add_parser("eval", help="DSC between reference and test mask")
    e.add_argument("--ref", required=True)
    e.add_argument("--test", required=True)

    r = sub.add_parser("report", help="tables, JSON, CSV and figures")
    r.add_argument("--cases", required=True, help="cases JSON document")
    r.add_argument("--out", required=True,
                   help="output base path (writes .txt/.json/.csv)")
    r.add_argument("--no-figures", action="store_true",
                   help="skip figure rendering")

    b = sub.add_parser("bench", help="recompute timing at a given size")
    b.add_argument("--rays", type=int, default=812,
                   choices=sorted(RAY_COUNT_LEVELS))
    b.add_argument("--nodes", type=int, default=40)
    b.add_argument("--repeats", type=int, default=20)

    v = sub.add_parser("serve", help="run the HTTP service")
    v.add_argument("--bind", default="127.0.0.1:8754", help="HOST:PORT")
    v.add_argument("--data-dir", required=True,
                   help="storage root for volumes, masks and sessions")
    v.add_argument("--max-upload-mb", type=int, default=512)
    return parser


def _cmd_phantom(args) -> dict:
    with open(args.spec, "r", encoding="utf-8") as fp:
        spec = phantom.PhantomSpec.from_json(fp.read())
    vol, truth = phantom.make_phantom(spec)
    volio.save_volume(vol, args.out)
    volio.save_mask(truth, args.truth)
    return {
        "subcommand": "phantom",
        "volume": args.out,
        "truth": args.truth,
        "dims": list(vol.dims),
        "truth_voxels": truth.voxel_count,
        "truth_volume_mm3": truth.physical_volume_mm3,
    }


def _params_from_args(args) -> SegmentationParams:
    if str(args.tau).upper() == "AUTO":
        tau_mode, tau_fixed = "auto", SegmentationParams().tau_fixed
    else:
        tau_mode, tau_fixed = "fixed", float(args.tau)
    params = SegmentationParams(
        refinement_level=RAY_COUNT_LEVELS[args.rays],
        nodes_per_ray=args.nodes,
        max_radius_mm=args.radius,
        delta_r=args.delta_r,
        tau_mode=tau_mode,
        tau_fixed=tau_fixed,
        strategy=args.strategy,
    )
    params.validate()
    return params


def _cmd_segment(args) -> dict:
    if (args.seed is None) == (args.seed_voxel is None):
        raise SystemExit(_usage_error(
            "exactly one of --seed / --seed-voxel is required"))
    vol = volio.load_volume(args.volume)
    if args.seed is not None:
        seed = args.seed
    else:
        seed = tuple(vol.voxel_to_world(args.seed_voxel))
    params = _params_from_args(args)
    session = Session(volume=vol, params=params, seed=seed)
    for point in args.border:
        session.border_seeds.append(tuple(point))
    seg = segmenter.segment(session)
    volio.save_mask(seg.mask, args.out)
    if args.mesh:
        segmenter.save_obj(args.mesh, seg.surface_vertices, seg.surface_faces)
    payload = {
        "subcommand": "segment",
        "mask": args.out,
        "seed": list(seed),
        "avg_used": seg.avg_used,
        "tau_used": seg.tau_used,
        "voxels": seg.mask.voxel_count,
        "volume_mm3": seg.mask.physical_volume_mm3,
        "elapsed_ms": round(seg.elapsed_ms, 3),
    }
    if args.mesh:
        payload["mesh"] = args.mesh
    if args.timing:
        payload["solve_ms"] = round(seg.solve_ms, 3)
        payload["voxelize_ms"] = round(seg.voxelize_ms, 3)
    return payload


def _cmd_eval(args) -> dict:
    ref = volio.load_mask(args.ref)
    test = volio.load_mask(args.test)
    d = evalstat.dice(ref, test)
    return {
        "subcommand": "eval",
        "dsc": round(d, 4),
        "dsc_percent": round(100.0 * d, 2),
        "ref_voxels": ref.voxel_count,
        "test_voxels": test.voxel_count,
        "ref_volume_mm3": ref.physical_volume_mm3,
        "test_volume_mm3": test.physical_volume_mm3,
    }


def _strip_known_suffix(path: str) -> str:
    base, ext = os.path.splitext(path)
    return base if ext in (".txt", ".json", ".csv") else path


def _cmd_report(args) -> dict:
    with open(args.cases, "r", encoding="utf-8") as fp:
        rows, _ = evalstat.case_rows_from_json(fp.read())
    report = evalstat.build_report(rows)
    base = _strip_known_suffix(args.out)
    outputs = {}
    with open(base + ".txt", "w", encoding="utf-8") as fp:
        fp.write(report.to_text())
    outputs["text"] = base + ".txt"
    with open(base + ".json", "w", encoding="utf-8") as fp:
        fp.write(report.to_json())
    outputs["json"] = base + ".json"
    with open(base + ".csv", "w", encoding="utf-8") as fp:
        fp.write(report.to_csv())
    outputs["csv"] = base + ".csv"
    if not args.no_figures:
        outputs["figures"] = render_report_figures(report, base)
    payload = {"subcommand": "report", "cases": len(rows)}
    payload.update(outputs)
    return payload


def _cmd_bench(args) -> dict:
    """Median / p95 of the full recompute (graph build + max-flow + cut
    extraction) on a synthetic fixture; voxelization reported separately."""
    spec = phantom.PhantomSpec(
        dims=(64, 64, 64), spacing=(1.0, 1.0, 1.0),
        lesion_center=(32.0, 32.0, 32.0), lesion_radii=(20.0, 20.0, 20.0),
        noise_sigma=5.0, rng_seed=1,
    )
    vol, _ = phantom.make_phantom(spec)
    from .flowgraph import INF_CAP
    from .volume import region_stats

    level = RAY_COUNT_LEVELS[args.rays]
    lattice = build_lattice((32.0, 32.0, 32.0), ray_template(level), 50.0,
                            args.nodes)
    stats = region_stats(vol, (32.0, 32.0, 32.0))
    costs = segmenter.node_costs(vol, lattice, stats.mean)
    weights = segmenter.terminal_weights(costs, 45.0)
    weights[costs >= OUT_OF_VOLUME_COST] = -INF_CAP
    solve_ms = []
    vox_ms = []
    cut_radii = None
    for _ in range(args.repeats):
        t0 = time.perf_counter()
        graph = build_graph(lattice, weights, 1)
        result = max_flow(graph)
        cut = extract_cut(result, lattice)
        t1 = time.perf_counter()
        cut_radii = cut.cut_radii_mm(lattice)
        segmenter.voxelize(cut_radii, lattice, vol)
        t2 = time.perf_counter()
        solve_ms.append((t1 - t0) * 1000.0)
        vox_ms.append((t2 - t1) * 1000.0)
    solve_sorted = sorted(solve_ms)
    p95 = solve_sorted[min(len(solve_sorted) - 1,
                           int(np.ceil(0.95 * len(solve_sorted))) - 1)]
    return {
        "subcommand": "bench",
        "rays": args.rays,
        "nodes": args.nodes,
        "repeats": args.repeats,
        "recompute_median_ms": round(statistics.median(solve_ms), 2),
        "recompute_p95_ms": round(p95, 2),
        "voxelize_median_ms": round(statistics.median(vox_ms), 2),
    }


def _cmd_serve(args) -> dict:
    import uvicorn

    from .service.app import create_app

    host, _, port = args.bind.rpartition(":")
    app = create_app(args.data_dir, max_upload_mb=args.max_upload_mb)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port),
                log_level="info")
    return {"subcommand": "serve"}


def _usage_error(message: str) -> int:
    print(f"nuggetcut: error: {message}", file=sys.stderr)
    return 1


_COMMANDS = {
    "phantom": _cmd_phantom,
    "segment": _cmd_segment,
    "eval": _cmd_eval,
    "report": _cmd_report,
    "bench": _cmd_bench,
    "serve": _cmd_serve,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        payload = _COMMANDS[args.subcommand](args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    except _IO_ERRORS as exc:
        print(f"nuggetcut: {exc}", file=sys.stderr)
        return 2
    except NuggetCutError as exc:
        print(f"nuggetcut: {exc}", file=sys.stderr)
        return 3
    _result_line(payload)
    return 0


def main() -> None:
    raise SystemExit(run())
