"""Command-line entry point.

Subcommands: polygonize, check, bench, fit, nn-fit.  Exit codes are stable
contracts: 0 ok, 1 check mismatch, 2 usage or scene parse error, 3 runtime
error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import bench as bench_mod
from . import neural
from . import scene as scene_mod
from .geometry import GridSpec, Vec3
from .mesh_io import write_obj
from .polygonize import (MarchBudgetError, PolygonizeConfig, continuation,
                         enumerate_all, gridhop)

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3
EXIT_IO = 4

_RUNNERS = {
    "enum": lambda field, cfg, seeds: enumerate_all(field, cfg),
    "ghop": lambda field, cfg, seeds: gridhop(field, cfg),
    "cont": lambda field, cfg, seeds: continuation(field, cfg, seeds),
}


def _default_workers(value) -> int:
    if value is not None:
        return int(value)
    env = os.environ.get("GRIDHOP_WORKERS")
    if env:
        return int(env)
    return os.cpu_count() or 1


def _load_scene(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        source = fh.read()
    ast = scene_mod.parse_scene(source)
    field = scene_mod.build_field(ast, base_dir=os.path.dirname(os.path.abspath(path)))
    return ast, field


def _parse_seed(text: str) -> Vec3:
    parts = text.split(",")
    if len(parts) != 3:
        raise ValueError(f"seed must be X,Y,Z, got {text!r}")
    return Vec3(*(float(p) for p in parts))


def _usage_error(message: str) -> int:
    print(f"usage error: {message}", file=sys.stderr)
    return EXIT_USAGE


def cmd_polygonize(args) -> int:
    if args.resolution < 1:
        return _usage_error("--resolution must be a positive integer")
    ast, field = _load_scene(args.scene)
    seeds = [Vec3(*s) for s in ast.seeds] + [_parse_seed(s) for s in args.seed]
    if args.method == "cont" and not seeds:
        return _usage_error("--method cont needs at least one seed "
                            "(--seed X,Y,Z or a seed statement in the scene)")
    cfg = PolygonizeConfig(GridSpec(args.resolution), batch_size=args.batch_size,
                           workers=_default_workers(args.workers))
    result = _RUNNERS[args.method](field, cfg, seeds)
    write_obj(result.mesh, args.output, comments=(
        "gridhopping mesh export",
        f"scene: {os.path.basename(args.scene)}",
        f"method: {args.method}",
        f"n: {args.resolution}",
    ))
    stats = result.stats
    print(f"field_evals={stats.field_evals}")
    print(f"march_steps={stats.march_steps}")
    print(f"triangles={len(result.mesh)}")
    print(f"cells_polygonized={stats.cells_polygonized}")
    print(f"rays_cast={stats.rays_cast}")
    for w in stats.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_OK


def cmd_check(args) -> int:
    if args.resolution < 1:
        return _usage_error("--resolution must be a positive integer")
    _, field = _load_scene(args.scene)
    cfg = PolygonizeConfig(GridSpec(args.resolution), batch_size=args.batch_size,
                           workers=_default_workers(args.workers))
    mesh_enum = enumerate_all(field, cfg).mesh
    mesh_ghop = gridhop(field, cfg).mesh
    if mesh_enum == mesh_ghop:
        print(f"meshes equal: {len(mesh_enum)} triangles")
        return EXIT_OK
    limit = min(len(mesh_enum), len(mesh_ghop))
    cell = None
    for idx in range(limit):
        if mesh_enum.triangles[idx] != mesh_ghop.triangles[idx]:
            cell = mesh_enum.triangles[idx].cell
            break
    if cell is None:
        longer = mesh_enum if len(mesh_enum) > len(mesh_ghop) else mesh_ghop
        cell = longer.triangles[limit].cell
    print(f"meshes differ at cell ({cell.i}, {cell.j}, {cell.k}); "
          f"enum has {len(mesh_enum)} triangles, ghop has {len(mesh_ghop)}")
    return EXIT_MISMATCH


def cmd_bench(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    resolutions = [int(v) for v in args.resolutions.split(",") if v.strip()]
    ast, field = _load_scene(args.scene)
    seeds = [Vec3(*s) for s in ast.seeds] + [_parse_seed(s) for s in args.seed]
    scene_id = os.path.splitext(os.path.basename(args.scene))[0]
    records = bench_mod.run_series(scene_id, field, methods, resolutions,
                                   seeds=seeds, batch_size=args.batch_size,
                                   workers=_default_workers(args.workers))
    bench_mod.write_csv(records, args.csv)
    mismatches = [r for r in records if r.meshes_equal is False]
    for r in mismatches:
        print(f"warning: mesh mismatch for scene {r.scene} at n={r.n}", file=sys.stderr)
    print(f"wrote {len(records)} records to {args.csv}")
    return EXIT_OK


def cmd_fit(args) -> int:
    records = bench_mod.read_csv(args.csv)
    groups: dict[tuple[str, str], list] = {}
    for r in records:
        groups.setdefault((r.scene, r.method), []).append(r)
    for (scene_id, method), rows in sorted(groups.items()):
        result = bench_mod.fit_exponent(rows, metric=args.metric)
        print(f"{scene_id} {method} slope={result.slope:.4f} r2={result.r_squared:.6f}")
    return EXIT_OK


def cmd_nn_fit(args) -> int:
    _, field = _load_scene(args.scene)
    arch = [int(v) for v in args.arch.split(",") if v.strip()]
    cfg = neural.FitConfig(sample_count=args.samples, steps=args.steps,
                           batch_size=args.batch_size, rng_seed=args.rng_seed)
    weights = neural.fit(field, arch, cfg)
    neural.save_weights(weights, args.output)
    print(f"wrote {args.output} (architecture {'-'.join(map(str, arch))}, "
          f"{args.steps} steps, seed {args.rng_seed})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridhopping",
        description="Convert signed-distance-bound scenes into triangle meshes "
                    "and measure how the extraction strategies scale.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_workers=True):
        p.add_argument("--scene", required=True, help="scene file path")
        p.add_argument("--batch-size", type=int, default=10_000,
                       help="evaluator batch size (default 10000)")
        if needs_workers:
            p.add_argument("--workers", type=int, default=None,
                           help="worker count (default: GRIDHOP_WORKERS or machine parallelism)")

    p = sub.add_parser("polygonize", help="extract a mesh and write OBJ")
    common(p)
    p.add_argument("--method", required=True, choices=("enum", "cont", "ghop"))
    p.add_argument("--resolution", type=int, required=True, help="cells per axis")
    p.add_argument("--output", required=True, help="output OBJ path")
    p.add_argument("--seed", action="append", default=[], metavar="X,Y,Z",
                   help="continuation seed point (repeatable)")
    p.set_defaults(func=cmd_polygonize)

    p = sub.add_parser("check", help="verify gridhopping against enumeration")
    common(p)
    p.add_argument("--resolution", type=int, required=True)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("bench", help="run methods across resolutions, write CSV")
    common(p)
    p.add_argument("--methods", required=True, help="comma list from enum,cont,ghop")
    p.add_argument("--resolutions", required=True, help="comma list, increasing, each >= 8")
    p.add_argument("--csv", required=True, help="output CSV path")
    p.add_argument("--seed", action="append", default=[], metavar="X,Y,Z")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("fit", help="fit log-log exponents from a bench CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--metric", default="evals", choices=("evals", "time"))
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("nn-fit", help="train an MLP on a scene's field")
    common(p, needs_workers=False)
    p.add_argument("--arch", default="3,64,64,64,1",
                   help="layer widths, e.g. 3,64,64,64,1")
    p.add_argument("--output", required=True, help="output weight file (.nnsdb)")
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=20_000)
    p.set_defaults(func=cmd_nn_fit)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except scene_mod.ParseError as exc:
        print(f"scene error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MarchBudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, neural.WeightFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
