"""``anng`` command line: gen-dataset, build-graph, query, experiment."""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import ConfigError, pair_edge_probability, parse_config, run_suites
from .fileio import FormatError, file_crc32, load_dataset, save_dataset, serialize, deserialize, write_atomic
from .geometry import GeometryError, check_unit
from .graph import ModelError, build_graph, degree_stats, generate_dataset, parse_model, resolve_threads
from .report import AuditError
from .search import QuerySpec, greedy_query, parse_start, plant_query


class CliError(Exception):
    pass


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def cmd_gen_dataset(args) -> int:
    omega = math.log2(args.n) / args.d if args.n > 0 and args.d > 0 else float("nan")
    try:
        data = generate_dataset(args.n, args.d, args.seed, allow_boundary=args.allow_boundary)
    except GeometryError as exc:
        raise CliError(f"refusing to generate: {exc} (computed omega = {omega:.6g})") from None
    save_dataset(data, args.out)
    print(f"n: {data.n}")
    print(f"d: {data.d}")
    print(f"omega: {data.omega:.6g}")
    print(f"wrote: {args.out}")
    return 0


def cmd_build_graph(args) -> int:
    data = load_dataset(args.dataset)
    model = parse_model(args.model, args.tau, saturate=args.saturate)
    graph = build_graph(data, model, args.seed, threads=args.threads)
    serialize(graph, args.out)
    stats = degree_stats(graph)
    alpha = model.threshold(data.omega)
    b = pair_edge_probability(model, alpha, data.d)
    n = data.n
    mu = n * (n - 1) * b
    sd = math.sqrt(n * (n - 1) * b * (1 - b))
    print(f"model: {model.label}")
    print(f"alpha_tau: {alpha:.6g}")
    print(f"edge_count: {stats.edge_count}")
    print(f"mean_degree: {stats.mean:.6g}")
    print(f"predicted_mean_degree: {(n - 1) * b:.6g}")
    print(f"predicted_edge_count: {mu:.6g}")
    if b > 0:
        print(f"chebyshev_band: [{mu / 2:.6g}, {1.5 * mu:.6g}] (miss probability <= {4 / mu:.3g})")
    print(f"binomial_4sd_band: [{mu - 4 * sd:.6g}, {mu + 4 * sd:.6g}]")
    print(f"wrote: {args.out}")
    return 0


def _read_query(path, d: int) -> np.ndarray:
    values = Path(path).read_text().replace(",", " ").split()
    try:
        q = np.array([float(v) for v in values])
    except ValueError as exc:
        raise CliError(f"bad query file {path}: {exc}") from None
    if q.shape != (d,):
        raise CliError(f"dimension mismatch: query has {q.size} coordinates, dataset has d={d}")
    return check_unit(q, "query")


def cmd_query(args) -> int:
    data = load_dataset(args.dataset)
    graph = deserialize(args.graph)
    if graph.n != data.n or graph.d != data.d:
        raise CliError(f"dimension mismatch: graph has n={graph.n}, d={graph.d}; dataset has n={data.n}, d={data.d}")
    upper = 2.0**data.omega
    if not 1.0 < args.r < upper:
        raise CliError(f"r-NN search requires r in (1, 2^omega) = (1, {upper:.6g}); got r={args.r}")
    planted = None
    if args.plant is not None:
        pq = plant_query(data, np.random.default_rng(args.plant), args.r)
        q, planted = pq.q, pq.planted
    else:
        q = _read_query(args.qfile, data.d)
    outcome = greedy_query(graph, data, QuerySpec(q, args.r), parse_start(args.start))
    doc = outcome.to_dict()
    if planted is not None:
        doc["planted"] = planted
    print(json.dumps(doc))
    return 0


def cmd_experiment(args) -> int:
    text = Path(args.config).read_text()
    cfg = parse_config(text)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = _now()
    written: list[Path] = []
    try:
        for report in run_suites(cfg, threads=args.threads):
            print(f"[{report.suite}] {len(report.rows)} rows in {report.timing.get('total', 0.0):.2f}s")
            written.extend(report.write(out))
        manifest = {
            "command": ["anng", *args.argv],
            "config": cfg.to_dict(),
            "config_file": str(args.config),
            "threads": resolve_threads(args.threads),
            "tool_version": __version__,
            "started": started,
            "finished": _now(),
            "artifacts": [{"path": p.name, "crc32": f"{file_crc32(p):08x}", "bytes": p.stat().st_size} for p in written],
        }
        manifest_path = out / "manifest.json"
        write_atomic(manifest_path, (json.dumps(manifest, indent=2) + "\n").encode())
        written.append(manifest_path)
        for entry in manifest["artifacts"]:
            if f"{file_crc32(out / entry['path']):08x}" != entry["crc32"]:
                raise AuditError(f"manifest checksum mismatch for {entry['path']}")
    except BaseException:
        for p in written:
            p.unlink(missing_ok=True)
        raise
    for p in written:
        print(f"wrote: {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="anng", description=__doc__)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-dataset", help="sample a dense dataset on the unit sphere")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--allow-boundary", action="store_true", help="accept omega == 1 exactly")
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("build-graph", help="build a near-neighbor graph over a dataset file")
    p.add_argument("--dataset", required=True)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--model", required=True, help="exact | uniform:DELTA | adaptive | twosided:D1,D2")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--saturate", action="store_true", help="clamp the threshold at 0 when tau exceeds 2^omega")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("query", help="run one greedy query; prints the outcome as JSON")
    p.add_argument("--dataset", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--r", type=float, required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--plant", type=int, metavar="SEED", help="plant a query near a random point")
    src.add_argument("--qfile", help="text file with d coordinates of a unit query vector")
    p.add_argument("--start", default="random:0", help="random:SEED or fixed:IDX")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("experiment", help="run experiment suites from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    try:
        return args.func(args)
    except (CliError, ConfigError, ModelError, GeometryError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, AuditError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
