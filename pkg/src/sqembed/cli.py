"""Command-line front end: ``sqembed <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from .embedder import EmbeddingError, EmbedParams, embed_in_square, embed_spanning_tree
from .graphs import audit_mixing, check_joined, estimate_lambda
from .harness import (
    FAMILIES,
    HOSTS,
    MODES,
    OUTPUT_ENV,
    ConfigError,
    ExperimentConfig,
    build_host,
    default_output_dir,
    exit_code,
    run_experiments,
    summarize,
)
from .io import FormatError, load_graph, load_tree, save_graph, save_tree
from .matchmakers import MatchmakerError
from .trees import make_tree


def _out_path(arg: str | None, default_name: str) -> Path:
    if arg:
        return Path(arg)
    out = default_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    return out / default_name


def _emit(obj: dict, path: str | None) -> None:
    text = json.dumps(obj, indent=1)
    if path:
        Path(path).write_text(text + "\n", encoding="utf-8")
    print(text)


def _add_embed_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--t-param", type=float, default=4.0)
    p.add_argument("--d-param", type=int, default=None, help="extendability degree D (default max(3, 4*Delta))")
    p.add_argument("--alpha", type=float, default=1 / 16)
    p.add_argument("--leaf-floor", type=int, default=2)
    p.add_argument("--ratio-threshold", type=float, default=2.0)
    p.add_argument("--candidate-budget", type=int, default=8)
    p.add_argument("--rollback-factor", type=int, default=50)
    p.add_argument("--attempts", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)


def _embed_params(args: argparse.Namespace) -> EmbedParams:
    return EmbedParams(
        t_param=args.t_param,
        d_param=args.d_param,
        alpha=args.alpha,
        leaf_floor=args.leaf_floor,
        ratio_threshold=args.ratio_threshold,
        candidate_budget=args.candidate_budget,
        rollback_factor=args.rollback_factor,
        attempts=args.attempts,
        seed=args.seed,
    )


def cmd_gen_graph(args: argparse.Namespace) -> int:
    n = args.paley_q if args.host == "paley" else args.n
    if n is None:
        raise ConfigError("n", "required (or --paley-q with --host paley)")
    g = build_host(args.host, n, args.d or 0, args.seed)
    path = _out_path(args.output, f"graph-{g.n}-{g.degree}-{args.seed}.edges")
    save_graph(g, path)
    print(path)
    return 0


def cmd_certify(args: argparse.Namespace) -> int:
    cert = estimate_lambda(load_graph(args.graph), tol=args.tol)
    obj = cert.to_json()
    obj["lower_bound"] = cert.lower_bound
    _emit(obj, args.output)
    return 0


def cmd_gen_tree(args: argparse.Namespace) -> int:
    t = make_tree(args.family, args.n, args.delta, args.leaf_target, args.seed)
    path = _out_path(args.output, f"tree-{args.family}-{args.n}-{args.seed}.tree")
    save_tree(t, path)
    print(path)
    return 0


def _cmd_embed(args: argparse.Namespace, square_mode: bool) -> int:
    g = load_graph(args.graph)
    t = load_tree(args.tree)
    cert = estimate_lambda(g)
    entry = embed_in_square if square_mode else embed_spanning_tree
    try:
        emb = entry(g, cert, t, _embed_params(args))
    except (EmbeddingError, MatchmakerError) as exc:
        print(f"embedding failed at step {getattr(exc, 'step', 'matchmakers')}: {exc}", file=sys.stderr)
        return 1
    obj = emb.to_json()
    obj["stats"] = {k: v for k, v in emb.stats.items() if isinstance(v, (int, float, str, list))}
    _emit(obj, args.output)
    return 0 if emb.verified else 1


def cmd_audit(args: argparse.Namespace) -> int:
    g = load_graph(args.graph)
    cert = estimate_lambda(g)
    mix = audit_mixing(g, cert, samples=args.samples, seed=args.seed)
    joined = check_joined(g, cert.m, trials=args.samples, seed=args.seed)
    obj = {
        "certificate": cert.to_json(),
        "lower_bound_ok": cert.lam >= cert.lower_bound - 1e-6,
        "mixing": {"samples": mix.samples_checked, "max_violation": mix.max_violation, "ok": mix.ok},
        "joined": {"m": cert.m, "samples": joined.samples_checked, "ok": joined.ok,
                   "witness": [sorted(s) for s in joined.violating_pair] if joined.violating_pair else None},
    }
    _emit(obj, args.output)
    return 0 if mix.ok and joined.ok and obj["lower_bound_ok"] else 1


def cmd_sweep(args: argparse.Namespace) -> int:
    if args.config:
        base = json.loads(Path(args.config).read_text(encoding="utf-8"))
    else:
        base = {}
    flags = {
        "n": args.n,
        "d": args.d,
        "paley_q": args.paley_q,
        "host": args.host,
        "tree_family": args.tree_family,
        "delta": args.delta,
        "leaf_target": args.leaf_target,
        "trials": args.trials,
        "seed": args.seed,
        "t_param": args.t_param,
        "d_param": args.d_param,
        "alpha": args.alpha,
        "leaf_floor": args.leaf_floor,
        "ratio_threshold": args.ratio_threshold,
        "candidate_budget": args.candidate_budget,
        "rollback_factor": args.rollback_factor,
        "attempts": args.attempts,
        "mode": args.mode,
        "workers": args.workers,
        "allow_dense": args.allow_dense or None,
    }
    base.update({k: v for k, v in flags.items() if v is not None})
    base["output"] = str(args.output or base.get("output") or default_output_dir())
    cfg = ExperimentConfig.from_json(base)
    records = run_experiments(cfg)
    summary = summarize(records)
    for row in summary["groups"]:
        print(
            f"d={row['d']:<4} ratio={row['ratio_mean']:.3f} success={row['successes']}/{row['trials']}"
            f" mean_ms={row['millis_mean']:.0f} failures={row['failing_steps']}"
        )
    print(f"wrote {cfg.output}/trials.csv")
    return exit_code(records)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sqembed",
        description="Certify pseudorandom graphs and embed bounded-degree spanning trees into them or their squares.",
        epilog=f"Default output directory: ${OUTPUT_ENV} or ./sqembed-out",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-graph", help="generate a host graph")
    p.add_argument("--host", choices=HOSTS, default="random-regular")
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--paley-q", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_gen_graph)

    p = sub.add_parser("certify", help="estimate lambda and print the certificate")
    p.add_argument("graph")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("gen-tree", help="generate a bounded-degree tree")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--delta", type=int, default=3)
    p.add_argument("--family", choices=FAMILIES, default="random")
    p.add_argument("--leaf-target", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_gen_tree)

    for name, square_mode, text in (
        ("embed", False, "embed a many-leaves spanning tree into the graph"),
        ("embed-square", True, "embed a spanning tree into the square of the graph"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("graph")
        p.add_argument("tree")
        _add_embed_flags(p)
        p.add_argument("-o", "--output")
        p.set_defaults(func=lambda a, s=square_mode: _cmd_embed(a, s))

    p = sub.add_parser("audit", help="sampled mixing and joinedness audit")
    p.add_argument("graph")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("sweep", help="run an experiment sweep; exit 0 iff every trial verified")
    p.add_argument("--config", help="JSON file with ExperimentConfig fields; flags override it")
    p.add_argument("--host", choices=HOSTS)
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int, nargs="+")
    p.add_argument("--paley-q", type=int)
    p.add_argument("--tree-family", choices=FAMILIES, nargs="+")
    p.add_argument("--delta", type=int)
    p.add_argument("--leaf-target", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--t-param", type=float)
    p.add_argument("--d-param", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--leaf-floor", type=int)
    p.add_argument("--ratio-threshold", type=float)
    p.add_argument("--candidate-budget", type=int)
    p.add_argument("--rollback-factor", type=int)
    p.add_argument("--attempts", type=int)
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--workers", type=int)
    p.add_argument("--allow-dense", action="store_true")
    p.add_argument("-o", "--output", help="output directory")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
