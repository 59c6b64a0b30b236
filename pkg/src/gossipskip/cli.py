"""Command-line interface: run experiments, verify diagnostics, inspect topologies."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .algorithms import (
    MGSkipState,
    RunConfig,
    check_contraction,
    coin_stream,
    dual_fixed_point,
    fixed_point_residual,
    mg_skip_step,
)
from .gossip import MultiGossipOperator, chebyshev_eta, default_K, verify_prop1
from .harness import build_graph, build_problem, load_experiment, run_experiment
from .problems import centralized_solve
from .topology import build_random_connectivity, build_ring, metropolis_weights

__all__ = ["main"]


def _cmd_topology(args: argparse.Namespace) -> int:
    if args.kind == "ring":
        graph = build_ring(args.n)
    elif args.kind == "random":
        graph = build_random_connectivity(args.n, args.iota, args.seed)
    else:
        print(f"unknown topology kind {args.kind!r}", file=sys.stderr)
        return 2
    mixing = metropolis_weights(graph)
    print(f"n = {graph.n}")
    print(f"edges = {graph.m}")
    print(f"rho = {mixing.rho:.6f}")
    print(f"K = {default_K(mixing.rho)}")
    print(f"eta = {chebyshev_eta(mixing.rho):.6f}")
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    config = Path(args.config)
    if not config.exists():
        print(f"config file not found: {config}", file=sys.stderr)
        return 2
    spec = load_experiment(config)
    summary = run_experiment(spec, args.out, config_text=config.read_text())
    print(f"baseline: {summary['baseline']}")
    for name in sorted(summary["mean"]):
        m = summary["mean"][name]
        iters = m["iterations_to_tol"]
        comm = m["comm_to_tol"]
        print(
            f"{name}: iters_to_tol={iters if iters is not None else '-'} "
            f"comm_to_tol={comm if comm is not None else '-'} "
            f"final_rel_err={m['final_rel_err']:.3e}"
        )
    print(f"wrote traces to {args.out}")
    return 0


def _cmd_verify(args: argparse.Namespace) -> int:
    config = Path(args.config)
    if not config.exists():
        print(f"config file not found: {config}", file=sys.stderr)
        return 2
    spec = load_experiment(config)
    graph = build_graph(spec)
    mixing = metropolis_weights(graph)
    problem = build_problem(spec, mixing)
    reference = centralized_solve(problem, tol=1e-13)

    checks: list[tuple[str, str, bool]] = []

    sym = float(np.abs(mixing.w - mixing.w.T).max())
    row = float(np.abs(mixing.w.sum(axis=1) - 1.0).max())
    checks.append(("mixing symmetric", f"max asym {sym:.1e}", sym == 0.0))
    checks.append(("mixing doubly stochastic", f"row-sum dev {row:.1e}", row <= 1e-12))
    checks.append(("spectral gap < 1", f"rho = {mixing.rho:.6f}", mixing.rho < 1.0))

    gossip = MultiGossipOperator.from_mixing(mixing)
    report = verify_prop1(gossip)
    checks.append(
        (
            "multi-round radius envelope",
            f"radius {report.radius:.4f} vs bound {report.radius_bound:.4f} (K={report.K})",
            report.radius_bound_ok,
        )
    )
    checks.append(
        (
            "sigma_min(I-Mbar) >= 2/5",
            f"sigma_min {report.sigma_min:.4f}",
            report.sigma_min_ok,
        )
    )

    rng = np.random.default_rng(0)
    worst = 0.0
    eye_minus = np.eye(gossip.n) - gossip.mbar
    for _ in range(5):
        z = rng.standard_normal((gossip.n, problem.dim))
        worst = max(worst, float(np.abs(gossip.fast_goss(z) - eye_minus @ z).max()))
    checks.append(("fast_goss == dense (I-Mbar)Z", f"max dev {worst:.1e}", worst <= 1e-10))

    first = spec.algorithms[0]
    alpha = first.resolve_alpha(problem.L)
    res = fixed_point_residual(reference, problem, gossip, alpha)
    checks.append(("fixed-point residual at x*", f"{res:.2e}", res <= 1e-8))

    ystar = dual_fixed_point(problem, reference)
    x_star_stack = np.tile(reference.xstar, (problem.n, 1))
    cfg = RunConfig(alpha=alpha, p=first.p, T=max(args.steps, 1), tol=0.0, seed=0)
    start = MGSkipState(x=x_star_stack.copy(), y=ystar.copy())
    one = mg_skip_step(start, problem, gossip, cfg, theta=1)
    moved = max(
        float(np.linalg.norm(one.x - start.x)), float(np.linalg.norm(one.y - start.y))
    )
    checks.append(("fixed point is stationary", f"moved {moved:.2e}", moved <= 1e-10))

    if first.kind == "mg_skip" and first.k_rule == "default":
        state = MGSkipState(x=np.zeros((problem.n, problem.dim)), y=np.zeros((problem.n, problem.dim)))
        coins = coin_stream(0, args.steps)
        contraction_ok = True
        worst_gap = -np.inf
        for t in range(args.steps):
            rep = check_contraction(state, problem, gossip, cfg, reference, ystar)
            contraction_ok &= rep.ok
            worst_gap = max(worst_gap, rep.lhs - rep.rhs)
            state = mg_skip_step(state, problem, gossip, cfg, int(coins[t] < cfg.p))
        checks.append(
            (
                f"contraction over {args.steps} steps",
                f"worst lhs-rhs {worst_gap:.2e}",
                contraction_ok,
            )
        )

    width = max(len(name) for name, _, _ in checks)
    failed = 0
    for name, detail, ok in checks:
        status = "PASS" if ok else "FAIL"
        if not ok:
            failed += 1
        print(f"{name:<{width}}  {status}  {detail}")
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return 0 if failed == 0 else 1


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = Path(args.config)
    if not config.exists():
        print(f"config file not found: {config}", file=sys.stderr)
        return 2
    base_text = config.read_text()
    spec = load_experiment(config)
    p_values = [float(tok) for tok in args.p.split(",") if tok.strip()]
    if not p_values:
        print("empty p grid", file=sys.stderr)
        return 2
    from dataclasses import replace

    expanded = []
    seen = set()
    for alg in spec.algorithms:
        variants = (
            [alg]
            if alg.kind.startswith("puda_")
            else [replace(alg, p=p, name=f"{alg.kind}_p{p:g}") for p in p_values]
        )
        for variant in variants:
            if variant.name not in seen:
                seen.add(variant.name)
                expanded.append(variant)
    sweep_spec = replace(spec, algorithms=tuple(expanded), baseline="")
    summary = run_experiment(sweep_spec, args.out, config_text=base_text)
    for name in sorted(summary["mean"]):
        m = summary["mean"][name]
        iters = m["iterations_to_tol"]
        comm = m["comm_to_tol"]
        print(
            f"{name}: iters_to_tol={iters if iters is not None else '-'} "
            f"comm_to_tol={comm if comm is not None else '-'}"
        )
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="gossipskip",
        description="Decentralized composite optimization with skipped multi-gossip rounds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)

    p_verify = sub.add_parser("verify", help="run the diagnostic suite")
    p_verify.add_argument("--config", required=True)
    p_verify.add_argument("--steps", type=int, default=100)

    p_topo = sub.add_parser("topology", help="print spectral facts for a topology")
    p_topo.add_argument("--kind", required=True, choices=["ring", "random"])
    p_topo.add_argument("--n", type=int, required=True)
    p_topo.add_argument("--iota", type=float, default=0.5)
    p_topo.add_argument("--seed", type=int, default=0)

    p_sweep = sub.add_parser("sweep", help="expand algorithms over a p grid")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--p", required=True, help="comma-separated p values")

    args = parser.parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "verify":
        return _cmd_verify(args)
    if args.command == "topology":
        return _cmd_topology(args)
    return _cmd_sweep(args)


if __name__ == "__main__":
    sys.exit(main())
