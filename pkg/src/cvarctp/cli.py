"""Command-line interface.

Exit codes: 0 success, 1 domain error (a JSON error document is written to
stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import __version__
from .belief import BeliefError
from .evaluate import bootstrap_cvar_se, cross_cvar_matrix, cvar_profile, simulate
from .graph import validate_instance
from .io import InstanceError, digest, dumps, load_instance, policy_to_dot
from .oracle import OracleCapExceeded, oracle_value
from .risk import cvar
from .solver import SolveOptions, SolverError, resolve_with_alpha, solve

AGREEMENT_TOL = 1e-9
DEFAULT_SEED = 0


def _alpha(text: str) -> float:
    try:
        a = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 < a <= 1.0:
        raise argparse.ArgumentTypeError(f"alpha {a} out of range (0, 1]")
    return a


def _alphas(text: str) -> list[float]:
    return [_alpha(t) for t in text.split(",") if t.strip()]


def _options(args) -> SolveOptions:
    return SolveOptions(
        tie_break_expected_cost=not args.no_tie_break,
        prune_dominated=not args.no_prune,
        cache_nodes=not args.no_cache,
        max_iterations=args.max_iterations,
        trace=getattr(args, "trace", False),
    )


def _emit(args, text: str):
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def _header(instance) -> dict:
    return {"instance_digest": digest(instance.source) if instance.source else None}


def _alpha_or_instance(args, instance) -> float:
    alpha = args.alpha if args.alpha is not None else instance.alpha
    if alpha is None:
        raise SolverError("no --alpha given and the instance does not set one")
    return alpha


def cmd_validate(args) -> int:
    instance = load_instance(args.instance)
    report = validate_instance(instance)
    doc = _header(instance)
    doc["valid"] = report.ok
    doc["violations"] = [{"code": v.code, "message": v.message} for v in report.violations]
    _emit(args, dumps(doc))
    return 0 if report.ok else 1


def cmd_solve(args) -> int:
    instance = load_instance(args.instance)
    sol = solve(instance, _alpha_or_instance(args, instance), _options(args))
    doc = _header(instance)
    doc.update(sol.to_dict())
    _emit(args, dumps(doc))
    return 0


def cmd_sweep(args) -> int:
    instance = load_instance(args.instance)
    opts = _options(args)
    solutions = []
    for a in args.alphas:
        solutions.append(solve(instance, a, opts) if not solutions
                         else resolve_with_alpha(solutions[-1], a))
    matrix = cross_cvar_matrix([s.policy for s in solutions], args.alphas)
    doc = _header(instance)
    doc["alphas"] = args.alphas
    doc["solutions"] = [s.to_dict() for s in solutions]
    doc["cross_cvar"] = {
        "rows": "risk level", "columns": "policy optimized for that level",
        "matrix": matrix.tolist(),
    }
    _emit(args, dumps(doc))
    return 0


def cmd_export(args) -> int:
    instance = load_instance(args.instance)
    sol = solve(instance, _alpha_or_instance(args, instance), _options(args))
    if args.format == "dot":
        _emit(args, policy_to_dot(sol.policy, instance.graph))
    else:
        doc = _header(instance)
        doc["policy"] = sol.policy.to_dict(instance.graph)
        _emit(args, dumps(doc))
    return 0


def cmd_distribution(args) -> int:
    instance = load_instance(args.instance)
    alpha = _alpha_or_instance(args, instance)
    sol = solve(instance, alpha, _options(args))
    doc = _header(instance)
    doc["alpha"] = alpha
    doc["atoms"] = sol.distribution.to_list()
    doc["expected_cost"] = sol.expected_cost
    levels = args.alphas or [alpha]
    doc["cvar_profile"] = [{"alpha": a, "cvar": v} for a, v in cvar_profile(sol.policy, levels)]
    _emit(args, dumps(doc))
    return 0


def cmd_simulate(args) -> int:
    instance = load_instance(args.instance)
    alpha = _alpha_or_instance(args, instance)
    sol = solve(instance, alpha, _options(args))
    emp = simulate(instance, sol.policy, args.trials, args.seed)
    doc = _header(instance)
    doc["alpha"] = alpha
    doc["empirical"] = emp.to_dict()
    doc["exact_atoms"] = sol.distribution.to_list()
    doc["empirical_mean"] = emp.mean()
    doc["exact_mean"] = sol.expected_cost
    doc["empirical_cvar"] = cvar(emp.distribution, alpha)
    doc["exact_cvar"] = sol.value
    doc["bootstrap_se"] = bootstrap_cvar_se(emp, alpha, seed=args.seed)
    _emit(args, dumps(doc))
    return 0


def cmd_oracle(args) -> int:
    instance = load_instance(args.instance)
    alphas = args.alphas or [_alpha_or_instance(args, instance)]
    result = oracle_value(instance, alphas=alphas, max_stochastic=args.max_stochastic)
    opts = _options(args)
    rows = []
    for a in alphas:
        sol = solve(instance, a, opts)
        ref = result.table[a]
        rows.append({
            "alpha": a, "solver": sol.value, "oracle": ref,
            "verdict": "match" if abs(sol.value - ref) <= AGREEMENT_TOL else "mismatch",
        })
    doc = _header(instance)
    doc["oracle"] = result.to_dict()
    doc["agreement"] = rows
    _emit(args, dumps(doc))
    return 0 if all(r["verdict"] == "match" for r in rows) else 1


def cmd_bench(args) -> int:
    instance = load_instance(args.instance)
    alpha = _alpha_or_instance(args, instance)
    rows = []
    for prune in (True, False):
        for cache in (True, False):
            opts = SolveOptions(prune_dominated=prune, cache_nodes=cache,
                                tie_break_expected_cost=not args.no_tie_break,
                                max_iterations=args.max_iterations)
            t0 = time.perf_counter()
            sol = solve(instance, alpha, opts)
            rows.append({
                "prune": prune, "cache": cache, "value": sol.value,
                "iterations": sol.iterations, "nodes": sol.nodes,
                "wall_seconds": time.perf_counter() - t0,
            })
    doc = _header(instance)
    doc["alpha"] = alpha
    doc["runs"] = rows
    _emit(args, dumps(doc))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cvarctp", description="Risk-averse Canadian traveller solver")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help, alpha=True, alphas=False, alphas_required=False):
        p = sub.add_parser(name, help=help)
        p.add_argument("instance", help="instance JSON file")
        p.add_argument("-o", "--output", help="write here instead of stdout")
        if alpha:
            p.add_argument("--alpha", type=_alpha, help="risk level in (0, 1]")
        if alphas:
            p.add_argument("--alphas", type=_alphas, required=alphas_required,
                           help="comma-separated risk levels")
        p.add_argument("--no-prune", action="store_true", help="disable dominated-action pruning")
        p.add_argument("--no-cache", action="store_true", help="disable node fusion")
        p.add_argument("--no-tie-break", action="store_true",
                       help="do not prefer lower expected cost among tied choices")
        p.add_argument("--max-iterations", type=int)
        p.set_defaults(func=func)
        return p

    add("validate", cmd_validate, "check an instance", alpha=False)
    p = add("solve", cmd_solve, "solve at one risk level")
    p.add_argument("--trace", action="store_true", help="record the per-iteration best estimate")
    add("sweep", cmd_sweep, "solve a list of risk levels, reusing the search", alpha=False,
        alphas=True, alphas_required=True)
    p = add("export", cmd_export, "write the policy tree")
    p.add_argument("--format", choices=("dot", "json"), default="dot")
    add("distribution", cmd_distribution, "exact policy cost distribution", alphas=True)
    p = add("simulate", cmd_simulate, "Monte Carlo rollouts of the optimal policy")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p = add("oracle", cmd_oracle, "cross-check the solver against brute force", alphas=True)
    p.add_argument("--max-stochastic", type=int, default=4)
    add("bench", cmd_bench, "node counts, iterations and wall time per option set")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InstanceError, BeliefError, SolverError, OracleCapExceeded, ValueError) as exc:
        err = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        report = getattr(exc, "report", None)
        if report is not None:
            err["error"]["violations"] = [{"code": v.code, "message": v.message}
                                          for v in report.violations]
        sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
