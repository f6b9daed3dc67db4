"""Command-line front end.

    symmech solve problem.json --epsilon 1/10 --out run/
    symmech verify problem.json --mechanism run/mechanism.csv
    symmech reduce problem.json --mechanism run/mechanism.csv --seed 7 --scale-r 50
    symmech sample problem.json --mechanism run/mechanism.csv --seed 7 --ir expost
    symmech mhr-plan --marginal '{"family": "exponential"}' --items 2 --seed 1
    symmech oracle-compare problem.json

Exit status: 0 when everything checks out, 1 when an audit fails, 2 on bad
input.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import io as sio
from .lp import build, extract, solve
from .mechanism import (ExPostIRRule, check_bic, check_feasible, check_ic, check_strong_monotonicity,
                        revenue)
from .model import (BidderFactor, DiscreteDistribution, ExplosionGuard, ModelError, Setting,
                    as_fraction, discretize, fmt, sample, validate)

log = logging.getLogger("symmech")

EXIT_OK, EXIT_AUDIT, EXIT_INPUT = 0, 1, 2
NAIVE_COMPARE_CAP = 4096


class UsageError(Exception):
    pass


def _fraction_arg(s: str) -> Fraction:
    try:
        return Fraction(s)
    except (ValueError, ZeroDivisionError) as e:
        raise argparse.ArgumentTypeError(f"not a rational number: {s!r}") from e


def _common(p: argparse.ArgumentParser):
    p.add_argument("--epsilon", type=_fraction_arg, default=Fraction(0),
                   help="incentive slack for the LP and audits (default 0)")
    p.add_argument("--delta", type=_fraction_arg, help="grid step; defaults to epsilon^2 when epsilon > 0")
    p.add_argument("--eta", type=_fraction_arg, help="rebate fraction; defaults to epsilon")
    p.add_argument("--mode", choices=["bic", "ic"], default="bic")
    p.add_argument("--ir", choices=["interim", "expost"], default="interim")
    p.add_argument("--seed", type=int, help="required by every stochastic subcommand")
    p.add_argument("--scale-r", type=int, help="replica/surrogate count for the reduction")
    p.add_argument("--max-support", type=int, help="cap on expanded profiles")
    p.add_argument("--emit-lp", action="store_true", help="also write the LP in CPLEX LP format")
    p.add_argument("--out", type=Path, help="output directory (default: print only)")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="symmech", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="discretize, solve the LP, audit and dump")
    p.add_argument("problem")
    p.add_argument("--kind", choices=["auto", "naive", "k-items", "k-bidders"], default="auto")
    _common(p)

    p = sub.add_parser("verify", help="audit a mechanism dump")
    p.add_argument("problem")
    p.add_argument("--mechanism", required=True)
    _common(p)

    p = sub.add_parser("reduce", help="run the exact-truthfulness reduction")
    p.add_argument("problem")
    p.add_argument("--mechanism", required=True, help="dump of M1, solved for the rounded distribution")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--traces", type=int, default=20, help="number of traced runs to write")
    _common(p)

    p = sub.add_parser("sample", help="sample truthful profiles and realized allocations")
    p.add_argument("problem")
    p.add_argument("--mechanism", required=True)
    p.add_argument("--count", type=int, default=10)
    _common(p)

    p = sub.add_parser("mhr-plan", help="tail threshold, truncated grid and posted-price baseline")
    p.add_argument("--marginal", required=True, help="JSON spec, JSON file or value,cdf CSV")
    p.add_argument("--setting", choices=["k-items", "k-bidders"], default="k-bidders")
    p.add_argument("--bidders", type=int, default=1)
    p.add_argument("--items", type=int, default=1)
    p.add_argument("--trials", type=int, default=10000)
    _common(p)

    p = sub.add_parser("oracle-compare", help="succinct LPs against the full-support LP")
    p.add_argument("problem")
    _common(p)
    return parser


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def _load(args):
    dist, cons, setting = sio.load_problem(args.problem)
    if args.max_support is not None:
        dist = DiscreteDistribution(factors=dist.factors, joint=dist.joint, delta=dist.delta,
                                    max_support=args.max_support)
    return dist, cons, setting


def _grid(args, dist) -> Fraction | None:
    if args.delta is not None:
        return args.delta
    if args.epsilon > 0:
        return args.epsilon ** 2
    return dist.delta


def _on_grid(dist: DiscreteDistribution, delta) -> bool:
    return all((v / delta).denominator == 1 for v in dist.values_used())


def _rounded(dist: DiscreteDistribution, delta) -> DiscreteDistribution:
    """``D'``: the distribution rounded down to the ``delta`` grid."""
    if delta is None:
        return dist
    if _on_grid(dist, delta):
        return dist.with_delta(delta)
    return discretize(dist, delta, "down")


def _emit(args, name: str, text: str):
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / name).write_text(text)


def _table(rows: list[tuple[str, object]]) -> str:
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


def _audit(M, dist, cons, setting, eps, mode) -> dict:
    rep = check_ic(M, dist, eps) if mode == "ic" else check_bic(M, dist, eps)
    out = rep.as_dict()
    mono = []
    if setting.kind == "k-bidders" and all(dist.marginal(i).is_item_symmetric() for i in range(dist.m)):
        mono = check_strong_monotonicity(M, dist, mode)
    out["strong_monotonicity_violations"] = len(mono)
    feas = check_feasible(M, [p for p, _ in dist.support()], cons)
    out["feasibility_violations"] = [[str(x) for x in v] for v in feas]
    out["epsilon"] = fmt(eps)
    out["passed"] = (rep.is_eps_compatible(eps) and rep.max_ir_violation == 0 and not mono and not feas)
    return out


def _optimum(dist, cons, kind, eps, mode):
    lp = build(dist, cons, kind, eps, mode)
    sol = solve(lp)
    if not sol.optimal:
        raise ModelError(f"{kind} LP is {sol.status}")
    return lp, sol


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_solve(args) -> int:
    dist, cons, setting = _load(args)
    delta = _grid(args, dist)
    Dp = _rounded(dist, delta)
    validate(Dp, cons, setting)
    kind = setting.kind if args.kind == "auto" else args.kind
    lp, sol = _optimum(Dp, cons, kind, args.epsilon, args.mode)
    M = extract(sol, lp)
    audit = _audit(M, Dp, cons, setting, args.epsilon, args.mode)
    summary = {
        "kind": kind, "mode": args.mode, "epsilon": fmt(args.epsilon),
        "delta": None if delta is None else fmt(delta),
        "lp_objective": fmt(sol.objective), "lp_certified": sol.certified,
        "lp_variables": lp.num_vars, "lp_rows": lp.num_rows,
        "revenue": fmt(revenue(M, Dp)), "T": cons.total_cap(dist.m, dist.n),
    }
    if kind != "naive" and Dp.support_size() <= NAIVE_COMPARE_CAP:
        _, nsol = _optimum(Dp, cons, "naive", args.epsilon, args.mode)
        summary["naive_objective"] = fmt(nsol.objective)
        summary["naive_equal"] = nsol.objective == sol.objective
        audit["passed"] = audit["passed"] and summary["naive_equal"]
    if args.ir == "expost":
        rule = ExPostIRRule(M, Dp)
        summary["expost_rates"] = {f"{i}:{','.join(map(fmt, t))}": fmt(c) for (i, t), c in rule.rate.items()}
    if args.emit_lp:
        summary["lp_objective_scale"] = lp.objective_scale
        _emit(args, "model.lp", lp.to_cplex_lp())
    _emit(args, "mechanism.csv", sio.dump_mechanism(M, setting, delta))
    _emit(args, "problem_rounded.json", sio.dumps(sio.problem_to_json(Dp, cons, setting)))
    _emit(args, "audit.json", sio.dumps(audit))
    _emit(args, "summary.json", sio.dumps(summary))
    print(_table([("kind", kind), ("mode", args.mode), ("LP optimum", summary["lp_objective"]),
                  ("naive optimum", summary.get("naive_objective", "-")),
                  ("max violation", audit["max_violation"]), ("IR shortfall", audit["max_ir_violation"]),
                  ("monotonicity", audit["strong_monotonicity_violations"]),
                  ("audit", "pass" if audit["passed"] else "FAIL")]))
    return EXIT_OK if audit["passed"] else EXIT_AUDIT


def cmd_verify(args) -> int:
    dist, cons, setting = _load(args)
    M, header = sio.load_mechanism(Path(args.mechanism), None)
    delta = args.delta if args.delta is not None else (
        as_fraction(Fraction(header["delta"])) if header.get("delta") else dist.delta)
    Dp = _rounded(dist, delta)
    from .mechanism import SupportSnapper
    M.fallback = SupportSnapper(Dp)
    audit = _audit(M, Dp, cons, setting, args.epsilon, args.mode)
    _emit(args, "verify.json", sio.dumps(audit))
    print(sio.dumps(audit), end="")
    return EXIT_OK if audit["passed"] else EXIT_AUDIT


def _need_seed(args):
    if args.seed is None:
        raise UsageError(f"'{args.command}' is stochastic: pass --seed")


def cmd_reduce(args) -> int:
    from .reduction import ReducedMechanism, ReductionConfig, revenue_bound_check
    _need_seed(args)
    dist, cons, setting = _load(args)
    M1, header = sio.load_mechanism(Path(args.mechanism), None)
    delta = args.delta
    if delta is None:
        delta = Fraction(header["delta"]) if header.get("delta") else _grid(args, dist)
    if delta is None:
        raise UsageError("no grid step: pass --delta or --epsilon")
    eta = args.eta if args.eta is not None else args.epsilon
    if not 0 < eta < 1:
        raise UsageError("eta must lie in (0, 1); pass --eta or a positive --epsilon")
    Dp = _rounded(dist, delta)
    from .mechanism import SupportSnapper
    M1.fallback = SupportSnapper(Dp)
    cfg = ReductionConfig(eta, delta, setting, scale_override=args.scale_r)
    mech = ReducedMechanism(M1, dist, Dp, cfg, cons)
    root = np.random.SeedSequence(args.seed)
    lines = []
    for k in range(args.traces):
        prof = sample(dist, np.random.default_rng(np.random.SeedSequence(root.entropy, spawn_key=(0, k))))
        tr = mech.run(prof, np.random.SeedSequence(root.entropy, spawn_key=(1, k)), sample_items=True)
        lines.append(json.dumps(tr.as_dict(), sort_keys=True, separators=(",", ":")))
    report = revenue_bound_check(mech, args.trials, eps=args.epsilon, seed=args.seed)
    out = report.as_dict()
    out.update({"r": cfg.r, "formula_r": str(cfg.formula_r), "eta": fmt(eta), "delta": fmt(delta)})
    _emit(args, "traces.jsonl", "\n".join(lines) + "\n")
    _emit(args, "bound.json", sio.dumps(out))
    print(sio.dumps(out), end="")
    return EXIT_OK if report.holds else EXIT_AUDIT


def cmd_sample(args) -> int:
    from .allocation import decompose_marginals, sample_assignment
    _need_seed(args)
    dist, cons, setting = _load(args)
    M, header = sio.load_mechanism(Path(args.mechanism), None)
    delta = args.delta if args.delta is not None else (
        Fraction(header["delta"]) if header.get("delta") else dist.delta)
    Dp = _rounded(dist, delta)
    from .mechanism import SupportSnapper
    M.fallback = SupportSnapper(Dp)
    rule = ExPostIRRule(M, Dp) if args.ir == "expost" else None
    rng = np.random.default_rng(args.seed)
    demands = [cons.demand(i) for i in range(dist.m)]
    lines = []
    for _ in range(args.count):
        prof = sample(Dp, rng)
        o = M.outcome(prof)
        if rule is not None:
            bundles, pay = rule.run(prof, cons, rng)
        else:
            bundles = sample_assignment(decompose_marginals(o.phi, demands), rng)
            pay = o.price
        lines.append(json.dumps({"profile": [[fmt(v) for v in t] for t in prof],
                                 "bundles": [list(b) for b in bundles],
                                 "payments": [fmt(p) for p in pay]}, sort_keys=True, separators=(",", ":")))
    text = "\n".join(lines) + "\n"
    _emit(args, "samples.jsonl", text)
    print(text, end="")
    return EXIT_OK


def cmd_mhr_plan(args) -> int:
    from . import mhr
    _need_seed(args)
    F = sio.load_marginal(args.marginal)
    setting = Setting(args.setting, args.bidders, args.items)
    eps = args.epsilon if args.epsilon > 0 else Fraction(1, 2)
    delta = _grid(args, DiscreteDistribution.point_mass([[0] * args.items] * args.bidders))
    delta = delta if delta is not None else eps ** 2
    plan = mhr.plan([F], eps, setting)
    coord = mhr.truncate_and_discretize(F, plan.xi, delta)
    grid = mhr.value_grid([F], setting)
    est = mhr.posted_price_revenue(grid, plan.xi_prime, args.trials, args.seed)
    out = plan.as_dict()
    out.update({"epsilon": fmt(eps), "delta": fmt(delta), "marginal": F.spec(),
                "grid_masses": {fmt(v): fmt(p) for v, p in sorted(coord.items())},
                "posted_price_mean": est.mean, "posted_price_stderr": est.stderr,
                "trials": args.trials})
    try:
        out["posted_price_exact"] = mhr.posted_price_revenue_exact(grid, plan.xi_prime)
    except ValueError:
        out["posted_price_exact"] = None
    factor = BidderFactor.iid(coord, args.items)
    problem = sio.problem_to_json(DiscreteDistribution(factors=(factor,) * args.bidders, delta=delta),
                                  _unbounded(args.bidders), setting)
    _emit(args, "plan.json", sio.dumps(out))
    _emit(args, "problem.json", sio.dumps(problem))
    print(sio.dumps(out), end="")
    return EXIT_OK


def _unbounded(m):
    from .model import Constraints
    return Constraints.additive(m)


def cmd_oracle_compare(args) -> int:
    dist, cons, setting = _load(args)
    Dp = _rounded(dist, _grid(args, dist))
    _, nsol = _optimum(Dp, cons, "naive", args.epsilon, args.mode)
    out = {"naive": fmt(nsol.objective), "mode": args.mode, "epsilon": fmt(args.epsilon)}
    ok = True
    for kind in ("k-items", "k-bidders"):
        try:
            _, sol = _optimum(Dp, cons, kind, args.epsilon, args.mode)
        except ModelError as e:
            out[kind] = f"n/a ({type(e).__name__})"
            continue
        out[kind] = fmt(sol.objective)
        ok = ok and sol.objective == nsol.objective
    out["equal"] = ok
    _emit(args, "oracle.json", sio.dumps(out))
    print(sio.dumps(out), end="")
    return EXIT_OK if ok else EXIT_AUDIT


COMMANDS = {
    "solve": cmd_solve, "verify": cmd_verify, "reduce": cmd_reduce, "sample": cmd_sample,
    "mhr-plan": cmd_mhr_plan, "oracle-compare": cmd_oracle_compare,
}


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    for name in ("delta", "eta"):
        val = getattr(args, name, None)
        if val is not None and not 0 < val < 1:
            print(f"symmech: --{name} must lie in (0, 1)", file=sys.stderr)
            return EXIT_INPUT
    if args.delta is not None and (1 / args.delta).denominator != 1:
        print("symmech: 1/delta must be an integer", file=sys.stderr)
        return EXIT_INPUT
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ModelError, ExplosionGuard, ArithmeticError, FileNotFoundError,
            json.JSONDecodeError, KeyError) as e:
        print(f"symmech: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
