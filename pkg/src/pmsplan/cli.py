"""pmscli: posterior summaries, plan utilities, greedy plans and sensitivity sweeps.

Exit codes: 0 success, 2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .estimators import member_losses
from .inference import SamplingError, sample_posterior
from .io import (
    InputError,
    RunConfig,
    build_network,
    fmt,
    read_config,
    read_plans,
    read_records,
    write_plan_table,
    write_rows,
)
from .planner import (
    GreedyResult,
    budget_savings,
    fixed_plan,
    greedy_allocations,
    largest_remainder,
    uniform_plan,
)
from .supply_model import (
    ConfigurationError,
    Dataset,
    IngestionError,
    Network,
    aggregate_traces,
    build_sourcing,
)
from .utility import FastUtility, NumericalError, SamplingPlan, expected_loss_mcmc

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


def _load(data_path, config_path) -> tuple[RunConfig, Dataset, Network]:
    cfg = read_config(config_path)
    data = read_records(data_path, cfg.sensitivity, cfg.specificity)
    return cfg, data, build_network(cfg, data)


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _budget_grid(cfg: RunConfig) -> list[int]:
    if cfg.budget is None:
        raise InputError("config must set budget")
    if cfg.interval < 1 or cfg.budget < cfg.interval:
        raise InputError("config needs interval >= 1 and budget >= interval")
    return list(range(cfg.interval, cfg.budget + 1, cfg.interval))


def _evaluator(cfg: RunConfig, data: Dataset, net: Network, seed: int | None = None) -> FastUtility:
    sourcing = build_sourcing(data, net, cfg.bootstrap_draws, cfg.sourcing_seed)
    return FastUtility(
        data, net, cfg.loss_spec(net, sourcing), sourcing, cfg.prior(net),
        cfg.h1, cfg.h2, cfg.seed if seed is None else seed,
        cfg.sensitivity, cfg.specificity, cfg.confidence_level,
    )


def _curve_rows(budgets, estimates):
    return [(b, fmt(u.mean), fmt(u.ci_low), fmt(u.ci_high)) for b, u in zip(budgets, estimates)]


def cmd_infer(data_path, config_path, out_path) -> int:
    cfg, data, net = _load(data_path, config_path)
    draws = sample_posterior(
        data, net, cfg.prior(net), cfg.h1, cfg.seed, cfg.mcmc_chains, cfg.mcmc_thin
    )
    out = _out_dir(out_path)
    write_rows(out / "draws.csv", net.node_ids, ([fmt(x) for x in row] for row in draws.values))
    q05, med, q95 = np.quantile(draws.values, [0.05, 0.5, 0.95], axis=0)
    echelon = ["test"] * net.n_test + ["supply"] * net.n_supply
    write_rows(
        out / "summary.csv",
        ("node", "echelon", "median", "q05", "q95"),
        zip(net.node_ids, echelon, map(fmt, med), map(fmt, q05), map(fmt, q95)),
    )
    return EXIT_OK


def cmd_utility(data_path, config_path, plans_path, out_path, oracle: bool = False) -> int:
    cfg, data, net = _load(data_path, config_path)
    plans = read_plans(plans_path, net)
    budgets = _budget_grid(cfg)
    fu = _evaluator(cfg, data, net)
    rows = []
    if oracle:
        draws = fu.truth_draws
        base = float(member_losses(draws.values, np.ones(len(draws)), fu.spec).min())
    for name, weights in plans.items():
        rows.append((name, 0, fmt(0.0), fmt(0.0), fmt(0.0)))
        for b in budgets:
            plan = SamplingPlan(largest_remainder(weights, b))
            if oracle:
                loss = expected_loss_mcmc(
                    data, plan, fu.spec, fu.sourcing, cfg.prior(net), cfg.h1, cfg.oracle_h2,
                    cfg.seed, network=net, s=cfg.sensitivity, r=cfg.specificity,
                    confidence_level=cfg.confidence_level, draws=draws,
                )
                rows.append((name, b, fmt(base - loss.mean), fmt(base - loss.ci_high), fmt(base - loss.ci_low)))
            else:
                u = fu(plan)
                rows.append((name, b, fmt(u.mean), fmt(u.ci_low), fmt(u.ci_high)))
    write_rows(_out_dir(out_path) / "utility.csv", ("plan", "budget", "mean", "ci_low", "ci_high"), rows)
    return EXIT_OK


@dataclass
class PlanRun:
    budgets: list[int]
    greedy: GreedyResult
    curves: dict  # policy -> list of UtilityEstimate
    plans: dict  # policy -> list of SamplingPlan
    savings: dict  # policy -> int | None
    at_budget: int


def reference_plan(cfg: RunConfig, data: Dataset, net: Network) -> SamplingPlan | None:
    """Reference for the fixed policy: config ``reference_plan`` or the existing test counts."""
    if cfg.reference_plan:
        if len(cfg.reference_plan) != net.n_test:
            raise InputError("reference_plan needs one count per test node")
        ref = SamplingPlan(cfg.reference_plan)
    else:
        ref = SamplingPlan(aggregate_traces(data, net).n.sum(axis=1))
    return ref if ref.total > 0 else None


def run_plan(cfg: RunConfig, data: Dataset, net: Network, seed: int | None = None) -> PlanRun:
    budgets = _budget_grid(cfg)
    at = cfg.savings_budget if cfg.savings_budget is not None else budgets[-1]
    if at not in budgets:
        raise InputError(f"savings_budget {at} is not on the budget grid {budgets}")
    fu = _evaluator(cfg, data, net, seed)
    greedy = greedy_allocations(cfg.budget, cfg.interval, fu, net)
    plans = {"greedy": list(greedy.plans), "uniform": [uniform_plan(b, net) for b in budgets]}
    ref = reference_plan(cfg, data, net)
    if ref is not None:
        plans["fixed"] = [fixed_plan(b, ref) for b in budgets]
    curves = {"greedy": list(greedy.utilities)}
    for policy in ("uniform", "fixed"):
        if policy in plans:
            curves[policy] = [fu(p) for p in plans[policy]]
    target = dict(zip(budgets, curves["greedy"]))
    savings = {
        policy: budget_savings(target, dict(zip(budgets, curves[policy])), at)
        for policy in ("uniform", "fixed")
        if policy in curves
    }
    return PlanRun(budgets, greedy, curves, plans, savings, at)


def _write_plan_run(run: PlanRun, net: Network, out: Path) -> None:
    for policy, plans in run.plans.items():
        write_plan_table(out / f"{policy}_plan.csv", run.budgets, plans, net)
        write_rows(
            out / f"{policy}_curve.csv",
            ("budget", "mean", "ci_low", "ci_high"),
            _curve_rows(run.budgets, run.curves[policy]),
        )
    write_rows(
        out / "savings.csv",
        ("policy", "at_budget", "savings"),
        [(p, run.at_budget, "NA" if s is None else s) for p, s in run.savings.items()],
    )


def cmd_plan(data_path, config_path, out_path, replications: int = 1) -> int:
    if replications < 1:
        raise InputError("--replications must be at least 1")
    cfg, data, net = _load(data_path, config_path)
    out = _out_dir(out_path)
    rep_curves, rep_plans = [], []
    for k in range(replications):
        seed = cfg.seed + k
        run = run_plan(cfg, data, net, seed)
        if k == 0:
            _write_plan_run(run, net, out)
        for b, u in zip(run.budgets, run.curves["greedy"]):
            rep_curves.append((k, seed, b, fmt(u.mean), fmt(u.ci_low), fmt(u.ci_high)))
        for b, p in zip(run.budgets, run.plans["greedy"]):
            rep_plans.extend((k, b, node, int(x)) for node, x in zip(net.test_nodes, p.alloc))
    if replications > 1:
        write_rows(out / "replications.csv",
                   ("replication", "seed", "budget", "mean", "ci_low", "ci_high"), rep_curves)
        write_rows(out / "replication_plans.csv",
                   ("replication", "budget", "node", "allocation"), rep_plans)
    return EXIT_OK


_GRID_KEYS = {
    "budget": ("budget", int),
    "v": ("underestimation_v", float),
    "m": ("weight_slope_m", float),
    "nu": ("prior_variance_nu", float),
    "sourcing_seed": ("sourcing_seed", int),
}


def read_grid(path) -> list[dict]:
    scenarios = []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot read grid {path}: {exc.strerror}") from None
    with fh:
        reader = csv.DictReader(fh)
        cols = [c.strip() for c in (reader.fieldnames or [])]
        unknown = set(cols) - set(_GRID_KEYS)
        if not cols or unknown:
            raise InputError(f"{path} line 1: grid columns must be among {sorted(_GRID_KEYS)}")
        for row in reader:
            over = {}
            for col, raw in row.items():
                raw = (raw or "").strip()
                if not raw:
                    continue
                key, conv = _GRID_KEYS[col.strip()]
                try:
                    over[key] = conv(raw)
                except ValueError:
                    raise InputError(f"{path} line {reader.line_num}: bad {col} value {raw!r}") from None
            scenarios.append(over)
    return scenarios


def cmd_sensitivity(data_path, config_path, grid_path, out_path) -> int:
    cfg, data, net = _load(data_path, config_path)
    scenarios = read_grid(grid_path)
    header = ["scenario", "budget", "v", "m", "nu", "sourcing_seed"]
    header += [f"alloc.{a}" for a in net.test_nodes] + ["savings_uniform", "savings_fixed"]
    rows = []
    for i, over in enumerate(scenarios):
        sc = cfg.with_overrides(**over)
        run = run_plan(sc, data, net)
        final = run.greedy.plans[-1].alloc
        sav = [run.savings.get(p) for p in ("uniform", "fixed")]
        rows.append(
            [i, sc.budget, sc.underestimation_v, sc.weight_slope_m, sc.prior_variance_nu,
             sc.sourcing_seed, *map(int, final), *("NA" if s is None else s for s in sav)]
        )
    write_rows(_out_dir(out_path) / "sensitivity.csv", header, rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pmscli", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("infer", help="sample the posterior and summarize each node")
    s.add_argument("data")
    s.add_argument("config")
    s.add_argument("out", help="output directory")

    s = sub.add_parser("utility", help="utility of named plans over the budget grid")
    s.add_argument("data")
    s.add_argument("config")
    s.add_argument("plans", help="CSV with columns plan,node,weight")
    s.add_argument("out", help="output directory")
    s.add_argument("--oracle", action="store_true", help="use the slow re-sampling estimator")

    s = sub.add_parser("plan", help="greedy allocation plus uniform/fixed comparison")
    s.add_argument("data")
    s.add_argument("config")
    s.add_argument("out", help="output directory")
    s.add_argument("--replications", type=int, default=1, help="repeat with seeds seed..seed+k-1")

    s = sub.add_parser("sensitivity", help="re-run the planner over a parameter grid")
    s.add_argument("data")
    s.add_argument("config")
    s.add_argument("grid", help="CSV with columns among budget,v,m,nu,sourcing_seed")
    s.add_argument("out", help="output directory")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "infer":
            return cmd_infer(args.data, args.config, args.out)
        if args.command == "utility":
            return cmd_utility(args.data, args.config, args.plans, args.out, args.oracle)
        if args.command == "plan":
            return cmd_plan(args.data, args.config, args.out, args.replications)
        return cmd_sensitivity(args.data, args.config, args.grid, args.out)
    except (InputError, IngestionError, ConfigurationError) as exc:
        print(f"pmscli: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, SamplingError, FloatingPointError) as exc:
        print(f"pmscli: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
