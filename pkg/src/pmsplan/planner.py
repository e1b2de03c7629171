"""Plan generation: greedy allocation, baseline policies, exhaustive search."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb
from typing import Callable, Mapping

import numpy as np

from .supply_model import ConfigurationError, Network
from .utility import SamplingPlan, UtilityEstimate

DEFAULT_PLAN_CAP = 10_000
DEFAULT_INTERVAL = 10


class PlanCountError(ValueError):
    """Exhaustive enumeration would exceed the configured plan cap."""


def _value(est) -> float:
    return float(est.mean) if hasattr(est, "mean") else float(est)


def _n_test(network: Network | int) -> int:
    return network if isinstance(network, int) else network.n_test


@dataclass(frozen=True)
class GreedyResult:
    """Nested plans from the greedy sweep; entry i has budget (i + 1) * interval."""

    budgets: tuple[int, ...]
    plans: tuple[SamplingPlan, ...]
    utilities: tuple[UtilityEstimate, ...]
    chosen: tuple[int, ...]
    evaluations: int


def greedy_allocations(
    budget: int,
    interval: int,
    utility_fn: Callable[[SamplingPlan], UtilityEstimate],
    network: Network | int,
) -> GreedyResult:
    """Add ``interval`` tests at a time to the node with the largest utility gain.

    Every candidate in a step is evaluated by the same ``utility_fn`` (so a
    ``FastUtility`` instance gives common random numbers across arms); ties go
    to the lowest node index. Runs budget // interval steps.
    """
    if interval < 1:
        raise ConfigurationError("interval must be at least 1")
    if budget < interval:
        raise ConfigurationError("budget must be at least one interval")
    n_test = _n_test(network)
    plan = SamplingPlan.zeros(n_test)
    budgets, plans, utils, chosen = [], [], [], []
    evaluations = 0
    for step in range(budget // interval):
        cands = [plan.add(a, interval) for a in range(n_test)]
        ests = [utility_fn(c) for c in cands]
        evaluations += n_test
        best = int(np.argmax([_value(e) for e in ests]))
        plan = cands[best]
        budgets.append((step + 1) * interval)
        plans.append(plan)
        utils.append(ests[best])
        chosen.append(best)
    return GreedyResult(tuple(budgets), tuple(plans), tuple(utils), tuple(chosen), evaluations)


def uniform_plan(budget: int, network: Network | int) -> SamplingPlan:
    """Even split; the remainder goes to the lowest-indexed nodes."""
    if budget < 0:
        raise ConfigurationError("budget must be nonnegative")
    n_test = _n_test(network)
    base, rem = divmod(int(budget), n_test)
    alloc = np.full(n_test, base, np.int64)
    alloc[:rem] += 1
    return SamplingPlan(alloc)


def largest_remainder(weights, total: int) -> np.ndarray:
    """Integer apportionment of ``total`` proportional to ``weights``.

    Leftover units go to the largest fractional parts, ties to the lowest index.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or np.any(w < 0) or not np.any(w > 0):
        raise ConfigurationError("apportionment weights must be nonnegative and not all zero")
    quota = w / w.sum() * total
    alloc = np.floor(quota).astype(np.int64)
    # Guard against quotas like 2.9999999 that should be exact integers.
    close = np.isclose(quota, np.round(quota), rtol=0, atol=1e-9)
    alloc[close] = np.round(quota[close]).astype(np.int64)
    left = int(total - alloc.sum())
    if left > 0:
        frac = np.where(close, 0.0, quota - alloc)
        order = np.lexsort((np.arange(w.size), -frac))
        alloc[order[:left]] += 1
    return alloc


def fixed_plan(budget: int, reference: SamplingPlan) -> SamplingPlan:
    """Allocate in proportion to a reference plan (largest-remainder rounding)."""
    if budget < 0:
        raise ConfigurationError("budget must be nonnegative")
    if reference.total == 0:
        raise ConfigurationError("the reference plan allocates nothing")
    return SamplingPlan(largest_remainder(reference.alloc, int(budget)))


def budget_savings(
    target_curve: Mapping[int, object],
    other_curve: Mapping[int, object],
    at_budget: int,
) -> int | None:
    """Extra tests the other policy needs to match the target's utility at ``at_budget``.

    Curves map budget -> utility (a number or anything with ``.mean``) on a
    shared grid. Returns None when the other curve never reaches the level.
    """
    if set(target_curve) != set(other_curve):
        raise ConfigurationError("utility curves are not on a common budget grid")
    if at_budget not in target_curve:
        raise ConfigurationError(f"budget {at_budget} is not on the curve grid")
    level = _value(target_curve[at_budget])
    for b in sorted(other_curve):
        if _value(other_curve[b]) >= level:
            return int(b - at_budget)
    return None


def plan_count(n_test: int, budget: int) -> int:
    """Number of plans allocating exactly ``budget`` tests across ``n_test`` nodes."""
    if budget == 0:
        return 1
    return sum(comb(n_test, i) * comb(budget - 1, i - 1) for i in range(1, n_test + 1))


def enumerate_plans(n_test: int, budget: int):
    """All allocations of exactly ``budget`` tests (stars and bars)."""
    for bars in itertools.combinations(range(budget + n_test - 1), n_test - 1):
        edges = (-1,) + bars + (budget + n_test - 1,)
        yield SamplingPlan(np.diff(edges) - 1)


def exhaustive_best(
    budget: int,
    utility_fn: Callable[[SamplingPlan], UtilityEstimate],
    network: Network | int,
    cap: int = DEFAULT_PLAN_CAP,
) -> tuple[SamplingPlan, UtilityEstimate]:
    n_test = _n_test(network)
    count = plan_count(n_test, budget)
    if count > cap:
        raise PlanCountError(
            f"{count} plans exceed the cap of {cap}; use greedy_allocations instead"
        )
    best_plan, best_est = None, None
    for plan in enumerate_plans(n_test, budget):
        est = utility_fn(plan)
        if best_est is None or _value(est) > _value(best_est):
            best_plan, best_est = plan, est
    return best_plan, best_est


__all__ = [
    "DEFAULT_PLAN_CAP",
    "DEFAULT_INTERVAL",
    "PlanCountError",
    "GreedyResult",
    "greedy_allocations",
    "uniform_plan",
    "largest_remainder",
    "fixed_plan",
    "budget_savings",
    "plan_count",
    "enumerate_plans",
    "exhaustive_best",
]
