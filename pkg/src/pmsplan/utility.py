"""Expected loss and utility of sampling plans.

``FastUtility`` implements the single-draw-set estimator: one posterior draw
set Gamma0 (size h1) serves both as the truth set and, through a random
h2-subset Gamma1, as the generator of simulated datasets. Column j of the data
matrix D holds the likelihood of simulated dataset j under every member of
Gamma0, normalized to sum to one; the Bayes estimate for that column is a
weighted per-node quantile and its expected loss u_j is computed by the
``column_losses`` kernel. ``expected_loss_mcmc`` is the slow reference that
re-samples the posterior for every simulated dataset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from . import kernels
from .estimators import member_losses
from .inference import DrawSet, sample_posterior
from .loss import LossSpec
from .priors import PriorSpec
from .supply_model import (
    ConfigurationError,
    Dataset,
    Network,
    RateVector,
    SourcingMatrix,
    detection_probability,
    log_detection_terms,
)

DEFAULT_H1 = 5000
DEFAULT_H2 = 300
PRODUCTION_H1 = 75000
PRODUCTION_H2 = 2000
COLUMN_CHUNK = 256

# Stream labels mixed into the user seed so that the independent random
# components never share a stream.
_SUBSET_STREAM = 101
_DATA_STREAM = 202
_TRUTH_STREAM = 303
_ORACLE_STREAM = 404


class NumericalError(RuntimeError):
    """A likelihood column vanished after stabilization."""


@dataclass(frozen=True, eq=False)
class SamplingPlan:
    alloc: np.ndarray

    def __post_init__(self):
        a = np.array(self.alloc)
        if a.ndim != 1:
            raise ValueError("a sampling plan is a 1-D allocation")
        if a.size and (not np.all(a == np.round(a)) or np.any(a < 0)):
            raise ValueError("allocations must be nonnegative integers")
        a = a.astype(np.int64)
        a.setflags(write=False)
        object.__setattr__(self, "alloc", a)

    @classmethod
    def zeros(cls, n_test: int) -> "SamplingPlan":
        return cls(np.zeros(n_test, np.int64))

    @property
    def total(self) -> int:
        return int(self.alloc.sum())

    def add(self, node: int, count: int) -> "SamplingPlan":
        a = self.alloc.copy()
        a[node] += count
        return SamplingPlan(a)

    def __eq__(self, other) -> bool:
        return isinstance(other, SamplingPlan) and np.array_equal(self.alloc, other.alloc)

    def __hash__(self) -> int:
        return hash(tuple(self.alloc.tolist()))

    def __repr__(self) -> str:
        return f"SamplingPlan({self.alloc.tolist()})"


@dataclass(frozen=True)
class LossEstimate:
    """Monte Carlo estimate of a plan's expected loss."""

    mean: float
    std_error: float
    ci_low: float
    ci_high: float
    samples: np.ndarray
    h1: int
    h2: int
    seed: int


@dataclass(frozen=True)
class UtilityEstimate:
    mean: float
    std_error: float
    ci_low: float
    ci_high: float
    h1: int
    h2: int
    seed: int
    baseline_expected_loss: float

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci_high - self.ci_low)

    @property
    def expected_loss(self) -> float:
        return self.baseline_expected_loss - self.mean


def z_value(confidence_level: float) -> float:
    if not 0 < confidence_level < 1:
        raise ConfigurationError("confidence_level must lie in (0, 1)")
    return float(norm.ppf(0.5 + confidence_level / 2.0))


def _clt(samples: np.ndarray, confidence_level: float) -> tuple[float, float, float, float]:
    m = len(samples)
    mean = float(np.mean(samples))
    se = float(np.std(samples, ddof=1) / np.sqrt(m)) if m > 1 else 0.0
    half = z_value(confidence_level) * se
    return mean, se, mean - half, mean + half


def _derived_seed(*words: int) -> int:
    return int(np.random.SeedSequence(list(words)).generate_state(1)[0])


def _check_plan(plan: SamplingPlan, sourcing: SourcingMatrix) -> None:
    if plan.alloc.size != sourcing.shape[0]:
        raise ConfigurationError(
            f"plan has {plan.alloc.size} entries for {sourcing.shape[0]} test nodes"
        )


def simulate_counts(
    alloc: np.ndarray,
    sourcing: SourcingMatrix,
    detect: np.ndarray,
    rng_seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Simulated trace counts for many datasets at once.

    ``detect`` is (datasets, |A|, |B|) detection probabilities, one truth per
    dataset. Test node a draws from its own stream seeded by (seed, a); record
    t of dataset j at node a uses the pair U[t, j] from that stream, so adding
    tests at a node only appends records and leaves earlier ones unchanged.
    Returns n and y with shape (datasets, |A|, |B|).
    """
    n_data, n_a, n_b = detect.shape
    cumq = np.cumsum(sourcing.probs, axis=1)
    n = np.zeros((n_data, n_a, n_b), np.int64)
    y = np.zeros((n_data, n_a, n_b), np.int64)
    cols = np.arange(n_data)
    for a in range(n_a):
        k = int(alloc[a])
        if k == 0:
            continue
        u = np.random.default_rng([rng_seed, _DATA_STREAM, a]).random((k, n_data, 2))
        b = np.minimum(np.searchsorted(cumq[a], u[..., 0], side="right"), n_b - 1)
        pos = u[..., 1] < detect[cols[None, :], a, b]
        flat = cols[None, :] * n_b + b
        n[:, a, :] = np.bincount(flat.ravel(), minlength=n_data * n_b).reshape(n_data, n_b)
        y[:, a, :] = np.bincount(flat.ravel(), weights=pos.ravel(), minlength=n_data * n_b).reshape(
            n_data, n_b
        )
    return n, y


def simulate_dataset(
    plan: SamplingPlan,
    sourcing: SourcingMatrix,
    truth: RateVector,
    s: float,
    r: float,
    rng_seed: int,
    network: Network | None = None,
) -> Dataset:
    """One simulated dataset: ``plan.alloc[a]`` records at each test node a."""
    _check_plan(plan, sourcing)
    n_a, n_b = sourcing.shape
    if network is None:
        network = Network(tuple(f"TN{i + 1}" for i in range(n_a)), tuple(f"SN{j + 1}" for j in range(n_b)))
    detect = detection_probability(truth.theta[:, None], truth.delta[None, :], s, r)[None]
    n, y = simulate_counts(plan.alloc, sourcing, detect, rng_seed)
    return Dataset.from_counts(network, n[0], y[0], s, r)


def _log_tables(values: np.ndarray, n_test: int, s: float, r: float):
    theta = values[:, :n_test, None]
    delta = values[:, None, n_test:]
    log_pos, log_neg = log_detection_terms(theta, delta, s, r)
    return log_pos.reshape(len(values), -1), log_neg.reshape(len(values), -1)


def _normalized_columns(log_d: np.ndarray, first_col: int = 0) -> np.ndarray:
    log_d = log_d - log_d.max(axis=0)
    d = np.exp(log_d)
    tot = d.sum(axis=0)
    bad = np.flatnonzero(~(tot > 0) | ~np.isfinite(tot))
    if bad.size:
        raise NumericalError(f"data-matrix column {first_col + bad[0]} vanished after stabilization")
    return d / tot


def build_data_matrix(
    truth_draws: DrawSet,
    data_draws: DrawSet,
    plan: SamplingPlan,
    sourcing: SourcingMatrix,
    s: float,
    r: float,
    rng_seed: int,
) -> np.ndarray:
    """h1 x h2 matrix of normalized likelihoods of simulated datasets.

    Column j's dataset is simulated under data_draws[j]; entry (i, j) is
    proportional to the probability of that dataset under truth_draws[i]. The
    binomial coefficient is omitted since it cancels in the normalization.
    """
    _check_plan(plan, sourcing)
    n_test = truth_draws.n_test
    log_pos, log_neg = _log_tables(truth_draws.values, n_test, s, r)
    dv = data_draws.values
    detect = detection_probability(dv[:, :n_test, None], dv[:, None, n_test:], s, r)
    n, y = simulate_counts(plan.alloc, sourcing, detect, rng_seed)
    n = n.reshape(len(dv), -1).astype(float)
    y = y.reshape(len(dv), -1).astype(float)
    return _normalized_columns(log_pos @ y.T + log_neg @ (n - y).T)


class FastUtility:
    """Reusable utility evaluator for one (data, loss, prior, seed) setting.

    Every call reuses the same Gamma0, the same Gamma1 subset and the same data
    streams, so comparisons between plans use common random numbers.
    """

    def __init__(
        self,
        existing: Dataset,
        network: Network,
        spec: LossSpec,
        sourcing: SourcingMatrix,
        prior: PriorSpec,
        h1: int = DEFAULT_H1,
        h2: int = DEFAULT_H2,
        seed: int = 0,
        s: float = 1.0,
        r: float = 1.0,
        confidence_level: float = 0.95,
        draws: DrawSet | None = None,
        backend: str | None = None,
    ):
        if sourcing.shape != (network.n_test, network.n_supply):
            raise ConfigurationError("sourcing matrix does not match the network")
        if h2 < 2 or h1 < h2:
            raise ConfigurationError("need h1 >= h2 >= 2")
        z_value(confidence_level)
        self.network = network
        self.spec = spec
        self.sourcing = sourcing
        self.h1, self.h2, self.seed = h1, h2, seed
        self.s, self.r = s, r
        self.confidence_level = confidence_level
        self._kern = kernels.get_backend(backend)
        if draws is None:
            draws = sample_posterior(existing, network, prior, h1, seed)
        elif len(draws) != h1:
            raise ConfigurationError("supplied draw set does not have h1 members")
        self.truth_draws = draws
        pick = np.random.default_rng([seed, _SUBSET_STREAM]).choice(h1, size=h2, replace=False)
        self.data_draws = draws.subset(pick)

        vals = draws.values
        n_test = network.n_test
        self._log_pos, self._log_neg = _log_tables(vals, n_test, s, r)
        dv = self.data_draws.values
        self._detect = detection_probability(dv[:, :n_test, None], dv[:, None, n_test:], s, r)
        self._order = np.ascontiguousarray(np.argsort(vals, axis=0, kind="stable").T)
        self._sorted = np.ascontiguousarray(np.take_along_axis(vals, self._order.T, axis=0).T)
        self._weights = np.ascontiguousarray(spec.node_weights(vals))
        self._factor = spec.node_factors(network.n_test, network.n_supply)
        self._kind = 0 if spec.score_kind == "assessment" else 1
        self.baseline_expected_loss = float(self._column_losses(np.full((h1, 1), 1.0 / h1))[0])

    def _column_losses(self, d: np.ndarray) -> np.ndarray:
        out = np.empty(d.shape[1])
        self._kern.column_losses(
            self._sorted, self._order, self._weights, np.ascontiguousarray(d), self._kind,
            self.spec.quantile, self.spec.underestimation_v, self.spec.threshold_l,
            self._factor, out,
        )
        return out

    def column_expected_losses(self, plan: SamplingPlan) -> np.ndarray:
        """u_j for every simulated dataset j."""
        _check_plan(plan, self.sourcing)
        n, y = simulate_counts(plan.alloc, self.sourcing, self._detect, self.seed)
        n = n.reshape(self.h2, -1).astype(float)
        y = y.reshape(self.h2, -1).astype(float)
        u = np.empty(self.h2)
        for c0 in range(0, self.h2, COLUMN_CHUNK):
            c1 = min(c0 + COLUMN_CHUNK, self.h2)
            log_d = self._log_pos @ y[c0:c1].T + self._log_neg @ (n[c0:c1] - y[c0:c1]).T
            u[c0:c1] = self._column_losses(_normalized_columns(log_d, c0))
        return u

    def expected_loss(self, plan: SamplingPlan) -> LossEstimate:
        u = self.column_expected_losses(plan)
        mean, se, lo, hi = _clt(u, self.confidence_level)
        return LossEstimate(mean, se, lo, hi, u, self.h1, self.h2, self.seed)

    def __call__(self, plan: SamplingPlan) -> UtilityEstimate:
        gains = self.baseline_expected_loss - self.column_expected_losses(plan)
        mean, se, lo, hi = _clt(gains, self.confidence_level)
        return UtilityEstimate(
            mean, se, lo, hi, self.h1, self.h2, self.seed, self.baseline_expected_loss
        )


def expected_loss_fast(
    existing: Dataset,
    plan: SamplingPlan,
    spec: LossSpec,
    sourcing: SourcingMatrix,
    prior: PriorSpec,
    h1: int = DEFAULT_H1,
    h2: int = DEFAULT_H2,
    seed: int = 0,
    *,
    network: Network,
    **kwargs,
) -> LossEstimate:
    return FastUtility(existing, network, spec, sourcing, prior, h1, h2, seed, **kwargs).expected_loss(plan)


def plan_utility(
    existing: Dataset,
    plan: SamplingPlan,
    spec: LossSpec,
    sourcing: SourcingMatrix,
    prior: PriorSpec,
    h1: int = DEFAULT_H1,
    h2: int = DEFAULT_H2,
    seed: int = 0,
    *,
    network: Network,
    **kwargs,
) -> UtilityEstimate:
    return FastUtility(existing, network, spec, sourcing, prior, h1, h2, seed, **kwargs)(plan)


def expected_loss_mcmc(
    existing: Dataset,
    plan: SamplingPlan,
    spec: LossSpec,
    sourcing: SourcingMatrix,
    prior: PriorSpec,
    h1: int = DEFAULT_H1,
    h2: int = 50,
    seed: int = 0,
    *,
    network: Network,
    s: float = 1.0,
    r: float = 1.0,
    confidence_level: float = 0.95,
    posterior_count: int | None = None,
    draws: DrawSet | None = None,
) -> LossEstimate:
    """Reference estimator: re-sample the posterior for every simulated dataset.

    For each j a truth is drawn from Gamma0, a dataset is simulated under it,
    the posterior given existing + simulated data is sampled, and the member
    of that draw set with the smallest summed loss is taken as the estimate;
    L_j is that member's mean loss over the draw set.
    """
    _check_plan(plan, sourcing)
    if draws is None:
        draws = sample_posterior(existing, network, prior, h1, seed)
    count = posterior_count or h1
    rng = np.random.default_rng([seed, _TRUTH_STREAM])
    losses = np.empty(h2)
    for j in range(h2):
        truth = draws[int(rng.integers(len(draws)))]
        sim_seed = _derived_seed(seed, _ORACLE_STREAM, j)
        extra = simulate_dataset(plan, sourcing, truth, s, r, sim_seed, network)
        post = sample_posterior(existing + extra, network, prior, count, sim_seed)
        losses[j] = member_losses(post.values, np.ones(len(post)), spec).min()
    mean, se, lo, hi = _clt(losses, confidence_level)
    return LossEstimate(mean, se, lo, hi, losses, h1, h2, seed)


__all__ = [
    "DEFAULT_H1",
    "DEFAULT_H2",
    "PRODUCTION_H1",
    "PRODUCTION_H2",
    "NumericalError",
    "SamplingPlan",
    "LossEstimate",
    "UtilityEstimate",
    "z_value",
    "simulate_counts",
    "simulate_dataset",
    "build_data_matrix",
    "FastUtility",
    "expected_loss_fast",
    "plan_utility",
    "expected_loss_mcmc",
]
