"""Two-echelon supply chain: nodes, test records, sourcing and the test likelihood."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import expit, logit

RATE_EPS = 1e-10


class IngestionError(ValueError):
    """A test record or input table does not resolve against the network."""


class ConfigurationError(ValueError):
    """Inconsistent or missing configuration (priors, catchments, loss parameters)."""


@dataclass(frozen=True)
class Network:
    test_nodes: tuple[str, ...]
    supply_nodes: tuple[str, ...]
    catchments: Mapping[str, float] | None = None
    risk: Mapping[str, int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "test_nodes", tuple(str(a) for a in self.test_nodes))
        object.__setattr__(self, "supply_nodes", tuple(str(b) for b in self.supply_nodes))
        for label, ids in (("test", self.test_nodes), ("supply", self.supply_nodes)):
            if len(set(ids)) != len(ids):
                raise ConfigurationError(f"duplicate {label} node identifiers: {ids}")
            if not ids:
                raise ConfigurationError(f"network needs at least one {label} node")
        if self.catchments is not None:
            missing = [a for a in self.test_nodes if a not in self.catchments]
            if missing:
                raise ConfigurationError(f"catchments missing for test nodes {missing}")
            pops = np.array([self.catchments[a] for a in self.test_nodes], dtype=float)
            if np.any(pops < 0) or not np.any(pops > 0):
                raise ConfigurationError("catchments must be nonnegative and not all zero")

    @property
    def n_test(self) -> int:
        return len(self.test_nodes)

    @property
    def n_supply(self) -> int:
        return len(self.supply_nodes)

    @property
    def n_nodes(self) -> int:
        return self.n_test + self.n_supply

    @property
    def node_ids(self) -> tuple[str, ...]:
        return self.test_nodes + self.supply_nodes

    def test_index(self, node: str) -> int:
        return self.test_nodes.index(node)

    def supply_index(self, node: str) -> int:
        return self.supply_nodes.index(node)


@dataclass(frozen=True)
class TestRecord:
    test_node: str
    supply_node: str
    result: int
    sensitivity: float = 1.0
    specificity: float = 1.0

    __test__ = False  # keep pytest from collecting this class

    def __post_init__(self):
        if self.result not in (0, 1):
            raise IngestionError(f"result must be 0 or 1, got {self.result!r}")
        for name in ("sensitivity", "specificity"):
            val = getattr(self, name)
            if not 0.5 < val <= 1.0:
                raise IngestionError(f"{name} must lie in (0.5, 1], got {val}")


@dataclass(frozen=True)
class Dataset:
    records: tuple[TestRecord, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __add__(self, other: "Dataset") -> "Dataset":
        return Dataset(self.records + other.records)

    @classmethod
    def from_counts(
        cls,
        network: Network,
        n: np.ndarray,
        y: np.ndarray,
        sensitivity: float = 1.0,
        specificity: float = 1.0,
    ) -> "Dataset":
        """Expand trace count matrices into individual records (positives first on each trace)."""
        n = np.asarray(n, dtype=int)
        y = np.asarray(y, dtype=int)
        if n.shape != (network.n_test, network.n_supply) or y.shape != n.shape:
            raise IngestionError("count matrices do not match the network shape")
        if np.any(y < 0) or np.any(y > n):
            raise IngestionError("need 0 <= y <= n elementwise")
        records = []
        for ia, a in enumerate(network.test_nodes):
            for ib, b in enumerate(network.supply_nodes):
                for k in range(n[ia, ib]):
                    records.append(
                        TestRecord(a, b, int(k < y[ia, ib]), sensitivity, specificity)
                    )
        return cls(tuple(records))


@dataclass(frozen=True)
class SourcingMatrix:
    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 2:
            raise ConfigurationError("sourcing matrix must be 2-D")
        if np.any(p < 0) or np.any(p > 1):
            raise ConfigurationError("sourcing probabilities must lie in [0, 1]")
        bad = np.flatnonzero(np.abs(p.sum(axis=1) - 1.0) > 1e-9)
        if bad.size:
            raise ConfigurationError(f"sourcing rows {bad.tolist()} do not sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape


@dataclass(frozen=True)
class RateVector:
    """SFP rates for test nodes (theta) and supply nodes (delta).

    Values are clamped into [1e-10, 1 - 1e-10]; anything outside [0, 1] is rejected.
    """

    theta: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        for name in ("theta", "delta"):
            arr = np.atleast_1d(np.array(getattr(self, name), dtype=float))
            if arr.ndim != 1:
                raise ValueError(f"{name} must be one-dimensional")
            if not np.all(np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
                raise ValueError(f"{name} rates must lie in [0, 1]")
            arr = np.clip(arr, RATE_EPS, 1.0 - RATE_EPS)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_vector(cls, values: np.ndarray, n_test: int) -> "RateVector":
        values = np.asarray(values, dtype=float)
        return cls(values[:n_test], values[n_test:])

    @classmethod
    def from_logits(cls, logits: np.ndarray, n_test: int) -> "RateVector":
        return cls.from_vector(expit(np.asarray(logits, dtype=float)), n_test)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.theta, self.delta])

    def logits(self) -> np.ndarray:
        return logit(self.as_vector())


@dataclass(frozen=True)
class CountMatrices:
    """Per-trace test counts for one (sensitivity, specificity) stratum."""

    n: np.ndarray
    y: np.ndarray
    sensitivity: float = 1.0
    specificity: float = 1.0

    def __post_init__(self):
        n = np.array(self.n, dtype=np.int64)
        y = np.array(self.y, dtype=np.int64)
        if n.shape != y.shape or n.ndim != 2:
            raise ValueError("n and y must be matrices of equal shape")
        if np.any(y < 0) or np.any(y > n):
            raise ValueError("need 0 <= y <= n elementwise")
        n.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "y", y)


def consolidated_sfp_rate(theta_a, delta_b):
    """Probability that a product on trace (a, b) is SFP from either node."""
    theta_a = np.asarray(theta_a, dtype=float)
    return theta_a + (1.0 - theta_a) * np.asarray(delta_b, dtype=float)


def detection_probability(theta_a, delta_b, s, r):
    z = consolidated_sfp_rate(theta_a, delta_b)
    return s * z + (1.0 - r) * (1.0 - z)


def log_detection_terms(theta, delta, s, r):
    """log z~ and log(1 - z~) without cancellation near z~ = 1.

    Uses 1 - z~ = (1 - s) z + r (1 - theta)(1 - delta), which stays positive
    for clamped rates.
    """
    theta = np.asarray(theta, dtype=float)
    delta = np.asarray(delta, dtype=float)
    z = theta + (1.0 - theta) * delta
    log_pos = np.log(s * z + (1.0 - r) * (1.0 - z))
    log_neg = np.log((1.0 - s) * z + r * (1.0 - theta) * (1.0 - delta))
    return log_pos, log_neg


def _resolve(record: TestRecord, network: Network, index: int) -> tuple[int, int]:
    try:
        ia = network.test_index(record.test_node)
    except ValueError:
        raise IngestionError(
            f"record {index}: unknown test node {record.test_node!r}"
        ) from None
    try:
        ib = network.supply_index(record.supply_node)
    except ValueError:
        raise IngestionError(
            f"record {index}: unknown supply node {record.supply_node!r}"
        ) from None
    return ia, ib


def aggregate_strata(dataset: Dataset, network: Network) -> list[CountMatrices]:
    """Count matrices, one per distinct (sensitivity, specificity) pair, in first-seen order."""
    shape = (network.n_test, network.n_supply)
    strata: dict[tuple[float, float], tuple[np.ndarray, np.ndarray]] = {}
    for i, rec in enumerate(dataset.records):
        ia, ib = _resolve(rec, network, i)
        key = (float(rec.sensitivity), float(rec.specificity))
        if key not in strata:
            strata[key] = (np.zeros(shape, np.int64), np.zeros(shape, np.int64))
        n, y = strata[key]
        n[ia, ib] += 1
        y[ia, ib] += rec.result
    return [CountMatrices(n, y, s, r) for (s, r), (n, y) in strata.items()]


def aggregate_traces(dataset: Dataset, network: Network) -> CountMatrices:
    """Pooled trace counts over all records.

    Diagnostic accuracy is taken from the records when homogeneous; a mixed
    dataset should go through ``aggregate_strata`` for likelihood work.
    """
    shape = (network.n_test, network.n_supply)
    strata = aggregate_strata(dataset, network)
    if not strata:
        return CountMatrices(np.zeros(shape, np.int64), np.zeros(shape, np.int64))
    n = sum(c.n for c in strata)
    y = sum(c.y for c in strata)
    if len(strata) == 1:
        return CountMatrices(n, y, strata[0].sensitivity, strata[0].specificity)
    return CountMatrices(n, y, float("nan"), float("nan"))


def trace_log_likelihood(
    theta: np.ndarray, delta: np.ndarray, counts: CountMatrices, s: float, r: float
) -> float:
    log_pos, log_neg = log_detection_terms(theta[:, None], delta[None, :], s, r)
    mask = counts.n > 0
    n = counts.n[mask]
    yhat = counts.y[mask] / n
    return float(np.sum(n * (log_pos[mask] * yhat + log_neg[mask] * (1.0 - yhat))))


def log_likelihood(
    rates: RateVector,
    counts: CountMatrices | Sequence[CountMatrices],
    s: float | None = None,
    r: float | None = None,
) -> float:
    """Binomial trace log-likelihood; traces with no tests contribute nothing.

    ``counts`` may be a single stratum or a list of strata, each carrying its
    own diagnostic accuracy. Explicit ``s``/``r`` override a single stratum's.
    """
    if isinstance(counts, CountMatrices):
        s = counts.sensitivity if s is None else s
        r = counts.specificity if r is None else r
        return trace_log_likelihood(rates.theta, rates.delta, counts, s, r)
    return float(
        sum(
            trace_log_likelihood(rates.theta, rates.delta, c, c.sensitivity, c.specificity)
            for c in counts
        )
    )


def dataset_fingerprint(dataset: Dataset) -> str:
    h = hashlib.sha256()
    for rec in dataset.records:
        h.update(
            f"{rec.test_node}|{rec.supply_node}|{rec.result}|{rec.sensitivity!r}|{rec.specificity!r};".encode()
        )
    return h.hexdigest()[:16]


def estimate_sourcing(dataset: Dataset, network: Network) -> SourcingMatrix:
    """Empirical supply-node frequencies per test node."""
    counts = aggregate_traces(dataset, network).n.astype(float)
    totals = counts.sum(axis=1)
    empty = [network.test_nodes[i] for i in np.flatnonzero(totals == 0)]
    if empty:
        raise IngestionError(
            f"test nodes {empty} have no records; use bootstrap_sourcing for them"
        )
    return SourcingMatrix(counts / totals[:, None])


def bootstrap_sourcing(
    dataset: Dataset,
    draws_per_node: int,
    untested_nodes: Iterable[str],
    rng_seed: int,
    network: Network,
) -> np.ndarray:
    """Sourcing rows for untested nodes, resampled from the pooled observed traces.

    Returns one row per entry of ``untested_nodes`` (in that order).
    """
    if len(dataset) == 0:
        raise IngestionError("cannot bootstrap sourcing from an empty dataset")
    if draws_per_node < 1:
        raise ConfigurationError("draws_per_node must be at least 1")
    pool = np.array(
        [_resolve(rec, network, i)[1] for i, rec in enumerate(dataset.records)]
    )
    untested = list(untested_nodes)
    rng = np.random.default_rng(rng_seed)
    rows = np.zeros((len(untested), network.n_supply))
    for k in range(len(untested)):
        picks = rng.choice(pool, size=draws_per_node, replace=True)
        rows[k] = np.bincount(picks, minlength=network.n_supply) / draws_per_node
    return rows


def build_sourcing(
    dataset: Dataset,
    network: Network,
    draws_per_node: int = 44,
    rng_seed: int = 0,
) -> SourcingMatrix:
    """Empirical rows for tested nodes, bootstrap rows for the rest."""
    counts = aggregate_traces(dataset, network).n.astype(float)
    totals = counts.sum(axis=1)
    probs = np.zeros_like(counts)
    tested = totals > 0
    probs[tested] = counts[tested] / totals[tested, None]
    untested = [network.test_nodes[i] for i in np.flatnonzero(~tested)]
    if untested:
        probs[~tested] = bootstrap_sourcing(dataset, draws_per_node, untested, rng_seed, network)
    return SourcingMatrix(probs)


__all__ = [
    "RATE_EPS",
    "IngestionError",
    "ConfigurationError",
    "Network",
    "TestRecord",
    "Dataset",
    "SourcingMatrix",
    "RateVector",
    "CountMatrices",
    "consolidated_sfp_rate",
    "detection_probability",
    "log_detection_terms",
    "aggregate_traces",
    "aggregate_strata",
    "log_likelihood",
    "trace_log_likelihood",
    "dataset_fingerprint",
    "estimate_sourcing",
    "bootstrap_sourcing",
    "build_sourcing",
]
