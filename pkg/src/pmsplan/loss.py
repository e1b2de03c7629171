"""Scores, weights, prioritization and the separable plan loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .supply_model import ConfigurationError, Network, RateVector, SourcingMatrix

SCORE_KINDS = ("classification", "assessment")
WEIGHT_MODES = ("auto", "check", "neutral")


@dataclass(frozen=True)
class LossSpec:
    """Regulator loss parameters.

    ``weight`` selects the per-node importance weight: "check" is the
    threshold-peaked assessment weight, "neutral" is W = 1, and "auto" pairs
    assessment scores with the check weight and classification scores with
    the neutral weight. ``prioritization`` is an optional (r_A, r_B) pair.
    """

    score_kind: str = "assessment"
    threshold_l: float = 0.2
    underestimation_v: float = 1.0
    weight_slope_m: float = 0.6
    prioritization: tuple[np.ndarray, np.ndarray] | None = None
    weight: str = "auto"

    def __post_init__(self):
        if self.score_kind not in SCORE_KINDS:
            raise ConfigurationError(f"score must be one of {SCORE_KINDS}, got {self.score_kind!r}")
        if self.weight not in WEIGHT_MODES:
            raise ConfigurationError(f"weight must be one of {WEIGHT_MODES}, got {self.weight!r}")
        if not 0 < self.threshold_l < 1:
            raise ConfigurationError("threshold_l must lie strictly inside (0, 1)")
        if not self.underestimation_v > 0:
            raise ConfigurationError("underestimation_v must be positive")
        if not 0 <= self.weight_slope_m <= 1:
            raise ConfigurationError("weight_slope_m must lie in [0, 1]")
        if self.prioritization is not None:
            r_a, r_b = (np.array(r, dtype=float) for r in self.prioritization)
            for name, r in (("test", r_a), ("supply", r_b)):
                if r.ndim != 1 or np.any(r < 0) or abs(r.sum() - 1.0) > 1e-9:
                    raise ConfigurationError(
                        f"{name}-node prioritization must be nonnegative and sum to 1"
                    )
                r.setflags(write=False)
            object.__setattr__(self, "prioritization", (r_a, r_b))

    @property
    def quantile(self) -> float:
        """Posterior quantile v/(1+v) that the Bayes estimate targets."""
        return self.underestimation_v / (1.0 + self.underestimation_v)

    @property
    def uses_check_weight(self) -> bool:
        if self.weight == "auto":
            return self.score_kind == "assessment"
        return self.weight == "check"

    def node_weights(self, truth: np.ndarray) -> np.ndarray:
        """W(truth) elementwise under this spec's weight mode."""
        truth = np.asarray(truth, dtype=float)
        if not self.uses_check_weight:
            return np.ones_like(truth)
        return assessment_weight(truth, self.threshold_l, self.weight_slope_m)

    def node_factors(self, n_test: int, n_supply: int) -> np.ndarray:
        """Prioritization factor per node (test nodes first); ones when absent."""
        if self.prioritization is None:
            return np.ones(n_test + n_supply)
        r_a, r_b = self.prioritization
        if r_a.size != n_test or r_b.size != n_supply:
            raise ConfigurationError("prioritization does not match the network size")
        return np.concatenate([r_a, r_b])


def classify(rate, l):
    """1 where rate >= l (the threshold itself counts as class 1)."""
    return (np.asarray(rate) >= l).astype(int)


def classification_score(est, truth, spec: LossSpec):
    ce = classify(est, spec.threshold_l)
    ct = classify(truth, spec.threshold_l)
    return np.maximum(ce - ct, 0) + spec.underestimation_v * np.maximum(ct - ce, 0)


def assessment_score(est, truth, spec: LossSpec):
    diff = np.asarray(est, dtype=float) - np.asarray(truth, dtype=float)
    return np.maximum(diff, 0.0) + spec.underestimation_v * np.maximum(-diff, 0.0)


def assessment_weight(truth, l, m):
    """Weight peaked at the threshold: 1 - truth*(m - 1{truth<l}(1 - l/truth))."""
    truth = np.asarray(truth, dtype=float)
    below = truth < l
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = np.where(below, 1.0 - l / truth, 0.0)
    return 1.0 - truth * (m - corr)


def score(est, truth, spec: LossSpec):
    if spec.score_kind == "assessment":
        return assessment_score(est, truth, spec)
    return classification_score(est, truth, spec)


def node_prioritization(network: Network, sourcing: SourcingMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Population share per test node and sourcing-weighted share per supply node."""
    if network.catchments is None:
        raise ConfigurationError("prioritization needs catchment populations for every test node")
    pops = np.array([network.catchments[a] for a in network.test_nodes], dtype=float)
    if sourcing.shape != (network.n_test, network.n_supply):
        raise ConfigurationError("sourcing matrix does not match the network")
    r_a = pops / pops.sum()
    r_b = r_a @ sourcing.probs
    return r_a, r_b


def node_losses(est: np.ndarray, truth: np.ndarray, spec: LossSpec) -> np.ndarray:
    """Per-node S * W * r for rate arrays (nodes on the last axis)."""
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    n = truth.shape[-1]
    if spec.prioritization is None:
        factor = np.ones(n)
    else:
        factor = np.concatenate(spec.prioritization)
        if factor.size != n:
            raise ConfigurationError("prioritization does not match the number of nodes")
    return score(est, truth, spec) * spec.node_weights(truth) * factor


def total_loss(est: RateVector | np.ndarray, truth: RateVector | np.ndarray, spec: LossSpec) -> float:
    e = est.as_vector() if isinstance(est, RateVector) else est
    t = truth.as_vector() if isinstance(truth, RateVector) else truth
    return float(np.sum(node_losses(e, t, spec)))


__all__ = [
    "LossSpec",
    "classify",
    "classification_score",
    "assessment_score",
    "assessment_weight",
    "score",
    "node_prioritization",
    "node_losses",
    "total_loss",
]
