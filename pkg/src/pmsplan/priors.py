"""Logit-normal priors built from seven-level risk assessments."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.special import logit

from .supply_model import ConfigurationError, Network, RateVector

# Prior median SFP rate for risk levels 1 (very low) .. 7 (very high).
RISK_MEDIANS = (0.01, 0.02, 0.05, 0.10, 0.15, 0.20, 0.25)
DEFAULT_NU = 2.0


@dataclass(frozen=True)
class RiskCategory:
    level: int

    def __post_init__(self):
        if not isinstance(self.level, (int, np.integer)) or not 1 <= self.level <= 7:
            raise ConfigurationError(f"risk level must be an integer in 1..7, got {self.level!r}")


@dataclass(frozen=True)
class PriorSpec:
    """Independent normal priors on logit rates.

    ``medians`` holds one rate per node (test nodes first); ``variance_param``
    is the logit-space standard deviation.
    """

    medians: np.ndarray
    variance_param: float = DEFAULT_NU

    def __post_init__(self):
        med = np.atleast_1d(np.array(self.medians, dtype=float))
        if np.any(med <= 0) or np.any(med >= 1):
            raise ConfigurationError("prior medians must lie strictly inside (0, 1)")
        if not self.variance_param > 0:
            raise ConfigurationError("prior variance parameter must be positive")
        med.setflags(write=False)
        object.__setattr__(self, "medians", med)

    @property
    def logit_medians(self) -> np.ndarray:
        return logit(self.medians)

    def sample_logits(self, size: int, rng: np.random.Generator) -> np.ndarray:
        return self.logit_medians + self.variance_param * rng.standard_normal(
            (size, self.medians.size)
        )


def risk_to_median(category: RiskCategory | int) -> float:
    if not isinstance(category, RiskCategory):
        category = RiskCategory(category)
    return RISK_MEDIANS[category.level - 1]


def prior_from_risk(
    network: Network,
    risk: Mapping[str, int] | None = None,
    default_level: int = 4,
    nu: float = DEFAULT_NU,
) -> PriorSpec:
    """Prior medians from per-node risk levels; unassessed nodes get ``default_level``."""
    risk = dict(network.risk or {}) if risk is None else dict(risk)
    unknown = set(risk) - set(network.node_ids)
    if unknown:
        raise ConfigurationError(f"risk given for unknown nodes {sorted(unknown)}")
    medians = [risk_to_median(risk.get(g, default_level)) for g in network.node_ids]
    return PriorSpec(np.array(medians), nu)


def log_prior_density(rates: RateVector | np.ndarray, spec: PriorSpec) -> float:
    """Unnormalized log density, evaluated in logit space."""
    h = rates.logits() if isinstance(rates, RateVector) else logit(np.asarray(rates, float))
    z = (h - spec.logit_medians) / spec.variance_param
    return float(-0.5 * np.sum(z * z))
