"""Utility of post-market-surveillance sampling plans over two-echelon supply chains."""

from .estimators import (
    bayes_estimate_assessment,
    bayes_estimate_classification,
    bayes_estimate_numeric,
    weighted_quantile,
)
from .inference import DrawSet, quadrature_posterior_moments, sample_posterior
from .loss import LossSpec, node_prioritization, total_loss
from .planner import (
    budget_savings,
    exhaustive_best,
    fixed_plan,
    greedy_allocations,
    plan_count,
    uniform_plan,
)
from .priors import PriorSpec, RiskCategory, prior_from_risk, risk_to_median
from .supply_model import (
    CountMatrices,
    Dataset,
    Network,
    RateVector,
    SourcingMatrix,
    TestRecord,
    aggregate_traces,
    bootstrap_sourcing,
    build_sourcing,
    estimate_sourcing,
    log_likelihood,
)
from .utility import (
    FastUtility,
    SamplingPlan,
    UtilityEstimate,
    build_data_matrix,
    expected_loss_fast,
    expected_loss_mcmc,
    plan_utility,
    simulate_dataset,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
