"""Bayes estimates over weighted draw sets.

Under the separable loss the Bayes estimate is a per-node posterior quantile
(assessment) or a thresholded posterior probability (classification). A
brute-force minimizer over each node's draw values serves as an oracle.
"""

from __future__ import annotations

import numpy as np

from .inference import DrawSet
from .loss import LossSpec, score
from .supply_model import RateVector


class DegenerateWeightsError(ValueError):
    """Weights are all zero (or contain negatives / non-finite values)."""


def _check_weights(weights: np.ndarray, n: int) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise ValueError(f"expected {n} weights, got shape {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w < 0) or not np.any(w > 0):
        raise DegenerateWeightsError("weights must be finite, nonnegative and not all zero")
    return w


def weighted_quantile(values, weights, q: float) -> float:
    """Smallest value whose cumulative normalized weight reaches q."""
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("values must be a nonempty 1-D array")
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    w = _check_weights(weights, x.size)
    order = np.argsort(x, kind="stable")
    cw = np.cumsum(w[order])
    k = int(np.argmax(cw >= q * cw[-1]))
    return float(x[order[k]])


def _effective_weights(draws: DrawSet, column_weights, spec: LossSpec) -> np.ndarray:
    """(count, nodes) weights: column weight times the importance weight W(gamma)."""
    cw = _check_weights(column_weights, len(draws))
    return cw[:, None] * spec.node_weights(draws.values)


def bayes_estimate_assessment(draws: DrawSet, column_weights, spec: LossSpec) -> RateVector:
    if spec.score_kind != "assessment":
        raise ValueError("bayes_estimate_assessment needs an assessment loss")
    w = _effective_weights(draws, column_weights, spec)
    est = [
        weighted_quantile(draws.values[:, g], w[:, g], spec.quantile)
        for g in range(draws.n_nodes)
    ]
    return RateVector.from_vector(np.array(est), draws.n_test)


def bayes_estimate_classification(draws: DrawSet, column_weights, spec: LossSpec) -> np.ndarray:
    """Class 1 at node g iff the weighted P(gamma_g <= l) is at most v/(1+v)."""
    if spec.score_kind != "classification":
        raise ValueError("bayes_estimate_classification needs a classification loss")
    w = _effective_weights(draws, column_weights, spec)
    p_le = np.sum(w * (draws.values <= spec.threshold_l), axis=0) / w.sum(axis=0)
    return (p_le <= spec.quantile).astype(int)


def _brute_force_losses(cands, x, w, spec: LossSpec, chunk: int = 512) -> np.ndarray:
    out = np.empty(len(cands))
    for c0 in range(0, len(cands), chunk):
        c = cands[c0 : c0 + chunk]
        out[c0 : c0 + chunk] = score(c[:, None], x[None, :], spec) @ w
    return out


def bayes_estimate_numeric(draws: DrawSet, column_weights, spec: LossSpec) -> RateVector:
    """Per-node minimizer of the weighted expected loss by exhaustive search.

    Candidates are the node's draw values (assessment) or one representative
    rate per class (classification: l itself and the largest float below l).
    Ties go to the smallest candidate for assessment and to class 1 for
    classification.
    """
    w = _effective_weights(draws, column_weights, spec)
    est = np.empty(draws.n_nodes)
    for g in range(draws.n_nodes):
        x = draws.values[:, g]
        if spec.score_kind == "assessment":
            cands = np.unique(x)
        else:
            cands = np.array([spec.threshold_l, np.nextafter(spec.threshold_l, 0.0)])
        losses = _brute_force_losses(cands, x, w[:, g], spec)
        est[g] = cands[int(np.argmin(losses))]
    return RateVector.from_vector(est, draws.n_test)


def member_losses(values: np.ndarray, weights, spec: LossSpec) -> np.ndarray:
    """Weighted mean loss of using each row of ``values`` as the estimate.

    values is (count, nodes); the loss of candidate row k is
    sum_g r_g sum_i w_i S(values[k, g], values[i, g]) W(values[i, g]) / sum_i w_i.
    Computed with sorted prefix sums, O(count log count) per node.
    """
    values = np.asarray(values, dtype=float)
    h, n_node = values.shape
    cw = _check_weights(weights, h)
    W = cw[:, None] * spec.node_weights(values)
    factor = np.ones(n_node) if spec.prioritization is None else np.concatenate(spec.prioritization)
    if factor.size != n_node:
        raise ValueError("prioritization does not match the number of nodes")
    v = spec.underestimation_v
    l = spec.threshold_l
    total = np.zeros(h)
    for g in range(n_node):
        x = values[:, g]
        wg = W[:, g]
        if spec.score_kind == "assessment":
            order = np.argsort(x, kind="stable")
            xs = x[order]
            ws = wg[order]
            C = np.cumsum(ws)
            Cx = np.cumsum(ws * xs)
            T, Tx = C[-1], Cx[-1]
            loss_sorted = xs * C - Cx + v * ((Tx - Cx) - xs * (T - C))
            loss = np.empty(h)
            loss[order] = loss_sorted
        else:
            below = wg[x < l].sum()
            above = wg[x >= l].sum()
            loss = np.where(x >= l, below, v * above)
        total += factor[g] * loss
    return total / cw.sum()


__all__ = [
    "DegenerateWeightsError",
    "weighted_quantile",
    "bayes_estimate_assessment",
    "bayes_estimate_classification",
    "bayes_estimate_numeric",
    "member_losses",
]
