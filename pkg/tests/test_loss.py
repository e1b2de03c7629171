import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pmsplan.loss import (
    LossSpec,
    assessment_score,
    assessment_weight,
    classification_score,
    classify,
    node_prioritization,
    total_loss,
)
from pmsplan.supply_model import ConfigurationError, Network, RateVector, SourcingMatrix

rate = st.floats(0.001, 0.999)


def test_classify_inclusive_threshold():
    assert classify(0.3, 0.2) == 1
    assert classify(0.1, 0.2) == 0
    assert classify(0.2, 0.2) == 1


def test_classification_score_examples():
    spec = LossSpec("classification", 0.2, 5.0)
    assert classification_score(0.3, 0.1, spec) == 1
    assert classification_score(0.1, 0.3, spec) == 5
    assert classification_score(0.25, 0.30, spec) == 0


def test_assessment_score_examples():
    spec = LossSpec("assessment", 0.2, 5.0)
    assert assessment_score(0.3, 0.1, spec) == pytest.approx(0.2, abs=1e-12)
    assert assessment_score(0.1, 0.3, spec) == pytest.approx(1.0, abs=1e-12)
    assert assessment_score(0.4, 0.4, spec) == 0


@pytest.mark.parametrize("truth,expected", [(0.3, 0.82), (0.1, 0.74), (0.5, 0.70)])
def test_assessment_weight_examples(truth, expected):
    assert assessment_weight(truth, 0.3, 0.6) == pytest.approx(expected, abs=1e-12)


@given(st.floats(0.01, 0.99), st.floats(0, 1))
def test_weight_peak_and_continuity(l, m):
    eps = 1e-9
    at = assessment_weight(l, l, m)
    assert abs(assessment_weight(l - eps, l, m) - at) < 1e-6
    grid = np.linspace(0.001, 0.999, 301)
    assert np.all(assessment_weight(grid, l, m) <= at + 1e-12)


@given(rate, rate, st.floats(1, 20), st.floats(1, 3))
def test_underestimation_branch_linear_in_v(est, truth, v, k):
    a = assessment_score(est, truth, LossSpec("assessment", 0.2, v))
    b = assessment_score(est, truth, LossSpec("assessment", 0.2, k * v))
    if est < truth:
        assert b == pytest.approx(k * a, rel=1e-9)
    else:
        assert b == pytest.approx(a, rel=1e-12)
    assert a >= 0 and (a == 0) == (est == truth)


def test_prioritization_examples():
    net = Network(("A", "B"), ("S", "T"), catchments={"A": 3, "B": 1})
    r_a, r_b = node_prioritization(net, SourcingMatrix([[0.5, 0.5], [0.5, 0.5]]))
    np.testing.assert_allclose(r_a, [0.75, 0.25], atol=1e-12)
    np.testing.assert_allclose(r_b, [0.5, 0.5], atol=1e-12)
    eq = Network(("A", "B"), ("S", "T"), catchments={"A": 2, "B": 2})
    r_a, r_b = node_prioritization(eq, SourcingMatrix(np.eye(2)))
    np.testing.assert_allclose(r_a, [0.5, 0.5])
    np.testing.assert_allclose(r_b, r_a)
    with pytest.raises(ConfigurationError):
        node_prioritization(Network(("A",), ("S",)), SourcingMatrix([[1.0]]))


@given(st.lists(st.floats(0, 1000), min_size=2, max_size=6).filter(lambda p: sum(p) > 0))
def test_supply_prioritization_sums_to_one(pops):
    n = len(pops)
    net = Network(tuple(f"A{i}" for i in range(n)), ("S", "T", "U"),
                  catchments={f"A{i}": p for i, p in enumerate(pops)})
    q = np.random.default_rng(n).dirichlet(np.ones(3), size=n)
    r_a, r_b = node_prioritization(net, SourcingMatrix(q))
    assert r_a.sum() == pytest.approx(1.0) and r_b.sum() == pytest.approx(1.0)


def test_total_loss_examples():
    spec = LossSpec("assessment", 0.3, 1.0, 0.0)
    truth = RateVector([0.1], [0.5])
    est = RateVector([0.2], [0.4])
    assert total_loss(est, truth, spec) == pytest.approx(0.18, abs=1e-12)
    assert total_loss(truth, truth, spec) == 0.0
    # All test-node weight on the first node; the supply node is estimated exactly.
    focused = LossSpec("assessment", 0.3, 1.0, 0.0, prioritization=([1.0, 0.0], [1.0]))
    truth3 = RateVector([0.1, 0.5], [0.2])
    est3 = RateVector([0.2, 0.9], [0.2])
    assert total_loss(est3, truth3, focused) == pytest.approx(0.1 * 0.8, abs=1e-12)


@given(st.lists(st.tuples(rate, rate), min_size=2, max_size=8), st.randoms(use_true_random=False))
def test_total_loss_permutation_invariant(pairs, rnd):
    spec = LossSpec("assessment", 0.2, 3.0, 0.6)
    est = np.array([p[0] for p in pairs])
    truth = np.array([p[1] for p in pairs])
    perm = list(range(len(pairs)))
    rnd.shuffle(perm)
    assert total_loss(est, truth, spec) == pytest.approx(total_loss(est[perm], truth[perm], spec), rel=1e-12)


def test_spec_validation():
    for bad in (dict(score_kind="x"), dict(threshold_l=1.0), dict(weight_slope_m=1.5),
                dict(underestimation_v=0), dict(prioritization=([0.5, 0.4], [1.0]))):
        with pytest.raises(ConfigurationError):
            LossSpec(**bad)


def test_weight_modes():
    x = np.array([0.1, 0.5])
    assert np.all(LossSpec("classification").node_weights(x) == 1)
    assert np.all(LossSpec("assessment", weight="neutral").node_weights(x) == 1)
    np.testing.assert_allclose(LossSpec("classification", weight="check").node_weights(x),
                               assessment_weight(x, 0.2, 0.6))
