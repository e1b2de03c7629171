import warnings

import numpy as np
import pytest

from pmsplan import worked_example as we
from pmsplan.inference import (
    ConvergenceWarning,
    DrawSet,
    mc_standard_error,
    quadrature_posterior_moments,
    sample_posterior,
    split_rhat,
)
from pmsplan.priors import PriorSpec
from pmsplan.supply_model import ConfigurationError, Dataset, Network

ONE = Network(("A",), ("B",))
HALF = Dataset.from_counts(ONE, [[50]], [[25]])
DIFFUSE = PriorSpec([0.5, 0.5], 3.0)


def test_empty_data_recovers_prior_median():
    net = Network(("A",), ("B",))
    d = sample_posterior(Dataset(), net, PriorSpec([0.1, 0.1], 2.0), 20000, 4)
    assert abs(np.median(d.values[:, 0]) - 0.1) <= 0.02


def test_deterministic_given_seed():
    a = sample_posterior(we.dataset(), we.network(), PriorSpec(np.full(6, 0.1)), 400, 9)
    b = sample_posterior(we.dataset(), we.network(), PriorSpec(np.full(6, 0.1)), 400, 9)
    np.testing.assert_array_equal(a.values, b.values)
    c = sample_posterior(we.dataset(), we.network(), PriorSpec(np.full(6, 0.1)), 400, 10)
    assert not np.array_equal(a.values, c.values)


def test_backends_agree():
    kw = dict(dataset=we.dataset(), network=we.network(), prior=PriorSpec(np.full(6, 0.1)), count=200, rng_seed=3)
    a = sample_posterior(**kw, backend="numba")
    b = sample_posterior(**kw, backend="numpy")
    np.testing.assert_allclose(a.values, b.values, rtol=1e-9, atol=1e-12)


def test_provenance_and_shape():
    d = sample_posterior(we.dataset(), we.network(), PriorSpec(np.full(6, 0.1)), 250, 1)
    assert len(d) == 250 and d.n_nodes == 6
    assert d.provenance["chains"] == 4 and d.provenance["seed"] == 1
    assert len(d.provenance["dataset"]) == 16
    assert all(0.1 < a < 0.6 for a in d.provenance["acceptance"])


def test_input_validation():
    with pytest.raises(ConfigurationError):
        sample_posterior(Dataset(), ONE, DIFFUSE, 50, 0)
    with pytest.raises(ConfigurationError):
        sample_posterior(Dataset(), ONE, PriorSpec([0.1], 2.0), 200, 0)


def test_quadrature_prior_moments_and_convergence():
    q = quadrature_posterior_moments(Dataset(), ONE, PriorSpec([0.1, 0.2], 1.0), 400)
    rng = np.random.default_rng(0)
    x = 1 / (1 + np.exp(-(np.log(0.1 / 0.9) + rng.standard_normal(400_000))))
    assert q.mean[0] == pytest.approx(x.mean(), abs=2e-3)
    q2 = quadrature_posterior_moments(HALF, ONE, DIFFUSE, 400)
    q4 = quadrature_posterior_moments(HALF, ONE, DIFFUSE, 800)
    assert abs(q2.consolidated_mean - 0.5) < 0.01
    assert np.all(np.abs(q2.mean - q4.mean) < 1e-4)


def test_quadrature_rejects_larger_networks():
    with pytest.raises(ConfigurationError):
        quadrature_posterior_moments(Dataset(), we.network(), PriorSpec(np.full(6, 0.1)), 400)
    with pytest.raises(ConfigurationError):
        quadrature_posterior_moments(Dataset(), ONE, DIFFUSE, 100)


def test_frozen_quadrature_values():
    q = quadrature_posterior_moments(HALF, ONE, DIFFUSE, 400)
    np.testing.assert_allclose(q.mean, [0.27434761, 0.27434761], atol=1e-7)
    assert q.consolidated_mean == pytest.approx(0.50527894, abs=1e-7)


def test_more_data_tightens_posterior():
    prior = PriorSpec([0.2, 0.05], 2.0)
    few = sample_posterior(Dataset.from_counts(ONE, [[10]], [[2]]), ONE, prior, 8000, 2)
    many = sample_posterior(Dataset.from_counts(ONE, [[100]], [[20]]), ONE, prior, 8000, 2)
    z = lambda d: d.values[:, 0] + (1 - d.values[:, 0]) * d.values[:, 1]
    iqr = lambda x: np.subtract(*np.quantile(x, [0.75, 0.25]))
    assert iqr(z(many)) < iqr(z(few))


def test_rhat_and_mcse():
    rng = np.random.default_rng(0)
    good = rng.standard_normal((4, 500, 2))
    assert np.all(split_rhat(good) < 1.05)
    bad = good + np.arange(4)[:, None, None] * 3
    assert np.all(split_rhat(bad) > 1.1)
    ds = DrawSet(1 / (1 + np.exp(-good.reshape(-1, 2))), 1, np.repeat(np.arange(4), 500))
    se = mc_standard_error(ds)
    assert np.all((se > 0) & (se < 0.02))


def test_convergence_warning_is_not_an_error(monkeypatch):
    import pmsplan.inference as inf

    monkeypatch.setattr(inf, "split_rhat", lambda c: np.full(c.shape[2], 2.0))
    with pytest.warns(ConvergenceWarning):
        d = inf.sample_posterior(Dataset(), ONE, DIFFUSE, 100, 0)
    assert len(d) == 100


def test_drawset_validation():
    with pytest.raises(ValueError):
        DrawSet(np.empty((0, 2)), 1)
    with pytest.raises(ValueError):
        DrawSet(np.array([[0.0, 0.5]]), 1)
