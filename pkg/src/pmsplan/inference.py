"""Posterior sampling over SFP rates and a quadrature oracle for tiny networks."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import expit

from . import kernels
from .priors import PriorSpec
from .supply_model import (
    RATE_EPS,
    ConfigurationError,
    Dataset,
    Network,
    RateVector,
    aggregate_strata,
    dataset_fingerprint,
    log_detection_terms,
)

DEFAULT_CHAINS = 4
DEFAULT_THIN = 5
MIN_BURN_IN = 250
SEGMENT = 1000  # sweeps per pre-generated random block; a multiple of the adaptation batch
RHAT_WARN = 1.1


class ConvergenceWarning(RuntimeWarning):
    """Split-chain R-hat above the warning level for at least one node."""


class SamplingError(RuntimeError):
    """The sampler could not start (non-finite log target)."""


@dataclass(frozen=True)
class DrawSet:
    """Posterior (or prior) draws stored as a (count, nodes) array of rates.

    Test-node rates come first. ``chain`` records which chain produced each draw
    (chain-major order) and ``provenance`` how the set was produced.
    """

    values: np.ndarray
    n_test: int
    chain: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[0] == 0:
            raise ValueError("a DrawSet needs a nonempty (count, nodes) array")
        if not 0 < self.n_test <= vals.shape[1]:
            raise ValueError("n_test inconsistent with draw width")
        if np.any(vals <= 0) or np.any(vals >= 1):
            raise ValueError("draws must lie strictly inside (0, 1)")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        chain = np.zeros(len(vals), np.int64) if self.chain is None else np.asarray(self.chain)
        if chain.shape != (len(vals),):
            raise ValueError("chain labels must match the draw count")
        object.__setattr__(self, "chain", chain)

    def __len__(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, i: int) -> RateVector:
        return RateVector.from_vector(self.values[i], self.n_test)

    @property
    def n_nodes(self) -> int:
        return self.values.shape[1]

    @property
    def theta(self) -> np.ndarray:
        return self.values[:, : self.n_test]

    @property
    def delta(self) -> np.ndarray:
        return self.values[:, self.n_test :]

    def subset(self, index: np.ndarray) -> "DrawSet":
        return DrawSet(self.values[index], self.n_test, self.chain[index], dict(self.provenance))

    def by_chain(self) -> list[np.ndarray]:
        return [self.values[self.chain == c] for c in np.unique(self.chain)]


def _strata_arrays(dataset: Dataset, network: Network):
    strata = aggregate_strata(dataset, network)
    shape = (network.n_test, network.n_supply)
    if not strata:
        zeros = np.zeros((1,) + shape)
        return zeros, zeros.copy(), np.ones(1), np.ones(1)
    N = np.stack([c.n for c in strata]).astype(float)
    Y = np.stack([c.y for c in strata]).astype(float)
    svec = np.array([c.sensitivity for c in strata])
    rvec = np.array([c.specificity for c in strata])
    return N, Y, svec, rvec


def _check_prior(prior: PriorSpec, network: Network) -> None:
    if prior.medians.size != network.n_nodes:
        raise ConfigurationError(
            f"prior has {prior.medians.size} medians for {network.n_nodes} nodes"
        )


def split_rhat(chains: np.ndarray) -> np.ndarray:
    """Split-chain potential scale reduction per node; ``chains`` is (C, K, nodes)."""
    c, k, g = chains.shape
    half = k // 2
    if half < 2:
        return np.full(g, np.nan)
    parts = np.concatenate([chains[:, :half], chains[:, half : 2 * half]], axis=0)
    m = parts.shape[0]
    means = parts.mean(axis=1)
    within = parts.var(axis=1, ddof=1).mean(axis=0)
    between = half * means.var(axis=0, ddof=1)
    var_plus = (half - 1) / half * within + between / half
    with np.errstate(divide="ignore", invalid="ignore"):
        rhat = np.sqrt(var_plus / within)
    return np.where(within > 0, rhat, 1.0) if m > 1 else np.full(g, np.nan)


def mc_standard_error(draws: DrawSet, values: np.ndarray | None = None) -> np.ndarray:
    """Batch-means Monte Carlo standard error of the per-node mean.

    Batches are formed within chains (batch size ~ sqrt of the chain length),
    so autocorrelation inside a chain inflates the error as it should.
    """
    vals = draws.values if values is None else np.asarray(values, float)
    if vals.ndim == 1:
        vals = vals[:, None]
    per_chain = [vals[draws.chain == c] for c in np.unique(draws.chain)]
    k = min(len(p) for p in per_chain)
    size = max(1, int(math.isqrt(k)))
    batch_means = []
    for p in per_chain:
        nb = len(p) // size
        batch_means.append(p[: nb * size].reshape(nb, size, -1).mean(axis=1))
    bm = np.concatenate(batch_means)
    if len(bm) < 2:
        return np.full(vals.shape[1], np.nan)
    return bm.std(axis=0, ddof=1) / math.sqrt(len(bm))


def sample_posterior(
    dataset: Dataset,
    network: Network,
    prior: PriorSpec,
    count: int,
    rng_seed: int,
    chains: int = DEFAULT_CHAINS,
    thin: int = DEFAULT_THIN,
    backend: str | None = None,
) -> DrawSet:
    """Adaptive component-wise random-walk Metropolis in logit space.

    Each chain runs a burn-in of the same length as its kept section (at least
    ``MIN_BURN_IN`` sweeps) during which proposal scales adapt every 50 sweeps;
    scales are then frozen. All randomness for chain c comes from
    ``SeedSequence(rng_seed).spawn(chains)[c]`` so the result depends only on
    (seed, chains, thin, count), not on the kernel backend.
    """
    if count < 100:
        raise ConfigurationError("sample_posterior needs count >= 100")
    if chains < 1 or thin < 1:
        raise ConfigurationError("chains and thin must be positive")
    _check_prior(prior, network)
    kern = kernels.get_backend(backend)
    N, Y, svec, rvec = _strata_arrays(dataset, network)
    mu = np.asarray(prior.logit_medians, float)
    nu = float(prior.variance_param)
    n_node = network.n_nodes
    n_test = network.n_test

    keep = -(-count // chains)
    post = keep * thin
    burn = max(post, MIN_BURN_IN)
    burn = -(-burn // kernels.ADAPT_BATCH) * kernels.ADAPT_BATCH

    gens = [np.random.default_rng(s) for s in np.random.SeedSequence(rng_seed).spawn(chains)]
    h = np.stack([mu + 0.5 * g.standard_normal(n_node) for g in gens])
    lt = kern.log_target(h, N, Y, svec, rvec, mu, nu, n_test)
    if not np.all(np.isfinite(lt)):
        bad = [network.node_ids[g] for g in range(n_node) if not np.all(np.isfinite(h[:, g]))]
        raise SamplingError(f"non-finite log target at initialization (nodes {bad or 'unknown'})")
    scales = np.full((chains, n_node), 0.5 * nu)
    acc = np.zeros((chains, n_node), np.int64)
    acc_total = np.zeros((chains, n_node), np.int64)
    kept = np.empty((chains, keep, n_node))

    sweep = 0
    n_kept = 0
    for phase_len, adapt in ((burn, True), (post, False)):
        if not adapt:
            acc_total[:] = 0
        done = 0
        while done < phase_len:
            seg = min(SEGMENT, phase_len - done)
            normals = np.stack([g.standard_normal((seg, n_node)) for g in gens])
            uniforms = np.stack([g.random((seg, n_node)) for g in gens])
            out = np.empty((chains, seg, n_node))
            kern.mh_segment(h, lt, scales, acc, acc_total, normals, uniforms, N, Y, svec,
                            rvec, mu, nu, n_test, sweep, adapt, out)
            if not adapt:
                idx = np.arange(done, done + seg)
                take = idx[(idx + 1) % thin == 0] - done
                kept[:, n_kept : n_kept + take.size] = out[:, take]
                n_kept += take.size
            sweep += seg
            done += seg

    rates = np.clip(expit(kept), RATE_EPS, 1.0 - RATE_EPS)
    rhat = split_rhat(rates)
    if np.any(rhat > RHAT_WARN):
        worst = [network.node_ids[g] for g in np.flatnonzero(rhat > RHAT_WARN)]
        warnings.warn(
            f"split R-hat above {RHAT_WARN} for nodes {worst}; consider more draws",
            ConvergenceWarning,
            stacklevel=2,
        )
    values = rates.reshape(chains * keep, n_node)[:count]
    chain = np.repeat(np.arange(chains), keep)[:count]
    provenance = {
        "dataset": dataset_fingerprint(dataset),
        "chains": chains,
        "burn_in": burn,
        "thin": thin,
        "seed": rng_seed,
        "acceptance": (acc_total / post).mean(axis=0).tolist(),
        "rhat": rhat.tolist(),
    }
    return DrawSet(values, n_test, chain, provenance)


def sample_prior(prior: PriorSpec, n_test: int, count: int, rng_seed: int) -> DrawSet:
    """Independent draws from the logit-normal prior."""
    rng = np.random.default_rng(rng_seed)
    rates = np.clip(expit(prior.sample_logits(count, rng)), RATE_EPS, 1.0 - RATE_EPS)
    return DrawSet(rates, n_test, provenance={"seed": rng_seed, "prior": True})


@dataclass(frozen=True)
class QuadratureMoments:
    mean: np.ndarray  # (theta, delta)
    var: np.ndarray
    consolidated_mean: float
    consolidated_var: float
    grid_points: int


def quadrature_posterior_moments(
    dataset: Dataset,
    network: Network,
    prior: PriorSpec,
    grid_points: int = 400,
    width: float = 8.0,
) -> QuadratureMoments:
    """Trapezoid-rule posterior moments on a logit grid (1 x 1 networks only).

    The grid spans ``width`` prior standard deviations either side of each
    prior median.
    """
    if network.n_test != 1 or network.n_supply != 1:
        raise ConfigurationError("quadrature oracle supports only 1 x 1 networks")
    if grid_points < 200:
        raise ConfigurationError("quadrature oracle needs grid_points >= 200")
    _check_prior(prior, network)
    N, Y, svec, rvec = _strata_arrays(dataset, network)
    mu = prior.logit_medians
    nu = prior.variance_param
    ha = np.linspace(mu[0] - width * nu, mu[0] + width * nu, grid_points)
    hb = np.linspace(mu[1] - width * nu, mu[1] + width * nu, grid_points)
    HA, HB = np.meshgrid(ha, hb, indexing="ij")
    theta = np.clip(expit(HA), RATE_EPS, 1 - RATE_EPS)
    delta = np.clip(expit(HB), RATE_EPS, 1 - RATE_EPS)
    z = theta + (1 - theta) * delta
    logp = -0.5 * (((HA - mu[0]) / nu) ** 2 + ((HB - mu[1]) / nu) ** 2)
    for k in range(N.shape[0]):
        n, y = N[k, 0, 0], Y[k, 0, 0]
        log_pos, log_neg = log_detection_terms(theta, delta, svec[k], rvec[k])
        if y > 0:
            logp = logp + y * log_pos
        if n - y > 0:
            logp = logp + (n - y) * log_neg
    dens = np.exp(logp - logp.max())

    def integrate(f):
        return trapezoid(trapezoid(f * dens, hb, axis=1), ha)

    mass = integrate(1.0)
    m = np.array([integrate(theta), integrate(delta)]) / mass
    second = np.array([integrate(theta**2), integrate(delta**2)]) / mass
    zm = integrate(z) / mass
    zv = integrate(z**2) / mass - zm**2
    return QuadratureMoments(m, second - m**2, float(zm), float(zv), grid_points)


__all__ = [
    "ConvergenceWarning",
    "SamplingError",
    "DrawSet",
    "sample_posterior",
    "sample_prior",
    "split_rhat",
    "mc_standard_error",
    "QuadratureMoments",
    "quadrature_posterior_moments",
]
