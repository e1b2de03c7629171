"""Pure-numpy reference implementations of the hot loops.

Vectorized across chains (sampler) and across simulated-data columns (loss).
The numba backend follows the same arithmetic order so both agree to rounding.
"""

import numpy as np

RATE_EPS = 1e-10
ADAPT_BATCH = 50
TARGET_ACCEPT = 0.3
MIN_SCALE, MAX_SCALE = 1e-3, 1e2


def _rates(h):
    return np.clip(1.0 / (1.0 + np.exp(-h)), RATE_EPS, 1.0 - RATE_EPS)


def _block_loglik(theta, delta, N, Y, svec, rvec):
    """Log-likelihood of a block of traces.

    theta, delta broadcast to (..., S, nA', nB'); N, Y, svec, rvec carry the
    stratum axis. Terms with zero counts are dropped rather than multiplied.
    """
    z = theta + (1.0 - theta) * delta
    log_pos = np.log(svec * z + (1.0 - rvec) * (1.0 - z))
    log_neg = np.log((1.0 - svec) * z + rvec * (1.0 - theta) * (1.0 - delta))
    nmy = N - Y
    pos = np.where(Y > 0, Y * log_pos, 0.0)
    neg = np.where(nmy > 0, nmy * log_neg, 0.0)
    return pos + neg


def log_target(h, N, Y, svec, rvec, mu, nu, n_test):
    """Unnormalized log posterior for each row of h (chains x nodes)."""
    x = _rates(h)
    theta = x[:, None, :n_test, None]
    delta = x[:, None, None, n_test:]
    ll = _block_loglik(theta, delta, N, Y, svec[:, None, None], rvec[:, None, None])
    ll = ll.reshape(h.shape[0], -1).sum(axis=1)
    d = (h - mu) / nu
    return ll - 0.5 * np.sum(d * d, axis=1)


def _coord_loglik(x, g, N, Y, svec, rvec, n_test):
    """Likelihood terms that involve node g, per chain (shape: chains)."""
    s = svec[:, None]
    r = rvec[:, None]
    if g < n_test:
        theta = x[:, g][:, None, None]
        delta = x[:, None, n_test:]
        ll = _block_loglik(theta, delta, N[:, g, :], Y[:, g, :], s, r)
    else:
        b = g - n_test
        theta = x[:, None, :n_test]
        delta = x[:, g][:, None, None]
        ll = _block_loglik(theta, delta, N[:, :, b], Y[:, :, b], s, r)
    return ll.reshape(x.shape[0], -1).sum(axis=1)


def mh_segment(h, lt, scales, acc, acc_total, normals, uniforms, N, Y, svec, rvec,
               mu, nu, n_test, sweep0, adapt, out):
    """Run ``normals.shape[1]`` component-wise Metropolis sweeps for every chain.

    Arrays h, lt, scales, acc, acc_total and out are updated in place; ``out``
    receives the logit state after each sweep.
    """
    n_chain, n_sweep, n_node = normals.shape
    logu = np.log(uniforms)
    inv2 = 0.5 / (nu * nu)
    for t in range(n_sweep):
        for g in range(n_node):
            old = h[:, g].copy()
            new = old + scales[:, g] * normals[:, t, g]
            x = _rates(h)
            ll_old = _coord_loglik(x, g, N, Y, svec, rvec, n_test)
            h[:, g] = new
            x = _rates(h)
            ll_new = _coord_loglik(x, g, N, Y, svec, rvec, n_test)
            dp = -inv2 * ((new - mu[g]) ** 2 - (old - mu[g]) ** 2)
            delta = (ll_new - ll_old) + dp
            ok = logu[:, t, g] < delta
            h[:, g] = np.where(ok, new, old)
            lt += np.where(ok, delta, 0.0)
            acc[:, g] += ok
            acc_total[:, g] += ok
        out[:, t, :] = h
        if adapt and (sweep0 + t + 1) % ADAPT_BATCH == 0:
            rate = acc / ADAPT_BATCH
            scales *= np.exp(3.0 * (rate - TARGET_ACCEPT))
            np.clip(scales, MIN_SCALE, MAX_SCALE, out=scales)
            acc[:] = 0


def column_losses(vals_sorted, order, weights, D, kind, q, v, l, factor, out,
                  chunk=256):
    """Minimum expected loss for each column of D.

    vals_sorted[g] holds node g's draw values in ascending order and order[g]
    the matching draw indices; weights[i, g] is the importance weight W of draw
    i at node g. kind 0 = assessment, 1 = classification.
    """
    n_node, h1 = vals_sorted.shape
    n_col = D.shape[1]
    for c0 in range(0, n_col, chunk):
        c1 = min(c0 + chunk, n_col)
        Dc = D[:, c0:c1]
        total = np.zeros(c1 - c0)
        for g in range(n_node):
            x = vals_sorted[g]
            wt = Dc[order[g]] * weights[order[g], g][:, None]
            if kind == 0:
                cw = np.cumsum(wt, axis=0)
                cwx = np.cumsum(wt * x[:, None], axis=0)
                T = cw[-1]
                Tx = cwx[-1]
                k = np.argmax(cw >= q * T, axis=0)
                cols = np.arange(c1 - c0)
                C = cw[k, cols]
                Cx = cwx[k, cols]
                e = x[k]
                loss = e * C - Cx + v * ((Tx - Cx) - e * (T - C))
            else:
                below = np.cumsum(np.where((x < l)[:, None], wt, 0.0), axis=0)[-1]
                above = np.cumsum(np.where((x >= l)[:, None], wt, 0.0), axis=0)[-1]
                loss = np.minimum(below, v * above)
            total += factor[g] * loss
        out[c0:c1] = total
