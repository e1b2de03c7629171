"""numba-compiled versions of the hot loops (see ``_numpy`` for the reference)."""

import math

import numpy as np
from numba import njit

from ._numpy import ADAPT_BATCH, MAX_SCALE, MIN_SCALE, RATE_EPS, TARGET_ACCEPT


@njit(cache=True)
def _rate(h):
    x = 1.0 / (1.0 + math.exp(-h))
    return min(max(x, RATE_EPS), 1.0 - RATE_EPS)


@njit(cache=True)
def _term(theta, delta, n, y, s, r):
    z = theta + (1.0 - theta) * delta
    out = 0.0
    if y > 0:
        out += y * math.log(s * z + (1.0 - r) * (1.0 - z))
    if n - y > 0:
        out += (n - y) * math.log((1.0 - s) * z + r * (1.0 - theta) * (1.0 - delta))
    return out


@njit(cache=True)
def _coord_loglik(hc, g, N, Y, svec, rvec, n_test):
    n_str, n_a, n_b = N.shape
    ll = 0.0
    if g < n_test:
        th = _rate(hc[g])
        for st in range(n_str):
            for b in range(n_b):
                ll += _term(th, _rate(hc[n_test + b]), N[st, g, b], Y[st, g, b],
                            svec[st], rvec[st])
    else:
        b = g - n_test
        de = _rate(hc[g])
        for st in range(n_str):
            for a in range(n_a):
                ll += _term(_rate(hc[a]), de, N[st, a, b], Y[st, a, b],
                            svec[st], rvec[st])
    return ll


@njit(cache=True)
def log_target(h, N, Y, svec, rvec, mu, nu, n_test):
    n_chain, n_node = h.shape
    n_str, n_a, n_b = N.shape
    out = np.empty(n_chain)
    for c in range(n_chain):
        ll = 0.0
        for st in range(n_str):
            for a in range(n_a):
                th = _rate(h[c, a])
                for b in range(n_b):
                    ll += _term(th, _rate(h[c, n_test + b]), N[st, a, b], Y[st, a, b],
                                svec[st], rvec[st])
        lp = 0.0
        for g in range(n_node):
            d = (h[c, g] - mu[g]) / nu
            lp += d * d
        out[c] = ll - 0.5 * lp
    return out


@njit(cache=True)
def mh_segment(h, lt, scales, acc, acc_total, normals, uniforms, N, Y, svec, rvec,
               mu, nu, n_test, sweep0, adapt, out):
    n_chain, n_sweep, n_node = normals.shape
    inv2 = 0.5 / (nu * nu)
    for c in range(n_chain):
        hc = h[c]
        for t in range(n_sweep):
            for g in range(n_node):
                old = hc[g]
                new = old + scales[c, g] * normals[c, t, g]
                ll_old = _coord_loglik(hc, g, N, Y, svec, rvec, n_test)
                hc[g] = new
                ll_new = _coord_loglik(hc, g, N, Y, svec, rvec, n_test)
                dp = -inv2 * ((new - mu[g]) ** 2 - (old - mu[g]) ** 2)
                delta = (ll_new - ll_old) + dp
                if math.log(uniforms[c, t, g]) < delta:
                    lt[c] += delta
                    acc[c, g] += 1
                    acc_total[c, g] += 1
                else:
                    hc[g] = old
            for g in range(n_node):
                out[c, t, g] = hc[g]
            if adapt and (sweep0 + t + 1) % ADAPT_BATCH == 0:
                for g in range(n_node):
                    rate = acc[c, g] / ADAPT_BATCH
                    sc = scales[c, g] * math.exp(3.0 * (rate - TARGET_ACCEPT))
                    scales[c, g] = min(max(sc, MIN_SCALE), MAX_SCALE)
                    acc[c, g] = 0


@njit(cache=True)
def column_losses(vals_sorted, order, weights, D, kind, q, v, l, factor, out):
    n_node, h1 = vals_sorted.shape
    n_col = D.shape[1]
    for j in range(n_col):
        total = 0.0
        for g in range(n_node):
            if kind == 0:
                T = 0.0
                Tx = 0.0
                for k in range(h1):
                    i = order[g, k]
                    w = D[i, j] * weights[i, g]
                    T += w
                    Tx += w * vals_sorted[g, k]
                C = 0.0
                Cx = 0.0
                e = vals_sorted[g, h1 - 1]
                thr = q * T
                for k in range(h1):
                    i = order[g, k]
                    w = D[i, j] * weights[i, g]
                    C += w
                    Cx += w * vals_sorted[g, k]
                    if C >= thr:
                        e = vals_sorted[g, k]
                        break
                loss = e * C - Cx + v * ((Tx - Cx) - e * (T - C))
            else:
                below = 0.0
                above = 0.0
                for k in range(h1):
                    i = order[g, k]
                    w = D[i, j] * weights[i, g]
                    if vals_sorted[g, k] < l:
                        below += w
                    else:
                        above += w
                loss = min(below, v * above)
            total += factor[g] * loss
        out[j] = total
