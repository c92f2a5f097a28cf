"""Pure-numpy fallback for the kernels in ``_nb.py``.

Draw order and floating-point summation order mirror the numba loops;
sequential sums use ``cumsum(...)[..., -1]`` rather than ``sum`` because
numpy's pairwise summation would round differently.
"""
import math

import numpy as np

LOG_BOUNDARY_MASS = math.log(1e-6)
LOG_NEGLIGIBLE = 40.0


def _seqsum(a, axis=-1):
    if a.shape[axis] == 0:
        return np.zeros(np.delete(a.shape, axis))
    return np.take(np.cumsum(a, axis=axis), -1, axis=axis)


def crt_counts(rng, m, conc):
    m = np.asarray(m, dtype=np.int64)
    conc = np.asarray(conc, dtype=np.float64)
    y = np.zeros(m.shape, dtype=np.int64)
    active = (m > 0) & (conc > 0.0)
    y[active] = 1
    extra = np.where(active, m - 1, 0).ravel()
    total = int(extra.sum())
    if total == 0:
        return y
    u = rng.random(total)
    cell = np.repeat(np.arange(extra.size), extra)
    starts = np.cumsum(extra) - extra
    j = np.arange(total) - np.repeat(starts, extra) + 1
    a = conc.ravel()[cell]
    hits = u < a / (a + j)
    y.ravel()[:] += np.bincount(cell, weights=hits, minlength=extra.size).astype(np.int64)
    return y


def multinomial_rows(rng, n, probs):
    if probs.shape[0] == 0:
        return np.zeros(probs.shape, dtype=np.int64)
    return rng.multinomial(np.asarray(n, dtype=np.int64), probs).astype(np.int64)


def split_ragged(rng, y, ptr, weights):
    out = np.zeros(weights.shape, dtype=np.int64)
    node, k = np.nonzero(y)
    if node.size == 0:
        return out
    lengths = ptr[node + 1] - ptr[node]
    D = int(lengths.max())
    # front padding: zero-probability categories draw nothing
    col = np.arange(D)[None, :] - (D - lengths)[:, None]
    valid = col >= 0
    idx = np.where(valid, ptr[node][:, None] + col, 0)
    W = np.where(valid, weights[idx, k[:, None]], 0.0)
    P = W / _seqsum(W, axis=1)[:, None]
    counts = multinomial_rows(rng, y[node, k], P)
    r, c = np.nonzero(valid)
    out[idx[r, c], k[r]] = counts[r, c]
    return out


def dirichlet_rows(rng, conc):
    conc = np.asarray(conc, dtype=np.float64)
    pos = conc > 0.0
    small = pos & (conc < 1.0)
    small_row = small.any(axis=1)
    boosted = small_row[:, None] & small
    shape = np.where(boosted, conc + 1.0, conc)
    g = np.zeros(conc.shape)
    g[pos] = rng.standard_gamma(shape[pos])
    out = np.zeros(conc.shape)
    big = ~small_row
    if big.any():
        gb = g[big]
        out[big] = gb / _seqsum(gb, axis=1)[:, None]
    if small_row.any():
        lg = np.full(conc.shape, -np.inf)
        lg[pos] = np.log(g[pos])
        lu = np.log(rng.random(int(boosted.sum())))
        with np.errstate(over="ignore"):
            lg[boosted] += lu / conc[boosted]
        key = np.full(conc.shape, np.inf)
        key[boosted] = np.log(-lu) - np.log(conc[boosted])
        lg, key = lg[small_row], key[small_row]
        mx = lg.max(axis=1, keepdims=True)
        dead = ~np.isfinite(mx[:, 0])
        mx[dead] = 0.0
        e = np.where(np.isfinite(lg), np.exp(lg - mx), 0.0)
        # rows whose weights all underflowed: one-hot at argmin E_k / a_k
        e[dead] = 0.0
        e[dead, np.argmin(key[dead], axis=1)] = 1.0
        out[small_row] = e / _seqsum(e, axis=1)[:, None]
    return out


def ztp_draws(rng, rates):
    rates = np.asarray(rates, dtype=np.float64)
    out = np.zeros(rates.shape[0], dtype=np.int64)
    small = np.flatnonzero(rates < 1.0)
    if small.size:
        lam = rates[small]
        u = rng.random(small.size)
        k = np.ones(small.size, dtype=np.int64)
        p = lam / np.expm1(lam)
        cum = p.copy()
        active = (u >= cum) & (k < 10000)
        while active.any():
            k[active] += 1
            p[active] *= lam[active] / k[active]
            cum[active] += p[active]
            active = (u >= cum) & (k < 10000)
        out[small] = k
    pending = np.flatnonzero(rates >= 1.0)
    while pending.size:
        v = rng.poisson(rates[pending])
        hit = v > 0
        out[pending[hit]] = v[hit]
        pending = pending[~hit]
    return out


def psi_accumulate(out, dst, src, coef, pi_src):
    if dst.size:
        np.add.at(out, dst, coef[:, None] * pi_src[src])


def _window_weights(a, c, xmax):
    """Log-weights over ``x0..xmax`` for one cell, built by the same recurrence."""
    x0 = 1 if c > 0 else 0
    xs = np.arange(x0 + 1, max(xmax, x0) + 1, dtype=np.float64)
    lx = np.log(xs)
    if c > 0:
        inc = a + c * (lx - np.log(xs - 1.0)) - lx
    else:
        inc = a - lx
    first = a if c > 0 else 0.0
    return x0, np.cumsum(np.concatenate(([first], inc)))


def _draw_count(a, c, xmax0, limit, u):
    xmax = max(xmax0, 1 if c > 0 else 0)
    expanded = 0
    while True:
        x0, lw = _window_weights(a, c, xmax)
        runmax = np.maximum.accumulate(lw)
        stop = np.flatnonzero(lw[1:] < runmax[:-1] - LOG_NEGLIGIBLE)
        if stop.size:
            lw = lw[: stop[0] + 2]
            break
        if lw[-1] - runmax[-1] > LOG_BOUNDARY_MASS:
            if xmax * 2 > limit:
                return -1, expanded
            xmax *= 2
            expanded += 1
            continue
        break
    mx = lw.max()
    cs = np.cumsum(np.exp(lw - mx))
    j = int(np.searchsorted(cs, u * cs[-1], side="right"))
    return x0 + min(j, lw.size - 1), expanded


def sample_x_step(rng, X, log_prior, cnt, lam, ho_out_ptr, ho_out_idx,
                  ho_in_ptr, ho_in_idx, directed, xmax0, limit):
    N, K = X.shape
    total = X.sum(axis=0)
    lo = np.zeros(K, dtype=np.int64)
    hi = total.copy()
    expansions = 0
    for i in range(N):
        hi -= X[i]
        if directed:
            v_out = total - X[i]
            v_in = total - X[i]
        else:
            v_out = hi.copy()
            v_in = lo.copy()
        out_nb = ho_out_idx[ho_out_ptr[i]:ho_out_ptr[i + 1]]
        in_nb = ho_in_idx[ho_in_ptr[i]:ho_in_ptr[i + 1]]
        if out_nb.size:
            v_out = v_out - X[out_nb].sum(axis=0)
        if in_nb.size:
            v_in = v_in - X[in_nb].sum(axis=0)
        terms = lam * v_out[None, :] + lam.T * v_in[None, :]
        r = np.maximum(_seqsum(terms, axis=1), 0.0)
        u = rng.random(K)
        for k in range(K):
            x, ex = _draw_count(log_prior[i, k] - r[k], int(cnt[i, k]), xmax0, limit, u[k])
            if x < 0:
                return -1
            expansions += ex
            total[k] += x - X[i, k]
            X[i, k] = x
        lo += X[i]
    return expansions
