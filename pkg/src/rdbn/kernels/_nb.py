"""numba implementations of the sampler's inner loops.

Every kernel consumes its ``np.random.Generator`` in exactly the order the
numpy fallback in ``_np.py`` does, so the two backends agree draw for draw.
"""
import math

import numpy as np
from numba import njit

LOG_BOUNDARY_MASS = math.log(1e-6)
LOG_NEGLIGIBLE = 40.0


@njit(cache=True)
def crt_counts(rng, m, conc):
    n, K = m.shape
    y = np.zeros((n, K), dtype=np.int64)
    for r in range(n):
        for k in range(K):
            mk = m[r, k]
            a = conc[r, k]
            if mk <= 0 or a <= 0.0:
                continue
            tables = 1
            for j in range(1, mk):
                if rng.random() < a / (a + j):
                    tables += 1
            y[r, k] = tables
    return y


@njit(cache=True)
def _multinomial_into(rng, n, probs, out):
    # same recursion as numpy's random_multinomial
    d = probs.shape[0]
    rem = 1.0
    dn = n
    for j in range(d - 1):
        p = probs[j] / rem
        if p > 1.0:
            p = 1.0
        if dn == 0 or p == 0.0:
            c = 0
        else:
            c = rng.binomial(dn, p)
        out[j] = c
        dn -= c
        if dn <= 0:
            break
        rem -= probs[j]
    if dn > 0:
        out[d - 1] = dn


@njit(cache=True)
def multinomial_rows(rng, n, probs):
    rows, d = probs.shape
    out = np.zeros((rows, d), dtype=np.int64)
    for r in range(rows):
        _multinomial_into(rng, n[r], probs[r], out[r])
    return out


@njit(cache=True)
def split_ragged(rng, y, ptr, weights):
    """Multinomial split of ``y[i, k]`` over the categories ``ptr[i]:ptr[i+1]``."""
    n, K = y.shape
    out = np.zeros(weights.shape, dtype=np.int64)
    for i in range(n):
        lo = ptr[i]
        hi = ptr[i + 1]
        d = hi - lo
        if d == 0:
            continue
        probs = np.empty(d)
        counts = np.zeros(d, dtype=np.int64)
        for k in range(K):
            if y[i, k] == 0:
                continue
            total = 0.0
            for c in range(d):
                total += weights[lo + c, k]
            for c in range(d):
                probs[c] = weights[lo + c, k] / total
                counts[c] = 0
            _multinomial_into(rng, y[i, k], probs, counts)
            for c in range(d):
                out[lo + c, k] = counts[c]
    return out


@njit(cache=True)
def dirichlet_rows(rng, conc):
    n, K = conc.shape
    g = np.zeros((n, K))
    small_row = np.zeros(n, dtype=np.bool_)
    for r in range(n):
        for k in range(K):
            if 0.0 < conc[r, k] < 1.0:
                small_row[r] = True
    for r in range(n):
        for k in range(K):
            a = conc[r, k]
            if a <= 0.0:
                continue
            if small_row[r] and a < 1.0:
                g[r, k] = rng.standard_gamma(a + 1.0)
            else:
                g[r, k] = rng.standard_gamma(a)
    out = np.zeros((n, K))
    for r in range(n):
        if small_row[r]:
            lg = np.full(K, -np.inf)
            key = np.full(K, np.inf)
            for k in range(K):
                a = conc[r, k]
                if a <= 0.0:
                    continue
                lg[k] = math.log(g[r, k])
                if a < 1.0:
                    lu = math.log(rng.random())
                    lg[k] += lu / a
                    key[k] = math.log(-lu) - math.log(a)
            mx = -np.inf
            for k in range(K):
                if lg[k] > mx:
                    mx = lg[k]
            if mx == -np.inf:
                # every weight underflowed: the limit is one-hot at argmin E_k / a_k
                out[r, np.argmin(key)] = 1.0
                continue
            s = 0.0
            for k in range(K):
                if lg[k] > -np.inf:
                    out[r, k] = math.exp(lg[k] - mx)
                s += out[r, k]
            for k in range(K):
                out[r, k] /= s
        else:
            s = 0.0
            for k in range(K):
                s += g[r, k]
            for k in range(K):
                out[r, k] = g[r, k] / s
    return out


@njit(cache=True)
def ztp_draws(rng, rates):
    n = rates.shape[0]
    out = np.zeros(n, dtype=np.int64)
    for r in range(n):
        lam = rates[r]
        if lam < 1.0:
            u = rng.random()
            k = 1
            p = lam / math.expm1(lam)
            cum = p
            while u >= cum and k < 10000:
                k += 1
                p *= lam / k
                cum += p
            out[r] = k
    pending = np.empty(n, dtype=np.int64)
    npend = 0
    for r in range(n):
        if rates[r] >= 1.0:
            pending[npend] = r
            npend += 1
    while npend > 0:
        nxt = 0
        for s in range(npend):
            r = pending[s]
            v = rng.poisson(rates[r])
            if v > 0:
                out[r] = v
            else:
                pending[nxt] = r
                nxt += 1
        npend = nxt
    return out


@njit(cache=True)
def psi_accumulate(out, dst, src, coef, pi_src):
    K = out.shape[1]
    for e in range(dst.shape[0]):
        d = dst[e]
        s = src[e]
        for k in range(K):
            out[d, k] += coef[e] * pi_src[s, k]


@njit(cache=True)
def _draw_count(a, c, xmax0, limit, u, buf):
    if c > 0:
        x0 = 1
        lw = a
    else:
        x0 = 0
        lw = 0.0
    buf[0] = lw
    runmax = lw
    n = 1
    x = x0
    xmax = xmax0 if xmax0 > x0 else x0
    expanded = 0
    while True:
        if x >= xmax:
            if lw - runmax > LOG_BOUNDARY_MASS:
                if xmax * 2 > limit:
                    return -1, expanded
                xmax *= 2
                expanded += 1
            else:
                break
        x += 1
        lx = math.log(x)
        if c > 0:
            lw = lw + a + c * (lx - math.log(x - 1)) - lx
        else:
            lw = lw + a - lx
        buf[n] = lw
        n += 1
        if lw > runmax:
            runmax = lw
        elif lw < runmax - LOG_NEGLIGIBLE:
            break
    total = 0.0
    for j in range(n):
        total += math.exp(buf[j] - runmax)
    target = u * total
    acc = 0.0
    for j in range(n):
        acc += math.exp(buf[j] - runmax)
        if target < acc:
            return x0 + j, expanded
    return x0 + n - 1, expanded


@njit(cache=True)
def sample_x_step(rng, X, log_prior, cnt, lam, ho_out_ptr, ho_out_idx,
                  ho_in_ptr, ho_in_idx, directed, xmax0, limit):
    """One sequential Gibbs sweep over the rows of ``X`` (a single time step).

    Returns the number of window expansions, or -1 when a cell's window hit
    ``limit`` with non-negligible boundary mass.
    """
    N, K = X.shape
    buf = np.empty(limit + 2)
    total = np.zeros(K, dtype=np.int64)
    for i in range(N):
        for k in range(K):
            total[k] += X[i, k]
    lo = np.zeros(K, dtype=np.int64)
    hi = total.copy()
    v_out = np.zeros(K, dtype=np.int64)
    v_in = np.zeros(K, dtype=np.int64)
    r = np.zeros(K)
    expansions = 0
    for i in range(N):
        for k in range(K):
            hi[k] -= X[i, k]
        for k in range(K):
            if directed:
                v_out[k] = total[k] - X[i, k]
                v_in[k] = total[k] - X[i, k]
            else:
                v_out[k] = hi[k]
                v_in[k] = lo[k]
        for e in range(ho_out_ptr[i], ho_out_ptr[i + 1]):
            b = ho_out_idx[e]
            for k in range(K):
                v_out[k] -= X[b, k]
        for e in range(ho_in_ptr[i], ho_in_ptr[i + 1]):
            b = ho_in_idx[e]
            for k in range(K):
                v_in[k] -= X[b, k]
        for k in range(K):
            acc = 0.0
            for k2 in range(K):
                acc += lam[k, k2] * v_out[k2] + lam[k2, k] * v_in[k2]
            r[k] = acc if acc > 0.0 else 0.0
        for k in range(K):
            u = rng.random()
            x, ex = _draw_count(log_prior[i, k] - r[k], cnt[i, k], xmax0, limit, u, buf)
            if x < 0:
                return -1
            expansions += ex
            total[k] += x - X[i, k]
            X[i, k] = x
        for k in range(K):
            lo[k] += X[i, k]
    return expansions
