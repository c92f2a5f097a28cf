"""Gibbs sampler: upward-backward count propagation and forward-downward sampling.

One iteration runs, in order::

    upward_backward_pass -> sample_pi -> sample_beta_gamma -> sample_X
    -> sample_C -> sample_lambda -> sample_M

Given the auxiliary counts, the coefficient conditionals do not involve the
memberships, so the two forward scans may also be fused: ``scan="interleaved"``
redraws the coefficients feeding each block right before its memberships
(:func:`forward_downward`), which is an exact joint draw of both.

Every variable family draws from its own generator keyed by
``(seed, iteration, family)``, so a run can be resumed from any checkpoint.
"""
from dataclasses import dataclass, field
import csv
import math
import os
import shutil
import time

import numpy as np

from . import kernels
from .distributions import family_stream, sample_log_beta
from .errors import ConsistencyError, DegenerateError, ParameterError, RDBNError
from .graph import TrainingView
from .model import (LatentState, Support, concentration_base, link_weights, load_checkpoint,
                    psi_block, sample_prior_state, save_checkpoint)

RATE_FLOOR = 1e-12
WINDOW_DOUBLINGS = 10
EVENTS = {"rate_floor": 0, "uniform_weights": 0, "window_expansions": 0}


@dataclass
class PropagationWorkspace:
    """Auxiliary counts of one upward-backward pass.

    ``Z[l, e, k]`` are counts sent down through ``beta[l, e]`` (to layer ``l``)
    and ``A[l, e, k]`` counts sent back through ``gamma[l, e]``.  ``absorbed``
    collects counts attributed to the fallback base measure.
    """

    m: np.ndarray
    y: np.ndarray
    log_q: np.ndarray
    Z: np.ndarray
    A: np.ndarray
    absorbed: np.ndarray
    fallbacks: int = 0

    @property
    def q(self):
        return np.exp(self.log_q)

    @classmethod
    def empty(cls, state):
        L, T, N, K = state.pi.shape
        sup = state.support
        return cls(m=np.zeros((L, T, N, K), dtype=np.int64),
                   y=np.zeros((L, T, N, K), dtype=np.int64),
                   log_q=np.zeros((L, T, N)),
                   Z=np.zeros((max(L - 1, 0), sup.nnz_beta, K), dtype=np.int64),
                   A=np.zeros((L, sup.nnz_gamma, K), dtype=np.int64),
                   absorbed=np.zeros((L, T, N, K), dtype=np.int64))


def draw_auxiliary(m_vec, psi, rng):
    """Table counts ``y ~ CRT(m, psi)`` and ``q ~ Beta(sum psi, sum m)`` for one node."""
    m_vec = np.asarray(m_vec, dtype=np.int64)
    psi = np.asarray(psi, dtype=np.float64)
    if np.any(m_vec < 0) or np.any(psi < 0):
        raise ParameterError("counts and concentrations must be non-negative")
    msum, csum = int(m_vec.sum()), float(psi.sum())
    if msum > 0 and csum <= 0:
        raise DegenerateError("zero concentration with positive counts")
    y = kernels.get("crt_counts")(rng, m_vec[None, :], psi[None, :])[0]
    q = 1.0 if msum == 0 else math.exp(sample_log_beta(csum, msum, rng))
    return y, q


def distribute_counts(y, i, k, t, l, state, rng, temporal=True):
    """Split ``y`` tables of ``(i, k, t, l)`` over the contributors to its concentration.

    Returns ``(z_entries, z_counts, a_entries, a_counts)``: support entry
    indices into ``beta[l - 1]`` / ``gamma[l]`` and the counts they receive.
    """
    sup = state.support
    if l > 0:
        ze = np.arange(sup.beta_ptr[t, i], sup.beta_ptr[t, i + 1])
        zw = state.beta[l - 1, ze] * state.pi[l - 1, t, sup.beta_src[ze], k]
    else:
        ze, zw = np.zeros(0, dtype=np.int64), np.zeros(0)
    if temporal and t > 0:
        ae = np.arange(sup.gamma_ptr[t, i], sup.gamma_ptr[t, i + 1])
        aw = state.gamma[l, ae] * state.pi[l, t - 1, sup.gamma_src[ae], k]
    else:
        ae, aw = np.zeros(0, dtype=np.int64), np.zeros(0)
    w = np.concatenate([zw, aw])
    if y == 0:
        return ze, np.zeros(ze.size, np.int64), ae, np.zeros(ae.size, np.int64)
    total = w.sum()
    psi_k = psi_block(state, t, l, temporal)[i, k]
    if not total > 0:
        raise DegenerateError("counts to distribute but no contributor carries weight")
    if abs(total - psi_k) > 1e-9 * max(1.0, abs(psi_k)):
        raise ConsistencyError(f"split weights sum to {total!r}, concentration is {psi_k!r}")
    counts = kernels.get("multinomial_rows")(rng, np.array([y], dtype=np.int64), (w / total)[None, :])[0]
    return ze, counts[: ze.size], ae, counts[ze.size:]


def _block_split(state, ws, t, l, base, conc, rng, temporal, check):
    """Draw y, q at block ``(l, t)`` and distribute y to the layer below and step before."""
    N, K = state.N, state.K
    sup = state.support
    m = ws.m[l, t]
    y = kernels.get("crt_counts")(rng, m, conc)
    msum = m.sum(axis=1)
    csum = conc.sum(axis=1)
    has = msum > 0
    if np.any(has & ~(csum > 0)):
        raise DegenerateError(f"zero concentration with positive counts at layer {l}, step {t}")
    log_q = np.zeros(N)
    if has.any():
        log_q[has] = sample_log_beta(csum[has], msum[has], rng)
    ws.log_q[l, t] = log_q
    ws.y[l, t] = y
    if not y.any():
        return

    nodes, kinds, entries, weights = [], [], [], []
    fb = np.flatnonzero(base.any(axis=1))
    if fb.size:
        nodes.append(fb)
        kinds.append(np.zeros(fb.size, np.int8))
        entries.append(fb)
        weights.append(base[fb])
    if l > 0:
        lo, hi = sup.beta_ptr[t, 0], sup.beta_ptr[t, N]
        e = np.arange(lo, hi)
        nodes.append(sup.beta_dst[lo:hi])
        kinds.append(np.ones(e.size, np.int8))
        entries.append(e)
        weights.append(state.beta[l - 1, lo:hi, None] * state.pi[l - 1, t][sup.beta_src[lo:hi]])
    if temporal and t > 0:
        lo, hi = sup.gamma_ptr[t, 0], sup.gamma_ptr[t, N]
        e = np.arange(lo, hi)
        nodes.append(sup.gamma_dst[lo:hi])
        kinds.append(np.full(e.size, 2, np.int8))
        entries.append(e)
        weights.append(state.gamma[l, lo:hi, None] * state.pi[l, t - 1][sup.gamma_src[lo:hi]])
    node = np.concatenate(nodes)
    order = np.argsort(node, kind="stable")
    node = node[order]
    kind = np.concatenate(kinds)[order]
    entry = np.concatenate(entries)[order]
    W = np.ascontiguousarray(np.concatenate(weights)[order])
    ptr = np.zeros(N + 1, dtype=np.int64)
    np.cumsum(np.bincount(node, minlength=N), out=ptr[1:])

    if check:
        wsum = np.zeros((N, K))
        np.add.at(wsum, node, W)
        bad = (y > 0) & (np.abs(wsum - conc) > 1e-9 * np.maximum(1.0, conc))
        if bad.any():
            i, k = np.argwhere(bad)[0]
            raise ConsistencyError(f"split weights {wsum[i, k]!r} disagree with concentration "
                                   f"{conc[i, k]!r} at node {i}, community {k}, layer {l}, step {t}")

    counts = kernels.get("split_ragged")(rng, y, ptr, W)

    if check:
        got = np.zeros((N, K), dtype=np.int64)
        np.add.at(got, node, counts)
        if not np.array_equal(got, y):
            raise ConsistencyError(f"count split does not conserve tables at layer {l}, step {t}")

    sel = kind == 0
    if sel.any():
        np.add.at(ws.absorbed[l, t], entry[sel], counts[sel])
    sel = kind == 1
    if sel.any():
        e = entry[sel]
        ws.Z[l - 1, e] = counts[sel]
        np.add.at(ws.m[l - 1, t], sup.beta_src[e], counts[sel])
    sel = kind == 2
    if sel.any():
        e = entry[sel]
        ws.A[l, e] = counts[sel]
        np.add.at(ws.m[l, t - 1], sup.gamma_src[e], counts[sel])


def upward_backward_pass(state, view, rng, hp=None, temporal=True, check=True):
    """Propagate the latent counts ``X`` down the layers and back in time."""
    L, T = state.L, state.T
    ws = PropagationWorkspace.empty(state)
    ws.m[L - 1] += state.X
    alpha = np.zeros(state.K) if hp is None else hp.alpha_vec
    for t in range(T - 1, -1, -1):
        for l in range(L - 1, -1, -1):
            if t == 0 and l == 0:
                continue
            psi = psi_block(state, t, l, temporal)
            base, n_fb = concentration_base(psi, alpha, t, l)
            ws.fallbacks += n_fb
            _block_split(state, ws, t, l, base, psi + base, rng, temporal, check)
    if check:
        _check_mass(state, ws, temporal)
    return ws


def _check_mass(state, ws, temporal):
    """Per (l, t) and community: tables emitted equal counts received below and before."""
    L, T = state.L, state.T
    sup = state.support
    for t in range(T):
        for l in range(L):
            if t == 0 and l == 0:
                continue
            emitted = ws.y[l, t].sum(axis=0) - ws.absorbed[l, t].sum(axis=0)
            received = np.zeros(state.K, dtype=np.int64)
            if l > 0:
                received += ws.Z[l - 1, sup.beta_ptr[t, 0]:sup.beta_ptr[t, -1]].sum(axis=0)
            if temporal and t > 0:
                received += ws.A[l, sup.gamma_ptr[t, 0]:sup.gamma_ptr[t, -1]].sum(axis=0)
            if not np.array_equal(emitted, received):
                raise ConsistencyError(f"count imbalance at layer {l}, step {t}")
    received_top = ws.m[state.L - 1] - state.X
    if np.any(received_top < 0):
        raise ConsistencyError("top-layer counts fell below X")


# -- forward-downward ---------------------------------------------------------

def _coefficient_block(state, ws, t, l, rng, hp, temporal, beta_shape_offset=0.0):
    """Redraw the coefficients feeding block ``(l, t)``: beta[l-1] at t, gamma[l] into t."""
    sup = state.support
    N = state.N
    cc, cu = hp.cc_vec, hp.cu_vec
    shapes, scales, targets = [], [], []
    if l > 0:
        lo, hi = sup.beta_ptr[t, 0], sup.beta_ptr[t, N]
        diag = sup.beta_src[lo:hi] == sup.beta_dst[lo:hi]
        prior = np.where(diag, cc[l], cu[l]) + beta_shape_offset
        shapes.append(prior + ws.Z[l - 1, lo:hi].sum(axis=1))
        scales.append(1.0 / (state.d_c - ws.log_q[l, t][sup.beta_dst[lo:hi]]))
        targets.append((state.beta, l - 1, lo, hi))
    if temporal and t > 0:
        lo, hi = sup.gamma_ptr[t, 0], sup.gamma_ptr[t, N]
        diag = sup.gamma_src[lo:hi] == sup.gamma_dst[lo:hi]
        prior = np.where(diag, cc[l], cu[l])
        shapes.append(prior + ws.A[l, lo:hi].sum(axis=1))
        scales.append(1.0 / (state.d_c - ws.log_q[l, t][sup.gamma_dst[lo:hi]]))
        targets.append((state.gamma, l, lo, hi))
    if not shapes:
        return
    draws = rng.gamma(np.concatenate(shapes), np.concatenate(scales))
    pos = 0
    for arr, row, lo, hi in targets:
        arr[row, lo:hi] = draws[pos:pos + hi - lo]
        pos += hi - lo


def _pi_block(state, ws, t, l, rng, hp, temporal):
    psi = psi_block(state, t, l, temporal)
    base, n_fb = concentration_base(psi, hp.alpha_vec, t, l)
    ws.fallbacks += n_fb
    state.pi[l, t] = kernels.get("dirichlet_rows")(rng, psi + base + ws.m[l, t])


def forward_downward(state, ws, rng, hp, temporal=True, beta_shape_offset=0.0):
    for t in range(state.T):
        for l in range(state.L):
            _coefficient_block(state, ws, t, l, rng, hp, temporal, beta_shape_offset)
            _pi_block(state, ws, t, l, rng, hp, temporal)
    return state


def sample_pi(state, ws, rng, hp, temporal=True):
    """Redraw every membership vector from its Dirichlet conditional, forward in t, up in l."""
    for t in range(state.T):
        for l in range(state.L):
            _pi_block(state, ws, t, l, rng, hp, temporal)
    return state.pi


def sample_beta_gamma(state, ws, rng, hp, temporal=True, beta_shape_offset=0.0):
    """Redraw every propagation coefficient from its Gamma conditional."""
    for t in range(state.T):
        for l in range(state.L):
            _coefficient_block(state, ws, t, l, rng, hp, temporal, beta_shape_offset)
    return state.beta, state.gamma


def sample_dc(state, hp, rng, e0=1.0, f0=1.0):
    """Conjugate update of the shared coefficient rate under a Gamma(e0, f0) prior."""
    sup = state.support
    cc, cu = hp.cc_vec, hp.cu_vec
    shape, total = e0, f0
    for l in range(state.L - 1):
        shape += np.where(sup.beta_diag, cc[l + 1], cu[l + 1]).sum()
        total += state.beta[l].sum()
    for l in range(state.L):
        shape += np.where(sup.gamma_diag, cc[l], cu[l]).sum()
        total += state.gamma[l].sum()
    state.d_c = float(rng.gamma(shape, 1.0 / total))
    return state.d_c


# -- observation layer ---------------------------------------------------------

def _c_margins(state):
    """Counts of C attributed to each (t, i, k) as sender plus as receiver."""
    cnt = np.zeros(state.X.shape, dtype=np.int64)
    if len(state.links):
        t, i, j = state.links.T
        np.add.at(cnt, (t, i), state.C.sum(axis=2))
        np.add.at(cnt, (t, j), state.C.sum(axis=1))
    return cnt


def window_start(M, K):
    return int(max(30, math.ceil(3.0 * M / K)))


def sample_X(state, view, rng):
    """Redraw every latent count from its exact discrete conditional."""
    L = state.L
    K = state.K
    cnt = _c_margins(state)
    if not state.M > 0:
        # the prior puts all mass on zero, which only works without attached link counts
        if cnt.any():
            raise DegenerateError("M is zero but positive links need latent counts")
        state.X[:] = 0
        return state.X
    log_prior = math.log(state.M) + np.log(np.maximum(state.pi[L - 1], 1e-300))
    xmax0 = window_start(state.M, K)
    limit = xmax0 * 2 ** WINDOW_DOUBLINGS
    step = kernels.get("sample_x_step")
    lam = np.ascontiguousarray(state.Lambda)
    for t in range(state.T):
        op, oi, ip, ii = view.heldout_partners[t]
        ex = step(rng, state.X[t], np.ascontiguousarray(log_prior[t]), cnt[t], lam,
                  op, oi, ip, ii, view.directed, xmax0, limit)
        if ex < 0:
            raise ConsistencyError(f"latent-count window exceeded {limit} at step {t}")
        EVENTS["window_expansions"] += int(ex)
    return state.X


def sample_C(state, view, rng):
    """Redraw the latent link counts of every positive training link."""
    K = state.K
    links = view.links
    state.links = links
    if len(links) == 0:
        state.C = np.zeros((0, K, K), dtype=np.int64)
        return state.C
    flat, rate = link_weights(state.X, state.Lambda, links)
    EVENTS["rate_floor"] += int(np.count_nonzero(rate < RATE_FLOOR))
    totals = kernels.get("ztp_draws")(rng, np.maximum(rate, RATE_FLOOR))
    zero = ~(rate > 0)
    if zero.any():
        EVENTS["uniform_weights"] += int(zero.sum())
        flat[zero] = 1.0
        rate = np.where(zero, float(K * K), rate)
    probs = flat / rate[:, None]
    state.C = kernels.get("multinomial_rows")(rng, totals, probs).reshape(-1, K, K)
    return state.C


def pair_sums(X, view):
    """``sum over modelled training dyads of X_i X_j^T`` per step, exact, shape (T, K, K)."""
    T, N, K = X.shape
    out = np.zeros((T, K, K), dtype=np.int64)
    for t in range(T):
        Xt = X[t]
        if view.directed:
            s = Xt.sum(axis=0)
            out[t] = np.outer(s, s) - Xt.T @ Xt
        else:
            prefix = np.cumsum(Xt, axis=0) - Xt
            out[t] = prefix.T @ Xt
    h = view.heldout
    if len(h):
        a = X[h[:, 0], h[:, 1]]
        b = X[h[:, 0], h[:, 2]]
        np.subtract.at(out, h[:, 0], a[:, :, None] * b[:, None, :])
    return out


def sample_lambda(state, view, rng, hp):
    shape = hp.lambda1 + state.C.sum(axis=0)
    rate = hp.lambda0 + pair_sums(state.X, view).sum(axis=0)
    state.Lambda = rng.gamma(shape, 1.0 / rate)
    return state.Lambda


def sample_M(state, rng, hp):
    shape = hp.m_prior_shape(state.N) + int(state.X.sum())
    state.M = float(rng.gamma(shape, 1.0 / (1.0 + state.N * state.T)))
    return state.M


def train_loglik(state, view):
    """Bernoulli-Poisson log-likelihood of the training dyads."""
    total = float((pair_sums(state.X, view).sum(axis=0) * state.Lambda).sum())
    if len(view.links) == 0:
        return -total
    _, rate = link_weights(state.X, state.Lambda, view.links)
    with np.errstate(divide="ignore"):
        pos = np.log(-np.expm1(-rate))
    return float(pos.sum() - (total - rate.sum()))


# -- driver ----------------------------------------------------------------------

def init_state(view, hp, seed):
    """Prior draw on the training support, with Lambda scaled to the observed density."""
    rng = family_stream(seed, "init", 0)
    N, T, K = view.n_nodes, view.n_steps, hp.K
    support = Support.from_links(N, T, view.links, view.directed)
    M = rng.gamma(hp.m_prior_shape(N), 1.0)
    dyads = view.n_dyads_per_step * T - len(view.heldout)
    density = len(view.links) / dyads if dyads else 0.0
    if 0.0 < density < 1.0:
        lam0 = -math.log1p(-density) / (M * M)
    else:
        lam0 = hp.lambda1 / hp.lambda0
    Lambda = lam0 * rng.gamma(10.0, 0.1, size=(K, K))
    state = sample_prior_state(hp, support, rng, Lambda=Lambda, M=M)
    if len(view.links):
        ends = np.concatenate([view.links[:, [0, 1]], view.links[:, [0, 2]]])
        empty = state.X[ends[:, 0], ends[:, 1]].sum(axis=1) == 0
        for t, i in ends[empty]:
            state.X[t, i, np.argmax(state.pi[-1, t, i])] = 1
    sample_C(state, view, rng)
    return state


def gibbs_iteration(state, view, hp, seed, iteration, temporal=True, check=True,
                    beta_shape_offset=0.0, scan="sequential"):
    """One full sweep; returns ``(state, workspace)``.

    ``temporal=False`` drops every gamma / A code path.  ``beta_shape_offset``
    exists only to build a deliberately wrong sampler for diagnostics.
    """
    ws = upward_backward_pass(state, view, family_stream(seed, "upward", iteration), hp,
                              temporal=temporal, check=check)
    rng = family_stream(seed, "forward", iteration)
    if scan == "sequential":
        sample_pi(state, ws, rng, hp, temporal)
        sample_beta_gamma(state, ws, rng, hp, temporal, beta_shape_offset)
    elif scan == "interleaved":
        forward_downward(state, ws, rng, hp, temporal, beta_shape_offset)
    else:
        raise ParameterError(f"unknown scan {scan!r}")
    if hp.resample_dc:
        sample_dc(state, hp, family_stream(seed, "hyper", iteration))
    sample_X(state, view, family_stream(seed, "X", iteration))
    sample_C(state, view, family_stream(seed, "C", iteration))
    sample_lambda(state, view, family_stream(seed, "Lambda", iteration), hp)
    sample_M(state, family_stream(seed, "M", iteration), hp)
    return state, ws


@dataclass
class SampleCollection:
    """Post-burn-in summaries kept by :func:`fit`."""

    heldout: np.ndarray
    survival_sum: np.ndarray
    n_samples: int
    state: LatentState
    states: list = field(default_factory=list)
    trace: list = field(default_factory=list)

    @property
    def survival_mean(self):
        if self.n_samples == 0:
            raise RDBNError("no post-burn-in samples retained")
        return self.survival_sum / self.n_samples


def heldout_survival(state, heldout):
    """``exp(-rate)`` at every held-out dyad."""
    if len(heldout) == 0:
        return np.zeros(0)
    _, rate = link_weights(state.X, state.Lambda, heldout)
    return np.exp(-rate)


PROGRESS_COLUMNS = ("iter", "seconds", "train_loglik", "M", "mean_beta", "mean_gamma")


def _fmt(x):
    return "%.17g" % x


def _mean(a):
    return float(a.mean()) if a.size else float("nan")


def fit(net, mask, hp, out_dir=None, checkpoint_every=0, resume=False, keep_every=0,
        temporal=True, record_time=False, progress=None, check=True, scan="sequential"):
    """Run ``hp.iterations`` sweeps and accumulate held-out survival probabilities.

    With ``out_dir`` set, writes ``progress.csv`` and a ``checkpoint/``
    directory every ``checkpoint_every`` iterations (and after the last one).
    ``resume`` continues from that checkpoint; the trajectory is identical to
    an uninterrupted run.  The ``seconds`` column is left empty unless
    ``record_time`` is set, so that logs of repeated runs compare equal.
    """
    view = net if isinstance(net, TrainingView) else TrainingView.from_network(net, mask)
    heldout = view.heldout
    seed = hp.seed
    start = 0
    survival_sum = np.zeros(len(heldout))
    n_samples = 0
    ckpt_dir = None if out_dir is None else os.path.join(out_dir, "checkpoint")
    log_path = None if out_dir is None else os.path.join(out_dir, "progress.csv")
    state = None
    if resume:
        if ckpt_dir is None or not os.path.exists(os.path.join(ckpt_dir, "manifest.json")):
            raise RDBNError("resume requested but no checkpoint found")
        state, saved_hp, done, extra, _ = load_checkpoint(ckpt_dir)
        if saved_hp.to_dict() != hp.to_dict():
            raise ParameterError("hyperparameters differ from the checkpointed run")
        if not np.array_equal(extra.get("heldout", np.zeros((0, 3), np.int64)).reshape(-1, 3), heldout):
            raise ParameterError("held-out dyads differ from the checkpointed run")
        start = done + 1
        survival_sum = extra["survival_sum"]
        n_samples = extra["n_samples"].item()
        _truncate_log(log_path, done)
    else:
        state = init_state(view, hp, seed)
        if out_dir is not None:
            os.makedirs(out_dir, exist_ok=True)
            with open(log_path, "w", newline="") as fh:
                csv.writer(fh).writerow(PROGRESS_COLUMNS)
    if view.links.shape != state.links.shape or not np.array_equal(view.links, state.links):
        raise ParameterError("training links differ from the sampler state")

    collection = SampleCollection(heldout, survival_sum, n_samples, state)
    t0 = time.perf_counter()
    for it in range(start, hp.iterations):
        gibbs_iteration(state, view, hp, seed, it, temporal=temporal, check=check, scan=scan)
        if it >= hp.burn_in:
            collection.survival_sum += heldout_survival(state, heldout)
            collection.n_samples += 1
            if keep_every and (it - hp.burn_in) % keep_every == 0:
                collection.states.append(state.copy())
        row = (it, time.perf_counter() - t0 if record_time else None, train_loglik(state, view),
               state.M, _mean(state.beta), _mean(state.gamma))
        collection.trace.append(row)
        if log_path is not None:
            with open(log_path, "a", newline="") as fh:
                csv.writer(fh).writerow([row[0], "" if row[1] is None else _fmt(row[1])]
                                        + [_fmt(v) for v in row[2:]])
        if progress is not None:
            progress(row)
        last = it == hp.iterations - 1
        if ckpt_dir is not None and (last or (checkpoint_every and (it + 1) % checkpoint_every == 0)):
            _write_checkpoint(ckpt_dir, state, hp, it, collection)
    collection.state = state
    return collection


def _write_checkpoint(path, state, hp, it, collection):
    extra = {"survival_sum": collection.survival_sum,
             "n_samples": np.array(collection.n_samples, dtype=np.int64),
             "heldout": collection.heldout}
    tmp = path + ".tmp"
    try:
        if os.path.exists(tmp):
            shutil.rmtree(tmp)
        save_checkpoint(tmp, state, hp, it, extra=extra)
        if os.path.exists(path):
            shutil.rmtree(path)
        os.replace(tmp, path)
    except OSError as exc:
        raise RDBNError(f"writing checkpoint at iteration {it} failed: {exc}") from exc


def _truncate_log(path, last_iter):
    if path is None or not os.path.exists(path):
        return
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    keep = [rows[0]] + [r for r in rows[1:] if r and int(r[0]) <= last_iter]
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(keep)
