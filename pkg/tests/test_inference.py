import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import make_state, random_links
from rdbn import inference
from rdbn.distributions import rng_stream, sample_log_beta
from rdbn.errors import ConsistencyError, DegenerateError, ParameterError, RDBNError
from rdbn.graph import DynamicNetwork, TrainingView, split_holdout
from rdbn.inference import (PropagationWorkspace, distribute_counts, draw_auxiliary, fit,
                            gibbs_iteration, heldout_survival, init_state, pair_sums, sample_beta_gamma,
                            sample_C, sample_lambda, sample_M, sample_pi, sample_X,
                            upward_backward_pass)
from rdbn.model import Hyperparams, forward_simulate, load_checkpoint


def view_of(state, heldout=None, directed=True):
    h = np.zeros((0, 3), np.int64) if heldout is None else np.asarray(heldout, np.int64)
    return TrainingView(state.N, state.T, directed, state.links, h)


# -- auxiliary draws -------------------------------------------------------------

def test_draw_auxiliary_trivial(rng):
    y, q = draw_auxiliary([0, 0], [1.0, 2.0], rng)
    assert y.tolist() == [0, 0] and q == 1.0
    y, q = draw_auxiliary([1, 0], [2.0, 3.0], rng)
    assert y.tolist() == [1, 0] and 0.0 < q < 1.0


def test_draw_auxiliary_crt_mean(rng):
    n = 20_000
    tot = sum(int(draw_auxiliary([5, 5], [1.0, 1.0], rng)[0].sum()) for _ in range(n))
    assert tot / n == pytest.approx(2 * sum(1 / j for j in range(1, 6)), abs=0.05)


def test_draw_auxiliary_degenerate(rng):
    with pytest.raises(DegenerateError):
        draw_auxiliary([2, 1], [0.0, 0.0], rng)
    with pytest.raises(ParameterError):
        draw_auxiliary([-1, 1], [1.0, 1.0], rng)


def split_state():
    """Node 1 at layer 1 receives from node 0 (weight 0.6) and itself (0.4)."""
    s = make_state(2, 1, 1, 2, links=[[0, 0, 1]], pi=np.ones(1), M=1.0)
    sup = s.support
    e = np.arange(sup.beta_ptr[0, 1], sup.beta_ptr[0, 2])
    assert sup.beta_src[e].tolist() == [0, 1]
    s.beta[0, e] = [0.6, 0.4]
    return s


def test_distribute_counts_trivial(rng):
    s = split_state()
    ze, zc, ae, ac = distribute_counts(0, 1, 0, 0, 1, s, rng)
    assert zc.sum() == 0 and ac.size == 0
    ze, zc, ae, ac = distribute_counts(7, 0, 0, 0, 1, s, rng)
    assert ze.size == 1 and zc.tolist() == [7]


def test_distribute_counts_fractions(rng):
    s = split_state()
    n = 20_000
    acc = np.zeros(2)
    for _ in range(n):
        acc += distribute_counts(10, 1, 0, 0, 1, s, rng)[1]
    np.testing.assert_allclose(acc / (10 * n), [0.6, 0.4], atol=0.01)


def test_distribute_counts_inconsistent(rng, monkeypatch):
    s = split_state()
    monkeypatch.setattr(inference, "psi_block", lambda *a, **k: np.full((2, 1), 5.0))
    with pytest.raises(ConsistencyError):
        distribute_counts(3, 1, 0, 0, 1, s, rng)


# -- upward-backward pass -----------------------------------------------------------

def reference_pass(state, rng):
    """Node-by-node upward-backward propagation written without the block machinery."""
    L, T, N, K = state.pi.shape
    sup = state.support
    m = np.zeros((L, T, N, K), np.int64)
    y = np.zeros((L, T, N, K), np.int64)
    m[L - 1] += state.X
    for t in reversed(range(T)):
        for l in reversed(range(L)):
            if t == 0 and l == 0:
                continue
            contrib = []  # per receiver: list of (layer, time, source, weight)
            for i in range(N):
                c = []
                if l > 0:
                    for e in range(sup.beta_ptr[t, i], sup.beta_ptr[t, i + 1]):
                        c.append((l - 1, t, sup.beta_src[e], state.beta[l - 1, e]))
                if t > 0:
                    for e in range(sup.gamma_ptr[t, i], sup.gamma_ptr[t, i + 1]):
                        c.append((l, t - 1, sup.gamma_src[e], state.gamma[l, e]))
                contrib.append(c)
            psi = np.zeros((N, K))
            for i in range(N):
                for k in range(K):
                    for (_, tt, src, w) in contrib[i]:
                        psi[i, k] += w * state.pi[l if tt < t else l - 1, tt, src, k]
            for i in range(N):
                for k in range(K):
                    if m[l, t, i, k] > 0:
                        y[l, t, i, k] = 1
                        for j in range(1, m[l, t, i, k]):
                            y[l, t, i, k] += rng.random() < psi[i, k] / (psi[i, k] + j)
            has = m[l, t].sum(axis=1) > 0
            if has.any():
                sample_log_beta(psi.sum(axis=1)[has], m[l, t].sum(axis=1)[has], rng)
            for i in range(N):
                for k in range(K):
                    if y[l, t, i, k] == 0:
                        continue
                    w = np.array([cw * state.pi[cl, ct, src, k] for (cl, ct, src, cw) in contrib[i]])
                    total = 0.0
                    for v in w:
                        total += v
                    counts = rng.multinomial(y[l, t, i, k], w / total)
                    for (cl, ct, src, _), n in zip(contrib[i], counts):
                        m[cl, ct, src, k] += n
    return m, y


@pytest.mark.parametrize("seed", range(5))
def test_upward_pass_matches_reference(backend, seed):
    links = random_links(3, 2, 0.5, seed)
    s = make_state(3, 2, 2, 2, links=links, beta=1.0, gamma=1.0, pi=np.full(2, 0.5), seed=seed)
    s.X = np.random.default_rng(seed).poisson(3.0, s.X.shape)
    ws = upward_backward_pass(s, view_of(s), rng_stream(seed, 5))
    m, y = reference_pass(s, rng_stream(seed, 5))
    assert np.array_equal(ws.m, m)
    assert np.array_equal(ws.y, y)


def test_upward_pass_single_step_has_no_A(rng):
    s = make_state(4, 1, 2, 3, links=random_links(4, 1, 0.5, 1))
    ws = upward_backward_pass(s, view_of(s), rng)
    assert ws.A.size == 0 and ws.m[0, 0].sum() > 0


def test_upward_pass_single_layer_single_step(rng):
    s = make_state(4, 1, 2, 1, links=random_links(4, 1, 0.5, 1))
    ws = upward_backward_pass(s, view_of(s), rng)
    assert np.array_equal(ws.m[0], s.X) and ws.y.sum() == 0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_upward_pass_invariants(seed):
    r = np.random.default_rng(seed)
    N, T, K, L = int(r.integers(2, 6)), int(r.integers(1, 4)), int(r.integers(1, 4)), int(r.integers(1, 4))
    s = make_state(N, T, K, L, links=random_links(N, T, 0.4, seed), seed=seed)
    ws = upward_backward_pass(s, view_of(s), rng_stream(seed, 1))
    assert np.all(ws.y <= ws.m)
    pos = ws.m > 0
    pos[0, 0] = False
    assert np.array_equal(ws.y > 0, pos)
    assert np.all((ws.log_q <= 0) & np.isfinite(ws.log_q))


# -- forward-downward -----------------------------------------------------------------

def test_sample_pi_posterior_mean(rng):
    hp = Hyperparams(K=2, L=1, iterations=2, burn_in=1)
    s = make_state(1 + 1, 2, 2, 1, gamma=2.0, pi=np.full(2, 0.5))
    ws = PropagationWorkspace.empty(s)
    ws.m[0, 0] = 10 ** 9          # keeps the t = 0 parents at [0.5, 0.5]
    ws.m[0, 1, 0] = [3, 1]
    n = 20_000
    acc = np.zeros(2)
    for _ in range(n):
        sample_pi(s, ws, rng, hp)
        acc += s.pi[0, 1, 0]
    np.testing.assert_allclose(acc / n, [4 / 6, 2 / 6], atol=0.01)
    assert np.allclose(s.pi.sum(axis=-1), 1.0)


def coefficient_state():
    hp = Hyperparams(K=2, L=2, iterations=2, burn_in=1, d_c=2.0)
    s = make_state(2, 1, 2, 2, links=[[0, 0, 1]])
    s.d_c = 1.0
    ws = PropagationWorkspace.empty(s)
    return hp, s, ws


def test_sample_beta_conjugate(rng):
    hp, s, ws = coefficient_state()
    sup = s.support
    diag = np.flatnonzero(sup.beta_diag & (sup.beta_dst == 1))[0]
    off = np.flatnonzero(~sup.beta_diag)[0]
    ws.Z[0, diag] = [3, 1]
    ws.log_q[1, 0, 1] = -1.0
    n = 20_000
    d = np.empty(n)
    o = np.empty(n)
    for r in range(n):
        sample_beta_gamma(s, ws, rng, hp)
        d[r], o[r] = s.beta[0, diag], s.beta[0, off]
    assert d.mean() == pytest.approx(2.5, abs=0.05)        # Gamma(1 + 4, scale 1/2)
    # off-diagonal entry also enters node 1, so it shares q; ΣZ = 0 there
    assert o.mean() == pytest.approx(0.5, abs=0.02)        # Gamma(1, scale 1/2)


def test_sample_beta_prior_redraw(rng):
    hp, s, ws = coefficient_state()
    s.d_c = 2.0
    n = 20_000
    acc = 0.0
    for _ in range(n):
        sample_beta_gamma(s, ws, rng, hp)
        acc += s.beta.mean()
    assert acc / n == pytest.approx(0.5, abs=0.02)


# -- observation layer -----------------------------------------------------------------

def test_sample_c_ztp_mean(rng):
    N = 60
    links = random_links(N, 1, 0.5, 3)
    s = make_state(N, 1, 1, 1, links=links, X=np.ones(N), Lambda=[[2.0]])
    view = view_of(s)
    tot = []
    for _ in range(20):
        tot.append(sample_C(s, view, rng).sum(axis=(1, 2)))
    tot = np.concatenate(tot)
    assert tot.min() >= 1
    assert tot.mean() == pytest.approx(2.0 / (1 - np.exp(-2.0)), abs=0.03)


def test_sample_c_concentrated_cell(rng):
    s = make_state(6, 2, 3, 1, links=random_links(6, 2, 0.5, 0), X=np.full((2, 6, 3), 2))
    s.Lambda = np.zeros((3, 3))
    s.Lambda[1, 2] = 0.7
    C = sample_C(s, view_of(s), rng)
    assert len(C) == len(s.links)
    mask = np.ones((3, 3), bool)
    mask[1, 2] = False
    assert C[:, mask].sum() == 0 and np.all(C[:, 1, 2] >= 1)


def test_sample_x_prior_only(rng):
    K, N = 3, 50
    s = make_state(N, 1, K, 1, pi=np.array([0.2, 0.3, 0.5]), Lambda=np.zeros((K, K)), M=6.0)
    view = view_of(s)
    draws = np.array([sample_X(s, view, rng).copy() for _ in range(200)]).reshape(-1, K)
    mean = np.array([1.2, 1.8, 3.0])
    se = np.sqrt(mean / len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - mean) < 3 * se)


def test_sample_x_zero_M(rng):
    s = make_state(5, 2, 2, 1, M=0.0)
    assert sample_X(s, view_of(s), rng).sum() == 0


def test_sample_x_feasible(rng):
    s = make_state(8, 2, 2, 2, links=random_links(8, 2, 0.4, 1), seed=1)
    view = view_of(s)
    sample_C(s, view, rng)
    for _ in range(10):
        sample_X(s, view, rng)
        sample_C(s, view, rng)
        t, i, j = s.links.T
        assert np.all(s.X[t, i][s.C.sum(axis=2) > 0] >= 1)
        assert np.all(s.X[t, j][s.C.sum(axis=1) > 0] >= 1)


def test_sample_lambda_conjugate(rng):
    hp = Hyperparams(K=1, L=1, iterations=2, burn_in=1, lambda1=1.0, lambda0=1.0)
    s = make_state(2, 1, 1, 1, links=[[0, 0, 1]], X=[[1], [2]])
    s.C[:] = 9
    view = view_of(s)
    assert pair_sums(s.X, view).sum() == 4
    n = 20_000
    acc = 0.0
    for _ in range(n):
        acc += sample_lambda(s, view, rng, hp)[0, 0]
    assert acc / n == pytest.approx(2.0, abs=0.05)


def test_sample_lambda_prior_redraw(rng):
    hp = Hyperparams(K=2, L=1, iterations=2, burn_in=1, lambda1=2.0, lambda0=4.0)
    s = make_state(3, 1, 2, 1, X=np.zeros((3, 2)))
    view = view_of(s)
    draws = np.array([sample_lambda(s, view, rng, hp).copy() for _ in range(10_000)])
    assert draws.mean() == pytest.approx(0.5, abs=0.02)


def brute_pair_sums(X, view):
    T, N, K = X.shape
    held = {tuple(r) for r in view.heldout.tolist()}
    out = np.zeros((T, K, K), np.int64)
    for t in range(T):
        for i in range(N):
            for j in range(N):
                if i == j or (not view.directed and i > j) or (t, i, j) in held:
                    continue
                out[t] += np.outer(X[t, i], X[t, j])
    return out


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), directed=st.booleans())
def test_pair_sums_oracle(seed, directed):
    r = np.random.default_rng(seed)
    T, N, K = 2, int(r.integers(2, 7)), int(r.integers(1, 4))
    X = r.poisson(1.5, (T, N, K))
    cand = random_links(N, T, 0.3, seed, directed)
    view = TrainingView(N, T, directed, np.zeros((0, 3), np.int64), cand)
    assert np.array_equal(pair_sums(X, view), brute_pair_sums(X, view))
    assert np.array_equal(pair_sums(2 * X, view), 4 * pair_sums(X, view))


def test_sample_m(rng):
    hp = Hyperparams(K=2, L=1, iterations=2, burn_in=1, m_shape=3.0)
    s = make_state(4, 2, 2, 1, X=np.full((2, 4, 2), 1))
    draws = np.array([sample_M(s, rng, hp) for _ in range(20_000)])
    assert draws.min() > 0
    assert draws.mean() == pytest.approx((3 + 16) / 9, rel=0.02)


def test_sample_m_empty(rng):
    hp = Hyperparams(K=1, L=1, iterations=2, burn_in=1, m_shape=1.0)
    s = make_state(1, 1, 1, 1, X=[[0]])
    draws = np.array([sample_M(s, rng, hp) for _ in range(20_000)])
    assert draws.mean() == pytest.approx(0.5, rel=0.03)


# -- full sweeps -----------------------------------------------------------------------

def support_pairs(state):
    sup = state.support
    return {(t, a, b) for t in range(state.T)
            for a, b in zip(sup.beta_src[sup.beta_ptr[t, 0]:sup.beta_ptr[t, -1]].tolist(),
                            sup.beta_dst[sup.beta_ptr[t, 0]:sup.beta_ptr[t, -1]].tolist()) if a != b}


@pytest.mark.parametrize("directed", [True, False])
def test_gibbs_keeps_state_valid(small_problem_factory, directed):
    hp, net, view, truth, mask = small_problem_factory(directed=directed, holdout=0.2)
    s = init_state(view, hp, 0)
    before = support_pairs(s)
    held = {tuple(r) for r in mask.dyads.tolist()}
    for it in range(5):
        s, ws = gibbs_iteration(s, view, hp, 0, it)
        s.check()
        assert ws.Z.shape[1] == s.support.nnz_beta and ws.A.shape[1] == s.support.nnz_gamma
    assert support_pairs(s) == before
    assert not held & {(t, a, b) for t, a, b in before}


def test_gibbs_deterministic(small_problem_factory):
    hp, net, view, _ = small_problem_factory()
    runs = []
    for _ in range(2):
        s = init_state(view, hp, 4)
        for it in range(4):
            gibbs_iteration(s, view, hp, 4, it)
        runs.append(s)
    for name in ("pi", "beta", "gamma", "X", "C", "Lambda"):
        assert np.array_equal(getattr(runs[0], name), getattr(runs[1], name))
    assert runs[0].M == runs[1].M


@pytest.mark.parametrize("scan", ["sequential", "interleaved"])
def test_scan_orders_run(small_problem_factory, scan):
    hp, net, view, _ = small_problem_factory()
    s = init_state(view, hp, 0)
    gibbs_iteration(s, view, hp, 0, 0, scan=scan)
    s.check()
    with pytest.raises(ParameterError):
        gibbs_iteration(s, view, hp, 0, 1, scan="random")


def heldout_loglik(state, mask):
    surv = np.clip(heldout_survival(state, mask.dyads), 1e-300, 1.0)
    lab = mask.labels.astype(bool)
    return float(np.log(surv[~lab]).sum() + np.log(-np.expm1(np.log(surv[lab]))).clip(-700).sum())


def test_heldout_loglik_trend(small_problem_factory):
    hp, net, view, truth, mask = small_problem_factory(seed=3, N=40, T=5, K=3, holdout=0.1, M=1.0,
                                                       assortative=True)
    hp = Hyperparams(K=3, L=2, iterations=200, burn_in=100, seed=3)
    s = init_state(view, hp, 3)
    ll = []
    for it in range(200):
        gibbs_iteration(s, view, hp, 3, it)
        ll.append(heldout_loglik(s, mask))
    ma = np.convolve(ll, np.ones(20) / 20, mode="valid")
    slope = np.polyfit(np.arange(ma.size), ma, 1)[0]
    assert slope >= 0 and ma[-1] > ma[0]


# -- fit -------------------------------------------------------------------------------

def test_fit_retains_post_burn_in(small_problem_factory):
    hp, net, view, truth, mask = small_problem_factory(holdout=0.2)
    hp = Hyperparams(K=2, L=2, iterations=2, burn_in=1)
    out = fit(view, mask, hp, keep_every=1)
    assert out.n_samples == 1 and len(out.states) == 1 and len(out.trace) == 2


class Interrupt(Exception):
    pass


def test_fit_resume_identical(tmp_path, small_problem_factory):
    hp, net, view, truth, mask = small_problem_factory(holdout=0.2)
    hp = Hyperparams(K=2, L=2, iterations=7, burn_in=3, seed=11)
    fit(view, mask, hp, out_dir=str(tmp_path / "a"), checkpoint_every=2)

    def stop(row):
        if row[0] == 4:
            raise Interrupt

    with pytest.raises(Interrupt):
        fit(view, mask, hp, out_dir=str(tmp_path / "b"), checkpoint_every=2, progress=stop)
    fit(view, mask, hp, out_dir=str(tmp_path / "b"), checkpoint_every=2, resume=True)
    for name in sorted(os.listdir(tmp_path / "a" / "checkpoint")):
        assert (tmp_path / "a" / "checkpoint" / name).read_bytes() == \
            (tmp_path / "b" / "checkpoint" / name).read_bytes(), name
    assert (tmp_path / "a" / "progress.csv").read_bytes() == (tmp_path / "b" / "progress.csv").read_bytes()


def test_fit_resume_rejects_changed_hyperparameters(tmp_path, small_problem_factory):
    hp, net, view, truth, mask = small_problem_factory(holdout=0.2)
    hp = Hyperparams(K=2, L=2, iterations=3, burn_in=1)
    fit(view, mask, hp, out_dir=str(tmp_path))
    with pytest.raises(ParameterError):
        fit(view, mask, Hyperparams(K=2, L=2, iterations=3, burn_in=1, alpha=0.5),
            out_dir=str(tmp_path), resume=True)
    with pytest.raises(RDBNError):
        fit(view, mask, hp, out_dir=str(tmp_path / "nothing"), resume=True)


def test_fit_checkpoint_failure_names_iteration(tmp_path, small_problem_factory):
    hp, net, view, truth, mask = small_problem_factory(holdout=0.2)
    hp = Hyperparams(K=2, L=2, iterations=3, burn_in=1)
    (tmp_path / "checkpoint.tmp").write_text("in the way")
    with pytest.raises(RDBNError, match="iteration 2"):
        fit(view, mask, hp, out_dir=str(tmp_path))


def test_fit_checkpoint_contents(tmp_path, small_problem_factory):
    hp, net, view, truth, mask = small_problem_factory(holdout=0.2)
    hp = Hyperparams(K=2, L=2, iterations=4, burn_in=1)
    res = fit(view, mask, hp, out_dir=str(tmp_path))
    state, hp2, it, extra, _ = load_checkpoint(str(tmp_path / "checkpoint"))
    assert it == 3 and hp2.to_dict() == hp.to_dict()
    assert extra["n_samples"].item() == 3
    np.testing.assert_array_equal(extra["survival_sum"], res.survival_sum)
    rows = (tmp_path / "progress.csv").read_text().splitlines()
    assert rows[0] == ",".join(inference.PROGRESS_COLUMNS) and len(rows) == 5
