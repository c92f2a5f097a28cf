"""Sampler checks and CSV exports of memberships and propagation strength.

CSV schemas (floats written with 17 significant digits, missing values empty):

``membership``   ``node,t,k0,...,k{K-1}``  one row per (node, time) at one layer
``propagation``  ``layer,t,beta_mean,gamma_mean,ratio``
``geweke``       ``statistic,z,forward_mean,chain_mean``
"""
from dataclasses import dataclass
import csv

import numpy as np

from .distributions import rng_stream
from .graph import TrainingView
from .inference import gibbs_iteration
from .model import Hyperparams, Support, sample_prior_state, simulate_links

DEFAULT_STATS = ("mean_pi0_layer0", "mean_beta", "mean_gamma", "Lambda00", "M")


def _stat(state, name):
    if name == "mean_pi0_layer0":
        return float(state.pi[0, :, :, 0].mean())
    if name == "mean_beta":
        return float(state.beta.mean()) if state.beta.size else float("nan")
    if name == "mean_gamma":
        return float(state.gamma.mean()) if state.gamma.size else float("nan")
    if name == "Lambda00":
        return float(state.Lambda[0, 0])
    if name == "M":
        return float(state.M)
    raise KeyError(f"unknown statistic {name!r}")


@dataclass
class GewekeConfig:
    n_rounds: int = 5000
    stats: tuple = DEFAULT_STATS
    z_threshold: float = 4.0
    n_batches: int = 50


def geweke_hyperparams(K=2, L=2):
    """Hyperparameters for the joint-distribution test.

    A small M and a Lambda prior with mean 0.1 keep the simulated links weakly
    informative about X; with dense links the X <-> C chain barely moves and
    the test would report slow mixing rather than errors.
    """
    return Hyperparams(K=K, L=L, iterations=2, burn_in=1, m_shape=1.0, lambda1=1.0, lambda0=10.0)


def geweke_support(n_nodes, n_steps, directed=True):
    """Fixed coefficient support for the joint-distribution test: a ring plus one chord."""
    pairs = [(i, (i + 1) % n_nodes) for i in range(n_nodes)] + [(0, min(2, n_nodes - 1))]
    pairs = np.array([p for p in pairs if p[0] != p[1]], dtype=np.int64)
    steps = [pairs] * n_steps
    return Support.from_steps(n_nodes, steps, steps, directed)


def _batch_se(x, n_batches):
    n = len(x) // n_batches * n_batches
    means = x[:n].reshape(n_batches, -1).mean(axis=1)
    return means.std(ddof=1) / np.sqrt(n_batches)


def geweke_check(hp=None, n_nodes=5, n_steps=2, seed=0, config=None, directed=True,
                 beta_shape_offset=0.0, scan="sequential"):
    """Compare forward draws of the joint with a Gibbs chain that re-simulates its data.

    The coefficient support is held fixed so that it does not depend on the
    simulated links.  Returns ``{statistic: (z, forward_mean, chain_mean)}``.
    ``beta_shape_offset`` perturbs the sampler's beta update; a correct
    test must then flag it.
    """
    config = config or GewekeConfig()
    hp = hp or geweke_hyperparams()
    names = tuple(config.stats)
    if not names:
        return {}
    support = geweke_support(n_nodes, n_steps, directed)
    n = int(config.n_rounds)

    rng = rng_stream(seed, 0)
    forward = np.empty((n, len(names)))
    for r in range(n):
        s = sample_prior_state(hp, support, rng)
        forward[r] = [_stat(s, k) for k in names]

    rng = rng_stream(seed, 1)
    state = sample_prior_state(hp, support, rng)
    chain = np.empty((n, len(names)))
    empty = np.zeros((0, 3), dtype=np.int64)
    for r in range(n):
        state.links, state.C = simulate_links(state.X, state.Lambda, rng, directed)
        view = TrainingView(n_nodes, n_steps, directed, state.links, empty)
        gibbs_iteration(state, view, hp, seed + 1, r, check=False,
                        beta_shape_offset=beta_shape_offset, scan=scan)
        chain[r] = [_stat(state, k) for k in names]

    out = {}
    for c, name in enumerate(names):
        f, g = forward[:, c], chain[:, c]
        se = np.sqrt(f.var(ddof=1) / n + _batch_se(g, config.n_batches) ** 2)
        z = (f.mean() - g.mean()) / se if se > 0 else 0.0
        out[name] = (float(z), float(f.mean()), float(g.mean()))
    return out


def write_geweke(result, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["statistic", "z", "forward_mean", "chain_mean"])
        for name, vals in result.items():
            w.writerow([name] + [_fmt(v) for v in vals])


def _fmt(x):
    return "" if x is None or not np.isfinite(x) else "%.17g" % x


def export_membership_heatmap(state, layer, nodes, path):
    """Write ``pi[layer]`` for the given nodes at every time step."""
    nodes = np.arange(state.N)[nodes] if isinstance(nodes, slice) else np.asarray(list(nodes), dtype=np.int64)
    K = state.K
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "t"] + [f"k{k}" for k in range(K)])
        for i in nodes:
            for t in range(state.T):
                w.writerow([int(i), t] + ["%.17g" % v for v in state.pi[layer, t, i]])


def read_membership_heatmap(path):
    """Return ``(index rows (node, t), values)`` from a membership CSV."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    idx = np.array([[int(r[0]), int(r[1])] for r in rows], dtype=np.int64).reshape(-1, 2)
    vals = np.array([[float(v) for v in r[2:]] for r in rows])
    return idx, vals


def propagation_summary(state):
    """Rows ``(layer, t, beta_mean, gamma_mean, ratio)``; ``None`` where a support is empty.

    ``beta_mean`` averages the coefficients feeding ``layer`` from the layer
    below at step ``t``; ``gamma_mean`` those feeding it from step ``t - 1``.
    """
    sup = state.support
    N = state.N
    rows = []
    for l in range(state.L):
        for t in range(state.T):
            b = g = None
            if l > 0:
                vals = state.beta[l - 1, sup.beta_ptr[t, 0]:sup.beta_ptr[t, N]]
                b = float(vals.mean()) if vals.size else None
            vals = state.gamma[l, sup.gamma_ptr[t, 0]:sup.gamma_ptr[t, N]]
            g = float(vals.mean()) if vals.size else None
            ratio = b / g if b is not None and g is not None and g > 0 else None
            rows.append((l, t, b, g, ratio))
    return rows


def export_propagation_summary(state, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["layer", "t", "beta_mean", "gamma_mean", "ratio"])
        for l, t, b, g, ratio in propagation_summary(state):
            w.writerow([l, t, _fmt(b), _fmt(g), _fmt(ratio)])
