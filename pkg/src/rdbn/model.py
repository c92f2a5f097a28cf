"""Model state, concentrations, the Bernoulli-Poisson link and forward simulation.

Array layout (0-based ``l`` layer, ``t`` time, ``i`` node, ``k`` community):

* ``pi[l, t, i, :]``   membership distributions, shape ``(L, T, N, K)``
* ``beta[l, e]``       coefficient from layer ``l`` to ``l + 1`` on support
                       entry ``e`` of :attr:`Support.beta_*`, shape ``(L-1, nnz_b)``
* ``gamma[l, e]``      coefficient from ``t - 1`` to ``t`` within layer ``l`` on
                       entry ``e`` of :attr:`Support.gamma_*`, shape ``(L, nnz_g)``
* ``X[t, i, k]``       latent counts; ``C[n, k1, k2]`` per positive link ``links[n]``
"""
from dataclasses import dataclass, field, asdict, replace
import json
import os

import numpy as np

from . import kernels
from .errors import ConsistencyError, DataError, ParameterError
from .graph import DynamicNetwork

FALLBACK_EVENTS = {"dirichlet": 0}


@dataclass
class Hyperparams:
    K: int = 10
    L: int = 3
    alpha: object = 0.1
    c_c: object = 1.0
    c_u: object = 1.0
    d_c: float = 1.0
    lambda1: float = 1.0
    lambda0: float = 1.0
    m_shape: object = None  # None: number of nodes
    iterations: int = 3000
    burn_in: int = 1500
    seed: int = 0
    resample_dc: bool = False

    def __post_init__(self):
        if int(self.K) < 1 or int(self.L) < 1:
            raise ParameterError("K and L must be at least 1")
        self.K, self.L = int(self.K), int(self.L)
        if int(self.iterations) < 1 or int(self.burn_in) < 0 or self.burn_in >= self.iterations:
            raise ParameterError("need iterations >= 1 and 0 <= burn_in < iterations")
        self.iterations, self.burn_in = int(self.iterations), int(self.burn_in)
        for name in ("d_c", "lambda1", "lambda0"):
            if not float(getattr(self, name)) > 0:
                raise ParameterError(f"{name} must be positive")
        for name, length in (("alpha", self.K), ("c_c", self.L), ("c_u", self.L)):
            v = np.broadcast_to(np.asarray(getattr(self, name), dtype=np.float64), (length,))
            if np.any(v <= 0):
                raise ParameterError(f"{name} must be positive")
        if self.m_shape is not None and not float(self.m_shape) > 0:
            raise ParameterError("m_shape must be positive")

    @property
    def alpha_vec(self):
        return np.broadcast_to(np.asarray(self.alpha, dtype=np.float64), (self.K,)).copy()

    @property
    def cc_vec(self):
        return np.broadcast_to(np.asarray(self.c_c, dtype=np.float64), (self.L,)).copy()

    @property
    def cu_vec(self):
        return np.broadcast_to(np.asarray(self.c_u, dtype=np.float64), (self.L,)).copy()

    def m_prior_shape(self, n_nodes):
        return float(n_nodes if self.m_shape is None else self.m_shape)

    def to_dict(self):
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, np.ndarray):
                d[k] = v.tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _incoming(n_nodes, pairs, directed):
    """Receiver-major support for one time step: diagonal plus linked senders.

    ``pairs`` are ``(i', i)`` rows meaning ``i'`` links to ``i``.
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if not directed:
        pairs = np.concatenate([pairs, pairs[:, ::-1]])
    diag = np.arange(n_nodes, dtype=np.int64)
    src = np.concatenate([diag, pairs[:, 0]])
    dst = np.concatenate([diag, pairs[:, 1]])
    key = np.unique(dst * n_nodes + src)
    dst, src = key // n_nodes, key % n_nodes
    counts = np.bincount(dst, minlength=n_nodes)
    return counts, src, dst


@dataclass(frozen=True)
class Support:
    """Sparse supports of the propagation coefficients.

    ``beta_ptr[t, i]:beta_ptr[t, i + 1]`` are the entries feeding node ``i`` at
    time ``t`` across layers; ``gamma_ptr`` likewise for the entries feeding
    ``(i, t)`` from step ``t - 1`` (empty at ``t = 0``).
    """

    n_nodes: int
    n_steps: int
    beta_ptr: np.ndarray
    beta_src: np.ndarray
    beta_dst: np.ndarray
    gamma_ptr: np.ndarray
    gamma_src: np.ndarray
    gamma_dst: np.ndarray

    @property
    def beta_diag(self):
        return self.beta_src == self.beta_dst

    @property
    def gamma_diag(self):
        return self.gamma_src == self.gamma_dst

    @property
    def nnz_beta(self):
        return int(self.beta_src.size)

    @property
    def nnz_gamma(self):
        return int(self.gamma_src.size)

    @classmethod
    def from_steps(cls, n_nodes, beta_pairs, gamma_pairs, directed=True):
        """Build from per-step sender->receiver pair lists (``gamma_pairs[0]`` ignored)."""
        T = len(beta_pairs)
        parts = {}
        for name, plist in (("beta", beta_pairs), ("gamma", gamma_pairs)):
            ptr = np.zeros((T, n_nodes + 1), dtype=np.int64)
            srcs, dsts = [], []
            offset = 0
            for t in range(T):
                if name == "gamma" and t == 0:
                    counts = np.zeros(n_nodes, dtype=np.int64)
                    src = dst = np.zeros(0, dtype=np.int64)
                else:
                    counts, src, dst = _incoming(n_nodes, plist[t], directed)
                ptr[t, 0] = offset
                ptr[t, 1:] = offset + np.cumsum(counts)
                offset = ptr[t, -1]
                srcs.append(src)
                dsts.append(dst)
            parts[name] = (ptr, np.concatenate(srcs), np.concatenate(dsts))
        return cls(n_nodes, T, *parts["beta"], *parts["gamma"])

    @classmethod
    def from_links(cls, n_nodes, n_steps, links, directed=True):
        """Inference support: beta at ``t`` from links at ``t``, gamma into ``t`` from ``t - 1``."""
        links = np.asarray(links, dtype=np.int64).reshape(-1, 3)
        by_t = [links[links[:, 0] == t, 1:] for t in range(n_steps)]
        gamma = [np.zeros((0, 2), np.int64)] + by_t[:-1]
        return cls.from_steps(n_nodes, by_t, gamma, directed)

    def arrays(self):
        return {f"support_{k}": getattr(self, k) for k in
                ("beta_ptr", "beta_src", "beta_dst", "gamma_ptr", "gamma_src", "gamma_dst")}


@dataclass
class LatentState:
    pi: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    X: np.ndarray
    C: np.ndarray
    Lambda: np.ndarray
    M: float
    support: Support
    links: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))
    d_c: float = 1.0

    @property
    def L(self):
        return self.pi.shape[0]

    @property
    def T(self):
        return self.pi.shape[1]

    @property
    def N(self):
        return self.pi.shape[2]

    @property
    def K(self):
        return self.pi.shape[3]

    def copy(self):
        return replace(self, pi=self.pi.copy(), beta=self.beta.copy(), gamma=self.gamma.copy(),
                       X=self.X.copy(), C=self.C.copy(), Lambda=self.Lambda.copy(),
                       links=self.links.copy())

    def check(self, tol=1e-9):
        """Raise :class:`ConsistencyError` if a structural invariant fails."""
        if not np.allclose(self.pi.sum(axis=-1), 1.0, atol=tol, rtol=0):
            raise ConsistencyError("membership distribution does not sum to one")
        if np.any(self.pi < 0) or np.any(self.beta < 0) or np.any(self.gamma < 0):
            raise ConsistencyError("negative probability or coefficient")
        if self.beta.shape != (max(self.L - 1, 0), self.support.nnz_beta):
            raise ConsistencyError("beta does not match its support")
        if self.gamma.shape != (self.L, self.support.nnz_gamma):
            raise ConsistencyError("gamma does not match its support")
        if np.any(self.X < 0) or np.any(self.C < 0):
            raise ConsistencyError("negative count")
        if len(self.C) != len(self.links):
            raise ConsistencyError("C is not aligned with the link list")
        if len(self.C) and np.any(self.C.sum(axis=(1, 2)) < 1):
            raise ConsistencyError("a positive link carries no latent count")
        if not (self.M > 0 and np.all(self.Lambda > 0)):
            raise ConsistencyError("M and Lambda must be positive")


def psi_block(state, t, l, temporal=True):
    """Concentrations for every node at ``(t, l)``."""
    N, K = state.N, state.K
    out = np.zeros((N, K))
    sup = state.support
    accumulate = kernels.get("psi_accumulate")
    if l > 0:
        lo, hi = sup.beta_ptr[t, 0], sup.beta_ptr[t, N]
        accumulate(out, sup.beta_dst[lo:hi], sup.beta_src[lo:hi], state.beta[l - 1, lo:hi], state.pi[l - 1, t])
    if temporal and t > 0:
        lo, hi = sup.gamma_ptr[t, 0], sup.gamma_ptr[t, N]
        accumulate(out, sup.gamma_dst[lo:hi], sup.gamma_src[lo:hi], state.gamma[l, lo:hi], state.pi[l, t - 1])
    return out


def compute_psi(state, i, t, l):
    """Concentration vector of node ``i`` at time ``t``, layer ``l`` (0-based)."""
    if not (0 <= i < state.N and 0 <= t < state.T and 0 <= l < state.L):
        raise ParameterError(f"index (i={i}, t={t}, l={l}) out of range")
    sup = state.support
    psi = np.zeros(state.K)
    if l > 0:
        e = np.arange(sup.beta_ptr[t, i], sup.beta_ptr[t, i + 1])
        psi += state.beta[l - 1, e] @ state.pi[l - 1, t, sup.beta_src[e]]
    if t > 0:
        e = np.arange(sup.gamma_ptr[t, i], sup.gamma_ptr[t, i + 1])
        psi += state.gamma[l, e] @ state.pi[l, t - 1, sup.gamma_src[e]]
    return psi


def concentration_base(psi, alpha, t, l):
    """Mass added on top of ``psi``: ``alpha`` at the root, ``1/K`` where ``psi`` vanishes.

    Returns ``(base, n_fallback)``; ``psi`` may be one vector or a ``(N, K)`` block.
    """
    psi = np.asarray(psi, dtype=np.float64)
    base = np.zeros_like(psi)
    if t == 0 and l == 0:
        base += alpha
    empty = ~np.any((psi + base) > 0, axis=-1)
    n_fb = int(np.count_nonzero(empty))
    if n_fb:
        base[empty] = 1.0 / psi.shape[-1]
        FALLBACK_EVENTS["dirichlet"] += n_fb
    return base, n_fb


def dirichlet_concentration(psi, alpha, t, l):
    """Prior concentration of a membership vector: ``psi (+ alpha at t = l = 0)``."""
    base, _ = concentration_base(psi, np.asarray(alpha, dtype=np.float64), t, l)
    return np.asarray(psi, dtype=np.float64) + base


def link_rate(state, i, j, t):
    if i == j:
        raise ParameterError("self-pairs have no link rate")
    return float(state.X[t, i] @ state.Lambda @ state.X[t, j])


def link_prob(rate):
    rate = np.asarray(rate, dtype=np.float64)
    if np.any(rate < 0):
        raise ParameterError("rate must be non-negative")
    out = -np.expm1(-rate)
    return float(out) if out.ndim == 0 else out


def link_weights(X, Lambda, links):
    """Per-link cell weights ``X[t,i,k1] * Lambda[k1,k2] * X[t,j,k2]`` and their sums."""
    t, i, j = links[:, 0], links[:, 1], links[:, 2]
    Xi = X[t, i].astype(np.float64)
    Xj = X[t, j].astype(np.float64)
    w = Xi[:, :, None] * Lambda[None, :, :] * Xj[:, None, :]
    flat = w.reshape(len(links), Lambda.size)
    rate = np.cumsum(flat, axis=1)[:, -1] if flat.shape[1] else np.zeros(len(links))
    return flat, rate


def draw_coefficients(support, hp, rng, d_c=None):
    """Prior draws of ``beta`` and ``gamma`` on a fixed support."""
    d_c = hp.d_c if d_c is None else d_c
    cc, cu = hp.cc_vec, hp.cu_vec
    L = hp.L
    beta = np.zeros((max(L - 1, 0), support.nnz_beta))
    for l in range(L - 1):
        shape = np.where(support.beta_diag, cc[l + 1], cu[l + 1])
        beta[l] = rng.gamma(shape, 1.0 / d_c)
    gamma = np.zeros((L, support.nnz_gamma))
    for l in range(L):
        shape = np.where(support.gamma_diag, cc[l], cu[l])
        gamma[l] = rng.gamma(shape, 1.0 / d_c)
    return beta, gamma


def sample_prior_state(hp, support, rng, Lambda=None, M=None):
    """Draw every latent variable from the prior on a fixed support (no links)."""
    N, T, K, L = support.n_nodes, support.n_steps, hp.K, hp.L
    if Lambda is None:
        Lambda = rng.gamma(hp.lambda1, 1.0 / hp.lambda0, size=(K, K))
    if M is None:
        M = rng.gamma(hp.m_prior_shape(N), 1.0)
    beta, gamma = draw_coefficients(support, hp, rng)
    state = LatentState(pi=np.zeros((L, T, N, K)), beta=beta, gamma=gamma,
                        X=np.zeros((T, N, K), dtype=np.int64),
                        C=np.zeros((0, K, K), dtype=np.int64),
                        Lambda=np.asarray(Lambda, dtype=np.float64), M=float(M),
                        support=support, d_c=hp.d_c)
    alpha = hp.alpha_vec
    dirichlet = kernels.get("dirichlet_rows")
    for t in range(T):
        for l in range(L):
            psi = psi_block(state, t, l)
            base, _ = concentration_base(psi, alpha, t, l)
            state.pi[l, t] = dirichlet(rng, psi + base)
    state.X = rng.poisson(state.M * state.pi[L - 1]).astype(np.int64)
    return state


def simulate_links(X, Lambda, rng, directed=True):
    """Draw latent link counts for every modelled dyad at every step.

    Returns ``(links, C)`` restricted to dyads with a positive total.
    """
    T, N, K = X.shape
    links, Cs = [], []
    for t in range(T):
        pairs, C = simulate_step_links(X[t], Lambda, rng, directed)
        links.append(np.column_stack([np.full(len(pairs), t, dtype=np.int64), pairs]))
        Cs.append(C)
    return np.concatenate(links), np.concatenate(Cs)


def simulate_step_links(X_t, Lambda, rng, directed=True):
    N, K = X_t.shape
    Xf = X_t.astype(np.float64)
    rate = (Xf @ Lambda) @ Xf.T
    if directed:
        ii, jj = np.nonzero(~np.eye(N, dtype=bool))
    else:
        ii, jj = np.triu_indices(N, k=1)
    total = rng.poisson(rate[ii, jj])
    pos = total > 0
    ii, jj, total = ii[pos], jj[pos], total[pos]
    pairs = np.column_stack([ii, jj]).astype(np.int64)
    flat, r = link_weights(X_t[None], Lambda, np.column_stack([np.zeros_like(ii), ii, jj]))
    C = kernels.get("multinomial_rows")(rng, total.astype(np.int64), flat / r[:, None])
    return pairs, C.reshape(-1, K, K)


def forward_simulate(hp, n_nodes, n_steps, rng, directed=True, Lambda=None, M=None):
    """Sample ``(network, state)`` from the generative model.

    Coefficient supports at step ``t`` use the links generated at ``t - 1``
    (plus the diagonal), since same-step links do not exist yet when the
    memberships are drawn.  ``Lambda`` and ``M`` may be fixed by the caller.
    """
    K, L, N, T = hp.K, hp.L, int(n_nodes), int(n_steps)
    if N < 2 or T < 1:
        raise ParameterError("need at least two nodes and one time step")
    if Lambda is None:
        Lambda = rng.gamma(hp.lambda1, 1.0 / hp.lambda0, size=(K, K))
    Lambda = np.array(Lambda, dtype=np.float64).reshape(K, K)
    if M is None:
        M = rng.gamma(hp.m_prior_shape(N), 1.0)
    M = float(M)
    cc, cu, alpha = hp.cc_vec, hp.cu_vec, hp.alpha_vec
    accumulate = kernels.get("psi_accumulate")
    dirichlet = kernels.get("dirichlet_rows")
    pi = np.zeros((L, T, N, K))
    X = np.zeros((T, N, K), dtype=np.int64)
    prev = np.zeros((0, 2), dtype=np.int64)
    step_pairs, betas, gammas, links, Cs = [], [], [], [], []
    for t in range(T):
        step_pairs.append(prev)
        _, src, dst = _incoming(N, prev, directed)
        diag = src == dst
        b = np.array([rng.gamma(np.where(diag, cc[l + 1], cu[l + 1]), 1.0 / hp.d_c)
                      for l in range(L - 1)]).reshape(L - 1, src.size)
        if t > 0:
            g = np.array([rng.gamma(np.where(diag, cc[l], cu[l]), 1.0 / hp.d_c) for l in range(L)])
        else:
            g = np.zeros((L, 0))
        betas.append(b)
        gammas.append(g)
        for l in range(L):
            psi = np.zeros((N, K))
            if l > 0:
                accumulate(psi, dst, src, b[l - 1], pi[l - 1, t])
            if t > 0:
                accumulate(psi, dst, src, g[l], pi[l, t - 1])
            base, _ = concentration_base(psi, alpha, t, l)
            pi[l, t] = dirichlet(rng, psi + base)
        X[t] = rng.poisson(M * pi[L - 1, t])
        prev, C = simulate_step_links(X[t], Lambda, rng, directed)
        links.append(np.column_stack([np.full(len(prev), t, dtype=np.int64), prev]))
        Cs.append(C)
    support = Support.from_steps(N, step_pairs, step_pairs, directed)
    state = LatentState(pi=pi, beta=np.concatenate(betas, axis=1), gamma=np.concatenate(gammas, axis=1),
                        X=X, C=np.concatenate(Cs).astype(np.int64), Lambda=Lambda, M=M,
                        support=support, links=np.concatenate(links).astype(np.int64), d_c=hp.d_c)
    net = DynamicNetwork(N, T, state.links, directed)
    return net, state


# -- checkpoints -------------------------------------------------------------

STATE_FILES = ("pi", "beta", "gamma", "X", "C", "Lambda", "links")


def save_checkpoint(path, state, hp, iteration, extra=None, meta=None):
    """Write one ``.npy`` file per variable family plus ``manifest.json``."""
    os.makedirs(path, exist_ok=True)
    arrays = {name: getattr(state, name) for name in STATE_FILES}
    arrays["M"] = np.array(state.M)
    arrays["d_c"] = np.array(state.d_c)
    arrays.update(state.support.arrays())
    arrays.update(extra or {})
    for name, arr in arrays.items():
        np.save(os.path.join(path, f"{name}.npy"), np.ascontiguousarray(arr), allow_pickle=False)
    manifest = {
        "format": "rdbn-checkpoint/1",
        "iteration": int(iteration),
        "hyperparams": hp.to_dict(),
        "shape": {"L": state.L, "T": state.T, "N": state.N, "K": state.K},
        "files": sorted(f"{name}.npy" for name in arrays),
        "meta": meta or {},
    }
    tmp = os.path.join(path, "manifest.json.tmp")
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, os.path.join(path, "manifest.json"))


def load_checkpoint(path):
    """Return ``(state, hp, iteration, extra_arrays, meta)``."""
    try:
        with open(os.path.join(path, "manifest.json")) as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"{path}: no checkpoint manifest") from None
    if manifest.get("format") != "rdbn-checkpoint/1":
        raise DataError(f"{path}: unknown checkpoint format")
    arrays = {}
    for fname in manifest["files"]:
        arrays[fname[:-4]] = np.load(os.path.join(path, fname), allow_pickle=False)
    shape = manifest["shape"]
    support = Support(shape["N"], shape["T"], *(arrays.pop(f"support_{k}") for k in
                      ("beta_ptr", "beta_src", "beta_dst", "gamma_ptr", "gamma_src", "gamma_dst")))
    state = LatentState(pi=arrays.pop("pi"), beta=arrays.pop("beta"), gamma=arrays.pop("gamma"),
                        X=arrays.pop("X"), C=arrays.pop("C"), Lambda=arrays.pop("Lambda"),
                        M=arrays.pop("M").item(), support=support, links=arrays.pop("links"),
                        d_c=arrays.pop("d_c").item())
    hp = Hyperparams.from_dict(manifest["hyperparams"])
    return state, hp, manifest["iteration"], arrays, manifest.get("meta", {})
