"""Hand-built sampler states for unit tests."""
import numpy as np

from rdbn.model import LatentState, Support


def make_state(N, T, K, L, links=None, directed=True, seed=0, beta=None, gamma=None, pi=None,
               X=None, Lambda=None, M=3.0):
    r = np.random.default_rng(seed)
    links = np.zeros((0, 3), np.int64) if links is None else np.asarray(links, np.int64).reshape(-1, 3)
    sup = Support.from_links(N, T, links, directed)
    K2 = (len(links), K, K)
    return LatentState(
        pi=r.dirichlet(np.ones(K), (L, T, N)) if pi is None else np.broadcast_to(pi, (L, T, N, K)).copy(),
        beta=(r.gamma(1.0, 1.0, (L - 1, sup.nnz_beta)) if beta is None
              else np.full((L - 1, sup.nnz_beta), float(beta))),
        gamma=(r.gamma(1.0, 1.0, (L, sup.nnz_gamma)) if gamma is None
               else np.full((L, sup.nnz_gamma), float(gamma))),
        X=r.poisson(2.0, (T, N, K)) if X is None else np.asarray(X, np.int64).reshape(T, N, K).copy(),
        C=np.ones(K2, np.int64) if len(links) else np.zeros(K2, np.int64),
        Lambda=r.gamma(1.0, 1.0, (K, K)) if Lambda is None else np.asarray(Lambda, float).reshape(K, K),
        M=M, support=sup, links=links)


def random_links(N, T, p, seed, directed=True):
    r = np.random.default_rng(seed)
    rows = [(t, i, j) for t in range(T) for i in range(N) for j in range(N)
            if i != j and (directed or i < j) and r.random() < p]
    return np.array(rows, np.int64).reshape(-1, 3)
