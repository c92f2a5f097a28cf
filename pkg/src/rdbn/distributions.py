"""Seeded samplers for every distribution the model uses.

Gamma is parameterised by shape and *scale* throughout; callers holding a
rate convert explicitly.  All samplers take a ``numpy.random.Generator``;
:func:`rng_stream` builds reproducible, mutually independent ones.
"""
import numpy as np

from . import kernels
from .errors import DegenerateError, ParameterError

# Stable identifiers for the per-iteration streams of each variable family.
FAMILIES = {
    "init": 0,
    "upward": 1,
    "forward": 2,
    "X": 3,
    "C": 4,
    "Lambda": 5,
    "M": 6,
    "holdout": 7,
    "simulate": 8,
    "hyper": 9,
}


def rng_stream(seed, *key):
    """Generator for substream ``key`` of ``seed``.

    Streams with different keys come from distinct ``SeedSequence`` spawn
    keys and are statistically independent; the same ``(seed, key)`` always
    reproduces the same draws.
    """
    if seed is None or int(seed) < 0:
        raise ParameterError(f"seed must be a non-negative integer, got {seed!r}")
    words = tuple(int(k) for k in key)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=words)))


def family_stream(seed, family, iteration):
    return rng_stream(seed, iteration, FAMILIES[family])


def _positive(name, value):
    arr = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ParameterError(f"{name} must be positive and finite, got {value!r}")
    return arr


def sample_gamma(shape, scale, rng, size=None):
    _positive("shape", shape)
    _positive("scale", scale)
    return rng.gamma(shape, scale, size=size)


def sample_beta(a, b, rng, size=None):
    _positive("a", a)
    _positive("b", b)
    return rng.beta(a, b, size=size)


def sample_log_beta(a, b, rng):
    """``log`` of Beta(a, b) draws, accurate when ``a`` is tiny.

    Uses ``G_a / (G_a + G_b)`` with ``log G_a = log G_{a+1} + log(U) / a`` for
    ``a < 1``, so the result stays finite where the draw itself underflows.
    Draws: gammas for ``a`` (boosted), gammas for ``b``, then the uniforms.
    """
    a = _positive("a", a)
    b = _positive("b", b)
    a, b = np.broadcast_arrays(a, b)
    shape = a.shape
    a, b = a.ravel(), b.ravel()
    small = a < 1.0
    la = np.log(rng.standard_gamma(np.where(small, a + 1.0, a)))
    lb = np.log(rng.standard_gamma(b))
    n_small = int(np.count_nonzero(small))
    if n_small:
        la[small] += np.log(rng.random(n_small)) / a[small]
    out = (la - np.logaddexp(la, lb)).reshape(shape)
    return out if out.ndim else float(out)


def sample_poisson(rate, rng, size=None):
    arr = np.asarray(rate, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ParameterError(f"rate must be non-negative, got {rate!r}")
    return rng.poisson(rate, size=size)


def sample_dirichlet(concentration, rng):
    """One draw from Dirichlet(concentration); zero entries give zero mass."""
    conc = np.asarray(concentration, dtype=np.float64)
    if conc.ndim != 1 or conc.size == 0:
        raise ParameterError("concentration must be a non-empty vector")
    if np.any(conc < 0) or not np.all(np.isfinite(conc)):
        raise ParameterError(f"concentration must be non-negative, got {concentration!r}")
    if not np.any(conc > 0):
        raise DegenerateError("all-zero Dirichlet concentration")
    return kernels.get("dirichlet_rows")(rng, conc[None, :])[0]


def sample_multinomial(n, probs, rng):
    n = int(n)
    p = np.asarray(probs, dtype=np.float64)
    if n < 0:
        raise ParameterError(f"number of trials must be non-negative, got {n}")
    if p.ndim != 1 or p.size == 0 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ParameterError("probs must be a probability vector")
    return kernels.get("multinomial_rows")(rng, np.array([n], dtype=np.int64), p[None, :])[0]


def sample_crt(customers, concentration, rng, size=None):
    """Number of tables occupied by ``customers`` under concentration ``a``.

    Exact construction: ``1 + sum_{j=1}^{m-1} Bernoulli(a / (a + j))``.
    """
    m = np.asarray(customers)
    if np.any(m < 0) or not np.issubdtype(m.dtype, np.integer):
        raise ParameterError(f"customers must be non-negative integers, got {customers!r}")
    _positive("concentration", concentration)
    m, a = np.broadcast_arrays(m.astype(np.int64), np.asarray(concentration, dtype=np.float64))
    if size is not None:
        m = np.broadcast_to(m, size)
        a = np.broadcast_to(a, size)
    flat_m = np.ascontiguousarray(m, dtype=np.int64).reshape(-1, 1)
    flat_a = np.ascontiguousarray(a, dtype=np.float64).reshape(-1, 1)
    out = kernels.get("crt_counts")(rng, flat_m, flat_a).reshape(m.shape)
    return out if out.ndim else int(out)


def sample_ztp(rate, rng, size=None):
    """Poisson(rate) conditioned on being at least one."""
    rate = _positive("rate", rate)
    if size is not None:
        rate = np.broadcast_to(rate, size)
    flat = np.ascontiguousarray(rate, dtype=np.float64).reshape(-1)
    out = kernels.get("ztp_draws")(rng, flat).reshape(rate.shape)
    return out if out.ndim else int(out)


def sample_categorical(weights, rng, size=None):
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ParameterError("weights must be a non-empty vector")
    if np.any(w < 0) or not np.all(np.isfinite(w)) or not np.any(w > 0):
        raise ParameterError("weights must be non-negative with a positive sum")
    cs = np.cumsum(w)
    u = rng.random(size)
    idx = np.searchsorted(cs, u * cs[-1], side="right")
    return np.minimum(idx, w.size - 1) if size is not None else int(min(idx, w.size - 1))
