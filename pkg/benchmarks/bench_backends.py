"""Time the numba kernels against the numpy fallback.

Runs full Gibbs iterations on a synthetic network under each backend,
checks that both backends produce the same state, and prints the median
seconds per iteration.

    python3 benchmarks/bench_backends.py --nodes 300 --steps 5 --edges 8000
"""
import argparse
import time

import numpy as np

from rdbn import kernels
from rdbn.graph import DynamicNetwork, TrainingView
from rdbn.inference import gibbs_iteration, init_state
from rdbn.model import Hyperparams


def synthetic_view(n_nodes, n_steps, n_edges, seed):
    r = np.random.default_rng(seed)
    rows = []
    for t in range(n_steps):
        k = r.choice(n_nodes * (n_nodes - 1), n_edges // n_steps, replace=False)
        i = k // (n_nodes - 1)
        j = k % (n_nodes - 1)
        rows.append(np.column_stack([np.full(k.size, t), i, j + (j >= i)]))
    return TrainingView.from_network(DynamicNetwork(n_nodes, n_steps, np.concatenate(rows), True))


def run(backend, view, hp, repeats):
    kernels.set_backend(backend)
    state = init_state(view, hp, hp.seed)
    gibbs_iteration(state, view, hp, hp.seed, 0)  # jit compilation happens here
    times = []
    for it in range(1, repeats + 1):
        t0 = time.perf_counter()
        gibbs_iteration(state, view, hp, hp.seed, it)
        times.append(time.perf_counter() - t0)
    return float(np.median(times)), state


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--nodes", type=int, default=300)
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--edges", type=int, default=8000)
    p.add_argument("--K", type=int, default=10)
    p.add_argument("--L", type=int, default=3)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    view = synthetic_view(args.nodes, args.steps, args.edges, args.seed)
    hp = Hyperparams(K=args.K, L=args.L, iterations=args.repeats + 1, burn_in=1, seed=args.seed)
    results = {b: run(b, view, hp, args.repeats) for b in ("numba", "numpy")}
    kernels.set_backend("numba")

    a, b = results["numba"][1], results["numpy"][1]
    same = all(np.array_equal(getattr(a, f), getattr(b, f)) for f in ("X", "C")) and \
        all(np.allclose(getattr(a, f), getattr(b, f), rtol=1e-12, atol=0) for f in ("pi", "beta", "gamma", "Lambda"))
    print(f"N={args.nodes} T={args.steps} links={len(view.links)} K={args.K} L={args.L}")
    for name, (secs, _) in results.items():
        print(f"{name:>6}: {secs:.3f} s/iteration")
    print(f"speedup: {results['numpy'][0] / results['numba'][0]:.1f}x, states agree: {same}")


if __name__ == "__main__":
    main()
