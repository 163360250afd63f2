"""Times the compiled Leiden kernels against the pure-Python fallback.

Runs community detection on random weighted graphs of increasing size with
both backends, checks that the partitions agree exactly, and prints the
per-size timings and speedup.

Usage: python3 benchmarks/bench_community.py [--repeats N]
"""

import argparse
import sys
import time

import numpy as np

from graphdex.community import detect_communities, kernel_backend, quality
from graphdex.graph import GraphLayer


def random_layer(rng, n, extra_per_node=6):
    """Connected graph: random spanning tree plus extra random edges."""
    edges = {}
    perm = rng.permutation(n)
    for i in range(1, n):
        u = int(perm[i])
        v = int(perm[rng.integers(0, i)])
        edges[(min(u, v), max(u, v))] = float(rng.uniform(0.1, 1.0))
    for _ in range(n * extra_per_node):
        u, v = (int(x) for x in rng.integers(0, n, 2))
        if u != v:
            edges[(min(u, v), max(u, v))] = float(rng.uniform(0.1, 1.0))
    edge_list = [(u, v, w) for (u, v), w in sorted(edges.items())]
    return GraphLayer(0, list(range(n)), np.zeros((n, 2)), edge_list)


def time_kernel(layer, kernel, repeats):
    best = float("inf")
    part = None
    for _ in range(repeats):
        start = time.perf_counter()
        part = detect_communities(layer, seed=0, kernel=kernel)
        best = min(best, time.perf_counter() - start)
    return best, part


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--sizes", type=int, nargs="+", default=[100, 300, 1000, 3000])
    args = parser.parse_args(argv)

    if kernel_backend() != "compiled":
        print("compiled kernels unavailable; nothing to compare", file=sys.stderr)
        return 1

    rng = np.random.default_rng(7)
    print(f"{'nodes':>6} {'edges':>7} {'python':>10} {'compiled':>10} {'speedup':>8}  match")
    for n in args.sizes:
        layer = random_layer(rng, n)
        t_py, p_py = time_kernel(layer, "python", args.repeats)
        t_c, p_c = time_kernel(layer, "compiled", args.repeats)
        match = np.array_equal(p_py.assignment, p_c.assignment)
        q = quality(layer, p_c)
        print(
            f"{n:>6} {len(layer.edges):>7} {t_py * 1e3:>8.1f}ms {t_c * 1e3:>8.1f}ms "
            f"{t_py / t_c:>7.1f}x  {'yes' if match else 'NO'}  (quality {q:.4f})"
        )
        if not match:
            print("partition mismatch between kernels", file=sys.stderr)
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
