"""Independent oracles and random generators shared across test modules."""

import numpy as np


def reachability_closure(weights):
    """Boolean reach[i, j] by Floyd-Warshall; deliberately not the
    matrix-power closure the library uses."""
    n = weights.shape[0]
    reach = (weights > 0) | np.eye(n, dtype=bool)
    for k in range(n):
        for i in range(n):
            for j in range(n):
                if reach[i, k] and reach[k, j]:
                    reach[i, j] = True
    return reach


def closure_roots(weights):
    """Vertices reachable from every vertex, per the closure oracle."""
    reach = reachability_closure(weights)
    return [k for k in range(weights.shape[0]) if reach[:, k].all()]


def random_digraph_weights(rng, n, density=0.3):
    w = (rng.random((n, n)) < density) * rng.uniform(0.5, 1.5, (n, n))
    np.fill_diagonal(w, 0.0)
    return w


def random_tree_digraph_weights(rng, n, extra=0.15):
    """Weights guaranteed to contain a spanning tree.

    Every vertex except the last in a random order gets one arc toward a
    later vertex, so the final vertex is reachable from all others; a
    sprinkle of extra arcs keeps the sample from being a bare tree.
    """
    order = rng.permutation(n)
    w = np.zeros((n, n))
    for pos in range(n - 1):
        target = order[rng.integers(pos + 1, n)]
        w[order[pos], target] = rng.uniform(0.5, 1.5)
    extra_arcs = (rng.random((n, n)) < extra) * rng.uniform(0.5, 1.5, (n, n))
    np.fill_diagonal(extra_arcs, 0.0)
    return np.maximum(w, extra_arcs)
