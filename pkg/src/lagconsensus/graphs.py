"""Directed weighted interaction graphs, Laplacians, and switching schedules.

Vertex i places weight w[i, j] on vertex j: an arc i -> j means "i listens
to j".  A graph *has a spanning tree* when some vertex k0 is reachable from
every other vertex along such arcs; k0 then acts as an information source
for the whole network, which is the structural condition every consensus
result here leans on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "DirectedGraph",
    "SwitchingSchedule",
    "laplacian",
    "has_spanning_tree",
    "union_graphs",
    "left_null_vector",
    "difference_operator",
    "difference_map",
    "generate_schedule",
    "fixed_schedule",
]

ZERO_EIG_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class DirectedGraph:
    """Weighted digraph on n vertices; weights[i, j] > 0 iff i listens to j."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError("weight matrix must be square")
        if (w < 0).any():
            raise ValueError("edge weights must be nonnegative")
        if np.diagonal(w).any():
            raise ValueError("self-loops (w[i, i] != 0) are not allowed")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def from_edges(cls, n, edges):
        """Build from (i, j, weight) triples with 0-based vertex indices."""
        w = np.zeros((n, n))
        for i, j, wt in edges:
            w[i, j] = wt
        return cls(w)

    def neighbors(self, i):
        """Vertices agent i listens to."""
        return np.flatnonzero(self.weights[i])

    def edge_count(self) -> int:
        return int(np.count_nonzero(self.weights))

    def __eq__(self, other):
        if not isinstance(other, DirectedGraph):
            return NotImplemented
        return np.array_equal(self.weights, other.weights)


def laplacian(graph: DirectedGraph) -> np.ndarray:
    """Laplacian with L[i, i] = sum_k w[i, k] and L[i, j] = -w[i, j].

    Rows sum to zero, so the all-ones vector always spans part of the
    kernel; it is the whole kernel exactly when the graph has a spanning
    tree.
    """
    lap = -graph.weights.copy()
    np.fill_diagonal(lap, graph.weights.sum(axis=1))
    return lap


def has_spanning_tree(graph: DirectedGraph):
    """Whether some vertex is reachable from all others; returns (flag, roots).

    Reachability closure by repeated boolean squaring, so paths of any
    length up to n are covered.
    """
    adj = (graph.weights > 0) | np.eye(graph.n, dtype=bool)
    reach = adj
    for _ in range(max(1, math.ceil(math.log2(max(graph.n, 2))))):
        reach = (reach.astype(np.uint8) @ reach.astype(np.uint8)) > 0
    roots = [int(k) for k in range(graph.n) if reach[:, k].all()]
    return bool(roots), roots


def union_graphs(graph_collection):
    """Union graph with per-edge weight = max across the members."""
    members = list(graph_collection)
    if not members:
        raise ValueError("union of an empty graph collection")
    n = members[0].n
    if any(g.n != n for g in members):
        raise ValueError("all graphs in a union must share the vertex count")
    return DirectedGraph(np.maximum.reduce([g.weights for g in members]))


def left_null_vector(lap, zero_tol=ZERO_EIG_TOL):
    """Nonnegative left null vector of a spanning-tree Laplacian, sum 1.

    Raises ValueError when the zero eigenvalue is not simple (no spanning
    tree): the nonnegative normalized vector is only guaranteed in the
    simple case.
    """
    lap = np.asarray(lap, dtype=float)
    eigenvalues = np.linalg.eigvals(lap)
    if np.count_nonzero(np.abs(eigenvalues) <= zero_tol) != 1:
        raise ValueError(
            "zero eigenvalue of the Laplacian is not simple; "
            "the graph has no directed spanning tree"
        )
    basis = scipy.linalg.null_space(lap.T)
    if basis.shape[1] != 1:
        raise ValueError("left kernel of the Laplacian is not one-dimensional")
    gamma = basis[:, 0]
    total = gamma.sum()
    if abs(total) < 1e-12:
        raise ValueError("left null vector has zero mean; cannot normalize")
    gamma = gamma / total
    if gamma.min() < -1e-8:
        raise ValueError("left null vector has negative components beyond roundoff")
    # Normalization theory gives gamma >= 0; scrub roundoff-scale negatives.
    gamma = np.clip(gamma, 0.0, None)
    return gamma / gamma.sum()


def difference_operator(n: int) -> np.ndarray:
    """(n-1) x n map of consecutive differences, rows e_i - e_{i+1}."""
    d = np.zeros((n - 1, n))
    idx = np.arange(n - 1)
    d[idx, idx] = 1.0
    d[idx, idx + 1] = -1.0
    return d


def difference_map(lap) -> np.ndarray:
    """Reduced matrix acting on consecutive differences: Omega @ D == D @ L.

    The construction D L pinv(D) is exact on the range of D because the
    Laplacian annihilates the all-ones kernel of D, so no information is
    lost in the projection.
    """
    lap = np.asarray(lap, dtype=float)
    d = difference_operator(lap.shape[0])
    return d @ lap @ np.linalg.pinv(d)


@dataclass(frozen=True, eq=False)
class SwitchingSchedule:
    """Right-continuous topology playback.

    graphs[indices[k]] rules the interval [times[k], times[k+1]); the last
    event extends forever.  Dwell bounds certify no chattering: every gap
    satisfies dwell_min <= gap < dwell_max.
    """

    graphs: tuple
    times: np.ndarray
    indices: np.ndarray
    dwell_min: float
    dwell_max: float

    def __post_init__(self):
        graphs = tuple(self.graphs)
        if not graphs:
            raise ValueError("schedule needs at least one graph")
        n = graphs[0].n
        if any(g.n != n for g in graphs):
            raise ValueError("all graphs in a schedule must share the vertex count")
        times = np.array(self.times, dtype=float)
        indices = np.array(self.indices, dtype=int)
        if times.ndim != 1 or times.shape != indices.shape or times.size == 0:
            raise ValueError("times and indices must be 1-d arrays of equal nonzero length")
        if times[0] != 0.0:
            raise ValueError("first switch event must sit at t = 0")
        if indices.min() < 0 or indices.max() >= len(graphs):
            raise ValueError("graph index out of range")
        gaps = np.diff(times)
        if (gaps <= 0).any():
            raise ValueError("event times must be strictly increasing")
        if gaps.size and (gaps < self.dwell_min - 1e-12).any():
            raise ValueError("an event gap undercuts dwell_min")
        if gaps.size and (gaps >= self.dwell_max).any():
            raise ValueError("an event gap reaches dwell_max")
        times.setflags(write=False)
        indices.setflags(write=False)
        object.__setattr__(self, "graphs", graphs)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "indices", indices)

    @property
    def n(self) -> int:
        return self.graphs[0].n

    def index_at(self, t: float) -> int:
        """Graph index ruling time t (right-continuous; clamped before t=0)."""
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return int(self.indices[max(k, 0)])

    def graph_at(self, t: float) -> DirectedGraph:
        return self.graphs[self.index_at(t)]

    def switch_times_in(self, t_end: float):
        """Interior event times in (0, t_end]."""
        mask = (self.times > 0.0) & (self.times <= t_end)
        return self.times[mask].copy()


def generate_schedule(graph_collection, period, duration, seed) -> SwitchingSchedule:
    """Random playback: a fresh uniform pick from the collection every `period`.

    Event k sits at k * period.  Draws are made one at a time so a longer
    duration extends a shorter one without reshuffling the shared prefix.
    """
    members = tuple(graph_collection)
    if not members:
        raise ValueError("graph set for a schedule must not be empty")
    if period <= 0:
        raise ValueError("switching period must be positive")
    if duration <= 0:
        raise ValueError("schedule duration must be positive")
    count = math.ceil(duration / period - 1e-9)
    rng = np.random.default_rng(seed)
    indices = np.array([int(rng.integers(len(members))) for _ in range(count)])
    times = np.arange(count) * period
    return SwitchingSchedule(members, times, indices, dwell_min=period, dwell_max=2.0 * period)


def fixed_schedule(graph_collection, index=0) -> SwitchingSchedule:
    """Degenerate schedule that plays one member of the collection forever."""
    members = tuple(graph_collection)
    if not 0 <= index < len(members):
        raise ValueError("fixed graph index out of range")
    return SwitchingSchedule(
        members, np.array([0.0]), np.array([index]), dwell_min=0.0, dwell_max=math.inf
    )
