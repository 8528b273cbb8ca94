"""Dependency graph extraction from aggregated attention.

The attention matrix ``A`` is row-stochastic with ``A[i, j]`` the weight
query position ``i`` places on key position ``j``.  Two filters turn it
into a sparse directed graph over the full prompt+response window:

* sink removal: column ``j`` is an attention sink when its mean incoming
  weight (diagonal excluded, divided by the full dimension ``n``)
  strictly exceeds ``tau_sink``.  Sinks soak up attention regardless of
  content, so edges touching them carry no dependency signal and are
  dropped on both sides (as key and as query).
* thresholding: ``j -> i`` is an edge when ``A[i, j] >= tau_edge`` with
  ``i != j`` and neither endpoint a sink.  The edge runs from the
  attended-to position to the attending one: ``i`` depends on ``j``.

The sink comparison is strict and the edge comparison inclusive; both
boundaries are fixed here so results are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SamplerConfig, StepPrediction


@dataclass
class DependencyGraph:
    """Sparse successor/predecessor adjacency over window positions.

    ``out_edges[j]`` lists successors ``i`` of ``j`` (edge ``j -> i``),
    ``in_edges[i]`` the mirror; both ascending.  ``sinks`` is the sorted
    list of flagged positions, reported even when filtering is disabled.
    """

    n: int
    out_edges: list[list[int]]
    in_edges: list[list[int]]
    sinks: list[int]

    def num_edges(self) -> int:
        return sum(len(s) for s in self.out_edges)

    def edges(self) -> set[tuple[int, int]]:
        return {(j, i) for j in range(self.n) for i in self.out_edges[j]}


def column_means(attention: np.ndarray) -> np.ndarray:
    """Mean incoming attention per column with the diagonal excluded.

    The divisor is the full window size ``n``, not ``n - 1``: the score
    approximates the average mass an arbitrary query row spends on the
    column, and self-attention is excluded because it says nothing about
    influence on other positions.
    """
    if attention.ndim != 2 or attention.shape[0] != attention.shape[1]:
        raise ValueError(f"attention must be square, got {attention.shape}")
    n = attention.shape[0]
    col_sums = attention.sum(axis=0) - np.diag(attention)
    return col_sums / n


def detect_sinks(attention: np.ndarray, tau_sink: float) -> list[int]:
    """Columns whose mean incoming weight strictly exceeds ``tau_sink``."""
    means = column_means(attention)
    return [int(j) for j in np.flatnonzero(means > tau_sink)]


def graph_from_attention(attention: np.ndarray, tau_edge: float, tau_sink: float,
                         sink_filter: bool = True) -> DependencyGraph:
    """Threshold a raw attention matrix into a dependency graph.

    With ``sink_filter`` off the sink list is still computed and
    reported but no edge is removed on its account.
    """
    n = attention.shape[0]
    sinks = detect_sinks(attention, tau_sink)

    keep = attention >= tau_edge
    np.fill_diagonal(keep, False)
    if sink_filter and sinks:
        keep[sinks, :] = False
        keep[:, sinks] = False

    out_edges: list[list[int]] = [[] for _ in range(n)]
    in_edges: list[list[int]] = [[] for _ in range(n)]
    # nonzero iterates rows in order, so the adjacency lists come out sorted.
    for i, j in zip(*np.nonzero(keep)):
        out_edges[int(j)].append(int(i))
        in_edges[int(i)].append(int(j))
    return DependencyGraph(n=n, out_edges=out_edges, in_edges=in_edges, sinks=sinks)


def build_graph(pred: StepPrediction, cfg: SamplerConfig) -> DependencyGraph:
    """Per-step dependency graph from a model prediction."""
    return graph_from_attention(pred.attention, cfg.tau_edge, cfg.tau_sink,
                                sink_filter=cfg.sink_filter)


def conflict_neighbors(g: DependencyGraph, i: int) -> set[int]:
    """Undirected neighbourhood N(i): an edge in either direction conflicts."""
    if not 0 <= i < g.n:
        raise IndexError(f"position {i} out of range for {g.n}-node graph")
    return set(g.out_edges[i]) | set(g.in_edges[i])


def reachable_within(g: DependencyGraph, sources: list[int], hops: int) -> set[int]:
    """Positions reachable from ``sources`` along 1..hops successor steps."""
    reached: set[int] = set()
    frontier = set(sources)
    for _ in range(hops):
        nxt: set[int] = set()
        for j in frontier:
            nxt.update(g.out_edges[j])
        nxt -= reached
        reached |= nxt
        frontier = nxt
        if not frontier:
            break
    return reached


@dataclass
class SinkReport:
    """Per-position incoming-mass diagnostic for one attention matrix."""

    means: np.ndarray
    sinks: list[int]
    top_columns: list[tuple[int, float]]

    def rows(self, step: int) -> list[tuple[int, int, float, int]]:
        """CSV rows: (step, position, mean_incoming_mass, is_sink)."""
        flagged = set(self.sinks)
        return [
            (step, j, float(self.means[j]), int(j in flagged))
            for j in range(len(self.means))
        ]


def sink_report(attention: np.ndarray, tau_sink: float, top_k: int = 5) -> SinkReport:
    """Mean incoming mass per column, the flagged set, and the heaviest columns."""
    means = column_means(attention)
    sinks = [int(j) for j in np.flatnonzero(means > tau_sink)]
    order = sorted(range(len(means)), key=lambda j: (-means[j], j))[:top_k]
    top = [(int(j), float(means[j])) for j in order]
    return SinkReport(means=means, sinks=sinks, top_columns=top)
