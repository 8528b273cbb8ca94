"""Shared fixtures and independent reference implementations.

The reference functions here deliberately avoid the library's vectorized
code paths (naive double loops, literal greedy transcriptions) so that
agreement between the two is evidence, not tautology.
"""

from __future__ import annotations

import numpy as np
import pytest

from dawn.core import SamplerConfig
from dawn.toy import ToyGrammar, ToyOracle


@pytest.fixture
def default_grammar() -> ToyGrammar:
    return ToyGrammar()


@pytest.fixture
def default_oracle(default_grammar) -> ToyOracle:
    return ToyOracle(default_grammar)


@pytest.fixture
def toy_cfg() -> SamplerConfig:
    return SamplerConfig(gen_length=32, block_length=32)


def random_row_stochastic(rng: np.random.Generator, n: int,
                          spiky: bool = True) -> np.ndarray:
    """Random attention-like matrix; spiky rows concentrate mass so that
    edges and sinks actually appear at realistic thresholds."""
    if spiky:
        raw = rng.gamma(shape=0.3, scale=1.0, size=(n, n)) + 1e-12
    else:
        raw = rng.random((n, n)) + 1e-12
    return raw / raw.sum(axis=1, keepdims=True)


def naive_sinks(attention: np.ndarray, tau_sink: float) -> set[int]:
    """Double-loop transcription of the sink rule."""
    n = attention.shape[0]
    out = set()
    for j in range(n):
        total = 0.0
        for i in range(n):
            if i != j:
                total += attention[i, j]
        if total / n > tau_sink:
            out.add(j)
    return out


def naive_edges(attention: np.ndarray, tau_edge: float, tau_sink: float,
                sink_filter: bool = True) -> set[tuple[int, int]]:
    """Double-loop edge set {(j, i)}: query i attends key j."""
    n = attention.shape[0]
    sinks = naive_sinks(attention, tau_sink) if sink_filter else set()
    edges = set()
    for i in range(n):
        for j in range(n):
            if i == j or i in sinks or j in sinks:
                continue
            if attention[i, j] >= tau_edge:
                edges.add((j, i))
    return edges


def reference_greedy(confidence, candidates: list[int],
                     neighbors: dict[int, set[int]],
                     exclude: list[int], tau_low: float) -> list[int]:
    """Literal argmax-loop transcription of the conflict-selection rule,
    returning picks in order."""
    blocked = set(exclude)
    for i in exclude:
        blocked |= neighbors.get(i, set())
    pool = {i for i in candidates if i not in blocked and confidence[i] >= tau_low}
    picked = []
    while pool:
        best = None
        for i in sorted(pool):
            if best is None or confidence[i] > confidence[best]:
                best = i
        picked.append(best)
        pool.discard(best)
        pool -= neighbors.get(best, set())
    return picked


def random_grammar(rng: np.random.Generator, max_len: int = 24) -> ToyGrammar:
    """Random small grammar, occasionally with a sink column."""
    gen_length = int(rng.integers(2, max_len + 1))
    prompt_len = int(rng.integers(1, 5))
    k = int(rng.integers(2, 6))
    epsilon = float(rng.uniform(0.0, min(0.79 - 1.0 / k, 1.0 - 1.0 / k) * 0.99))
    n_pairs = int(rng.integers(0, gen_length // 2 + 1))
    slots = list(rng.permutation(gen_length)[: 2 * n_pairs])
    pairs = tuple((int(slots[2 * i]), int(slots[2 * i + 1])) for i in range(n_pairs))
    sink_position = None
    sink_mass = 0.3
    if rng.random() < 0.4:
        sink_position = int(rng.integers(0, prompt_len))
        sink_mass = float(rng.uniform(0.05, 0.45))
    pair_attention = float(rng.uniform(0.07, 1.0 - (sink_mass if sink_position is not None else 0.0)))
    return ToyGrammar(
        gen_length=gen_length,
        prompt_len=prompt_len,
        pairs=pairs,
        k=k,
        epsilon=epsilon,
        pair_attention=pair_attention,
        sink_position=sink_position,
        sink_mass=sink_mass,
    )


def random_config(rng: np.random.Generator, gen_length: int) -> SamplerConfig:
    tau_high = float(rng.uniform(0.5, 1.0))
    tau_low = float(rng.uniform(0.2, tau_high))
    tau_induced = float(rng.uniform(0.2, tau_high))
    block = int(rng.integers(1, gen_length + 1))
    return SamplerConfig(
        tau_high=tau_high,
        tau_low=tau_low,
        tau_induced=tau_induced,
        tau_edge=float(rng.uniform(0.01, 0.3)),
        tau_sink=float(rng.uniform(0.005, 0.4)),
        gen_length=gen_length,
        block_length=block,
        induced_hops=int(rng.integers(1, 3)),
        sink_filter=bool(rng.random() < 0.8),
    )
