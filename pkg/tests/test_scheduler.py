"""Anchor selection and conflict scheduling against literal references."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dawn.core import DecodeState, SamplerConfig, StepPrediction
from dawn.depgraph import DependencyGraph, conflict_neighbors, graph_from_attention
from dawn.scheduler import (
    anchor_guided_select,
    collect_anchors,
    conflict_schedule,
    induced_positions,
    select_update_set,
)

from conftest import random_row_stochastic, reference_greedy


def graph_from_edge_list(n: int, edges: list[tuple[int, int]]) -> DependencyGraph:
    out: list[list[int]] = [[] for _ in range(n)]
    inn: list[list[int]] = [[] for _ in range(n)]
    for j, i in edges:
        out[j].append(i)
        inn[i].append(j)
    return DependencyGraph(
        n=n,
        out_edges=[sorted(s) for s in out],
        in_edges=[sorted(s) for s in inn],
        sinks=[],
    )


def make_state(prompt_len: int, gen_length: int,
               committed: dict[int, tuple[int, float]] | None = None) -> DecodeState:
    state = DecodeState.initial(tuple(range(prompt_len)), gen_length)
    for r, (token, conf) in (committed or {}).items():
        state.commit(r, token, conf)
    return state


def make_pred(confidence: dict[int, float], n: int) -> StepPrediction:
    conf = np.ones(n)
    for i, c in confidence.items():
        conf[i] = c
    return StepPrediction(
        top1=np.zeros(n, dtype=np.int64),
        confidence=conf,
        attention=np.full((n, n), 1.0 / n),
    )


class TestCollectAnchors:
    def test_fresh_state_prompts_only(self):
        state = make_state(3, 4)
        assert collect_anchors(state, SamplerConfig()).positions == [0, 1, 2]

    def test_high_confidence_commit_joins(self):
        state = make_state(3, 4, {1: (7, 0.95)})
        assert collect_anchors(state, SamplerConfig()).positions == [0, 1, 2, 4]

    def test_low_confidence_commit_excluded(self):
        state = make_state(3, 4, {1: (7, 0.85)})
        assert collect_anchors(state, SamplerConfig()).positions == [0, 1, 2]

    def test_boundary_is_inclusive(self):
        state = make_state(1, 2, {0: (3, 0.9)})
        assert collect_anchors(state, SamplerConfig()).positions == [0, 1]


class TestInducedPositions:
    def test_one_hop_successor_of_anchor(self):
        # Anchor 0, edge 0 -> 2, slot 2 masked: induced exactly {2}.
        state = make_state(1, 3)
        g = graph_from_edge_list(4, [(0, 2)])
        cfg = SamplerConfig(gen_length=3, block_length=3)
        anchors = collect_anchors(state, cfg)
        assert induced_positions(g, anchors, state, cfg) == {2}

    def test_attention_direction_produces_anchor_to_masked_edge(self):
        # Query i attends key a: A[i, a] >= tau_edge yields edge a -> i,
        # so the masked position i is induced by the anchor a.
        n, i, a = 16, 3, 0
        attn = np.full((n, n), 0.6 / n)
        attn[i, a] += 0.4
        attn /= attn.sum(axis=1, keepdims=True)
        g = graph_from_attention(attn, 0.07, 2.0)
        assert g.edges() == {(a, i)}
        state = make_state(1, n - 1)
        cfg = SamplerConfig(gen_length=n - 1, block_length=n - 1)
        assert induced_positions(g, collect_anchors(state, cfg), state, cfg) == {i}

    def test_empty_graph(self):
        state = make_state(2, 4)
        g = graph_from_edge_list(6, [])
        cfg = SamplerConfig(gen_length=4, block_length=4)
        assert induced_positions(g, collect_anchors(state, cfg), state, cfg) == set()

    def test_committed_positions_not_induced(self):
        state = make_state(1, 3, {1: (0, 0.5)})  # global 2 committed
        g = graph_from_edge_list(4, [(0, 2), (0, 3)])
        cfg = SamplerConfig(gen_length=3, block_length=3)
        assert induced_positions(g, collect_anchors(state, cfg), state, cfg) == {3}

    def test_outside_block_not_induced(self):
        state = make_state(1, 4)
        g = graph_from_edge_list(5, [(0, 1), (0, 3)])
        cfg = SamplerConfig(gen_length=4, block_length=2)
        # active block covers globals 1..2 only
        assert induced_positions(g, collect_anchors(state, cfg), state, cfg) == {1}

    def test_two_hop_flag(self):
        state = make_state(1, 4)
        g = graph_from_edge_list(5, [(0, 2), (2, 3)])
        cfg1 = SamplerConfig(gen_length=4, block_length=4, induced_hops=1)
        cfg2 = SamplerConfig(gen_length=4, block_length=4, induced_hops=2)
        anchors = collect_anchors(state, cfg1)
        assert induced_positions(g, anchors, state, cfg1) == {2}
        assert induced_positions(g, anchors, state, cfg2) == {2, 3}


class TestAnchorGuidedSelect:
    def _cfg(self):
        return SamplerConfig(tau_high=0.9, tau_induced=0.70, gen_length=4, block_length=4)

    def test_first_clause_high_confidence(self):
        state = make_state(1, 4)
        pred = make_pred({1: 0.93, 2: 0.5, 3: 0.5, 4: 0.5}, 5)
        g = graph_from_edge_list(5, [])
        assert anchor_guided_select(state, pred, g, self._cfg()) == [1]

    def test_induced_clause_relaxed_threshold(self):
        state = make_state(1, 4)
        pred = make_pred({1: 0.75, 2: 0.5, 3: 0.5, 4: 0.5}, 5)
        g = graph_from_edge_list(5, [(0, 1)])
        assert anchor_guided_select(state, pred, g, self._cfg()) == [1]

    def test_induced_below_relaxed_threshold(self):
        state = make_state(1, 4)
        pred = make_pred({1: 0.65, 2: 0.5, 3: 0.5, 4: 0.5}, 5)
        g = graph_from_edge_list(5, [(0, 1)])
        assert anchor_guided_select(state, pred, g, self._cfg()) == []

    def test_non_induced_mid_confidence_excluded(self):
        state = make_state(1, 4)
        pred = make_pred({1: 0.75, 2: 0.5, 3: 0.5, 4: 0.5}, 5)
        g = graph_from_edge_list(5, [])
        assert anchor_guided_select(state, pred, g, self._cfg()) == []


class TestConflictSchedule:
    def _chain(self):
        # Conflict chain 1-2-3 over globals, position 0 is the prompt.
        return graph_from_edge_list(4, [(1, 2), (2, 3)])

    def _cfg(self):
        return SamplerConfig(tau_low=0.8, gen_length=3, block_length=3)

    def test_middle_wins_and_silences_chain(self):
        state = make_state(1, 3)
        pred = make_pred({1: 0.82, 2: 0.85, 3: 0.81}, 4)
        out = conflict_schedule(state, pred, self._chain(), [], self._cfg())
        assert out == [2]

    def test_ends_win_when_middle_is_weaker(self):
        state = make_state(1, 3)
        pred = make_pred({1: 0.85, 2: 0.82, 3: 0.84}, 4)
        out = conflict_schedule(state, pred, self._chain(), [], self._cfg())
        assert out == [1, 3]

    def test_anchor_exclusion_swallows_chain(self):
        state = make_state(1, 3)
        pred = make_pred({1: 0.99, 2: 0.99, 3: 0.99}, 4)
        out = conflict_schedule(state, pred, self._chain(), [2], self._cfg())
        assert out == []

    def test_tau_low_gate(self):
        state = make_state(1, 3)
        pred = make_pred({1: 0.79, 2: 0.85, 3: 0.7}, 4)
        out = conflict_schedule(state, pred, self._chain(), [], self._cfg())
        assert out == [2]

    def test_tie_breaks_toward_lower_index(self):
        state = make_state(1, 3)
        pred = make_pred({1: 0.85, 2: 0.85, 3: 0.85}, 4)
        out = conflict_schedule(state, pred, self._chain(), [], self._cfg())
        assert out == [1, 3]


def _random_instance(draw_seed: int, n_max: int = 64):
    rng = np.random.default_rng(draw_seed)
    n = int(rng.integers(4, n_max + 1))
    p = int(rng.integers(0, min(4, n - 1) + 1))
    L = n - p
    state = DecodeState.initial(tuple(range(p)), L)
    for r in range(L):
        if rng.random() < 0.3:
            state.commit(r, 0, float(rng.random()))
    if not state.has_masked():
        state.response[0] = None
        state.commit_confidence[0] = None
    edges = set()
    for _ in range(int(rng.integers(0, 3 * n))):
        j, i = rng.integers(0, n, size=2)
        if j != i:
            edges.add((int(j), int(i)))
    g = graph_from_edge_list(n, sorted(edges))
    conf = rng.random(n)
    pred = StepPrediction(top1=np.zeros(n, dtype=np.int64), confidence=conf,
                          attention=np.full((n, n), 1.0 / n))
    block = int(rng.integers(1, L + 1))
    cfg = SamplerConfig(tau_low=float(rng.uniform(0.1, 0.9)), gen_length=L,
                        block_length=block)
    state.advance_block(block)
    masked = state.masked_in_block(block)
    u_anchor = [i for i in masked if rng.random() < 0.2]
    return state, pred, g, u_anchor, cfg


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_conflict_schedule_properties(seed):
    state, pred, g, u_anchor, cfg = _random_instance(seed)
    out = conflict_schedule(state, pred, g, u_anchor, cfg)
    masked = set(state.masked_in_block(cfg.block_length))
    chosen = set(out)
    assert len(out) == len(chosen)
    assert chosen <= masked
    for i in out:
        assert float(pred.confidence[i]) >= cfg.tau_low
        assert not chosen & conflict_neighbors(g, i) - {i}
        assert i not in u_anchor
        for a in u_anchor:
            assert i not in conflict_neighbors(g, a)
    # Maximality: every eligible leftover conflicts with something chosen.
    blocked = set(u_anchor)
    for a in u_anchor:
        blocked |= conflict_neighbors(g, a)
    for i in masked - chosen:
        if i in blocked or float(pred.confidence[i]) < cfg.tau_low:
            continue
        assert conflict_neighbors(g, i) & chosen, f"{i} could have been added"


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_conflict_schedule_matches_reference_trace(seed):
    state, pred, g, u_anchor, cfg = _random_instance(seed)
    out = conflict_schedule(state, pred, g, u_anchor, cfg)
    neighbors = {i: conflict_neighbors(g, i) for i in range(g.n)}
    expected = reference_greedy(
        {i: float(pred.confidence[i]) for i in range(g.n)},
        state.masked_in_block(cfg.block_length),
        neighbors, u_anchor, cfg.tau_low,
    )
    assert out == expected  # same picks in the same greedy order


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_conflict_schedule_deterministic(seed):
    state, pred, g, u_anchor, cfg = _random_instance(seed)
    a = conflict_schedule(state, pred, g, u_anchor, cfg)
    b = conflict_schedule(state, pred, g, u_anchor, cfg)
    assert a == b


class TestSelectUpdateSet:
    def test_fallback_when_everything_is_timid(self):
        state = make_state(1, 3)
        pred = make_pred({1: 0.3, 2: 0.35, 3: 0.2}, 4)
        g = graph_from_edge_list(4, [])
        cfg = SamplerConfig(gen_length=3, block_length=3)
        update = select_update_set(state, pred, g, cfg)
        assert update.fallback
        assert update.anchor_part == [] and update.conflict_part == [2]

    def test_fallback_tie_breaks_toward_lower_index(self):
        state = make_state(1, 3)
        pred = make_pred({1: 0.3, 2: 0.3, 3: 0.3}, 4)
        g = graph_from_edge_list(4, [])
        cfg = SamplerConfig(gen_length=3, block_length=3)
        assert select_update_set(state, pred, g, cfg).conflict_part == [1]

    def test_isolated_high_confidence_position(self):
        state = make_state(1, 3)
        pred = make_pred({1: 0.95, 2: 0.85, 3: 0.82}, 4)
        g = graph_from_edge_list(4, [(2, 3)])
        cfg = SamplerConfig(gen_length=3, block_length=3)
        update = select_update_set(state, pred, g, cfg)
        assert update.anchor_part == [1]
        assert update.conflict_part == [2]  # 3 conflicted away
        assert not update.fallback

    def test_raises_on_fully_committed_block(self):
        state = make_state(1, 2, {0: (0, 0.9), 1: (0, 0.9)})
        pred = make_pred({}, 3)
        g = graph_from_edge_list(3, [])
        with pytest.raises(ValueError):
            select_update_set(state, pred, g, SamplerConfig(gen_length=2, block_length=2))


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_update_set_invariants_full_pipeline(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(6, 24))
    p = int(rng.integers(1, 4))
    L = n - p
    state = DecodeState.initial(tuple(range(p)), L)
    for r in range(L):
        if rng.random() < 0.25:
            state.commit(r, 0, float(rng.random()))
    if not state.has_masked():
        state.response[0] = None
        state.commit_confidence[0] = None
    attn = random_row_stochastic(rng, n)
    conf = rng.random(n)
    fixed = [i for i in range(n) if i < p or state.response[i - p] is not None]
    conf[fixed] = 1.0
    pred = StepPrediction(top1=np.zeros(n, dtype=np.int64), confidence=conf, attention=attn)
    cfg = SamplerConfig(
        tau_high=float(rng.uniform(0.6, 1.0)),
        tau_low=float(rng.uniform(0.1, 0.6)),
        tau_induced=float(rng.uniform(0.1, 0.6)),
        tau_edge=float(rng.uniform(0.02, 0.3)),
        tau_sink=float(rng.uniform(0.01, 0.3)),
        gen_length=L,
        block_length=int(rng.integers(1, L + 1)),
    )
    state.advance_block(cfg.block_length)
    g = graph_from_attention(attn, cfg.tau_edge, cfg.tau_sink, cfg.sink_filter)
    update = select_update_set(state, pred, g, cfg)
    masked = set(state.masked_in_block(cfg.block_length))
    a, c = set(update.anchor_part), set(update.conflict_part)
    assert a | c, "update set may not be empty"
    assert not a & c
    assert (a | c) <= masked
    if not update.fallback:
        for i in c:
            assert not conflict_neighbors(g, i) & a
            assert not conflict_neighbors(g, i) & (c - {i})