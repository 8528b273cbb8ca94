"""Per-step selection of the parallel update set.

Two routes feed one commit per denoising step (all positions global
window indices, restricted to masked slots in the active block):

* anchor-guided: anchors are prompt positions plus response positions
  committed at confidence >= tau_high.  Masked positions reachable from
  an anchor along dependency edges (``induced_hops`` steps, default one
  hop) form the induced set I; their conditioning context is already
  fixed, so the relaxed bar tau_induced applies.  U_anchor collects
  masked in-block positions with c >= tau_high outright plus induced
  positions with c >= tau_induced.
* conflict-based: remaining candidates with c >= tau_low are greedily
  taken in decreasing confidence (ties toward the lower index), each
  pick excluding its own graph neighbours, after first excluding
  U_anchor and its neighbours.  The result is a maximal independent set
  over the eligible candidates, so no two same-step commits share a
  dependency edge in either direction.

When both routes come up empty the single most confident masked
position in the block commits anyway; without that fallback a block of
all-low-confidence positions would stall the decode loop forever.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import DecodeState, SamplerConfig, StepPrediction
from .depgraph import DependencyGraph, conflict_neighbors, reachable_within


@dataclass
class AnchorSet:
    """Trusted context positions: prompts plus high-confidence commits."""

    positions: list[int]


@dataclass
class UpdateSet:
    """Positions chosen for one parallel commit, split by route.

    ``conflict_part`` preserves greedy pick order.  ``fallback`` marks
    the forced single-position commit used when both routes are empty
    (the fallback position is carried in ``conflict_part``).
    """

    anchor_part: list[int]
    conflict_part: list[int]
    fallback: bool = False

    def chosen(self) -> list[int]:
        return sorted(self.anchor_part + self.conflict_part)


def collect_anchors(state: DecodeState, cfg: SamplerConfig) -> AnchorSet:
    """Prompt positions and committed positions with confidence >= tau_high."""
    p = state.prompt_len
    out = list(range(p))
    for r, token in enumerate(state.response):
        if token is None:
            continue
        conf = state.commit_confidence[r]
        if conf is not None and conf >= cfg.tau_high:
            out.append(p + r)
    return AnchorSet(positions=out)


def induced_positions(g: DependencyGraph, anchors: AnchorSet, state: DecodeState,
                      cfg: SamplerConfig) -> set[int]:
    """Masked in-block positions with a dependency path from an anchor."""
    masked = set(state.masked_in_block(cfg.block_length))
    reached = reachable_within(g, anchors.positions, cfg.induced_hops)
    return reached & masked


def anchor_guided_select(state: DecodeState, pred: StepPrediction,
                         g: DependencyGraph, cfg: SamplerConfig) -> list[int]:
    """U_anchor: high-confidence positions plus relaxed-bar induced ones."""
    anchors = collect_anchors(state, cfg)
    induced = induced_positions(g, anchors, state, cfg)
    out = []
    for i in state.masked_in_block(cfg.block_length):
        c = float(pred.confidence[i])
        if c >= cfg.tau_high or (i in induced and c >= cfg.tau_induced):
            out.append(i)
    return out


def conflict_schedule(state: DecodeState, pred: StepPrediction, g: DependencyGraph,
                      u_anchor: list[int], cfg: SamplerConfig) -> list[int]:
    """Greedy independent set over the above-tau_low leftovers.

    Returned in pick order: descending confidence, index ascending on
    ties, each pick removing its conflict neighbours from the pool.
    """
    blocked: set[int] = set(u_anchor)
    for i in u_anchor:
        blocked |= conflict_neighbors(g, i)
    candidates = [
        i for i in state.masked_in_block(cfg.block_length)
        if i not in blocked and float(pred.confidence[i]) >= cfg.tau_low
    ]
    candidates.sort(key=lambda i: (-float(pred.confidence[i]), i))
    picked: list[int] = []
    dead: set[int] = set()
    for i in candidates:
        if i in dead:
            continue
        picked.append(i)
        dead.add(i)
        dead |= conflict_neighbors(g, i)
    return picked


def select_update_set(state: DecodeState, pred: StepPrediction, g: DependencyGraph,
                      cfg: SamplerConfig) -> UpdateSet:
    """Both routes plus the single-position progress fallback."""
    masked_block = state.masked_in_block(cfg.block_length)
    if not masked_block:
        raise ValueError("active block has no masked position")
    a_part = anchor_guided_select(state, pred, g, cfg)
    c_part = conflict_schedule(state, pred, g, a_part, cfg)
    if not a_part and not c_part:
        best = max(masked_block, key=lambda i: (float(pred.confidence[i]), -i))
        return UpdateSet(anchor_part=[], conflict_part=[best], fallback=True)
    return UpdateSet(anchor_part=sorted(a_part), conflict_part=c_part)
