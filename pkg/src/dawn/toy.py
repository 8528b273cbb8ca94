"""Synthetic masked-diffusion oracle with controllable coupling.

The grammar couples designated response position pairs: each pair draws
from k valid (left, right) combinations.  An uncommitted pair member
whose partner is still masked sees only its skewed marginal (top-1
confidence 1/k + epsilon); once the partner commits, the conditional is
deterministic and confidence jumps to exactly 1.0.  Committing both
members in the same step therefore risks an invalid combination, which
is the failure mode the dependency-aware schedulers exist to avoid.
All remaining response positions are fillers with a fixed correct token
at confidence 0.95, and the attention matrix is uniform except for extra
mass rho that pair members place on their partner and optional sink
mass s that every row places on one designated prompt position.

Everything here is enumerable: ``toy_exact_oracle`` replays the decode
policies against closed-form confidences and attention cell values
(sharing no code with the matrix-based path) to produce exact step
counts and expected invalid-pair counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import DecodeState, StepPrediction, SamplerConfig
from .rng import draw_categorical

FILLER_CONFIDENCE = 0.95

# toy_exact_oracle refuses instances beyond these bounds; the simulation
# is linear in steps but the transcript is meant for desk-scale checks.
MAX_EXACT_PAIRS = 16
MAX_EXACT_GEN_LENGTH = 64


def _default_pairs() -> tuple[tuple[int, int], ...]:
    return tuple((2 * i, 2 * i + 1) for i in range(8))


@dataclass(frozen=True)
class ToyGrammar:
    """Geometry and distribution parameters of the synthetic task.

    ``pairs`` holds response-relative (left, right) index pairs; the
    valid joint is the identity bijection on category indices, so left
    token v (in [0, k)) pairs with right token k + v.  ``sink_position``
    is a global window index inside the prompt.  ``sink_mass`` applies
    only when a sink position is set.
    """

    gen_length: int = 32
    prompt_len: int = 4
    pairs: tuple[tuple[int, int], ...] = field(default_factory=_default_pairs)
    k: int = 4
    epsilon: float = 0.05
    pair_attention: float = 0.5
    sink_position: int | None = None
    sink_mass: float = 0.3

    @property
    def marginal_confidence(self) -> float:
        return 1.0 / self.k + self.epsilon

    @property
    def vocab_size(self) -> int:
        # Layout: k left categories, k right categories, one filler token
        # per response slot, one token per prompt position.
        return 2 * self.k + self.gen_length + self.prompt_len

    def filler_token(self, r: int) -> int:
        return 2 * self.k + r

    def prompt_token(self, p: int) -> int:
        return 2 * self.k + self.gen_length + p

    @property
    def prompt_tokens(self) -> tuple[int, ...]:
        return tuple(self.prompt_token(p) for p in range(self.prompt_len))

    def partner_map(self) -> dict[int, int]:
        """Response-relative index -> partner index, both directions."""
        out: dict[int, int] = {}
        for a, b in self.pairs:
            out[a] = b
            out[b] = a
        return out

    def left_members(self) -> set[int]:
        return {a for a, _ in self.pairs}

    def filler_positions(self) -> list[int]:
        paired = set(self.partner_map())
        return [r for r in range(self.gen_length) if r not in paired]

    def marginal(self) -> list[float]:
        """Skewed marginal over categories; category 0 carries the bias."""
        rest = (1.0 - self.marginal_confidence) / (self.k - 1)
        return [self.marginal_confidence] + [rest] * (self.k - 1)


def validate_grammar(g: ToyGrammar) -> None:
    if g.gen_length < 1:
        raise ValueError("gen_length >= 1")
    if g.prompt_len < 0:
        raise ValueError("prompt_len >= 0")
    if g.k < 2:
        raise ValueError("k >= 2")
    seen: set[int] = set()
    for a, b in g.pairs:
        if a == b:
            raise ValueError(f"pair ({a},{b}) is degenerate")
        for r in (a, b):
            if not 0 <= r < g.gen_length:
                raise ValueError(f"pair position {r} outside response")
            if r in seen:
                raise ValueError(f"pair position {r} used twice")
            seen.add(r)
    if not 0.0 <= g.epsilon <= 1.0 - 1.0 / g.k:
        raise ValueError("epsilon must keep the marginal a distribution")
    # Keeps unconditioned pair members below every default commit
    # threshold, so they only ever commit via fallback or explicit sweeps.
    if g.marginal_confidence >= 0.8:
        raise ValueError("1/k + epsilon must stay below 0.8")
    if g.pair_attention < 0.07:
        raise ValueError("pair_attention >= 0.07 so coupling survives edge thresholding")
    s = g.sink_mass if g.sink_position is not None else 0.0
    if g.pair_attention + s > 1.0:
        raise ValueError("pair_attention + sink_mass <= 1")
    if g.sink_position is not None:
        if not 0.0 <= g.sink_mass <= 1.0:
            raise ValueError("sink_mass in [0, 1]")
        if not 0 <= g.sink_position < g.prompt_len:
            raise ValueError("sink_position must be a prompt position")


def toy_attention(grammar: ToyGrammar) -> np.ndarray:
    """Static row-stochastic attention implied by the grammar.

    Each row spreads its remaining mass uniformly over all n positions
    after placing rho on the partner (pair rows) and s on the sink
    column (all rows); rows are renormalized against float slack.
    """
    p, n = grammar.prompt_len, grammar.prompt_len + grammar.gen_length
    s = grammar.sink_mass if grammar.sink_position is not None else 0.0
    rho = grammar.pair_attention
    attn = np.full((n, n), (1.0 - s) / n)
    for a, b in grammar.pairs:
        for i, j in ((p + a, p + b), (p + b, p + a)):
            attn[i, :] = (1.0 - rho - s) / n
            attn[i, j] += rho
    if grammar.sink_position is not None:
        attn[:, grammar.sink_position] += s
    attn /= attn.sum(axis=1, keepdims=True)
    return attn


def toy_predict(state: DecodeState, grammar: ToyGrammar, seed: int,
                attention: np.ndarray | None = None) -> StepPrediction:
    """One oracle evaluation of the grammar at the state's step counter.

    Marginal top-1 draws are keyed by (seed, state.step, global
    position), so a rerun of the same decode reproduces every token.
    """
    if state.prompt_len != grammar.prompt_len or state.gen_length != grammar.gen_length:
        raise ValueError(
            f"state geometry ({state.prompt_len}+{state.gen_length}) does not match "
            f"grammar ({grammar.prompt_len}+{grammar.gen_length})"
        )
    if not state.has_masked():
        raise ValueError("state has no masked slot")
    p, n = grammar.prompt_len, state.n
    partner = grammar.partner_map()
    lefts = grammar.left_members()
    m = grammar.marginal()

    top1 = np.zeros(n, dtype=np.int64)
    conf = np.ones(n)
    for i in range(p):
        top1[i] = grammar.prompt_token(i)
    for r, token in enumerate(state.response):
        i = p + r
        if token is not None:
            top1[i] = token
            continue
        if r not in partner:
            top1[i] = grammar.filler_token(r)
            conf[i] = FILLER_CONFIDENCE
            continue
        q = partner[r]
        partner_token = state.response[q]
        if partner_token is None:
            cat = draw_categorical(m, seed, state.step, i)
            top1[i] = cat if r in lefts else grammar.k + cat
            conf[i] = grammar.marginal_confidence
        else:
            # Partner committed: the conditional is deterministic.
            offset = 0 if q in lefts else grammar.k
            cat = partner_token - offset
            if not 0 <= cat < grammar.k:
                raise ValueError(f"slot {q} holds token {partner_token} outside its pair vocabulary")
            top1[i] = cat if r in lefts else grammar.k + cat
    attn = toy_attention(grammar) if attention is None else attention.copy()
    return StepPrediction(top1=top1, confidence=conf, attention=attn)


def toy_validate(response: list[int | None], grammar: ToyGrammar) -> int:
    """Count committed pairs whose tokens fall outside the valid joint."""
    missing = [r for r, t in enumerate(response) if t is None]
    if missing:
        raise ValueError(f"response has uncommitted slots, first at {missing[0]}")
    invalid = 0
    for a, b in grammar.pairs:
        left, right = response[a], response[b]
        if not (0 <= left < grammar.k and right == grammar.k + left):
            invalid += 1
    return invalid


class ToyOracle:
    """Stateless oracle over one grammar; safe for concurrent sessions."""

    def __init__(self, grammar: ToyGrammar):
        validate_grammar(grammar)
        self.grammar = grammar
        self.vocab_size = grammar.vocab_size
        self.prompt = grammar.prompt_tokens
        self._attention = toy_attention(grammar)

    def query(self, state: DecodeState, seed: int) -> StepPrediction:
        return toy_predict(state, self.grammar, seed, attention=self._attention)

    def count_invalid_pairs(self, response: list[int | None]) -> int:
        return toy_validate(response, self.grammar)

    def correct_fillers(self, response: list[int | None]) -> bool:
        return all(
            response[r] == self.grammar.filler_token(r)
            for r in self.grammar.filler_positions()
        )


# ---------------------------------------------------------------------------
# Grammar definition files: flat key = value lines plus `pair a b` lines.

_GRAMMAR_KEYS = {
    "gen_length": int,
    "prompt_len": int,
    "k": int,
    "epsilon": float,
    "pair_attention": float,
    "sink_mass": float,
}


def load_grammar_file(path: str) -> ToyGrammar:
    """Parse a grammar file; pairs default to none (all filler)."""
    values: dict = {}
    pairs: list[tuple[int, int]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if line.split(None, 1)[0] == "pair":
                parts = line.split()
                if len(parts) != 3:
                    raise ValueError(f"{path}:{lineno}: expected 'pair A B'")
                pairs.append((int(parts[1]), int(parts[2])))
                continue
            if "=" in line:
                key, _, raw = line.partition("=")
            else:
                parts = line.split(None, 1)
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected 'name = value'")
                key, raw = parts
            key, raw = key.strip(), raw.strip()
            if key == "sink_position":
                values[key] = None if raw.lower() in ("none", "") else int(raw)
            elif key in _GRAMMAR_KEYS:
                values[key] = _GRAMMAR_KEYS[key](raw)
            else:
                raise ValueError(f"{path}:{lineno}: unknown grammar key {key!r}")
    grammar = ToyGrammar(pairs=tuple(pairs), **values)
    validate_grammar(grammar)
    return grammar


# ---------------------------------------------------------------------------
# Exact reference transcripts.


@dataclass
class ExactTranscript:
    """Seed-independent replay of one decode policy on the grammar.

    ``steps`` lists the global positions committed at each step;
    ``simultaneous_pairs`` counts pairs whose two members committed in
    the same step, each contributing ``invalid_rate_per_pair`` expected
    invalid combinations (draws are independent across positions).
    """

    sampler: str
    nfe: int
    steps: list[list[int]]
    simultaneous_pairs: int
    invalid_rate_per_pair: float
    expected_invalid_pairs: float

    def per_step_commits(self) -> list[int]:
        return [len(s) for s in self.steps]


def _exact_cell(grammar: ToyGrammar, i: int, j: int) -> float:
    """Closed-form attention value at (i, j) without building a matrix."""
    p = grammar.prompt_len
    s = grammar.sink_mass if grammar.sink_position is not None else 0.0
    partner = grammar.partner_map()
    r = i - p
    rho = grammar.pair_attention if 0 <= r < grammar.gen_length and r in partner else 0.0
    value = (1.0 - rho - s) / (p + grammar.gen_length)
    if rho and j == p + partner[r]:
        value += rho
    if grammar.sink_position is not None and j == grammar.sink_position:
        value += s
    return value


def _exact_graph(grammar: ToyGrammar, cfg: SamplerConfig):
    """Sinks and undirected conflict neighbourhoods from closed forms."""
    n = grammar.prompt_len + grammar.gen_length
    means = []
    for j in range(n):
        total = sum(_exact_cell(grammar, i, j) for i in range(n) if i != j)
        means.append(total / n)
    sinks = {j for j in range(n) if means[j] > cfg.tau_sink}
    removed = sinks if cfg.sink_filter else set()
    successors: dict[int, set[int]] = {j: set() for j in range(n)}
    neighbors: dict[int, set[int]] = {j: set() for j in range(n)}
    for i in range(n):
        if i in removed:
            continue
        for j in range(n):
            if i == j or j in removed:
                continue
            if _exact_cell(grammar, i, j) >= cfg.tau_edge:
                successors[j].add(i)
                neighbors[i].add(j)
                neighbors[j].add(i)
    return sinks, successors, neighbors


def toy_exact_oracle(grammar: ToyGrammar, cfg: SamplerConfig) -> dict[str, ExactTranscript]:
    """Exact per-policy step counts by direct evaluation of the grammar.

    Shares no code with the matrix/scheduler path: confidences come from
    the grammar definition (filler 0.95, marginal 1/k + epsilon,
    conditional 1.0) and the graph from closed-form cell values.  Commit
    timing never depends on sampled tokens, so one replay covers every
    seed; only token identities vary, at the recorded expected rate.
    """
    validate_grammar(grammar)
    if len(grammar.pairs) > MAX_EXACT_PAIRS or grammar.gen_length > MAX_EXACT_GEN_LENGTH:
        raise ValueError(
            f"instance too large for exact replay "
            f"({len(grammar.pairs)} pairs, gen_length {grammar.gen_length})"
        )
    m = grammar.marginal()
    rate = 1.0 - sum(v * v for v in m)
    out = {}
    for sampler in ("dawn", "top1", "confidence"):
        out[sampler] = _exact_run(grammar, cfg, sampler, rate)
    return out


def _exact_run(grammar: ToyGrammar, cfg: SamplerConfig, sampler: str,
               rate: float) -> ExactTranscript:
    p, L, B = grammar.prompt_len, grammar.gen_length, cfg.block_length
    partner = grammar.partner_map()
    sinks, successors, neighbors = _exact_graph(grammar, cfg)

    committed: list[bool] = [False] * L
    commit_conf: list[float] = [0.0] * L
    steps: list[list[int]] = []
    simultaneous = 0
    block_start = 0

    def confidence(r: int) -> float:
        if r not in partner:
            return FILLER_CONFIDENCE
        return 1.0 if committed[partner[r]] else grammar.marginal_confidence

    while not all(committed):
        while all(committed[r] for r in range(block_start, min(block_start + B, L))):
            block_start += B
        active = [p + r for r in range(block_start, min(block_start + B, L))
                  if not committed[r]]
        conf = {i: confidence(i - p) for i in active}
        argmax_single = max(active, key=lambda i: (conf[i], -i))

        if sampler == "top1":
            chosen = [argmax_single]
        elif sampler == "confidence":
            chosen = [i for i in active if conf[i] >= cfg.tau_high]
            if not chosen:
                chosen = [argmax_single]
        else:
            anchors = list(range(p)) + [
                p + r for r in range(L)
                if committed[r] and commit_conf[r] >= cfg.tau_high
            ]
            induced: set[int] = set()
            frontier = set(anchors)
            for _ in range(cfg.induced_hops):
                nxt = set()
                for j in frontier:
                    nxt.update(successors[j])
                nxt -= induced
                induced |= nxt
                frontier = nxt
                if not frontier:
                    break
            u_anchor = [
                i for i in active
                if conf[i] >= cfg.tau_high
                or (i in induced and conf[i] >= cfg.tau_induced)
            ]
            excluded = set(u_anchor)
            for i in u_anchor:
                excluded |= neighbors[i]
            pool = [i for i in active if i not in excluded and conf[i] >= cfg.tau_low]
            pool.sort(key=lambda i: (-conf[i], i))
            picks: list[int] = []
            dead: set[int] = set()
            for i in pool:
                if i in dead:
                    continue
                picks.append(i)
                dead.add(i)
                dead |= neighbors[i]
            chosen = sorted(u_anchor) + picks
            if not chosen:
                chosen = [argmax_single]

        chosen_set = {i - p for i in chosen}
        for a, b in grammar.pairs:
            if a in chosen_set and b in chosen_set:
                simultaneous += 1
        for i in chosen:
            committed[i - p] = True
            commit_conf[i - p] = conf[i]
        steps.append(sorted(chosen))

    return ExactTranscript(
        sampler=sampler,
        nfe=len(steps),
        steps=steps,
        simultaneous_pairs=simultaneous,
        invalid_rate_per_pair=rate,
        expected_invalid_pairs=simultaneous * rate,
    )
