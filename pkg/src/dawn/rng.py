"""Counter-based deterministic random draws.

Every stochastic choice in the toy oracle is a pure function of
``(seed, step, position)``, so any two runs (or any two implementations
following this spec) produce bit-identical draws.  The generator is the
SplitMix64 finalizer applied as a hash combiner:

    mix64(z):
        z = (z + 0x9E3779B97F4A7C15) mod 2^64
        z = ((z xor (z >> 30)) * 0xBF58476D1CE4E5B9) mod 2^64
        z = ((z xor (z >> 27)) * 0x94D049BB133111EB) mod 2^64
        return z xor (z >> 31)

    draw_u64(seed, step, position):
        h = mix64(seed mod 2^64)
        h = mix64(h xor (step mod 2^64))
        h = mix64(h xor (position mod 2^64))
        return h

A unit draw keeps the top 53 bits: ``draw_u64(...) >> 11) * 2^-53``,
uniform on [0, 1).  Categorical draws use inverse-CDF over the outcome
probabilities in index order (first index whose cumulative probability
exceeds the unit draw).
"""

from __future__ import annotations

from typing import Sequence

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """SplitMix64 finalizer over one 64-bit word."""
    z = (z + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * _MIX_A) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX_B) & _MASK64
    return z ^ (z >> 31)


def draw_u64(seed: int, step: int, position: int) -> int:
    """64-bit draw keyed by (seed, step, position)."""
    h = mix64(seed & _MASK64)
    h = mix64(h ^ (step & _MASK64))
    h = mix64(h ^ (position & _MASK64))
    return h


def draw_unit(seed: int, step: int, position: int) -> float:
    """Uniform float in [0, 1) keyed by (seed, step, position)."""
    return (draw_u64(seed, step, position) >> 11) * 2.0**-53


def draw_categorical(probs: Sequence[float], seed: int, step: int, position: int) -> int:
    """Inverse-CDF draw of an outcome index from ``probs``.

    ``probs`` must be nonnegative and sum to ~1; the last index absorbs
    any rounding slack so the draw always lands in range.
    """
    u = draw_unit(seed, step, position)
    acc = 0.0
    for idx, p in enumerate(probs):
        acc += p
        if u < acc:
            return idx
    return len(probs) - 1
