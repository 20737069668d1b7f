"""Annihilation distance between symbol streams.

Treats each stream as a sample from an unknown symbolic source. Inverting
one stream and summing it against another yields a stream that approaches
flat white noise (IID uniform symbols) exactly when the two sources agree,
so the residual deviation from flat white noise measures source distance.
A self-annihilation check gates the computation: streams too short (or too
degenerate) to annihilate against themselves yield no distance at all.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from wattprobe.symbolize import SymbolStream

# a directed annihilation stream shorter than this is too thin to trust
MIN_ANNIHILATED_LENGTH = 100


@dataclass(frozen=True)
class SmashConfig:
    """Tuning knobs for the annihilation distance.

    word_length_max bounds the word sizes scanned by the deviation
    functional; annihilation_epsilon is the self-check pass threshold.
    copies_split picks how stream inversion forms its quasi-independent
    copies. All strategies are deterministic; `seed` is kept for interface
    stability only.
    """

    word_length_max: int = 3
    annihilation_epsilon: float = 0.05
    copies_split: str = "interleave"
    seed: int = 0

    def __post_init__(self):
        if self.word_length_max < 1:
            raise ValueError("word_length_max must be at least 1")
        if not 0 < self.annihilation_epsilon < 1:
            raise ValueError("annihilation_epsilon must be in (0, 1)")
        if self.copies_split not in ("interleave", "halves"):
            raise ValueError("copies_split must be 'interleave' or 'halves'")


@dataclass(frozen=True)
class SmashOutcome:
    """Either a non-negative distance or an insufficiency verdict."""

    distance: float | None

    @property
    def insufficient(self):
        return self.distance is None

    def __repr__(self):
        if self.insufficient:
            return "SmashOutcome(insufficient)"
        return f"SmashOutcome(distance={self.distance:.6g})"


INSUFFICIENT = SmashOutcome(distance=None)


def stream_sum(s1: SymbolStream, s2: SymbolStream) -> SymbolStream:
    """Positionwise agreement filter: emit the symbol where both streams match."""
    if s1.alphabet_size != s2.alphabet_size:
        raise ValueError(
            f"alphabet mismatch: {s1.alphabet_size} vs {s2.alphabet_size}"
        )
    n = min(len(s1), len(s2))
    a, b = s1.symbols[:n], s2.symbols[:n]
    return SymbolStream(alphabet_size=s1.alphabet_size, symbols=a[a == b])


def stream_invert(s: SymbolStream, cfg: SmashConfig = SmashConfig()) -> SymbolStream:
    """Emit the symbol missing from aligned reads of alphabet-1 stream copies.

    Copies come from interleaved decimation (position j mod alphabet-1) or
    contiguous halves per cfg.copies_split. When the copies' symbols at a
    position are pairwise distinct, exactly one alphabet symbol is absent
    and it is emitted; otherwise nothing is. For a binary alphabet this
    reduces to the bitwise complement.
    """
    sigma = s.alphabet_size
    n_copies = sigma - 1
    if len(s) < n_copies:
        raise ValueError(f"stream of length {len(s)} too short for {n_copies} copies")
    if cfg.copies_split == "interleave":
        copies = [s.symbols[j::n_copies] for j in range(n_copies)]
    else:
        chunk = len(s) // n_copies
        copies = [s.symbols[j * chunk : (j + 1) * chunk] for j in range(n_copies)]
    length = min(len(c) for c in copies)
    stacked = np.stack([c[:length] for c in copies]).astype(np.int16)
    if n_copies == 1:
        distinct = np.ones(length, dtype=bool)
    else:
        ordered = np.sort(stacked, axis=0)
        distinct = np.all(np.diff(ordered, axis=0) > 0, axis=0)
    missing = (sigma * (sigma - 1)) // 2 - stacked.sum(axis=0)
    return SymbolStream(
        alphabet_size=sigma, symbols=missing[distinct].astype(np.int8)
    )


def deviation(s: SymbolStream, word_length_max: int) -> float:
    """Largest word-frequency deviation from flat white noise.

    Scans all words of length 1..word_length_max; each word's sliding
    frequency is compared against the uniform expectation for the stream's
    alphabet. Always in [0, 1).
    """
    n = len(s)
    if n < word_length_max:
        raise ValueError(f"stream of length {n} shorter than max word length {word_length_max}")
    sigma = s.alphabet_size
    symbols = s.symbols.astype(np.int32)
    worst = 0.0
    for length in range(1, word_length_max + 1):
        n_words = n - length + 1
        codes = symbols[:n_words].copy()
        for offset in range(1, length):
            codes *= sigma
            codes += symbols[offset : offset + n_words]
        freqs = np.bincount(codes, minlength=sigma**length) / n_words
        worst = max(worst, float(np.abs(freqs - sigma ** (-length)).max()))
    return worst


def self_check(s: SymbolStream, cfg: SmashConfig = SmashConfig()) -> bool:
    """True when a stream annihilates against its own inverse.

    The stream is split into two sub-streams per cfg.copies_split; summing
    one with the inverse of the other must leave a near-flat residual of
    usable length. Failure means the stream is too short or too lopsided
    for distances to mean anything.

    The interleaved split (default) takes even/odd positions. Contiguous
    halves are available but interact badly with self-concatenated streams:
    a stream repeated an even number of times has identical halves, whose
    annihilation is empty, so repetition could never make such a stream
    sufficient.
    """
    n = len(s)
    if n < 2 or n // 2 < s.alphabet_size - 1:
        return False
    if cfg.copies_split == "interleave":
        part_a, part_b = s.symbols[0::2], s.symbols[1::2]
    else:
        part_a, part_b = s.symbols[: n // 2], s.symbols[n // 2 :]
    first = SymbolStream(alphabet_size=s.alphabet_size, symbols=part_a)
    second = SymbolStream(alphabet_size=s.alphabet_size, symbols=part_b)
    summed = stream_sum(first, stream_invert(second, cfg))
    if len(summed) < max(MIN_ANNIHILATED_LENGTH, cfg.word_length_max):
        return False
    return deviation(summed, cfg.word_length_max) <= cfg.annihilation_epsilon


def dsd_distance(
    s1: SymbolStream, s2: SymbolStream, cfg: SmashConfig = SmashConfig()
) -> SmashOutcome:
    """Symmetrized annihilation distance between two streams.

    Returns the average of the two directed residual deviations, or the
    insufficient outcome when either stream fails its self-annihilation
    check or either directed residual is too short.
    """
    if s1.alphabet_size != s2.alphabet_size:
        raise ValueError(
            f"alphabet mismatch: {s1.alphabet_size} vs {s2.alphabet_size}"
        )
    if not (self_check(s1, cfg) and self_check(s2, cfg)):
        return INSUFFICIENT
    forward = stream_sum(s1, stream_invert(s2, cfg))
    backward = stream_sum(s2, stream_invert(s1, cfg))
    floor = max(MIN_ANNIHILATED_LENGTH, cfg.word_length_max)
    if len(forward) < floor or len(backward) < floor:
        return INSUFFICIENT
    d = 0.5 * (
        deviation(forward, cfg.word_length_max) + deviation(backward, cfg.word_length_max)
    )
    return SmashOutcome(distance=d)
