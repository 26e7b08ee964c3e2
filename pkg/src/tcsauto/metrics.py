"""Cosine similarity/distance, reading-time saved, typo injection and
residual-error counting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from . import _backend
from .corpus import word_spans, words
from .errors import DimensionMismatch, InvalidParams, NegativeSaving, ZeroVector

READING_WPM = 238
PRNG_NAME = "splitmix64"
MIN_TYPO_WORD_LEN = 4

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    model_tag: str = ""

    def __post_init__(self) -> None:
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ValueError("embedding must have dim >= 1")
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("embedding values must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return len(self.values)

    def as_array(self, dtype=np.float64) -> np.ndarray:
        return np.asarray(self.values, dtype=dtype)

    @classmethod
    def from_array(cls, arr: Iterable[float], model_tag: str = "") -> EmbeddingVector:
        return cls(tuple(float(x) for x in arr), model_tag)


def _values(v: EmbeddingVector | Sequence[float]) -> Sequence[float]:
    return v.values if isinstance(v, EmbeddingVector) else v


def cosine_similarity(u: EmbeddingVector | Sequence[float], v: EmbeddingVector | Sequence[float]) -> float:
    a = np.asarray(_values(u), dtype=np.float64)
    b = np.asarray(_values(v), dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(a.shape[0], b.shape[0])
    na = math.sqrt(float(np.dot(a, a)))
    nb = math.sqrt(float(np.dot(b, b)))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine similarity is undefined for a zero vector")
    sim = float(np.dot(a, b)) / (na * nb)
    return min(1.0, max(-1.0, sim))


def cosine_distance(u: EmbeddingVector | Sequence[float], v: EmbeddingVector | Sequence[float]) -> float:
    """1 - cosine similarity, in [0, 2]."""
    return 1.0 - cosine_similarity(u, v)


def time_saved_minutes(source_words: int, summary_words: int) -> float:
    """Reading time saved by reading the summary instead of the source,
    at 238 words per minute."""
    if source_words < 0 or summary_words < 0:
        raise InvalidParams("word counts must be non-negative")
    if summary_words > source_words:
        raise NegativeSaving(
            f"summary ({summary_words} words) is longer than its source ({source_words} words)"
        )
    return (source_words - summary_words) / READING_WPM


class SplitMix64:
    """Steele/Lea/Flood SplitMix64; stable across platforms and Python versions."""

    def __init__(self, seed: int) -> None:
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection sampling."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n


class TypoKind(str, Enum):
    TRANSPOSITION = "transposition"
    DELETION = "deletion"


@dataclass(frozen=True)
class TypoSpec:
    rate: float
    seed: int = 42
    kinds: tuple[TypoKind, ...] = (TypoKind.TRANSPOSITION, TypoKind.DELETION)

    def __post_init__(self) -> None:
        if not 0.0 <= self.rate <= 1.0:
            raise InvalidParams(f"typo rate must be in [0, 1], got {self.rate}")
        if not 0 <= self.seed <= _MASK64:
            raise InvalidParams("seed must be a 64-bit unsigned integer")
        kinds = tuple(TypoKind(k) for k in self.kinds)
        if not kinds:
            raise InvalidParams("at least one typo kind is required")
        object.__setattr__(self, "kinds", kinds)


@dataclass(frozen=True)
class ErrorCount:
    errors: int

    def __post_init__(self) -> None:
        if self.errors < 0:
            raise ValueError("error count must be non-negative")

    def __int__(self) -> int:
        return self.errors


def transpose_at(word: str, pos: int) -> str:
    """Swap the interior characters at ``pos`` and ``pos + 1``."""
    if not 1 <= pos <= len(word) - 3:
        raise InvalidParams(f"no interior pair at {pos} in a {len(word)}-char word")
    return word[:pos] + word[pos + 1] + word[pos] + word[pos + 2:]


def delete_at(word: str, pos: int) -> str:
    """Drop the interior character at ``pos``."""
    if not 1 <= pos <= len(word) - 2:
        raise InvalidParams(f"no interior character at {pos} in a {len(word)}-char word")
    return word[:pos] + word[pos + 1:]


@dataclass
class TypoTrace:
    """Which words were mutated, for reports and tests."""

    mutated: list[tuple[int, TypoKind, int]] = field(default_factory=list)


def inject_typos(text: str, spec: TypoSpec, trace: TypoTrace | None = None) -> str:
    """Mutate ceil(rate * eligible) distinct words of length >= 4.

    Words are selected with a partial Fisher-Yates shuffle driven by
    SplitMix64(seed); each selected word, in text order, then draws a kind and
    an interior position. Whitespace is untouched.
    """
    spans = word_spans(text)
    eligible = [i for i, (s, e) in enumerate(spans) if e - s >= MIN_TYPO_WORD_LEN]
    # rate is taken as the decimal the user wrote, so 0.07 * 100 gives 7, not 8
    n_mutate = math.ceil(Fraction(repr(spec.rate)) * len(eligible))
    if n_mutate == 0:
        return text

    rng = SplitMix64(spec.seed)
    pool = list(eligible)
    for i in range(n_mutate):
        j = i + rng.below(len(pool) - i)
        pool[i], pool[j] = pool[j], pool[i]
    chosen = sorted(pool[:n_mutate])

    pieces = []
    cursor = 0
    for word_idx in chosen:
        s, e = spans[word_idx]
        word = text[s:e]
        kind = spec.kinds[rng.below(len(spec.kinds))]
        if kind is TypoKind.TRANSPOSITION:
            pos = 1 + rng.below(len(word) - 3)
            new = transpose_at(word, pos)
        else:
            pos = 1 + rng.below(len(word) - 2)
            new = delete_at(word, pos)
        if trace is not None:
            trace.mutated.append((word_idx, kind, pos))
        pieces.append(text[cursor:s])
        pieces.append(new)
        cursor = e
    pieces.append(text[cursor:])
    return "".join(pieces)


def _token_ids(a: list[str], b: list[str]) -> tuple[np.ndarray, np.ndarray]:
    vocab: dict[str, int] = {}
    ia = np.fromiter((vocab.setdefault(w, len(vocab)) for w in a), dtype=np.int64, count=len(a))
    ib = np.fromiter((vocab.setdefault(w, len(vocab)) for w in b), dtype=np.int64, count=len(b))
    return ia, ib


def word_edit_distance(a: Sequence[str], b: Sequence[str]) -> int:
    """Levenshtein distance over word sequences with unit costs."""
    ia, ib = _token_ids(list(a), list(b))
    return int(_backend.word_edit_distance(ia, ib))


def residual_errors(candidate: str, reference: str) -> ErrorCount:
    """Word-level edits needed to turn ``candidate`` into ``reference``."""
    if not reference:
        raise InvalidParams("reference text must be non-empty")
    return ErrorCount(word_edit_distance(words(candidate), words(reference)))
