"""Domain types and the entropy math every other module builds on.

All entropies are natural-log (nats) and carried as double precision
floats. Every operation here is pure, so callers may parallelize freely.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import (
    MissingAnswersError,
    NegativeProbabilityError,
    NonNormalizedError,
)

ANSWER_TYPES = ("yes/no", "number", "other")
SPLITS = ("train", "val", "test")
ANSWERS_PER_QUESTION = 10

# Softmax dumps carry rounding noise; sums within this tolerance are
# renormalized, anything further off is rejected.
PROB_SUM_TOL = 1e-6

_WHITESPACE = re.compile(r"\s+")
_ARTICLES = {"a", "an", "the"}
_TERMINAL_PUNCT = ".,;:!?"


def normalize_answer(raw: str, extended: bool = False) -> str:
    """Canonicalize a free-text answer for matching.

    Basic mode lowercases, trims, and collapses internal whitespace.
    Extended mode additionally strips terminal punctuation and drops the
    articles "a", "an", "the".
    """
    text = _WHITESPACE.sub(" ", raw.strip().lower())
    if not extended:
        return text
    text = text.rstrip(_TERMINAL_PUNCT)
    words = [w for w in text.split(" ") if w and w not in _ARTICLES]
    return " ".join(words)


@dataclass(frozen=True, eq=False)
class AnswerDistribution:
    """Probability vector over an answer vocabulary.

    Entries must be non-negative and sum to 1 within PROB_SUM_TOL; the
    stored vector is renormalized to sum exactly to 1.
    """

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size < 1:
            raise NonNormalizedError("distribution must be a non-empty 1-d vector")
        if not np.all(np.isfinite(p)):
            raise NonNormalizedError("distribution contains non-finite entries")
        if np.any(p < 0.0):
            raise NegativeProbabilityError(
                f"negative probability {float(p.min()):.3g} at index {int(p.argmin())}"
            )
        total = float(p.sum())
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise NonNormalizedError(f"probabilities sum to {total!r}, expected 1.0")
        object.__setattr__(self, "probs", p / total)

    @property
    def vocab_size(self) -> int:
        return int(self.probs.size)


def entropy(dist: AnswerDistribution) -> float:
    """Shannon entropy -sum(p ln p) in nats, with 0 ln 0 taken as 0."""
    p = dist.probs
    nz = p[p > 0.0]
    h = float(-(nz * np.log(nz)).sum())
    # Rounding can push a near one-hot vector a hair below zero; this also
    # turns -0.0 into +0.0.
    return 0.0 if h <= 0.0 else h


@dataclass(frozen=True)
class AnnotationRecord:
    """Ground truth for one visual question.

    Non-test splits carry exactly 10 crowd answers; test records may carry
    none. Answer-count rules are enforced by ingestion and by the
    operations that need answers, so invalid fixtures remain constructible
    in tests.
    """

    question_id: int
    question_text: str
    answers: tuple[str, ...]
    answer_type: str
    split: str

    def __post_init__(self):
        if self.answer_type not in ANSWER_TYPES:
            raise ValueError(f"unknown answer_type {self.answer_type!r}")
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")
        object.__setattr__(self, "answers", tuple(self.answers))

    @property
    def has_answers(self) -> bool:
        return len(self.answers) == ANSWERS_PER_QUESTION


@dataclass(frozen=True)
class SummaryPayload:
    """Condensed model output: entropy plus the top answer."""

    entropy: float
    top_answer: str
    top_prob: float

    def __post_init__(self):
        if not math.isfinite(self.entropy) or self.entropy < 0.0:
            raise ValueError(f"entropy must be finite and >= 0, got {self.entropy!r}")
        if not 0.0 < self.top_prob <= 1.0:
            raise ValueError(f"top_prob must be in (0, 1], got {self.top_prob!r}")


@dataclass(frozen=True)
class DistributionPayload:
    """Full answer distribution; top answer is derived from a vocabulary."""

    distribution: AnswerDistribution
    top_answer: str | None = None
    top_prob: float | None = None


@dataclass(frozen=True)
class PredictionRecord:
    """One model's output for one question."""

    question_id: int
    model_id: str
    payload: SummaryPayload | DistributionPayload


def prediction_entropy(pred: PredictionRecord) -> float:
    """Entropy of a prediction: recomputed for distributions, passed
    through unchanged for summaries."""
    if isinstance(pred.payload, SummaryPayload):
        return pred.payload.entropy
    return entropy(pred.payload.distribution)


def prediction_top_answer(pred: PredictionRecord) -> str | None:
    if isinstance(pred.payload, SummaryPayload):
        return pred.payload.top_answer
    return pred.payload.top_answer


@dataclass(frozen=True)
class EntropyFeature:
    """The 3-d clustering feature: entropies of the image-only,
    question-only, and question+image models."""

    h_i: float
    h_q: float
    h_qi: float

    def __post_init__(self):
        for name in ("h_i", "h_q", "h_qi"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0.0:
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.h_i, self.h_q, self.h_qi], dtype=np.float64)


@dataclass(frozen=True, eq=False)
class AnswerVocabulary:
    """Ordered candidate-answer list; index i matches distribution
    component i."""

    answers: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "answers", tuple(self.answers))
        seen: dict[str, str] = {}
        for a in self.answers:
            key = normalize_answer(a)
            if key in seen:
                raise ValueError(f"duplicate vocabulary answer {a!r} (collides with {seen[key]!r})")
            seen[key] = a
        object.__setattr__(self, "_index", {a: i for i, a in enumerate(self.answers)})

    def __len__(self) -> int:
        return len(self.answers)

    def __getitem__(self, i: int) -> str:
        return self.answers[i]

    def index_of(self, answer: str) -> int:
        return self._index[answer]


def _require_ten_answers(record: AnnotationRecord) -> None:
    if len(record.answers) != ANSWERS_PER_QUESTION:
        raise MissingAnswersError(
            f"question {record.question_id} has {len(record.answers)} answers, expected {ANSWERS_PER_QUESTION}"
        )


def answer_counts(record: AnnotationRecord, extended: bool = False) -> Counter[str]:
    """Multiplicities of the normalized ground-truth answers."""
    _require_ten_answers(record)
    return Counter(normalize_answer(a, extended) for a in record.answers)


def gt_distribution(record: AnnotationRecord, extended: bool = False) -> AnswerDistribution:
    """Empirical distribution over the unique normalized answers
    (count / 10 per unique answer, support ordered by answer string)."""
    counts = answer_counts(record, extended)
    values = np.array([c for _, c in sorted(counts.items())], dtype=np.float64)
    return AnswerDistribution(values / ANSWERS_PER_QUESTION)


def gt_entropy(record: AnnotationRecord, extended: bool = False) -> float:
    """Entropy of the ground-truth answer distribution, in [0, ln 10]."""
    return entropy(gt_distribution(record, extended))


def modal_answer(record: AnnotationRecord, extended: bool = False) -> str:
    """Most frequent normalized answer; ties resolve to the
    lexicographically smallest."""
    counts = answer_counts(record, extended)
    return min(counts.items(), key=lambda kv: (-kv[1], kv[0]))[0]


def uniform_distribution(n: int) -> AnswerDistribution:
    return AnswerDistribution(np.full(n, 1.0 / n))


def one_hot_distribution(n: int, hot: int = 0) -> AnswerDistribution:
    p = np.zeros(n)
    p[hot] = 1.0
    return AnswerDistribution(p)


def counts_distribution(counts: Iterable[float]) -> AnswerDistribution:
    """Distribution proportional to the given non-negative counts."""
    c = np.asarray(list(counts), dtype=np.float64)
    total = c.sum()
    if total <= 0:
        raise NonNormalizedError("counts must sum to a positive value")
    return AnswerDistribution(c / total)
