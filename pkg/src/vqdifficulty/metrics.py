"""Consensus accuracy, annotator-agreement statistics, and model
disagreement measures.

Counts are exact integers; floating aggregates are accumulated in the
caller-supplied order, which ingestion keeps canonical (ascending
question id). Standard deviations are population deviations throughout.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .core import (
    ANSWERS_PER_QUESTION,
    AnnotationRecord,
    AnswerDistribution,
    answer_counts,
    entropy,
    normalize_answer,
)
from .errors import DuplicateModelError, EmptyInputError

MATCHES_FOR_FULL_CREDIT = 3


def _match_count(predicted: str, record: AnnotationRecord, extended: bool) -> int:
    target = normalize_answer(predicted, extended)
    return sum(1 for a in record.answers if normalize_answer(a, extended) == target)


def consensus_accuracy(predicted: str, record: AnnotationRecord, extended: bool = False) -> float:
    """min(m/3, 1) where m is the number of annotators giving the
    predicted answer. Saturates at 1 for three or more supporters."""
    counts = answer_counts(record, extended)  # validates the 10-answer rule
    m = counts.get(normalize_answer(predicted, extended), 0)
    return min(m / MATCHES_FOR_FULL_CREDIT, 1.0)


def consensus_accuracy_averaged(predicted: str, record: AnnotationRecord, extended: bool = False) -> float:
    """Leave-one-annotator-out variant: the mean of min(m/3, 1) over the
    10 subsets that each drop one annotator."""
    answer_counts(record, extended)
    m = _match_count(predicted, record, extended)
    # Dropping a matching annotator leaves m-1 matches, any other leaves m.
    # Integer accumulation keeps the result exact.
    total = m * min(m - 1, MATCHES_FOR_FULL_CREDIT) if m else 0
    total += (ANSWERS_PER_QUESTION - m) * min(m, MATCHES_FOR_FULL_CREDIT)
    return total / (MATCHES_FOR_FULL_CREDIT * ANSWERS_PER_QUESTION)


def unique_answer_count(record: AnnotationRecord, extended: bool = False) -> int:
    """Number of distinct normalized answers among the 10 annotations."""
    return len(answer_counts(record, extended))


@dataclass(frozen=True)
class AgreementStats:
    """Agreement summary over a set of annotated questions."""

    n_agree: int
    n_disagree: int
    avg_unique: float
    std_unique: float
    per_count_histogram: tuple[int, ...]  # index c-1 holds the count for c unique answers

    @property
    def total(self) -> int:
        return self.n_agree + self.n_disagree


def agreement_stats(records: Iterable[AnnotationRecord], extended: bool = False) -> AgreementStats:
    """n_agree counts questions whose 10 answers are all identical."""
    uniques = [unique_answer_count(r, extended) for r in records]
    if not uniques:
        raise EmptyInputError("agreement statistics need at least one record")
    hist = [0] * ANSWERS_PER_QUESTION
    for u in uniques:
        hist[u - 1] += 1
    arr = np.array(uniques, dtype=np.float64)
    return AgreementStats(
        n_agree=hist[0],
        n_disagree=len(uniques) - hist[0],
        avg_unique=float(arr.mean()),
        std_unique=float(arr.std()),
        per_count_histogram=tuple(hist),
    )


@dataclass(frozen=True)
class OverlapPartition:
    """Grouping of model predictions by (normalized) answer, largest
    group first."""

    groups: tuple[tuple[str, int], ...]
    model_count: int


def max_overlap(
    predictions: Iterable[tuple[str, str]], extended: bool = False
) -> tuple[OverlapPartition, int]:
    """Group (model_id, top_answer) pairs by answer and report the size of
    the largest group: the number of models that agree most."""
    seen: set[str] = set()
    groups: Counter[str] = Counter()
    n = 0
    for model_id, answer in predictions:
        if model_id in seen:
            raise DuplicateModelError(f"model {model_id!r} appears twice")
        seen.add(model_id)
        groups[normalize_answer(answer, extended)] += 1
        n += 1
    if n == 0:
        raise EmptyInputError("max overlap needs at least one prediction")
    ordered = tuple(sorted(groups.items(), key=lambda kv: (-kv[1], kv[0])))
    return OverlapPartition(groups=ordered, model_count=n), ordered[0][1]


def overlap_histogram(
    rows: Iterable[tuple[AnnotationRecord, Mapping[str, str]]],
    n_models: int,
    extended: bool = False,
) -> tuple[np.ndarray, int]:
    """Joint counts of (unique GT answers, max prediction overlap) for one
    cluster.

    Returns a 10 x n_models integer table (row u-1, column v-1 counts
    questions with u unique answers and max overlap v) plus the number of
    questions excluded because at least one model's prediction is missing.
    """
    table = np.zeros((ANSWERS_PER_QUESTION, n_models), dtype=np.int64)
    excluded = 0
    for record, answers in rows:
        if len(answers) < n_models:
            excluded += 1
            continue
        u = unique_answer_count(record, extended)
        _, overlap = max_overlap(sorted(answers.items()), extended)
        table[u - 1, overlap - 1] += 1
    return table, excluded


@dataclass(frozen=True)
class PartitionEntropy:
    """One way 10 annotators can split over answers, with its entropy."""

    partition: tuple[int, ...]
    parts: int
    entropy: float


def _integer_partitions(n: int, max_part: int | None = None):
    if n == 0:
        yield ()
        return
    cap = n if max_part is None else min(max_part, n)
    for first in range(cap, 0, -1):
        for rest in _integer_partitions(n - first, first):
            yield (first, *rest)


def partition_entropy_enumeration(n: int) -> list[PartitionEntropy]:
    """All integer partitions of n with the entropy of each induced
    distribution, sorted by part count then by entropy ascending."""
    if n < 1:
        raise EmptyInputError(f"partition enumeration needs n >= 1, got {n}")
    rows = []
    for parts in _integer_partitions(n):
        dist = AnswerDistribution(np.array(parts, dtype=np.float64) / n)
        rows.append(PartitionEntropy(partition=parts, parts=len(parts), entropy=entropy(dist)))
    rows.sort(key=lambda r: (r.parts, r.entropy))
    return rows


def partitions_with_parts(n: int, k: int) -> list[tuple[int, ...]]:
    """Integer partitions of n with exactly k parts, in enumeration order."""
    return [p for p in _integer_partitions(n) if len(p) == k]
