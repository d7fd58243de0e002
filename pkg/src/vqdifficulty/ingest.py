"""Reading and joining annotation, prediction, and vocabulary files.

All record files are UTF-8 JSON Lines (one object per line) so multi-
hundred-thousand-question splits stream without buffering. Parsing is
lenient by default: malformed lines are counted and skipped; strict mode
raises on the first offense with its line number. Downstream results are
keyed by question id, so file line order never matters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .clustering import KMeansConfig
from .core import (
    ANSWER_TYPES,
    ANSWERS_PER_QUESTION,
    SPLITS,
    AnnotationRecord,
    AnswerDistribution,
    AnswerVocabulary,
    DistributionPayload,
    EntropyFeature,
    PredictionRecord,
    SummaryPayload,
    prediction_entropy,
    prediction_top_answer,
)
from .errors import (
    MalformedRecordError,
    RoleUnresolvedError,
    ToolkitError,
    VocabularyRequiredError,
)

ROLES = ("I", "Q", "QI", "evaluated")


@dataclass
class IngestWarnings:
    """Counters reconciling raw line counts with accepted records."""

    missing_prediction: int = 0
    duplicate_record: int = 0
    skipped_malformed: int = 0
    orphan_prediction: int = 0

    def as_dict(self) -> dict[str, int]:
        return {
            "missing_prediction": self.missing_prediction,
            "duplicate_record": self.duplicate_record,
            "skipped_malformed": self.skipped_malformed,
            "orphan_prediction": self.orphan_prediction,
        }

    @property
    def total(self) -> int:
        return sum(self.as_dict().values())


def _iter_jsonl(path: Path) -> Iterator[tuple[int, str]]:
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            yield lineno, line


def _reject(path: Path, lineno: int, message: str, strict: bool, warnings: IngestWarnings) -> None:
    if strict:
        raise MalformedRecordError(message, path=str(path), line=lineno)
    warnings.skipped_malformed += 1


def load_vocabulary(path: str | Path) -> AnswerVocabulary:
    """One answer per line; line i is distribution component i."""
    path = Path(path)
    answers = [line.rstrip("\n") for line in path.read_text(encoding="utf-8").splitlines()]
    answers = [a for a in answers if a != ""]
    try:
        return AnswerVocabulary(tuple(answers))
    except ValueError as exc:
        raise MalformedRecordError(str(exc), path=str(path)) from exc


def _parse_annotation(obj: object) -> AnnotationRecord:
    if not isinstance(obj, dict):
        raise ValueError("expected a JSON object")
    qid = obj.get("question_id")
    if not isinstance(qid, int) or isinstance(qid, bool):
        raise ValueError(f"question_id must be an integer, got {qid!r}")
    question = obj.get("question")
    if not isinstance(question, str):
        raise ValueError("question must be a string")
    answers = obj.get("answers")
    if not isinstance(answers, list) or not all(isinstance(a, str) for a in answers):
        raise ValueError("answers must be a list of strings")
    answer_type = obj.get("answer_type")
    if answer_type not in ANSWER_TYPES:
        raise ValueError(f"answer_type must be one of {ANSWER_TYPES}, got {answer_type!r}")
    split = obj.get("split")
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}, got {split!r}")
    if split == "test":
        if len(answers) not in (0, ANSWERS_PER_QUESTION):
            raise ValueError(f"test records carry 0 or {ANSWERS_PER_QUESTION} answers, got {len(answers)}")
    elif len(answers) != ANSWERS_PER_QUESTION:
        raise ValueError(f"{split} records carry exactly {ANSWERS_PER_QUESTION} answers, got {len(answers)}")
    return AnnotationRecord(
        question_id=qid,
        question_text=question,
        answers=tuple(answers),
        answer_type=answer_type,
        split=split,
    )


def load_annotations(
    path: str | Path,
    strict: bool = False,
    warnings: IngestWarnings | None = None,
) -> dict[int, AnnotationRecord]:
    path = Path(path)
    warnings = warnings if warnings is not None else IngestWarnings()
    records: dict[int, AnnotationRecord] = {}
    for lineno, line in _iter_jsonl(path):
        try:
            record = _parse_annotation(json.loads(line))
        except (json.JSONDecodeError, ValueError) as exc:
            _reject(path, lineno, str(exc), strict, warnings)
            continue
        if record.question_id in records:
            if strict:
                raise MalformedRecordError(
                    f"duplicate question_id {record.question_id}", path=str(path), line=lineno
                )
            warnings.duplicate_record += 1
            continue
        records[record.question_id] = record
    return records


def _parse_prediction(
    obj: object, expected_model: str | None, vocab: AnswerVocabulary | None
) -> PredictionRecord:
    if not isinstance(obj, dict):
        raise ValueError("expected a JSON object")
    qid = obj.get("question_id")
    if not isinstance(qid, int) or isinstance(qid, bool):
        raise ValueError(f"question_id must be an integer, got {qid!r}")
    model_id = obj.get("model_id", expected_model)
    if not isinstance(model_id, str) or not model_id:
        raise ValueError("model_id missing (not in the line and no default given)")
    if expected_model is not None and model_id != expected_model:
        raise ValueError(f"model_id {model_id!r} does not match expected {expected_model!r}")

    has_distribution = "distribution" in obj
    has_summary = "entropy" in obj or "top_answer" in obj or "top_prob" in obj
    if has_distribution and has_summary:
        raise ValueError("line carries both a distribution and a summary payload")
    if has_distribution:
        if vocab is None:
            raise VocabularyRequiredError(
                "distribution-mode prediction encountered but no vocabulary is loaded"
            )
        values = obj["distribution"]
        if not isinstance(values, list):
            raise ValueError("distribution must be a list of numbers")
        if len(values) != len(vocab):
            raise ValueError(f"distribution length {len(values)} != vocabulary size {len(vocab)}")
        try:
            dist = AnswerDistribution(np.asarray(values, dtype=np.float64))
        except (ToolkitError, TypeError) as exc:
            raise ValueError(str(exc)) from exc
        top = int(dist.probs.argmax())
        payload: SummaryPayload | DistributionPayload = DistributionPayload(
            distribution=dist, top_answer=vocab[top], top_prob=float(dist.probs[top])
        )
    elif has_summary:
        try:
            payload = SummaryPayload(
                entropy=float(obj["entropy"]),
                top_answer=str(obj["top_answer"]),
                top_prob=float(obj["top_prob"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"bad summary payload: {exc}") from exc
        if vocab is not None and payload.entropy > float(np.log(len(vocab))) + 1e-9:
            raise ValueError(
                f"entropy {payload.entropy} exceeds ln(vocab size) = {float(np.log(len(vocab))):.4f}"
            )
    else:
        raise ValueError("line carries neither a distribution nor a summary payload")
    return PredictionRecord(question_id=qid, model_id=model_id, payload=payload)


def load_predictions(
    path: str | Path,
    model_id: str | None = None,
    vocab: AnswerVocabulary | None = None,
    strict: bool = False,
    warnings: IngestWarnings | None = None,
) -> list[PredictionRecord]:
    path = Path(path)
    warnings = warnings if warnings is not None else IngestWarnings()
    records: list[PredictionRecord] = []
    for lineno, line in _iter_jsonl(path):
        try:
            records.append(_parse_prediction(json.loads(line), model_id, vocab))
        except VocabularyRequiredError:
            raise
        except (json.JSONDecodeError, ValueError) as exc:
            _reject(path, lineno, str(exc), strict, warnings)
    return records


@dataclass
class Dataset:
    """Immutable snapshot of everything one run reads."""

    annotations: dict[int, AnnotationRecord]
    predictions: dict[tuple[str, int], PredictionRecord]
    vocab: AnswerVocabulary | None
    warnings: IngestWarnings
    has_annotations: bool

    @classmethod
    def build(
        cls,
        annotations: dict[int, AnnotationRecord] | None,
        prediction_records: Sequence[PredictionRecord],
        vocab: AnswerVocabulary | None = None,
        warnings: IngestWarnings | None = None,
    ) -> "Dataset":
        """Index predictions by (model, question); duplicates and, when
        annotations are present, orphan predictions are dropped and
        counted."""
        warnings = warnings if warnings is not None else IngestWarnings()
        has_annotations = annotations is not None
        annotations = annotations or {}
        predictions: dict[tuple[str, int], PredictionRecord] = {}
        for rec in prediction_records:
            key = (rec.model_id, rec.question_id)
            if key in predictions:
                warnings.duplicate_record += 1
                continue
            if has_annotations and rec.question_id not in annotations:
                warnings.orphan_prediction += 1
                continue
            predictions[key] = rec
        return cls(
            annotations=annotations,
            predictions=predictions,
            vocab=vocab,
            warnings=warnings,
            has_annotations=has_annotations,
        )

    def model_ids(self) -> list[str]:
        return sorted({m for m, _ in self.predictions})

    def question_ids_for_model(self, model_id: str) -> list[int]:
        return sorted(q for m, q in self.predictions if m == model_id)


@dataclass(frozen=True)
class RunConfig:
    """Which model plays which role, plus the knobs a run needs."""

    roles: Mapping[str, str]  # model_id -> role
    extended_normalization: bool = False
    metric: str = "simple"
    kmeans: KMeansConfig = field(default_factory=KMeansConfig)

    def __post_init__(self):
        for model_id, role in self.roles.items():
            if role not in ROLES:
                raise RoleUnresolvedError(f"model {model_id!r} has unknown role {role!r}")
        if self.metric not in ("simple", "averaged"):
            raise RoleUnresolvedError(f"metric must be 'simple' or 'averaged', got {self.metric!r}")


def resolve_roles(roles: Mapping[str, str]) -> tuple[str, str, str]:
    """Model ids for the I, Q, and QI roles; exactly one each."""
    by_role: dict[str, list[str]] = {"I": [], "Q": [], "QI": []}
    for model_id, role in roles.items():
        if role in by_role:
            by_role[role].append(model_id)
    for role, ids in by_role.items():
        if len(ids) != 1:
            raise RoleUnresolvedError(
                f"role {role} must map to exactly one model, got {sorted(ids)!r}"
            )
    return by_role["I"][0], by_role["Q"][0], by_role["QI"][0]


def build_features(
    dataset: Dataset, roles: Mapping[str, str]
) -> list[tuple[int, EntropyFeature]]:
    """(H_I, H_Q, H_QI) per question, ascending question id. Questions
    missing any of the three predictions are dropped and counted."""
    i_id, q_id, qi_id = resolve_roles(roles)
    if dataset.has_annotations:
        qids = sorted(dataset.annotations)
    else:
        qids = sorted({q for m, q in dataset.predictions if m in (i_id, q_id, qi_id)})
    features: list[tuple[int, EntropyFeature]] = []
    for qid in qids:
        triple = []
        for mid in (i_id, q_id, qi_id):
            rec = dataset.predictions.get((mid, qid))
            if rec is None:
                break
            triple.append(prediction_entropy(rec))
        if len(triple) != 3:
            dataset.warnings.missing_prediction += 1
            continue
        features.append((qid, EntropyFeature(h_i=triple[0], h_q=triple[1], h_qi=triple[2])))
    return features


def join_for_evaluation(
    dataset: Dataset, model_ids: Sequence[str]
) -> Iterator[tuple[AnnotationRecord, dict[str, str]]]:
    """Pair each fully annotated question with the evaluated models' top
    answers, ascending question id. Answer-less (test) records are not
    yielded; per-model answers may be partial."""
    for qid in sorted(dataset.annotations):
        record = dataset.annotations[qid]
        if not record.has_answers:
            continue
        answers: dict[str, str] = {}
        for mid in model_ids:
            rec = dataset.predictions.get((mid, qid))
            if rec is None:
                continue
            top = prediction_top_answer(rec)
            if top is not None:
                answers[mid] = top
        yield record, answers
