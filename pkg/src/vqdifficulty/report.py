"""Per-cluster statistics tables, model summaries, overlap histograms,
and all file emission.

Emission is byte-stable: fixed column order, fixed row order (ordered
cluster, then question id), decimals rendered with 4 fractional digits,
and the string "n/a" for cells whose population is empty (never 0, which
would be a value). Accuracies are reported on a 0-100 scale, entropies in
nats.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .clustering import ClusterAssignment, ClusterModel, LEVELS
from .core import (
    ANSWER_TYPES,
    AnnotationRecord,
    EntropyFeature,
    gt_entropy,
    prediction_entropy,
    prediction_top_answer,
)
from .errors import MalformedRecordError
from .ingest import Dataset
from .metrics import (
    PartitionEntropy,
    agreement_stats,
    consensus_accuracy,
    consensus_accuracy_averaged,
    overlap_histogram,
)

PERCENT = 100.0
NA = "n/a"

ASSIGNMENT_FIELDS = ("question_id", "cluster", "level", "distance", "h_i", "h_q", "h_qi")


def accuracy_metric(name: str) -> Callable[[str, AnnotationRecord, bool], float]:
    if name == "simple":
        return consensus_accuracy
    if name == "averaged":
        return consensus_accuracy_averaged
    raise ValueError(f"unknown accuracy metric {name!r}")


@dataclass(frozen=True)
class CellStat:
    """Mean and population std of one table cell; empty populations carry
    None and render as n/a."""

    n: int
    mean: float | None
    std: float | None

    @classmethod
    def of(cls, values: Sequence[float]) -> "CellStat":
        if len(values) == 0:
            return cls(0, None, None)
        arr = np.asarray(values, dtype=np.float64)
        return cls(int(arr.size), float(arr.mean()), float(arr.std()))


EMPTY_CELL = CellStat(0, None, None)


@dataclass(frozen=True)
class AssignmentRow:
    """One line of an assignments file: the cluster decision plus the
    feature it was made from."""

    question_id: int
    cluster: int
    level: str
    distance: float
    feature: EntropyFeature


def rows_from_assignments(
    assignments: Sequence[ClusterAssignment],
    features: Sequence[tuple[int, EntropyFeature]],
) -> list[AssignmentRow]:
    by_qid = dict(features)
    return [
        AssignmentRow(a.question_id, a.ordered_cluster, a.level, a.distance, by_qid[a.question_id])
        for a in assignments
    ]


@dataclass(frozen=True)
class ClusterColumn:
    ordered_cluster: int
    level: str
    total: int
    feature_entropy: dict[str, CellStat]  # keys h_i, h_q, h_qi
    model_entropy: dict[str, CellStat]
    model_accuracy: dict[str, CellStat]  # 0-100 scale
    gt_entropy: CellStat
    avg_unique: CellStat
    type_counts: dict[str, int]
    n_agree: int
    n_disagree: int


@dataclass(frozen=True)
class ClusterTable:
    k: int
    evaluated_models: tuple[str, ...]
    columns: tuple[ClusterColumn, ...]
    unannotated: int  # assignment rows without usable ground truth


@dataclass(frozen=True)
class ModelCells:
    accuracy: dict[str, CellStat]  # keys: overall + answer types, 0-100 scale
    entropy: dict[str, CellStat]


@dataclass(frozen=True)
class ModelSummary:
    models: dict[str, ModelCells]
    gt_entropy: dict[str, CellStat]


def _grouped_stats(pairs: Sequence[tuple[str, float]]) -> dict[str, CellStat]:
    """CellStat for 'overall' plus each answer type, from (type, value)
    pairs."""
    out = {"overall": CellStat.of([v for _, v in pairs])}
    for t in ANSWER_TYPES:
        out[t] = CellStat.of([v for typ, v in pairs if typ == t])
    return out


def build_model_summary(
    dataset: Dataset,
    model_ids: Sequence[str],
    metric: str = "simple",
    extended: bool = False,
) -> ModelSummary:
    """Overall and per-type accuracy/entropy per model, plus the ground
    truth entropy row, over all fully annotated questions."""
    acc_fn = accuracy_metric(metric)
    qids = [q for q in sorted(dataset.annotations) if dataset.annotations[q].has_answers]
    models: dict[str, ModelCells] = {}
    for mid in model_ids:
        acc_pairs: list[tuple[str, float]] = []
        ent_pairs: list[tuple[str, float]] = []
        for qid in qids:
            rec = dataset.predictions.get((mid, qid))
            if rec is None:
                dataset.warnings.missing_prediction += 1
                continue
            record = dataset.annotations[qid]
            ent_pairs.append((record.answer_type, prediction_entropy(rec)))
            top = prediction_top_answer(rec)
            if top is not None:
                acc_pairs.append((record.answer_type, PERCENT * acc_fn(top, record, extended)))
        models[mid] = ModelCells(accuracy=_grouped_stats(acc_pairs), entropy=_grouped_stats(ent_pairs))
    gt_pairs = [(dataset.annotations[q].answer_type, gt_entropy(dataset.annotations[q], extended)) for q in qids]
    return ModelSummary(models=models, gt_entropy=_grouped_stats(gt_pairs))


def build_cluster_table(
    dataset: Dataset,
    model: ClusterModel,
    rows: Sequence[AssignmentRow],
    evaluated_models: Sequence[str] = (),
    metric: str = "simple",
    extended: bool = False,
) -> ClusterTable:
    """Per ordered cluster: feature-entropy stats, evaluated-model entropy
    and accuracy stats, and ground-truth agreement statistics."""
    acc_fn = accuracy_metric(metric)
    by_cluster: list[list[AssignmentRow]] = [[] for _ in range(model.k)]
    unannotated = 0
    for row in sorted(rows, key=lambda r: r.question_id):
        if not 0 <= row.cluster < model.k:
            raise MalformedRecordError(f"cluster {row.cluster} outside 0..{model.k - 1}")
        record = dataset.annotations.get(row.question_id)
        if record is None or not record.has_answers:
            unannotated += 1
            continue
        by_cluster[row.cluster].append(row)

    columns = []
    for o in range(model.k):
        members = by_cluster[o]
        records = [dataset.annotations[r.question_id] for r in members]
        feature_entropy = {
            "h_i": CellStat.of([r.feature.h_i for r in members]),
            "h_q": CellStat.of([r.feature.h_q for r in members]),
            "h_qi": CellStat.of([r.feature.h_qi for r in members]),
        }
        model_entropy: dict[str, CellStat] = {}
        model_accuracy: dict[str, CellStat] = {}
        for mid in evaluated_models:
            ents: list[float] = []
            accs: list[float] = []
            for row, record in zip(members, records):
                pred = dataset.predictions.get((mid, row.question_id))
                if pred is None:
                    dataset.warnings.missing_prediction += 1
                    continue
                ents.append(prediction_entropy(pred))
                top = prediction_top_answer(pred)
                if top is not None:
                    accs.append(PERCENT * acc_fn(top, record, extended))
            model_entropy[mid] = CellStat.of(ents)
            model_accuracy[mid] = CellStat.of(accs)
        if records:
            agree = agreement_stats(records, extended)
            gt_cell = CellStat.of([gt_entropy(r, extended) for r in records])
            avg_unique = CellStat(len(records), agree.avg_unique, agree.std_unique)
            n_agree, n_disagree = agree.n_agree, agree.n_disagree
        else:
            gt_cell = EMPTY_CELL
            avg_unique = EMPTY_CELL
            n_agree = n_disagree = 0
        type_counts = {t: sum(1 for r in records if r.answer_type == t) for t in ANSWER_TYPES}
        level = model.levels[o] if model.levels is not None else LEVELS[0]
        columns.append(
            ClusterColumn(
                ordered_cluster=o,
                level=level,
                total=len(members),
                feature_entropy=feature_entropy,
                model_entropy=model_entropy,
                model_accuracy=model_accuracy,
                gt_entropy=gt_cell,
                avg_unique=avg_unique,
                type_counts=type_counts,
                n_agree=n_agree,
                n_disagree=n_disagree,
            )
        )
    return ClusterTable(
        k=model.k,
        evaluated_models=tuple(evaluated_models),
        columns=tuple(columns),
        unannotated=unannotated,
    )


def build_overlap_tables(
    dataset: Dataset,
    rows: Sequence[AssignmentRow],
    evaluated_models: Sequence[str],
    k: int,
    extended: bool = False,
) -> tuple[list[np.ndarray], int]:
    """One (unique answers x max overlap) table per ordered cluster, plus
    the count of questions excluded for lacking a full prediction set."""
    n_models = len(evaluated_models)
    if n_models == 0:
        return [np.zeros((10, 1), dtype=np.int64) for _ in range(k)], 0
    grouped: list[list[tuple[AnnotationRecord, dict[str, str]]]] = [[] for _ in range(k)]
    for row in sorted(rows, key=lambda r: r.question_id):
        if not 0 <= row.cluster < k:
            raise MalformedRecordError(f"cluster {row.cluster} outside 0..{k - 1}")
        record = dataset.annotations.get(row.question_id)
        if record is None or not record.has_answers:
            continue
        answers = {}
        for mid in evaluated_models:
            pred = dataset.predictions.get((mid, row.question_id))
            top = prediction_top_answer(pred) if pred is not None else None
            if top is not None:
                answers[mid] = top
        grouped[row.cluster].append((record, answers))
    tables = []
    excluded = 0
    for members in grouped:
        table, skipped = overlap_histogram(members, n_models, extended)
        tables.append(table)
        excluded += skipped
    return tables, excluded


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------


def _fmt(value: float | None) -> str:
    return NA if value is None else f"{value:.4f}"


def _write_csv(path: Path, rows: Sequence[Sequence[str]]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")


def emit_cluster_table(table: ClusterTable, path: str | Path) -> None:
    cols = table.columns
    rows: list[list[str]] = []
    rows.append(["statistic"] + [f"cluster_{c.ordered_cluster}" for c in cols])
    rows.append(["level"] + [c.level for c in cols])
    rows.append(["total"] + [str(c.total) for c in cols])
    for key in ("h_i", "h_q", "h_qi"):
        rows.append([f"entropy_{key}_mean"] + [_fmt(c.feature_entropy[key].mean) for c in cols])
        rows.append([f"entropy_{key}_std"] + [_fmt(c.feature_entropy[key].std) for c in cols])
    for mid in table.evaluated_models:
        rows.append([f"entropy_{mid}_mean"] + [_fmt(c.model_entropy[mid].mean) for c in cols])
        rows.append([f"entropy_{mid}_std"] + [_fmt(c.model_entropy[mid].std) for c in cols])
        rows.append([f"accuracy_{mid}_mean"] + [_fmt(c.model_accuracy[mid].mean) for c in cols])
        rows.append([f"accuracy_{mid}_std"] + [_fmt(c.model_accuracy[mid].std) for c in cols])
    rows.append(["gt_entropy_mean"] + [_fmt(c.gt_entropy.mean) for c in cols])
    rows.append(["gt_entropy_std"] + [_fmt(c.gt_entropy.std) for c in cols])
    rows.append(["avg_unique_answers_mean"] + [_fmt(c.avg_unique.mean) for c in cols])
    rows.append(["avg_unique_answers_std"] + [_fmt(c.avg_unique.std) for c in cols])
    for t in ANSWER_TYPES:
        rows.append([f"count_{t}"] + [str(c.type_counts[t]) for c in cols])
    rows.append(["n_agree"] + [str(c.n_agree) for c in cols])
    rows.append(["n_disagree"] + [str(c.n_disagree) for c in cols])
    _write_csv(Path(path), rows)


_SUMMARY_GROUPS = ("overall",) + ANSWER_TYPES


def emit_model_summary(summary: ModelSummary, path: str | Path) -> None:
    header = ["model"]
    for metric in ("accuracy", "entropy"):
        for group in _SUMMARY_GROUPS:
            header += [f"{metric}_{group}_mean", f"{metric}_{group}_std"]
    rows = [header]
    for mid, cells in summary.models.items():
        row = [mid]
        for group in _SUMMARY_GROUPS:
            row += [_fmt(cells.accuracy[group].mean), _fmt(cells.accuracy[group].std)]
        for group in _SUMMARY_GROUPS:
            row += [_fmt(cells.entropy[group].mean), _fmt(cells.entropy[group].std)]
        rows.append(row)
    gt_row = ["GT"] + [NA] * (2 * len(_SUMMARY_GROUPS))
    for group in _SUMMARY_GROUPS:
        gt_row += [_fmt(summary.gt_entropy[group].mean), _fmt(summary.gt_entropy[group].std)]
    rows.append(gt_row)
    _write_csv(Path(path), rows)


def emit_overlap_histogram(table: np.ndarray, path: str | Path) -> None:
    n_models = table.shape[1]
    rows = [["unique_answers"] + [f"overlap_{v}" for v in range(1, n_models + 1)]]
    for u in range(table.shape[0]):
        rows.append([str(u + 1)] + [str(int(v)) for v in table[u]])
    _write_csv(Path(path), rows)


def emit_partition_enumeration(entries: Sequence[PartitionEntropy], path: str | Path) -> None:
    rows = [["partition", "parts", "entropy", "sort_index"]]
    for i, e in enumerate(entries):
        rows.append(["+".join(str(p) for p in e.partition), str(e.parts), _fmt(e.entropy), str(i)])
    _write_csv(Path(path), rows)


def emit_assignments(rows: Sequence[AssignmentRow], path: str | Path) -> None:
    out = [list(ASSIGNMENT_FIELDS)]
    for r in sorted(rows, key=lambda r: r.question_id):
        out.append(
            [
                str(r.question_id),
                str(r.cluster),
                r.level,
                _fmt(r.distance),
                _fmt(r.feature.h_i),
                _fmt(r.feature.h_q),
                _fmt(r.feature.h_qi),
            ]
        )
    _write_csv(Path(path), out)


def read_assignments(path: str | Path) -> list[AssignmentRow]:
    path = Path(path)
    rows: list[AssignmentRow] = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(ASSIGNMENT_FIELDS):
            raise MalformedRecordError(
                f"expected header {','.join(ASSIGNMENT_FIELDS)}", path=str(path), line=1
            )
        for lineno, row in enumerate(reader, start=2):
            try:
                if len(row) != len(ASSIGNMENT_FIELDS):
                    raise ValueError(f"expected {len(ASSIGNMENT_FIELDS)} fields, got {len(row)}")
                if row[2] not in LEVELS:
                    raise ValueError(f"unknown level {row[2]!r}")
                rows.append(
                    AssignmentRow(
                        question_id=int(row[0]),
                        cluster=int(row[1]),
                        level=row[2],
                        distance=float(row[3]),
                        feature=EntropyFeature(float(row[4]), float(row[5]), float(row[6])),
                    )
                )
            except ValueError as exc:
                raise MalformedRecordError(str(exc), path=str(path), line=lineno) from exc
    return rows


def emit_run_manifest(manifest: Mapping[str, object], path: str | Path) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
