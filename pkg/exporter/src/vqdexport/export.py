"""Write model softmax outputs as prediction files.

Each source vector becomes one JSON line, either condensed to
{entropy, top_answer, top_prob} (summary mode, the recommended
interchange form) or kept as the full probability vector (distribution
mode). Lines are written as they are produced; nothing is buffered, so
arbitrarily large splits stream through in constant memory.

Entropy is natural-log, computed in double precision with 0 ln 0 = 0, so
summary files agree with what a consumer recomputes from the full
vectors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PROB_SUM_TOL = 1e-6
MODES = ("summary", "distribution")


class ExportError(Exception):
    """Base class for export failures."""


class LengthMismatchError(ExportError):
    """A probability vector does not match the vocabulary length."""


class NonNormalizedError(ExportError):
    """A probability vector is not a distribution within tolerance."""


def load_vocabulary(path: str | Path) -> list[str]:
    """One candidate answer per line; line i pairs with component i."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [line for line in lines if line != ""]


def distribution_entropy(probs: np.ndarray) -> float:
    """Shannon entropy -sum(p ln p) in nats."""
    nz = probs[probs > 0.0]
    h = float(-(nz * np.log(nz)).sum())
    return 0.0 if h <= 0.0 else h


def _checked(vector, size: int, question_id: int) -> np.ndarray:
    v = np.asarray(vector, dtype=np.float64)
    if v.ndim != 1 or v.size != size:
        raise LengthMismatchError(
            f"question {question_id}: vector of length {v.size}, vocabulary has {size}"
        )
    if not np.all(np.isfinite(v)) or np.any(v < 0.0):
        raise NonNormalizedError(f"question {question_id}: entries must be finite and >= 0")
    total = float(v.sum())
    if abs(total - 1.0) > PROB_SUM_TOL:
        raise NonNormalizedError(f"question {question_id}: probabilities sum to {total!r}")
    return v / total


@dataclass
class ExportJob:
    """One export run: where the vectors come from and how to write them."""

    model_id: str
    vocabulary_path: str | Path
    source: Iterable[tuple[int, Sequence[float]]]
    output_path: str | Path
    mode: str = "summary"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.model_id:
            raise ValueError("model_id must be non-empty")


def export(job: ExportJob) -> Path:
    """Run the job; returns the output path. The output parses cleanly
    under the consumer's strict validation."""
    vocab = load_vocabulary(job.vocabulary_path)
    out = Path(job.output_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as fh:
        for question_id, vector in job.source:
            p = _checked(vector, len(vocab), question_id)
            if job.mode == "summary":
                top = int(p.argmax())
                line = {
                    "question_id": question_id,
                    "model_id": job.model_id,
                    "entropy": distribution_entropy(p),
                    "top_answer": vocab[top],
                    "top_prob": float(p[top]),
                }
            else:
                line = {
                    "question_id": question_id,
                    "model_id": job.model_id,
                    "distribution": p.tolist(),
                }
            fh.write(json.dumps(line) + "\n")
    return out
