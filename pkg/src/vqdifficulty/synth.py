"""Deterministic synthetic data with planted clusters.

Questions are generated independently, each from a generator seeded with
(seed, question_id), so output is identical no matter how generation is
scheduled. Emitted files use the exact annotation/prediction formats the
ingestion module reads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import ANSWER_TYPES, ANSWERS_PER_QUESTION
from .errors import InvalidKError, InvalidSpecError
from .metrics import partitions_with_parts

# Valid entropy box for generated features; matches a 3129-answer softmax.
ENTROPY_BOX_MAX = math.log(3129)

ROLE_MODEL_IDS = {"I": "model_i", "Q": "model_q", "QI": "model_qi"}


@dataclass(frozen=True)
class ClusterBlueprint:
    """One planted cluster: where its features live and how accurate the
    evaluated models should be on its questions."""

    center: tuple[float, float, float]
    std: float
    weight: float
    target_accuracy: float


@dataclass(frozen=True)
class SynthSpec:
    n_questions: int
    clusters: tuple[ClusterBlueprint, ...]
    seed: int = 0
    n_models: int = 0
    agreement_profile: Mapping[int, float] = None  # unique-answer count -> weight

    def __post_init__(self):
        if self.n_questions < 1:
            raise InvalidSpecError(f"n_questions must be >= 1, got {self.n_questions}")
        if not self.clusters:
            raise InvalidSpecError("at least one cluster blueprint is required")
        total = 0.0
        for c in self.clusters:
            if len(c.center) != 3 or any(not 0.0 <= v <= ENTROPY_BOX_MAX + 0.01 for v in c.center):
                raise InvalidSpecError(f"center {c.center!r} outside [0, {ENTROPY_BOX_MAX:.2f}]^3")
            if c.std < 0:
                raise InvalidSpecError(f"std must be >= 0, got {c.std}")
            if c.weight < 0:
                raise InvalidSpecError(f"weight must be >= 0, got {c.weight}")
            if not 0.0 <= c.target_accuracy <= 1.0:
                raise InvalidSpecError(f"target_accuracy must be in [0, 1], got {c.target_accuracy}")
            total += c.weight
        if abs(total - 1.0) > 1e-9:
            raise InvalidSpecError(f"cluster weights sum to {total!r}, expected 1.0")
        if self.n_models < 0:
            raise InvalidSpecError(f"n_models must be >= 0, got {self.n_models}")
        profile = self.agreement_profile or {1: 0.4, 2: 0.3, 3: 0.3}
        cleaned: dict[int, float] = {}
        psum = 0.0
        for key, w in profile.items():
            k = int(key)
            if not 1 <= k <= ANSWERS_PER_QUESTION:
                raise InvalidSpecError(f"agreement profile key {key!r} outside 1..{ANSWERS_PER_QUESTION}")
            if w < 0:
                raise InvalidSpecError(f"agreement profile weight must be >= 0, got {w}")
            cleaned[k] = float(w)
            psum += w
        if abs(psum - 1.0) > 1e-9:
            raise InvalidSpecError(f"agreement profile weights sum to {psum!r}, expected 1.0")
        object.__setattr__(self, "agreement_profile", cleaned)

    @classmethod
    def from_json_file(cls, path: str | Path) -> "SynthSpec":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InvalidSpecError(f"{path}: not valid JSON: {exc}") from exc
        try:
            clusters = tuple(
                ClusterBlueprint(
                    center=tuple(float(v) for v in c["center"]),
                    std=float(c["std"]),
                    weight=float(c["weight"]),
                    target_accuracy=float(c["target_accuracy"]),
                )
                for c in doc["clusters"]
            )
            return cls(
                n_questions=int(doc["n_questions"]),
                clusters=clusters,
                seed=int(doc.get("seed", 0)),
                n_models=int(doc.get("n_models", 0)),
                agreement_profile=doc.get("agreement_profile"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidSpecError(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class SynthResult:
    annotations: Path
    role_predictions: dict[str, Path]  # role -> path
    eval_predictions: dict[str, Path]  # model_id -> path
    planted_labels: Path


def realize_agreement(k: int, rng: np.random.Generator | int) -> list[str]:
    """A multiset of 10 answer strings with exactly k distinct values;
    multiplicities drawn uniformly over the partitions of 10 into k
    parts."""
    if not 1 <= k <= ANSWERS_PER_QUESTION:
        raise InvalidKError(f"unique-answer count must be in 1..{ANSWERS_PER_QUESTION}, got {k}")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    options = partitions_with_parts(ANSWERS_PER_QUESTION, k)
    parts = options[int(rng.integers(len(options)))]
    answers = [f"ans{i}" for i, mult in enumerate(parts) for _ in range(mult)]
    rng.shuffle(answers)
    return answers


def _question_rng(seed: int, question_id: int) -> np.random.Generator:
    return np.random.default_rng([seed, question_id])


def _modal_answer(answers: Sequence[str]) -> str:
    counts: dict[str, int] = {}
    for a in answers:
        counts[a] = counts.get(a, 0) + 1
    return min(counts.items(), key=lambda kv: (-kv[1], kv[0]))[0]


def _summary_line(question_id: int, model_id: str, entropy: float, top_answer: str) -> str:
    return json.dumps(
        {
            "question_id": question_id,
            "model_id": model_id,
            "entropy": entropy,
            "top_answer": top_answer,
            "top_prob": math.exp(-entropy),
        }
    )


def generate(spec: SynthSpec, out_dir: str | Path) -> SynthResult:
    """Write annotations, per-role and per-model prediction files, and the
    planted cluster labels into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    weights = np.array([c.weight for c in spec.clusters], dtype=np.float64)
    weights /= weights.sum()
    profile_keys = sorted(spec.agreement_profile)
    profile_weights = np.array([spec.agreement_profile[k] for k in profile_keys], dtype=np.float64)
    profile_weights /= profile_weights.sum()
    eval_ids = [f"m{j}" for j in range(spec.n_models)]

    ann_path = out / "annotations.jsonl"
    role_paths = {role: out / f"pred_{mid}.jsonl" for role, mid in ROLE_MODEL_IDS.items()}
    eval_paths = {mid: out / f"pred_{mid}.jsonl" for mid in eval_ids}
    planted_path = out / "planted_labels.csv"

    files = {name: path.open("w", encoding="utf-8") for name, path in role_paths.items()}
    eval_files = {mid: path.open("w", encoding="utf-8") for mid, path in eval_paths.items()}
    try:
        with ann_path.open("w", encoding="utf-8") as ann_fh, planted_path.open(
            "w", encoding="utf-8"
        ) as planted_fh:
            planted_fh.write("question_id,planted_cluster\n")
            for qid in range(1, spec.n_questions + 1):
                rng = _question_rng(spec.seed, qid)
                planted = int(rng.choice(len(spec.clusters), p=weights))
                blueprint = spec.clusters[planted]
                feature = np.clip(
                    np.asarray(blueprint.center) + rng.normal(0.0, blueprint.std, size=3),
                    0.0,
                    ENTROPY_BOX_MAX,
                )
                k_unique = profile_keys[int(rng.choice(len(profile_keys), p=profile_weights))]
                answers = realize_agreement(k_unique, rng)
                answer_type = ANSWER_TYPES[int(rng.integers(len(ANSWER_TYPES)))]
                modal = _modal_answer(answers)

                ann_fh.write(
                    json.dumps(
                        {
                            "question_id": qid,
                            "question": f"synthetic question {qid}?",
                            "answers": answers,
                            "answer_type": answer_type,
                            "split": "val",
                        }
                    )
                    + "\n"
                )
                planted_fh.write(f"{qid},{planted}\n")
                for role, h in zip(("I", "Q", "QI"), feature):
                    files[role].write(
                        _summary_line(qid, ROLE_MODEL_IDS[role], float(h), modal) + "\n"
                    )
                for mid in eval_ids:
                    hit = rng.random() < blueprint.target_accuracy
                    ent = float(min(abs(rng.normal(feature[2], 0.1)), ENTROPY_BOX_MAX))
                    top = modal if hit else f"zz_wrong_{mid}"
                    eval_files[mid].write(_summary_line(qid, mid, ent, top) + "\n")
    finally:
        for fh in files.values():
            fh.close()
        for fh in eval_files.values():
            fh.close()
    return SynthResult(
        annotations=ann_path,
        role_predictions={role: role_paths[role] for role in ("I", "Q", "QI")},
        eval_predictions=eval_paths,
        planted_labels=planted_path,
    )


def read_planted_labels(path: str | Path) -> dict[int, int]:
    labels: dict[int, int] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            qid, cluster = line.strip().split(",")
            labels[int(qid)] = int(cluster)
    return labels
