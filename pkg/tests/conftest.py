import json
from pathlib import Path

import pytest

from vqdifficulty.core import AnnotationRecord


def make_record(qid, answers, answer_type="other", split="val", question="what is it?"):
    return AnnotationRecord(
        question_id=qid,
        question_text=question,
        answers=tuple(answers),
        answer_type=answer_type,
        split=split,
    )


def write_jsonl(path, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return path


def annotation_obj(qid, answers, answer_type="other", split="val"):
    return {
        "question_id": qid,
        "question": f"question {qid}?",
        "answers": list(answers),
        "answer_type": answer_type,
        "split": split,
    }


def summary_obj(qid, model_id, entropy, top_answer, top_prob=0.5):
    return {
        "question_id": qid,
        "model_id": model_id,
        "entropy": entropy,
        "top_answer": top_answer,
        "top_prob": top_prob,
    }


@pytest.fixture
def tmp_files(tmp_path):
    """Factory writing JSONL fixtures under the test's tmp dir."""

    def factory(name, rows):
        return write_jsonl(tmp_path / name, rows)

    return factory
