"""Command-line entry point.

Exit codes: 0 success, 2 bad usage or input validation failure, 1 runtime
failure. All randomness flows from --seed; VQD_THREADS caps worker count
without changing any output byte.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import os
import sys
from contextlib import contextmanager
from pathlib import Path

from .clustering import (
    KMeansConfig,
    assign_all,
    fit_difficulty_model,
    load_model,
    save_model,
)
from .errors import RoleUnresolvedError, ToolkitError
from .ingest import (
    Dataset,
    IngestWarnings,
    build_features,
    load_annotations,
    load_predictions,
    load_vocabulary,
)
from .metrics import partition_entropy_enumeration
from .report import (
    build_cluster_table,
    build_model_summary,
    build_overlap_tables,
    emit_assignments,
    emit_cluster_table,
    emit_model_summary,
    emit_overlap_histogram,
    emit_partition_enumeration,
    emit_run_manifest,
    read_assignments,
    rows_from_assignments,
)
from .synth import SynthSpec, generate

LOCK_NAME = ".vqdifficulty.lock"


def worker_count() -> int:
    raw = os.environ.get("VQD_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _require_file(path: str | Path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"input file not found: {p}")
    return p


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _input_entry(path: Path) -> dict[str, str]:
    return {"path": str(path), "sha256": _sha256(path)}


@contextmanager
def _output_lock(directory: Path):
    directory.mkdir(parents=True, exist_ok=True)
    lock = directory / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RuntimeError(
            f"output directory {directory} is in use (remove {lock} if stale)"
        ) from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _load_role_predictions(args, vocab, warnings):
    """Load the I/Q/QI prediction files; each must carry exactly one
    model id, and the three ids must be distinct."""
    roles: dict[str, str] = {}
    records = []
    for role, path in (("I", args.pred_i), ("Q", args.pred_q), ("QI", args.pred_qi)):
        recs = load_predictions(
            _require_file(path), vocab=vocab, strict=args.strict, warnings=warnings
        )
        ids = sorted({r.model_id for r in recs})
        if len(ids) != 1:
            raise RoleUnresolvedError(
                f"{path}: expected predictions from exactly one model, found {ids!r}"
            )
        if ids[0] in roles:
            raise RoleUnresolvedError(f"model {ids[0]!r} supplied for more than one role")
        roles[ids[0]] = role
        records.extend(recs)
    return roles, records


def _print_warnings(warnings: IngestWarnings) -> None:
    if warnings.total:
        parts = ", ".join(f"{k}={v}" for k, v in warnings.as_dict().items() if v)
        print(f"warnings: {parts}")


def _cmd_fit(args) -> int:
    workers = worker_count()
    warnings = IngestWarnings()
    vocab = load_vocabulary(_require_file(args.vocab)) if args.vocab else None
    annotations = load_annotations(_require_file(args.annotations), strict=args.strict, warnings=warnings)
    roles, records = _load_role_predictions(args, vocab, warnings)
    dataset = Dataset.build(annotations, records, vocab, warnings)
    features = build_features(dataset, roles)
    config = KMeansConfig(
        k=args.k,
        max_iters=args.max_iters,
        tol=args.tol,
        n_restarts=args.restarts,
        seed=args.seed,
        level_q_threshold=args.level_q_threshold,
        level_qi_threshold=args.level_qi_threshold,
    )
    out_model = Path(args.out_model)
    out_assignments = (
        Path(args.out_assignments)
        if args.out_assignments
        else out_model.parent / (out_model.stem + "_assignments.csv")
    )
    with _output_lock(out_model.parent):
        model, assignments = fit_difficulty_model(features, config, workers)
        save_model(model, out_model)
        rows = rows_from_assignments(assignments, features)
        out_assignments.parent.mkdir(parents=True, exist_ok=True)
        emit_assignments(rows, out_assignments)

    sizes = [0] * model.k
    sums = [[0.0, 0.0, 0.0] for _ in range(model.k)]
    for row in rows:
        sizes[row.cluster] += 1
        sums[row.cluster][0] += row.feature.h_i
        sums[row.cluster][1] += row.feature.h_q
        sums[row.cluster][2] += row.feature.h_qi
    print(f"fitted k={model.k} on {len(features)} questions, inertia={model.inertia:.4f}")
    print("cluster  size  mean_h_i  mean_h_q  mean_h_qi  level")
    for o in range(model.k):
        n = max(sizes[o], 1)
        print(
            f"{o:7d}  {sizes[o]:4d}  {sums[o][0] / n:8.4f}  {sums[o][1] / n:8.4f}"
            f"  {sums[o][2] / n:9.4f}  {model.levels[o]}"
        )
    print(f"model written to {out_model}")
    print(f"assignments written to {out_assignments}")
    _print_warnings(warnings)
    return 0


def _cmd_assign(args) -> int:
    workers = worker_count()
    warnings = IngestWarnings()
    vocab = load_vocabulary(_require_file(args.vocab)) if args.vocab else None
    model = load_model(_require_file(args.model))
    roles, records = _load_role_predictions(args, vocab, warnings)
    dataset = Dataset.build(None, records, vocab, warnings)
    features = build_features(dataset, roles)
    out = Path(args.out)
    with _output_lock(out.parent):
        assignments = assign_all(model, features, workers)
        emit_assignments(rows_from_assignments(assignments, features), out)
    print(f"assigned {len(assignments)} questions to {model.k} clusters")
    print(f"assignments written to {out}")
    _print_warnings(warnings)
    return 0


def _parse_eval_preds(values) -> list[tuple[str, Path]]:
    pairs = []
    seen = set()
    for value in values or []:
        model_id, sep, path = value.partition("=")
        if not sep or not model_id or not path:
            raise ToolkitError(f"--eval-preds expects MODEL=PATH, got {value!r}")
        if model_id in seen:
            raise ToolkitError(f"--eval-preds lists model {model_id!r} twice")
        seen.add(model_id)
        pairs.append((model_id, _require_file(path)))
    return pairs


def _cmd_report(args) -> int:
    warnings = IngestWarnings()
    vocab = load_vocabulary(_require_file(args.vocab)) if args.vocab else None
    model = load_model(_require_file(args.model))
    annotations = load_annotations(_require_file(args.annotations), strict=args.strict, warnings=warnings)
    rows = read_assignments(_require_file(args.assignments))
    eval_pairs = _parse_eval_preds(args.eval_preds)
    records = []
    for model_id, path in eval_pairs:
        records.extend(
            load_predictions(path, model_id=model_id, vocab=vocab, strict=args.strict, warnings=warnings)
        )
    dataset = Dataset.build(annotations, records, vocab, warnings)
    eval_ids = [mid for mid, _ in eval_pairs]

    out_dir = Path(args.out_dir)
    with _output_lock(out_dir):
        table = build_cluster_table(
            dataset, model, rows, eval_ids, metric=args.metric, extended=args.extended_normalization
        )
        summary = build_model_summary(
            dataset, eval_ids, metric=args.metric, extended=args.extended_normalization
        )
        outputs = ["cluster_table.csv", "model_summary.csv"]
        emit_cluster_table(table, out_dir / "cluster_table.csv")
        emit_model_summary(summary, out_dir / "model_summary.csv")
        overlap_excluded = 0
        if eval_ids:
            overlap_tables, overlap_excluded = build_overlap_tables(
                dataset, rows, eval_ids, model.k, extended=args.extended_normalization
            )
            for o, overlap in enumerate(overlap_tables):
                name = f"overlap_hist_cluster{o}.csv"
                emit_overlap_histogram(overlap, out_dir / name)
                outputs.append(name)
        manifest = {
            "command": "report",
            "config": {
                "metric": args.metric,
                "extended_normalization": args.extended_normalization,
                "k": model.k,
                "seed": model.seed,
            },
            "inputs": {
                "annotations": _input_entry(Path(args.annotations)),
                "model": _input_entry(Path(args.model)),
                "assignments": _input_entry(Path(args.assignments)),
                "eval_predictions": {mid: _input_entry(path) for mid, path in eval_pairs},
            },
            "warnings": {
                **warnings.as_dict(),
                "unannotated_assignments": table.unannotated,
                "overlap_excluded": overlap_excluded,
            },
            "outputs": sorted(outputs),
        }
        emit_run_manifest(manifest, out_dir / "run_manifest.json")
    print(f"report written to {out_dir} ({len(outputs)} tables + run_manifest.json)")
    _print_warnings(warnings)
    return 0


def _cmd_enumerate(args) -> int:
    entries = partition_entropy_enumeration(args.n)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    emit_partition_enumeration(entries, out)
    print(f"{len(entries)} partitions of {args.n} written to {out}")
    return 0


def _cmd_synth(args) -> int:
    spec = SynthSpec.from_json_file(_require_file(args.spec))
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    out_dir = Path(args.out_dir)
    with _output_lock(out_dir):
        result = generate(spec, out_dir)
    print(f"annotations: {result.annotations}")
    for role, path in result.role_predictions.items():
        print(f"predictions ({role}): {path}")
    for mid, path in result.eval_predictions.items():
        print(f"predictions ({mid}): {path}")
    print(f"planted labels: {result.planted_labels}")
    return 0


def _cmd_validate(args) -> int:
    vocab = load_vocabulary(_require_file(args.vocab)) if args.vocab else None
    warnings = IngestWarnings()
    annotations = load_annotations(_require_file(args.annotations), strict=True, warnings=warnings)
    print(f"{args.annotations}: {len(annotations)} annotation records ok")
    for path in args.preds or []:
        records = load_predictions(_require_file(path), vocab=vocab, strict=True, warnings=warnings)
        models = sorted({r.model_id for r in records})
        print(f"{path}: {len(records)} prediction records ok (models: {', '.join(models)})")
    print("all inputs clean")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vqdifficulty",
        description="Cluster visual questions by the entropies of model answer distributions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a difficulty cluster model from I/Q/QI predictions")
    fit.add_argument("--annotations", required=True)
    fit.add_argument("--pred-i", required=True)
    fit.add_argument("--pred-q", required=True)
    fit.add_argument("--pred-qi", required=True)
    fit.add_argument("--k", type=int, default=10)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--out-model", required=True)
    fit.add_argument("--out-assignments", default=None)
    fit.add_argument("--restarts", type=int, default=10)
    fit.add_argument("--tol", type=float, default=1e-6)
    fit.add_argument("--max-iters", type=int, default=300)
    fit.add_argument("--level-q-threshold", type=float, default=1.0)
    fit.add_argument("--level-qi-threshold", type=float, default=2.0)
    fit.add_argument("--vocab", default=None)
    fit.add_argument("--strict", action="store_true")
    fit.set_defaults(func=_cmd_fit)

    assign = sub.add_parser("assign", help="assign questions to an existing model's clusters")
    assign.add_argument("--model", required=True)
    assign.add_argument("--pred-i", required=True)
    assign.add_argument("--pred-q", required=True)
    assign.add_argument("--pred-qi", required=True)
    assign.add_argument("--out", required=True)
    assign.add_argument("--vocab", default=None)
    assign.add_argument("--strict", action="store_true")
    assign.set_defaults(func=_cmd_assign)

    report = sub.add_parser("report", help="emit per-cluster statistics and model summaries")
    report.add_argument("--annotations", required=True)
    report.add_argument("--model", required=True)
    report.add_argument("--assignments", required=True)
    report.add_argument("--eval-preds", action="append", metavar="MODEL=PATH", default=[])
    report.add_argument("--metric", choices=("simple", "averaged"), default="simple")
    report.add_argument("--out-dir", required=True)
    report.add_argument("--extended-normalization", action="store_true")
    report.add_argument("--vocab", default=None)
    report.add_argument("--strict", action="store_true")
    report.set_defaults(func=_cmd_report)

    enum = sub.add_parser("enumerate", help="enumerate annotator-split partitions with entropies")
    enum.add_argument("--n", type=int, default=10)
    enum.add_argument("--out", required=True)
    enum.set_defaults(func=_cmd_enumerate)

    synth = sub.add_parser("synth", help="generate deterministic synthetic data with planted clusters")
    synth.add_argument("--spec", required=True)
    synth.add_argument("--out-dir", required=True)
    synth.add_argument("--seed", type=int, default=None)
    synth.set_defaults(func=_cmd_synth)

    validate = sub.add_parser("validate", help="strict-parse inputs and report any defect")
    validate.add_argument("--annotations", required=True)
    validate.add_argument("--preds", nargs="*", default=[])
    validate.add_argument("--vocab", default=None)
    validate.set_defaults(func=_cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ToolkitError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, RuntimeError, AssertionError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
