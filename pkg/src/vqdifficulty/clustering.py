"""K-means over 3-d entropy features, cluster ordering, difficulty levels,
and nearest-centroid assignment.

Determinism contract: a fixed seed and a fixed feature order produce a
bit-identical model. Restarts draw from one sequential generator, the
assignment step is chunked so any worker count yields the same per-point
distances, and centroid updates accumulate in input (question id) order.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import EntropyFeature
from .errors import (
    DegenerateDataError,
    InvalidConfigError,
    MalformedModelFileError,
    TooFewPointsError,
    VersionMismatchError,
)

FEATURE_NAMES = ("H_I", "H_Q", "H_QI")
LEVELS = ("L1", "L2", "L3")
MODEL_FORMAT_VERSION = 1

_ASSIGN_CHUNK = 2048


@dataclass(frozen=True)
class KMeansConfig:
    k: int = 10
    max_iters: int = 300
    tol: float = 1e-6
    n_restarts: int = 10
    seed: int = 0
    level_q_threshold: float = 1.0
    level_qi_threshold: float = 2.0

    def __post_init__(self):
        if self.k < 1:
            raise InvalidConfigError(f"k must be >= 1, got {self.k}")
        if self.max_iters < 1:
            raise InvalidConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.tol < 0:
            raise InvalidConfigError(f"tol must be >= 0, got {self.tol}")
        if self.n_restarts < 1:
            raise InvalidConfigError(f"n_restarts must be >= 1, got {self.n_restarts}")


@dataclass(frozen=True, eq=False)
class ClusterModel:
    """Fitted k-means model.

    Once ordered, centroid row o belongs to ordered cluster o and
    ordering[o] names the raw label it came from. Levels are per ordered
    cluster.
    """

    k: int
    centroids: np.ndarray  # (k, 3)
    config: KMeansConfig
    inertia: float
    seed: int
    ordering: tuple[int, ...] | None = None
    levels: tuple[str, ...] | None = None

    @property
    def is_ready(self) -> bool:
        return self.ordering is not None and self.levels is not None


@dataclass(frozen=True)
class ClusterAssignment:
    question_id: int
    ordered_cluster: int
    level: str
    distance: float


def _as_arrays(features: Iterable[tuple[int, EntropyFeature]]) -> tuple[np.ndarray, np.ndarray]:
    qids = []
    rows = []
    for qid, feat in features:
        qids.append(qid)
        rows.append((feat.h_i, feat.h_q, feat.h_qi))
    return np.asarray(qids, dtype=np.int64), np.asarray(rows, dtype=np.float64).reshape(-1, 3)


def _sq_dists(X: np.ndarray, centers: np.ndarray, workers: int) -> np.ndarray:
    """Squared Euclidean distances, (n, k). Chunked by rows so the result
    is identical for any worker count."""

    def block(lo: int, hi: int) -> np.ndarray:
        diff = X[lo:hi, None, :] - centers[None, :, :]
        return (diff * diff).sum(axis=2)

    n = X.shape[0]
    if workers <= 1 or n <= _ASSIGN_CHUNK:
        return block(0, n)
    bounds = list(range(0, n, _ASSIGN_CHUNK)) + [n]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda se: block(*se), zip(bounds[:-1], bounds[1:])))
    return np.vstack(parts)


def _kmeanspp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]), dtype=np.float64)
    centers[0] = X[int(rng.integers(n))]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[j] = X[idx]
        d2 = np.minimum(d2, ((X - centers[j]) ** 2).sum(axis=1))
    return centers


def _lloyd(
    X: np.ndarray, centers: np.ndarray, config: KMeansConfig, workers: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    n, k = X.shape[0], config.k
    row_idx = np.arange(n)
    prev_inertia = math.inf
    for _ in range(config.max_iters):
        d2 = _sq_dists(X, centers, workers)
        labels = d2.argmin(axis=1)
        point_d2 = d2[row_idx, labels]
        inertia = float(point_d2.sum())
        assert inertia <= prev_inertia + 1e-9, "inertia increased during Lloyd iteration"
        prev_inertia = inertia

        new_centers = centers.copy()
        counts = np.bincount(labels, minlength=k)
        for j in range(k):
            if counts[j] > 0:
                new_centers[j] = X[labels == j].mean(axis=0)
        empties = np.flatnonzero(counts == 0)
        if empties.size:
            # Reseed each empty cluster at the point currently farthest
            # from its assigned centroid; claimed points can't be reused.
            claimable = point_d2.copy()
            for j in empties:
                far = int(claimable.argmax())
                new_centers[j] = X[far]
                claimable[far] = -1.0

        shift = float(np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max())
        centers = new_centers
        if shift <= config.tol:
            break

    d2 = _sq_dists(X, centers, workers)
    labels = d2.argmin(axis=1)
    point_d2 = d2[row_idx, labels]
    return centers, labels, np.sqrt(point_d2), float(point_d2.sum())


def kmeans_fit(
    features: Sequence[tuple[int, EntropyFeature]],
    config: KMeansConfig,
    workers: int = 1,
) -> tuple[ClusterModel, np.ndarray]:
    """Lloyd's algorithm from k-means++ starts, best of n_restarts by
    inertia. Returns the raw (unordered) model and the per-point labels."""
    _, X = _as_arrays(features)
    if X.shape[0] < config.k:
        raise TooFewPointsError(f"{X.shape[0]} points for k={config.k}")
    if np.unique(X, axis=0).shape[0] < config.k:
        raise DegenerateDataError(f"fewer than k={config.k} distinct points")

    rng = np.random.default_rng(config.seed)
    best: tuple[np.ndarray, np.ndarray, float] | None = None
    for _ in range(config.n_restarts):
        start = _kmeanspp_init(X, config.k, rng)
        centers, labels, _, inertia = _lloyd(X, start, config, workers)
        if best is None or inertia < best[2]:
            best = (centers, labels, inertia)
    centers, labels, inertia = best
    model = ClusterModel(
        k=config.k, centroids=centers, config=config, inertia=inertia, seed=config.seed
    )
    return model, labels


def _member_means(X: np.ndarray, labels: np.ndarray, k: int, centroids: np.ndarray) -> np.ndarray:
    """Per-label member means; empty labels fall back to the centroid."""
    means = centroids.copy()
    for j in range(k):
        mask = labels == j
        if mask.any():
            means[j] = X[mask].mean(axis=0)
    return means


def order_clusters(
    model: ClusterModel,
    features: Sequence[tuple[int, EntropyFeature]],
    labels: np.ndarray,
) -> tuple[ClusterModel, np.ndarray]:
    """Renumber clusters by ascending member-mean Q+I entropy (ties keep
    raw-label order). Returns the ordered model and relabeled points."""
    _, X = _as_arrays(features)
    means = _member_means(X, labels, model.k, model.centroids)
    perm = np.argsort(means[:, 2], kind="stable")
    ordering = tuple(int(r) for r in perm)
    raw_to_ordered = np.empty(model.k, dtype=np.int64)
    raw_to_ordered[perm] = np.arange(model.k)
    ordered_model = replace(model, centroids=model.centroids[perm], ordering=ordering)
    return ordered_model, raw_to_ordered[labels]


def assign_levels(
    model: ClusterModel,
    features: Sequence[tuple[int, EntropyFeature]],
    ordered_labels: np.ndarray,
) -> ClusterModel:
    """Difficulty level per ordered cluster from member means: L1 when the
    question-only entropy stays below the Q threshold, L3 when the
    question+image entropy exceeds the Q+I threshold, L2 otherwise."""
    if model.ordering is None:
        raise InvalidConfigError("order_clusters must run before assign_levels")
    _, X = _as_arrays(features)
    means = _member_means(X, ordered_labels, model.k, model.centroids)
    levels = []
    for j in range(model.k):
        if means[j, 1] < model.config.level_q_threshold:
            levels.append("L1")
        elif means[j, 2] > model.config.level_qi_threshold:
            levels.append("L3")
        else:
            levels.append("L2")
    return replace(model, levels=tuple(levels))


def assign(model: ClusterModel, question_id: int, feature: EntropyFeature) -> ClusterAssignment:
    """Nearest ordered centroid by Euclidean distance; ties go to the
    lowest ordered label."""
    if not model.is_ready:
        raise InvalidConfigError("model must be ordered and leveled before assignment")
    diff = model.centroids - feature.as_array()
    d2 = (diff * diff).sum(axis=1)
    c = int(d2.argmin())
    return ClusterAssignment(
        question_id=question_id,
        ordered_cluster=c,
        level=model.levels[c],
        distance=float(math.sqrt(d2[c])),
    )


def assign_all(
    model: ClusterModel,
    features: Sequence[tuple[int, EntropyFeature]],
    workers: int = 1,
) -> list[ClusterAssignment]:
    if not model.is_ready:
        raise InvalidConfigError("model must be ordered and leveled before assignment")
    qids, X = _as_arrays(features)
    if qids.size == 0:
        return []
    d2 = _sq_dists(X, model.centroids, workers)
    labels = d2.argmin(axis=1)
    dists = np.sqrt(d2[np.arange(qids.size), labels])
    return [
        ClusterAssignment(int(q), int(c), model.levels[int(c)], float(d))
        for q, c, d in zip(qids, labels, dists)
    ]


def fit_difficulty_model(
    features: Sequence[tuple[int, EntropyFeature]],
    config: KMeansConfig,
    workers: int = 1,
) -> tuple[ClusterModel, list[ClusterAssignment]]:
    """Full pipeline: fit, order by Q+I entropy, attach levels, and report
    each training point's ordered assignment."""
    raw_model, raw_labels = kmeans_fit(features, config, workers)
    model, ordered_labels = order_clusters(raw_model, features, raw_labels)
    model = assign_levels(model, features, ordered_labels)
    _, X = _as_arrays(features)
    dists = np.sqrt(((X - model.centroids[ordered_labels]) ** 2).sum(axis=1))
    assignments = [
        ClusterAssignment(int(qid), int(lbl), model.levels[int(lbl)], float(d))
        for (qid, _), lbl, d in zip(features, ordered_labels, dists)
    ]
    return model, assignments


def save_model(model: ClusterModel, path: str | Path) -> None:
    if not model.is_ready:
        raise InvalidConfigError("refusing to serialize a model without ordering and levels")
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "k": model.k,
        "feature_names": list(FEATURE_NAMES),
        "centroids": [[float(v) for v in row] for row in model.centroids],
        "ordering": list(model.ordering),
        "levels": list(model.levels),
        "config": {
            "k": model.config.k,
            "max_iters": model.config.max_iters,
            "tol": model.config.tol,
            "n_restarts": model.config.n_restarts,
            "seed": model.config.seed,
            "level_q_threshold": model.config.level_q_threshold,
            "level_qi_threshold": model.config.level_qi_threshold,
        },
        "seed": model.seed,
        "inertia": model.inertia,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> ClusterModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        if isinstance(exc, json.JSONDecodeError):
            raise MalformedModelFileError(f"{path}: not valid JSON: {exc}") from exc
        raise
    if not isinstance(doc, dict):
        raise MalformedModelFileError(f"{path}: expected a JSON object")
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise VersionMismatchError(
            f"{path}: format_version {version!r}, this build reads {MODEL_FORMAT_VERSION}"
        )
    try:
        k = int(doc["k"])
        centroids = np.asarray(doc["centroids"], dtype=np.float64)
        ordering = tuple(int(v) for v in doc["ordering"])
        levels = tuple(str(v) for v in doc["levels"])
        config = KMeansConfig(**doc["config"])
        seed = int(doc["seed"])
        inertia = float(doc["inertia"])
    except (KeyError, TypeError, ValueError, InvalidConfigError) as exc:
        raise MalformedModelFileError(f"{path}: {exc}") from exc
    if centroids.shape != (k, len(FEATURE_NAMES)):
        raise MalformedModelFileError(
            f"{path}: expected {k}x{len(FEATURE_NAMES)} centroids, got {centroids.shape}"
        )
    if not np.all(np.isfinite(centroids)):
        raise MalformedModelFileError(f"{path}: centroids contain non-finite values")
    if sorted(ordering) != list(range(k)):
        raise MalformedModelFileError(f"{path}: ordering is not a permutation of 0..{k - 1}")
    if len(levels) != k or any(lvl not in LEVELS for lvl in levels):
        raise MalformedModelFileError(f"{path}: levels must be {LEVELS} entries, one per cluster")
    if doc.get("feature_names") != list(FEATURE_NAMES):
        raise MalformedModelFileError(f"{path}: unexpected feature names {doc.get('feature_names')!r}")
    if not math.isfinite(inertia) or inertia < 0:
        raise MalformedModelFileError(f"{path}: inertia must be finite and >= 0")
    return ClusterModel(
        k=k,
        centroids=centroids,
        config=config,
        inertia=inertia,
        seed=seed,
        ordering=ordering,
        levels=levels,
    )
