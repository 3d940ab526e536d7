"""The five per-task generalization gauges.

Each gauge predicts generalization from training-time quantities only (no
validation set): the classifier's final training loss, the intra/inter class
similarity margin, the Davies-Bouldin score of an N-means clustering, the
N-th Laplacian eigenvalue of a neighborhood graph, and the classifier's
confidence on unlabeled samples. Losses and confidences use the natural log.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .simgraph import cosine_matrix, knn_sparsify, laplacian_eigenvalues

GAUGE_CSV_COLUMNS = (
    "episode_id",
    "setting",
    "N",
    "K",
    "Q",
    "lr_loss",
    "similarity",
    "db_score",
    "nth_egv",
    "lr_conf_log",
    "lr_conf_mmp",
    "performance",
)


@dataclass(frozen=True)
class GaugeReport:
    """Per-episode gauge values plus the realized performance.

    Fields that do not apply to the episode's setting are None (e.g. the
    confidence forms exist only when unlabeled queries are available).
    """

    episode_id: int
    setting: str
    n_way: int
    k_shot: int
    q_query: int
    lr_training_loss: float | None
    similarity: float | None
    db_score: float | None
    nth_eigenvalue: float | None
    lr_confidence_log: float | None
    lr_confidence_mean_max_prob: float | None
    performance: float

    def gauge_value(self, gauge: str) -> float | None:
        return {
            "lr_loss": self.lr_training_loss,
            "similarity": self.similarity,
            "db_score": self.db_score,
            "nth_egv": self.nth_eigenvalue,
            "lr_conf_log": self.lr_confidence_log,
            "lr_conf_mmp": self.lr_confidence_mean_max_prob,
        }[gauge]


def _fmt(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def reports_to_csv(reports: Iterable[GaugeReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(GAUGE_CSV_COLUMNS)
    for r in reports:
        writer.writerow(
            [
                r.episode_id,
                r.setting,
                r.n_way,
                r.k_shot,
                r.q_query,
                _fmt(r.lr_training_loss),
                _fmt(r.similarity),
                _fmt(r.db_score),
                _fmt(r.nth_eigenvalue),
                _fmt(r.lr_confidence_log),
                _fmt(r.lr_confidence_mean_max_prob),
                _fmt(r.performance),
            ]
        )
    return buf.getvalue()


def write_reports_csv(reports: Iterable[GaugeReport], path: str | Path) -> None:
    Path(path).write_text(reports_to_csv(reports), encoding="utf-8")


def lr_training_loss(probs: np.ndarray, labels: Sequence[int]) -> float:
    """Mean negative log probability of the true class (natural log)."""
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if p.ndim != 2 or p.shape[0] != y.shape[0]:
        raise ValueError("probability rows must align with labels")
    p_true = p[np.arange(y.shape[0]), y]
    if (p_true == 0).any():
        raise ValueError(
            "zero probability for a true class; clamp probabilities upstream"
        )
    return float(-np.mean(np.log(p_true)))


def similarity_metric(features: np.ndarray, labels: Sequence[int]) -> float:
    """Mean over classes of intra-class cosine minus the worst inter-class cosine.

    intra(c) is the mean cosine over distinct within-class pairs (defined as 1
    for singleton classes); inter(c, c~) is the mean over all cross pairs. The
    result lies in [-1, 1] for nonnegative features.
    """
    y = np.asarray(labels, dtype=np.int64)
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("similarity metric needs at least 2 classes")
    sim = cosine_matrix(features)
    members = [np.flatnonzero(y == c) for c in classes]
    intra = np.empty(classes.size)
    for i, rows in enumerate(members):
        k = rows.size
        if k == 1:
            intra[i] = 1.0
        else:
            block = sim[np.ix_(rows, rows)]
            intra[i] = (block.sum() - np.trace(block)) / (k * (k - 1))
    total = 0.0
    for i, rows_i in enumerate(members):
        worst = -np.inf
        for j, rows_j in enumerate(members):
            if i == j:
                continue
            worst = max(worst, float(sim[np.ix_(rows_i, rows_j)].mean()))
        total += intra[i] - worst
    return float(total / classes.size)


def db_score(features: np.ndarray, assignments: Sequence[int]) -> float:
    """Davies-Bouldin index: mean over clusters of the worst scatter ratio.

    Scatter is the mean Euclidean distance to the cluster centroid; the
    pairwise ratio divides summed scatters by the centroid distance.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(assignments, dtype=np.int64)
    if x.shape[0] != y.shape[0]:
        raise ValueError("assignments must align with feature rows")
    clusters = np.unique(y)
    if clusters.size < 2:
        raise ValueError("DB score needs at least 2 non-empty clusters")
    centroids = np.stack([x[y == c].mean(axis=0) for c in clusters])
    deltas = np.array(
        [np.linalg.norm(x[y == c] - centroids[i], axis=1).mean() for i, c in enumerate(clusters)]
    )
    gaps = np.linalg.norm(centroids[:, None, :] - centroids[None, :, :], axis=2)
    off = ~np.eye(clusters.size, dtype=bool)
    if (gaps[off] == 0).any():
        raise ValueError("degenerate centroids: two clusters share a centroid")
    ratios = (deltas[:, None] + deltas[None, :]) / np.where(off, gaps, np.inf)
    return float(np.max(ratios, axis=1).mean())


def nth_eigenvalue_gauge(
    features: np.ndarray, n_way: int, k_neighbors: int = 15
) -> float:
    """N-th lowest eigenvalue of L = D - W on the k-NN cosine graph.

    Near zero when the graph splits into at least N connected components,
    i.e. when the samples plausibly form N separated groups.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.shape[0] < n_way:
        raise ValueError(f"need at least {n_way} vertices, got {x.shape[0]}")
    graph = knn_sparsify(cosine_matrix(x), k_neighbors)
    return float(laplacian_eigenvalues(graph)[n_way - 1])


@dataclass(frozen=True)
class LrConfidence:
    log_form: float
    mean_max_prob: float


def lr_confidence(probs: np.ndarray) -> LrConfidence:
    """Confidence of the classifier on unlabeled rows.

    ``log_form`` is the mean negative log of the winning-class probability;
    ``mean_max_prob`` is the plain mean of that probability, usable directly
    as a predicted accuracy in [0, 1].
    """
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] == 0:
        raise ValueError("need at least one query probability row")
    top = p.max(axis=1)
    return LrConfidence(float(-np.mean(np.log(top))), float(np.mean(top)))
