"""Task learners: multinomial logistic regression (Adam) and N-means, plus ARI.

The logistic regression is bias-free (P = softmax(F W)), trained full batch
from zero-initialized weights; weight decay enters the gradient as a classic
additive L2 term. N-means mirrors the usual k-means++ / Lloyd defaults
(10 restarts, 300 iterations, relative tolerance 1e-4) with a deterministic
empty-cluster repair.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .feature_store import canonical_seed


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    learning_rate: float = 0.01
    weight_decay: float = 5e-6
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class LogRegModel:
    weights: np.ndarray  # (dim, n_classes)
    n_classes: int
    config: TrainConfig
    final_training_loss: float


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    y = np.zeros((labels.shape[0], n_classes))
    y[np.arange(labels.shape[0]), labels] = 1.0
    return y


def ce_loss(
    weights: np.ndarray,
    features: np.ndarray,
    labels: np.ndarray,
    weight_decay: float = 0.0,
) -> float:
    """Mean cross-entropy (natural log) plus (wd/2)*||W||^2 when decay is set."""
    logits = features @ weights
    logz = np.log(np.exp(logits - logits.max(axis=1, keepdims=True)).sum(axis=1))
    logp_true = logits[np.arange(labels.shape[0]), labels] - (
        logits.max(axis=1) + logz
    )
    loss = -float(np.mean(logp_true))
    if weight_decay:
        loss += 0.5 * weight_decay * float(np.sum(weights**2))
    return loss


def ce_gradient(
    weights: np.ndarray,
    features: np.ndarray,
    labels: np.ndarray,
    weight_decay: float = 0.0,
) -> np.ndarray:
    """Gradient of ce_loss with respect to the weight matrix."""
    n = features.shape[0]
    probs = softmax(features @ weights)
    probs[np.arange(n), labels] -= 1.0
    grad = features.T @ probs / n
    if weight_decay:
        grad += weight_decay * weights
    return grad


def train_logreg(
    features: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    config: TrainConfig | None = None,
) -> LogRegModel:
    """Full-batch Adam training from zero weights, no bias term.

    Runs one Adam step per epoch and records the final mean cross-entropy
    (without the L2 term). Raises on non-finite values during training.
    """
    cfg = config or TrainConfig()
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError("features and labels must be row-aligned")
    present = np.unique(y)
    if present.min() < 0 or present.max() >= n_classes or present.size != n_classes:
        raise ValueError("every class in 0..n_classes-1 must be present")

    n, d = x.shape
    w = np.zeros((d, n_classes))
    m = np.zeros_like(w)
    v = np.zeros_like(w)
    onehot = _one_hot(y, n_classes)
    for t in range(1, cfg.epochs + 1):
        logits = x @ w
        if not np.isfinite(logits).all():
            raise FloatingPointError(f"non-finite logits at epoch {t} (divergence)")
        probs = softmax(logits)
        grad = x.T @ (probs - onehot) / n + cfg.weight_decay * w
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad**2
        m_hat = m / (1.0 - cfg.beta1**t)
        v_hat = v / (1.0 - cfg.beta2**t)
        w -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)

    final_loss = ce_loss(w, x, y)
    if not np.isfinite(final_loss):
        raise FloatingPointError("non-finite training loss (divergence)")
    return LogRegModel(w, n_classes, cfg, final_loss)


def predict_proba(model: LogRegModel, features: np.ndarray) -> np.ndarray:
    """Per-row class probabilities; rows sum to 1."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.weights.shape[0]:
        raise ValueError(
            f"feature dim {x.shape[1] if x.ndim == 2 else x.shape} does not match "
            f"model dim {model.weights.shape[0]}"
        )
    return softmax(x @ model.weights)


def accuracy(model: LogRegModel, features: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of argmax predictions matching labels; ties pick the lowest class."""
    y = np.asarray(labels, dtype=np.int64)
    if y.size == 0:
        raise ValueError("empty evaluation set")
    x = np.asarray(features, dtype=np.float64)
    if x.shape[1] != model.weights.shape[0]:
        raise ValueError("feature dim does not match model")
    preds = np.argmax(x @ model.weights, axis=1)
    return float(np.mean(preds == y))


@dataclass(frozen=True)
class Clustering:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    repairs: int
    inertia_history: tuple[float, ...]


def _sq_dists(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # ||x - c||^2 via expansion; clamp the rounding negatives
    d2 = (
        np.sum(x**2, axis=1)[:, None]
        - 2.0 * (x @ centers.T)
        + np.sum(centers**2, axis=1)[None, :]
    )
    np.clip(d2, 0.0, None, out=d2)
    return d2


def _kmeans_pp_init(
    x: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = _sq_dists(x, centers[:1])[:, 0]
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)
        centers[j] = x[idx]
        d2 = np.minimum(d2, _sq_dists(x, centers[j : j + 1])[:, 0])
    return centers


def _lloyd(
    x: np.ndarray, centers: np.ndarray, max_iter: int, tol_abs: float
) -> tuple[np.ndarray, np.ndarray, float, int, list[float]]:
    k = centers.shape[0]
    n = x.shape[0]
    repairs = 0
    history: list[float] = []
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        d2 = _sq_dists(x, centers)
        assign = np.argmin(d2, axis=1)
        contrib = d2[np.arange(n), assign]
        history.append(float(contrib.sum()))
        for empty in np.flatnonzero(np.bincount(assign, minlength=k) == 0):
            far = int(np.argmax(contrib))
            assign[far] = empty
            contrib[far] = -1.0
            repairs += 1
        new_centers = np.zeros_like(centers)
        np.add.at(new_centers, assign, x)
        new_centers /= np.bincount(assign, minlength=k)[:, None]
        shift = float(np.sum((new_centers - centers) ** 2))
        centers = new_centers
        if shift <= tol_abs:
            break
    # centers are exactly the per-cluster means of the returned assignment
    inertia = float(np.sum((x - centers[assign]) ** 2))
    return assign, centers, inertia, repairs, history


def n_means(
    features: np.ndarray,
    n_clusters: int,
    seed: int,
    n_init: int = 10,
    max_iter: int = 300,
    tol: float = 1e-4,
) -> Clustering:
    """k-means++ anchored Lloyd clustering, best of ``n_init`` seeded restarts.

    The relative tolerance is scaled by the mean per-feature variance of the
    data (matching the usual library convention); ties between restarts keep
    the lowest restart index. Empty clusters are repaired by reassigning the
    point currently farthest from its centroid.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("features must be 2-D")
    if x.shape[0] < n_clusters:
        raise ValueError(f"{x.shape[0]} rows cannot form {n_clusters} clusters")
    tol_abs = tol * float(np.mean(np.var(x, axis=0)))
    best: Clustering | None = None
    for restart in range(n_init):
        rng = np.random.default_rng(
            np.random.SeedSequence([canonical_seed(seed), restart])
        )
        centers = _kmeans_pp_init(x, n_clusters, rng)
        assign, centers, inertia, repairs, history = _lloyd(x, centers, max_iter, tol_abs)
        if best is None or inertia < best.inertia:
            best = Clustering(assign, centers, inertia, repairs, tuple(history))
    assert best is not None
    return best


def adjusted_rand_index(a: Sequence[int], b: Sequence[int]) -> float:
    """Chance-corrected partition agreement via the pair-counting formula.

    Returns 1.0 when the pair-count denominator vanishes (both partitions
    degenerate in the same way); may legitimately be negative.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("partitions must be 1-D and equal length")
    n = a.shape[0]
    if n < 2:
        raise ValueError("need at least 2 elements")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)

    def comb2(x: np.ndarray) -> np.ndarray:
        return x * (x - 1) // 2

    sum_cells = int(comb2(table).sum())
    sum_a = int(comb2(table.sum(axis=1)).sum())
    sum_b = int(comb2(table.sum(axis=0)).sum())
    pairs = n * (n - 1) // 2
    expected = sum_a * sum_b / pairs
    denom = 0.5 * (sum_a + sum_b) - expected
    if denom == 0:
        return 1.0
    return float((sum_cells - expected) / denom)
