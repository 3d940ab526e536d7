"""Cosine similarity graphs: sparsification, normalization, diffusion, spectra.

Graphs are dense symmetric weight matrices with zero diagonal; at the task
sizes involved here (at most a few hundred vertices) dense linear algebra is
both simplest and fastest.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

MODE_DENSE = "dense"
MODE_ROW_TOP_K = "row_top_k"
MODE_GLOBAL_TOP_EDGES = "global_top_edges"


@dataclass(frozen=True)
class GraphConstruction:
    mode: str
    k: float | None
    symmetrized: bool


@dataclass(frozen=True)
class SimilarityGraph:
    """Symmetric nonnegative adjacency with zero diagonal, weights in [0, 1]."""

    weights: np.ndarray
    construction: GraphConstruction

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"weights must be square, got shape {w.shape}")
        if not np.array_equal(w, w.T):
            raise ValueError("weights must be symmetric")
        if np.diagonal(w).any():
            raise ValueError("diagonal must be zero (no self-loops)")
        if w.min() < 0 or w.max() > 1:
            raise ValueError("weights must lie in [0, 1]")
        w.setflags(write=False)

    @property
    def num_vertices(self) -> int:
        return int(self.weights.shape[0])

    def num_edges(self) -> int:
        return int(np.count_nonzero(np.triu(self.weights, k=1)))

    def degrees(self) -> np.ndarray:
        return self.weights.sum(axis=1)


@dataclass(frozen=True)
class DiffusionParams:
    """Feature propagation parameters (defaults follow the diffusion recipe)."""

    alpha: float = 0.75
    kappa: int = 1
    k_neighbors: int = 15

    def __post_init__(self) -> None:
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")


def _as_matrix(features, rows: Sequence[int] | None) -> np.ndarray:
    feats = getattr(features, "features", features)
    m = np.asarray(feats, dtype=np.float64)
    if rows is not None:
        m = m[np.asarray(rows, dtype=np.int64)]
    return m


def cosine_matrix(features, rows: Sequence[int] | None = None) -> np.ndarray:
    """Dense pairwise cosine similarities; symmetric with unit diagonal.

    ``features`` is a FeatureSet or a raw (n, d) matrix; ``rows`` optionally
    selects a subset of rows first.
    """
    m = _as_matrix(features, rows)
    if m.shape[0] == 0:
        raise ValueError("empty row selection")
    norms = np.linalg.norm(m, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ValueError(f"zero-norm row at index {zero[0]}")
    unit = m / norms[:, None]
    sim = unit @ unit.T
    sim = (sim + sim.T) / 2.0
    np.clip(sim, -1.0, 1.0, out=sim)
    np.fill_diagonal(sim, 1.0)
    return sim


def knn_sparsify(m: np.ndarray, k: int) -> SimilarityGraph:
    """Keep the k largest off-diagonal entries per row, then symmetrize by max.

    The row-wise rule alone produces an asymmetric matrix; the elementwise max
    with the transpose is the minimal symmetrization and is recorded in the
    construction metadata. Ties at the k-th value resolve to the lower vertex
    index. ``k >= n - 1`` keeps every off-diagonal entry (flagged dense).
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    if not np.allclose(m, m.T, rtol=0.0, atol=1e-12):
        raise ValueError("matrix must be symmetric")
    if k < 1:
        raise ValueError("k must be >= 1")
    n = m.shape[0]
    a = (m + m.T) / 2.0
    np.fill_diagonal(a, 0.0)
    if k >= n - 1:
        return SimilarityGraph(a, GraphConstruction(MODE_DENSE, float(k), False))
    keep = np.zeros_like(a, dtype=bool)
    for i in range(n):
        # stable argsort on the negated row: equal weights keep ascending index
        order = np.argsort(-a[i], kind="stable")
        order = order[order != i]
        keep[i, order[:k]] = True
    kept = np.where(keep, a, 0.0)
    w = np.maximum(kept, kept.T)
    return SimilarityGraph(w, GraphConstruction(MODE_ROW_TOP_K, float(k), True))


def heavier_edges_graph(m: np.ndarray, k: float) -> SimilarityGraph:
    """Keep the round(k * n) globally heaviest edges of a dense similarity.

    Edges are upper-triangle pairs ranked by weight (ties resolve to the
    lexicographically smallest pair). Errors when the budget exceeds the
    n*(n-1)/2 available pairs.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    if not np.allclose(m, m.T, rtol=0.0, atol=1e-12):
        raise ValueError("matrix must be symmetric")
    n = m.shape[0]
    budget = int(round(k * n))
    max_edges = n * (n - 1) // 2
    if budget < 1:
        raise ValueError(f"edge budget {budget} is empty")
    if budget > max_edges:
        raise ValueError(f"edge budget {budget} exceeds the {max_edges} available pairs")
    a = (m + m.T) / 2.0
    np.fill_diagonal(a, 0.0)
    iu, ju = np.triu_indices(n, k=1)
    weights = a[iu, ju]
    order = np.lexsort((ju, iu, -weights))
    pick = order[:budget]
    w = np.zeros_like(a)
    w[iu[pick], ju[pick]] = weights[pick]
    w = w + w.T
    return SimilarityGraph(w, GraphConstruction(MODE_GLOBAL_TOP_EDGES, float(k), False))


def normalize_adjacency(g: SimilarityGraph) -> np.ndarray:
    """Symmetric normalization D^(-1/2) W D^(-1/2); zero-degree vertices map to 0."""
    d = g.degrees()
    inv_sqrt = np.zeros_like(d)
    nz = d > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(d[nz])
    return inv_sqrt[:, None] * g.weights * inv_sqrt[None, :]


def diffuse(features: np.ndarray, g: SimilarityGraph, params: DiffusionParams) -> np.ndarray:
    """Propagate features through the graph: (alpha*I + E)^kappa @ F."""
    f = np.asarray(features, dtype=np.float64)
    if f.shape[0] != g.num_vertices:
        raise ValueError(
            f"feature rows ({f.shape[0]}) must match vertices ({g.num_vertices})"
        )
    propagator = params.alpha * np.eye(g.num_vertices) + normalize_adjacency(g)
    out = f.copy()
    for _ in range(params.kappa):
        out = propagator @ out
    return out


def laplacian(g: SimilarityGraph) -> np.ndarray:
    return np.diag(g.degrees()) - g.weights


def laplacian_eigenvalues(g: SimilarityGraph) -> np.ndarray:
    """Eigenvalues of L = D - W, ascending, tiny negatives clamped to zero.

    L is positive semi-definite; values below -1e-8 indicate a solver failure
    and raise instead of being clamped.
    """
    try:
        vals = np.linalg.eigvalsh(laplacian(g))
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"eigensolver failed to converge: {exc}") from exc
    if vals.min() < -1e-8:
        raise RuntimeError(f"Laplacian eigenvalue {vals.min()} below PSD tolerance")
    vals = np.where(vals < 0, 0.0, vals)
    return np.sort(vals)


def to_edge_list(g: SimilarityGraph) -> str:
    """Structured-text export: one ``i j weight`` line per edge, 9 significant digits."""
    lines = []
    iu, ju = np.triu_indices(g.num_vertices, k=1)
    for i, j in zip(iu, ju):
        w = g.weights[i, j]
        if w > 0:
            lines.append(f"{i} {j} {w:.9g}")
    return "\n".join(lines) + ("\n" if lines else "")


def to_dot(g: SimilarityGraph, labels: Sequence[str] | None = None) -> str:
    """DOT export with edge weights at 9 significant digits."""
    if labels is not None and len(labels) != g.num_vertices:
        raise ValueError("one label per vertex required")
    out = ["graph G {"]
    for i in range(g.num_vertices):
        name = labels[i] if labels is not None else str(i)
        out.append(f'  {i} [label="{name}"];')
    iu, ju = np.triu_indices(g.num_vertices, k=1)
    for i, j in zip(iu, ju):
        w = g.weights[i, j]
        if w > 0:
            out.append(f'  {i} -- {j} [weight="{w:.9g}"];')
    out.append("}")
    return "\n".join(out) + "\n"
