"""Class-overlap analysis via community detection on similarity graphs.

Two classes overlap when communities of their joint similarity graph mix the
labels: the binary conditional entropy of labels given communities lower
bounds any classifier's cross-entropy, so its community-weighted average is a
label-aware confusability score. Community detection is greedy modularity
optimization (local moves + graph aggregation) with seeded vertex order, and
scores average several runs to smooth out that stochasticity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .episodes import EpisodeSpec, derive_seed, sample_episode
from .feature_store import FeatureSet, canonical_seed
from .learners import accuracy, train_logreg
from .simgraph import SimilarityGraph, cosine_matrix, heavier_edges_graph

_GAIN_TOL = 1e-12

DEFAULT_EDGES_PER_VERTEX = 20
DEFAULT_RUNS = 5


@dataclass(frozen=True)
class CommunityPartition:
    """Vertex -> community assignment with its weighted modularity."""

    community_of: np.ndarray
    modularity: float
    pass_modularities: tuple[float, ...]

    def __post_init__(self) -> None:
        comm = np.asarray(self.community_of, dtype=np.int64)
        object.__setattr__(self, "community_of", comm)
        ids = np.unique(comm)
        if not np.array_equal(ids, np.arange(ids.size)):
            raise ValueError("community ids must be contiguous from 0")
        if not -0.5 - 1e-12 <= self.modularity <= 1.0 + 1e-12:
            raise ValueError(f"modularity {self.modularity} outside [-0.5, 1]")

    @property
    def num_communities(self) -> int:
        return int(self.community_of.max()) + 1


def modularity(weights: np.ndarray, communities: Sequence[int]) -> float:
    """Weighted modularity of a partition; diagonal entries count as doubled
    intra-community weight (the aggregated-graph convention)."""
    a = np.asarray(weights, dtype=np.float64)
    comm = np.asarray(communities, dtype=np.int64)
    two_m = a.sum()
    if two_m == 0:
        raise ValueError("edgeless graph has no modularity")
    n_comm = comm.max() + 1
    s = np.zeros((a.shape[0], n_comm))
    s[np.arange(a.shape[0]), comm] = 1.0
    mixed = s.T @ a @ s
    inside = np.diagonal(mixed).sum()
    tot = a.sum(axis=1) @ s
    return float(inside / two_m - np.sum((tot / two_m) ** 2))


def _local_moves(
    a: np.ndarray, m: float, rng: np.random.Generator
) -> tuple[np.ndarray, list[float]]:
    """One level of greedy moves; returns the level partition and the
    modularity recorded after each full sweep."""
    n = a.shape[0]
    comm = np.arange(n)
    degree = a.sum(axis=1)
    tot_c = degree.copy()
    sweep_mods: list[float] = []
    while True:
        moved = 0
        for i in rng.permutation(n):
            ci = comm[i]
            links = a[i].copy()
            links[i] = 0.0
            k_in = np.bincount(comm, weights=links, minlength=n)
            tot_c[ci] -= degree[i]
            gains = k_in / m - degree[i] * tot_c / (2.0 * m * m)
            candidates = np.flatnonzero(k_in > 0)
            best = ci
            best_gain = gains[ci]
            for c in candidates:
                if gains[c] > best_gain + _GAIN_TOL:
                    best = int(c)
                    best_gain = gains[c]
            comm[i] = best
            tot_c[best] += degree[i]
            if best != ci:
                moved += 1
        _, comm = np.unique(comm, return_inverse=True)
        tot_c = np.bincount(comm, weights=degree, minlength=comm.max() + 1)
        tot_c = np.concatenate([tot_c, np.zeros(n - tot_c.size)])
        sweep_mods.append(modularity(a, comm))
        if moved == 0:
            break
    return comm, sweep_mods


def louvain(g: SimilarityGraph, seed: int) -> CommunityPartition:
    """Greedy modularity optimization with seeded vertex order.

    Standard two-phase scheme: local moves until no single-vertex move gains
    modularity, then aggregation of communities into supervertices, repeated
    until the level no longer improves. Errors on edgeless graphs.
    """
    if g.weights.sum() == 0:
        raise ValueError("edgeless graph")
    rng = np.random.default_rng(canonical_seed(seed))
    a = g.weights.copy()
    m = a.sum() / 2.0
    mapping = np.arange(g.num_vertices)
    trace: list[float] = []
    current_q = modularity(g.weights, mapping)
    while True:
        # aggregation preserves modularity, so level values ARE base values
        comm, sweep_mods = _local_moves(a, m, rng)
        trace.extend(sweep_mods)
        level_q = sweep_mods[-1]
        if level_q <= current_q + _GAIN_TOL:
            break
        current_q = level_q
        mapping = comm[mapping]
        n_comm = int(comm.max()) + 1
        if n_comm == 1:
            break
        s = np.zeros((a.shape[0], n_comm))
        s[np.arange(a.shape[0]), comm] = 1.0
        a = s.T @ a @ s
    final_q = modularity(g.weights, mapping)
    return CommunityPartition(mapping, final_q, tuple(trace))


def binary_entropy(p: float) -> float:
    """Entropy of a Bernoulli(p) in bits, with 0*log0 = 0."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p={p} outside [0, 1]")
    h = 0.0
    if 0.0 < p < 1.0:
        h = -p * np.log2(p) - (1.0 - p) * np.log2(1.0 - p)
    return float(h)


def conditional_entropy_bound(
    partition: CommunityPartition, labels: Sequence[int]
) -> float:
    """Community-size weighted average of the per-community binary entropy.

    Lower bounds the cross-entropy of any classifier that decides from the
    community assignment alone. Labels must be binary.
    """
    y = np.asarray(labels)
    comm = partition.community_of
    if y.shape != comm.shape:
        raise ValueError("labels must align with the partition")
    values = np.unique(y)
    if values.size > 2:
        raise ValueError(f"labels must be binary, got {values.size} values")
    is_a = y == values[0]
    total = 0.0
    n = y.shape[0]
    for c in range(partition.num_communities):
        members = comm == c
        size = int(members.sum())
        p_a = float(np.mean(is_a[members]))
        total += (size / n) * binary_entropy(p_a)
    return float(total)


def _pair_overlap(
    features: np.ndarray,
    binary_labels: np.ndarray,
    edges_per_vertex: float,
    runs: int,
    seed: int,
) -> float:
    sim = cosine_matrix(features)
    graph = heavier_edges_graph(sim, edges_per_vertex)
    bounds = [
        conditional_entropy_bound(louvain(graph, derive_seed(seed, r)), binary_labels)
        for r in range(runs)
    ]
    return float(np.mean(bounds))


def overlap_score(
    fs: FeatureSet,
    class_a: int,
    class_b: int,
    edges_per_vertex: float = DEFAULT_EDGES_PER_VERTEX,
    runs: int = DEFAULT_RUNS,
    seed: int = 0,
) -> float:
    """Confusability of two classes: averaged conditional-entropy bound.

    Builds the heavier-edges graph over all samples of both classes (rows in
    ascending row order, so the score is exactly symmetric in its class
    arguments under identical seeds), then averages the bound over ``runs``
    seeded community detections. High scores mean the classes are hard to
    tell apart from geometry alone.
    """
    if class_a == class_b:
        raise ValueError("need two distinct classes")
    rows_a = fs.rows_of_class(class_a)
    rows_b = fs.rows_of_class(class_b)
    if rows_a.size < 2 or rows_b.size < 2:
        raise ValueError("both classes need at least 2 samples")
    rows = np.sort(np.concatenate([rows_a, rows_b]))
    labels = (fs.labels[rows] == class_b).astype(np.int64)
    return _pair_overlap(
        fs.features[rows].astype(np.float64), labels, edges_per_vertex, runs, seed
    )


@dataclass(frozen=True)
class OverlapMatrix:
    """Pairwise class-overlap scores; symmetric with zero diagonal."""

    class_ids: tuple[int, ...]
    class_names: tuple[str, ...]
    scores: np.ndarray


def overlap_matrix(
    fs: FeatureSet,
    class_list: Sequence[int] | None = None,
    edges_per_vertex: float = DEFAULT_EDGES_PER_VERTEX,
    runs: int = DEFAULT_RUNS,
    seed: int = 0,
) -> OverlapMatrix:
    """Overlap scores for every class pair in ``class_list`` (default: all)."""
    ids = tuple(int(c) for c in (class_list if class_list is not None else range(fs.num_classes)))
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate class in class_list")
    scores = np.zeros((len(ids), len(ids)))
    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            # seed keyed by the unordered class pair, not grid position
            pair_seed = derive_seed(seed, min(ids[i], ids[j]), max(ids[i], ids[j]))
            s = overlap_score(fs, ids[i], ids[j], edges_per_vertex, runs, pair_seed)
            scores[i, j] = scores[j, i] = s
    names = tuple(fs.class_names[c] for c in ids)
    return OverlapMatrix(ids, names, scores)


@dataclass(frozen=True)
class BipartiteConfusion:
    """Heaviest base/novel class-overlap edges, sorted by descending score."""

    base_classes: tuple[str, ...]
    novel_classes: tuple[str, ...]
    edges: tuple[tuple[str, str, float], ...]


def bipartite_confusion(
    fs_base: FeatureSet,
    fs_novel: FeatureSet,
    edges_per_vertex: float = DEFAULT_EDGES_PER_VERTEX,
    runs: int = DEFAULT_RUNS,
    seed: int = 0,
    top_edges: int | None = None,
) -> BipartiteConfusion:
    """Overlap scores between every (base, novel) class pair.

    Keeps the ``top_edges`` heaviest pairs (default: twice the number of
    novel classes). Base and novel class names must be disjoint.
    """
    common = set(fs_base.class_names) & set(fs_novel.class_names)
    if common:
        raise ValueError(f"base and novel class sets must be disjoint, share {sorted(common)}")
    if top_edges is None:
        top_edges = 2 * fs_novel.num_classes
    scored = []
    for bi in range(fs_base.num_classes):
        rows_b = fs_base.rows_of_class(bi)
        if rows_b.size < 2:
            raise ValueError(f"base class {fs_base.class_names[bi]!r} has < 2 samples")
        for ni in range(fs_novel.num_classes):
            rows_n = fs_novel.rows_of_class(ni)
            if rows_n.size < 2:
                raise ValueError(f"novel class {fs_novel.class_names[ni]!r} has < 2 samples")
            feats = np.vstack(
                [
                    fs_base.features[rows_b].astype(np.float64),
                    fs_novel.features[rows_n].astype(np.float64),
                ]
            )
            labels = np.concatenate(
                [np.zeros(rows_b.size, dtype=np.int64), np.ones(rows_n.size, dtype=np.int64)]
            )
            pair_seed = derive_seed(seed, bi, fs_base.num_classes + ni)
            s = _pair_overlap(feats, labels, edges_per_vertex, runs, pair_seed)
            scored.append((fs_base.class_names[bi], fs_novel.class_names[ni], s))
    scored.sort(key=lambda e: (-e[2], e[0], e[1]))
    return BipartiteConfusion(
        fs_base.class_names, fs_novel.class_names, tuple(scored[:top_edges])
    )


def score_vs_error_correlation(
    fs: FeatureSet,
    n_way: int,
    n_tasks: int,
    seed: int,
    k_shot: int = 5,
    test_per_class: int | None = None,
    edges_per_vertex: float = DEFAULT_EDGES_PER_VERTEX,
    runs: int = DEFAULT_RUNS,
) -> float:
    """Pearson correlation between summed pair-overlap scores and test error.

    Samples ``n_tasks`` class subsets; for each, sums the overlap scores of
    its class pairs and trains a logistic regression on ``k_shot`` labeled
    rows, scoring error on the held-out rows (all remaining rows by default).
    """
    from .harness import pearson

    if n_tasks < 2:
        raise ValueError("correlation needs at least 2 tasks")
    min_count = int(fs.class_counts().min())
    if test_per_class is None:
        test_per_class = min_count - k_shot
    cache: dict[tuple[int, int], float] = {}

    def pair_score(a: int, b: int) -> float:
        key = (min(a, b), max(a, b))
        if key not in cache:
            cache[key] = overlap_score(
                fs, key[0], key[1], edges_per_vertex, runs, derive_seed(seed, *key)
            )
        return cache[key]

    sums = np.empty(n_tasks)
    errors = np.empty(n_tasks)
    for t in range(n_tasks):
        spec = EpisodeSpec(
            n_way=n_way,
            k_shot=k_shot,
            q_query=0,
            test_per_class=test_per_class,
            seed=derive_seed(seed, 101, t),
        )
        episode = sample_episode(fs, spec)
        # canonical pair order keeps the float sum independent of draw order
        ordered = sorted(episode.class_ids)
        sums[t] = sum(
            pair_score(ordered[i], ordered[j])
            for i in range(n_way)
            for j in range(i + 1, n_way)
        )
        model = train_logreg(
            fs.features[episode.support_rows()].astype(np.float64),
            episode.support_labels(),
            n_way,
        )
        errors[t] = 1.0 - accuracy(
            model, fs.features[episode.test_rows()].astype(np.float64), episode.test_labels()
        )
    return pearson(sums, errors)


def overlap_to_dot(matrix: OverlapMatrix, min_score: float = 0.0) -> str:
    """DOT export of the overlap graph; scores printed with 6 decimals."""
    out = ["graph overlap {"]
    for i, name in enumerate(matrix.class_names):
        out.append(f'  {i} [label="{name}"];')
    n = len(matrix.class_ids)
    for i in range(n):
        for j in range(i + 1, n):
            s = matrix.scores[i, j]
            if s > min_score:
                out.append(f'  {i} -- {j} [weight="{s:.6f}"];')
    out.append("}")
    return "\n".join(out) + "\n"


def bipartite_to_dot(confusion: BipartiteConfusion) -> str:
    """DOT export of the bipartite base/novel confusion graph."""
    out = ["graph confusion {"]
    index: dict[str, int] = {}
    for name in confusion.base_classes:
        index[name] = len(index)
        out.append(f'  {index[name]} [label="{name}" side="base"];')
    for name in confusion.novel_classes:
        index[name] = len(index)
        out.append(f'  {index[name]} [label="{name}" side="novel"];')
    for base, novel, score in confusion.edges:
        out.append(f'  {index[base]} -- {index[novel]} [weight="{score:.6f}"];')
    out.append("}")
    return "\n".join(out) + "\n"


def overlap_edges_text(matrix: OverlapMatrix) -> str:
    """Structured-text export: ``name_a name_b score`` lines, descending score."""
    n = len(matrix.class_ids)
    rows = []
    for i in range(n):
        for j in range(i + 1, n):
            rows.append((matrix.class_names[i], matrix.class_names[j], matrix.scores[i, j]))
    rows.sort(key=lambda e: (-e[2], e[0], e[1]))
    return "".join(f"{a} {b} {s:.6f}\n" for a, b, s in rows)


# re-exported for callers that tweak construction parameters
__all__ = [
    "CommunityPartition",
    "OverlapMatrix",
    "BipartiteConfusion",
    "modularity",
    "louvain",
    "binary_entropy",
    "conditional_entropy_bound",
    "overlap_score",
    "overlap_matrix",
    "bipartite_confusion",
    "score_vs_error_correlation",
    "overlap_to_dot",
    "bipartite_to_dot",
    "overlap_edges_text",
]
