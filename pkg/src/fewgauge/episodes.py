"""N-way K-shot Q-query task sampling.

Episodes draw classes uniformly without replacement, then rows uniformly
without replacement within each class, split into support (labeled), query
(labels hidden from learners) and test (held-out scoring) index sets. All
sampling is a pure function of (feature set, spec, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .feature_store import FeatureSet, canonical_seed


def derive_seed(*parts: int) -> int:
    """Deterministically derive an independent child seed from integer parts.

    Used to give each episode in a batch its own stream so that batches are
    order-independent and safe to evaluate in parallel.
    """
    ss = np.random.SeedSequence([canonical_seed(p) for p in parts])
    return int(ss.generate_state(1, np.uint64)[0])


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(canonical_seed(seed))


@dataclass(frozen=True)
class EpisodeSpec:
    """Shape of one few-shot task.

    ``first_class_fraction`` switches query sampling to the unbalanced regime:
    the first drawn class receives that fraction of the total query budget and
    the rest is split evenly across the other classes.
    """

    n_way: int
    k_shot: int
    q_query: int
    test_per_class: int = 50
    first_class_fraction: float | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_way < 2:
            raise ValueError("n_way must be >= 2")
        if self.k_shot < 0 or self.q_query < 0:
            raise ValueError("k_shot and q_query must be >= 0")
        if self.k_shot + self.q_query < 1:
            raise ValueError("need at least one support or query sample")
        if self.test_per_class < 0:
            raise ValueError("test_per_class must be >= 0")
        if self.first_class_fraction is not None and not (
            0.0 < self.first_class_fraction < 1.0
        ):
            raise ValueError("first_class_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class Episode:
    """One sampled task: per-class index lists, pairwise disjoint."""

    class_ids: tuple[int, ...]
    support: tuple[tuple[int, ...], ...]
    query: tuple[tuple[int, ...], ...]
    test: tuple[tuple[int, ...], ...]

    @property
    def n_way(self) -> int:
        return len(self.class_ids)

    def support_rows(self) -> np.ndarray:
        return np.array([i for cls in self.support for i in cls], dtype=np.int64)

    def support_labels(self) -> np.ndarray:
        """Episode-local labels (0..N-1 in class_ids order) for support rows."""
        return np.repeat(np.arange(self.n_way), [len(c) for c in self.support])

    def query_rows(self) -> np.ndarray:
        return np.array([i for cls in self.query for i in cls], dtype=np.int64)

    def query_labels(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_way), [len(c) for c in self.query])

    def test_rows(self) -> np.ndarray:
        return np.array([i for cls in self.test for i in cls], dtype=np.int64)

    def test_labels(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_way), [len(c) for c in self.test])

    def to_json(self) -> str:
        return json.dumps(
            {
                "class_ids": list(self.class_ids),
                "support": [list(c) for c in self.support],
                "query": [list(c) for c in self.query],
                "test": [list(c) for c in self.test],
            },
            indent=2,
        ) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Episode":
        payload = json.loads(text)
        return cls(
            class_ids=tuple(payload["class_ids"]),
            support=tuple(tuple(c) for c in payload["support"]),
            query=tuple(tuple(c) for c in payload["query"]),
            test=tuple(tuple(c) for c in payload["test"]),
        )


def _split_class_rows(
    rng: np.random.Generator,
    fs: FeatureSet,
    class_id: int,
    k_shot: int,
    q_query: int,
    test_per_class: int,
) -> tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]]:
    rows = fs.rows_of_class(class_id)
    need = k_shot + q_query + test_per_class
    if rows.size < need:
        raise ValueError(
            f"class {fs.class_names[class_id]!r} has {rows.size} rows, needs {need}"
        )
    perm = rng.permutation(rows)
    return (
        tuple(int(i) for i in perm[:k_shot]),
        tuple(int(i) for i in perm[k_shot : k_shot + q_query]),
        tuple(int(i) for i in perm[k_shot + q_query : need]),
    )


def _draw_classes(rng: np.random.Generator, fs: FeatureSet, n_way: int) -> tuple[int, ...]:
    if fs.num_classes < n_way:
        raise ValueError(f"need {n_way} classes, feature set has {fs.num_classes}")
    return tuple(int(c) for c in rng.choice(fs.num_classes, size=n_way, replace=False))


def sample_episode(fs: FeatureSet, spec: EpisodeSpec) -> Episode:
    """Draw a balanced episode; dispatches to the unbalanced sampler when set."""
    if spec.first_class_fraction is not None:
        return sample_unbalanced_queries(fs, spec)
    rng = _rng(spec.seed)
    class_ids = _draw_classes(rng, fs, spec.n_way)
    support, query, test = [], [], []
    for c in class_ids:
        s, q, t = _split_class_rows(rng, fs, c, spec.k_shot, spec.q_query, spec.test_per_class)
        support.append(s)
        query.append(q)
        test.append(t)
    return Episode(class_ids, tuple(support), tuple(query), tuple(test))


def sample_episode_fixed_classes(
    fs: FeatureSet, spec: EpisodeSpec, class_ids: Sequence[int]
) -> Episode:
    """Redraw shots/queries/test for a caller-supplied class tuple."""
    class_ids = tuple(int(c) for c in class_ids)
    if len(class_ids) != spec.n_way:
        raise ValueError(f"expected {spec.n_way} classes, got {len(class_ids)}")
    if len(set(class_ids)) != len(class_ids):
        raise ValueError("duplicate class id")
    for c in class_ids:
        if not 0 <= c < fs.num_classes:
            raise ValueError(f"class id {c} out of range")
    rng = _rng(spec.seed)
    support, query, test = [], [], []
    for c in class_ids:
        s, q, t = _split_class_rows(rng, fs, c, spec.k_shot, spec.q_query, spec.test_per_class)
        support.append(s)
        query.append(q)
        test.append(t)
    return Episode(class_ids, tuple(support), tuple(query), tuple(test))


def sample_episode_fixed_shots(
    fs: FeatureSet, spec: EpisodeSpec, shots_per_class: Mapping[int, Sequence[int]]
) -> Episode:
    """Redraw classes from a pool with pre-assigned shots, reusing those shots.

    The N classes are drawn uniformly from the keys of ``shots_per_class``;
    each drawn class keeps its pre-assigned support rows verbatim while query
    and test rows are redrawn from the remainder of the class.
    """
    pool = sorted(int(c) for c in shots_per_class)
    if len(pool) < spec.n_way:
        raise ValueError(f"shot pool has {len(pool)} classes, need {spec.n_way}")
    fixed: dict[int, tuple[int, ...]] = {}
    for c in pool:
        rows = tuple(int(i) for i in shots_per_class[c])
        if len(rows) != spec.k_shot:
            raise ValueError(f"class {c}: expected {spec.k_shot} shots, got {len(rows)}")
        if len(set(rows)) != len(rows):
            raise ValueError(f"class {c}: duplicate shot index")
        for i in rows:
            if not 0 <= i < fs.num_rows or fs.labels[i] != c:
                raise ValueError(f"row {i} does not belong to class {c}")
        fixed[c] = rows
    rng = _rng(spec.seed)
    class_ids = tuple(int(c) for c in rng.choice(pool, size=spec.n_way, replace=False))
    support, query, test = [], [], []
    for c in class_ids:
        if c not in fixed:
            raise ValueError(f"drawn class {c} has no pre-assigned shots")
        shots = fixed[c]
        remaining = np.setdiff1d(fs.rows_of_class(c), np.array(shots, dtype=np.int64))
        need = spec.q_query + spec.test_per_class
        if remaining.size < need:
            raise ValueError(
                f"class {fs.class_names[c]!r} has {remaining.size} spare rows, needs {need}"
            )
        perm = rng.permutation(remaining)
        support.append(shots)
        query.append(tuple(int(i) for i in perm[: spec.q_query]))
        test.append(tuple(int(i) for i in perm[spec.q_query : need]))
    return Episode(class_ids, tuple(support), tuple(query), tuple(test))


def unbalanced_query_counts(n_way: int, q_query: int, fraction: float) -> list[int]:
    """Per-class query counts for the unbalanced regime.

    The first class gets round-half-up(fraction * N * Q); the remainder is
    split as evenly as possible over the other classes, extra singletons going
    to the earlier classes in draw order.
    """
    total = n_way * q_query
    first = int(np.floor(fraction * total + 0.5))
    rest = total - first
    if first <= 0 or rest <= 0:
        raise ValueError("unbalanced fraction leaves a class without queries")
    base, extra = divmod(rest, n_way - 1)
    return [first] + [base + 1] * extra + [base] * (n_way - 1 - extra)


def sample_unbalanced_queries(fs: FeatureSet, spec: EpisodeSpec) -> Episode:
    """Sample an episode whose query counts follow the unbalanced regime."""
    if spec.first_class_fraction is None:
        raise ValueError("spec.first_class_fraction must be set")
    counts = unbalanced_query_counts(spec.n_way, spec.q_query, spec.first_class_fraction)
    rng = _rng(spec.seed)
    class_ids = _draw_classes(rng, fs, spec.n_way)
    support, query, test = [], [], []
    for c, q in zip(class_ids, counts):
        s, qrows, t = _split_class_rows(rng, fs, c, spec.k_shot, q, spec.test_per_class)
        support.append(s)
        query.append(qrows)
        test.append(t)
    return Episode(class_ids, tuple(support), tuple(query), tuple(test))
