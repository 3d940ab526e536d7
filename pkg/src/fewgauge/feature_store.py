"""Feature sets: validation, disk formats (FSF1/CSV), synthetic generation.

Feature rows are post-ReLU backbone outputs: nonnegative and finite. Once
L2-normalized, pairwise cosine similarities are guaranteed to lie in [0, 1],
which the downstream graph code relies on.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

FSF1_MAGIC = b"FSF1"
UNIT_NORM_TOL = 1e-6
_SYNTH_MAX_RETRIES = 32


class FeatureFormatError(ValueError):
    """An on-disk feature file violates the interchange contract."""


def canonical_seed(seed: int) -> int:
    """Map an arbitrary integer seed onto the nonnegative range numpy accepts."""
    return int(seed) % (2**63)


@dataclass(frozen=True)
class SplitManifest:
    """Sidecar description of an FSF1 data file."""

    dataset_name: str
    split_name: str
    per_class_counts: tuple[tuple[str, int], ...]
    dtype: str = "f32"
    storage_order: str = "row-major"
    num_rows: int = 0
    dim: int = 0
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "dataset_name": self.dataset_name,
            "split_name": self.split_name,
            "per_class_counts": [[name, int(count)] for name, count in self.per_class_counts],
            "dtype": self.dtype,
            "storage_order": self.storage_order,
            "num_rows": int(self.num_rows),
            "dim": int(self.dim),
            "extra": self.extra,
        }
        return json.dumps(payload, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SplitManifest":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FeatureFormatError(f"malformed manifest: {exc}") from exc
        try:
            return cls(
                dataset_name=payload["dataset_name"],
                split_name=payload["split_name"],
                per_class_counts=tuple((str(n), int(c)) for n, c in payload["per_class_counts"]),
                dtype=payload.get("dtype", "f32"),
                storage_order=payload.get("storage_order", "row-major"),
                num_rows=int(payload.get("num_rows", 0)),
                dim=int(payload.get("dim", 0)),
                extra=payload.get("extra", {}),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FeatureFormatError(f"malformed manifest: {exc}") from exc


@dataclass(frozen=True)
class FeatureSet:
    """Immutable matrix of per-sample feature rows with class labels.

    Invariants (checked at construction):
      * ``features`` is a finite, nonnegative float32 matrix with >= 1 row;
      * every label indexes into ``class_names`` and every class has a row;
      * when ``normalized`` is set, every row has unit L2 norm (+- 1e-6).
    """

    features: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...]
    normalized: bool = False

    def __post_init__(self) -> None:
        feats = np.asarray(self.features, dtype=np.float32)
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_names", tuple(self.class_names))
        if feats.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {feats.shape}")
        if feats.shape[0] == 0:
            raise ValueError("empty feature set")
        if labels.shape != (feats.shape[0],):
            raise ValueError(
                f"labels shape {labels.shape} does not match {feats.shape[0]} rows"
            )
        if not np.isfinite(feats).all():
            raise ValueError("non-finite entry in features")
        if (feats < 0).any():
            raise ValueError("negative entry in features (expected post-ReLU, nonnegative)")
        n_classes = len(self.class_names)
        if n_classes == 0:
            raise ValueError("no class names")
        if labels.min() < 0 or labels.max() >= n_classes:
            raise ValueError("label out of range of class_names")
        counts = np.bincount(labels, minlength=n_classes)
        if (counts == 0).any():
            missing = [self.class_names[i] for i in np.flatnonzero(counts == 0)]
            raise ValueError(f"classes with no rows: {missing}")
        if self.normalized:
            norms = np.linalg.norm(feats.astype(np.float64), axis=1)
            bad = np.flatnonzero(np.abs(norms - 1.0) > UNIT_NORM_TOL)
            if bad.size:
                raise ValueError(f"row {bad[0]} is not unit norm ({norms[bad[0]]:.8f})")
        feats.setflags(write=False)
        labels.setflags(write=False)

    @property
    def num_rows(self) -> int:
        return int(self.features.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def rows_of_class(self, class_id: int) -> np.ndarray:
        """Row indices of one class, in ascending order."""
        return np.flatnonzero(self.labels == class_id)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


def l2_normalize(fs: FeatureSet) -> FeatureSet:
    """Scale every row to unit L2 norm; errors on zero-norm rows."""
    feats = fs.features.astype(np.float64)
    norms = np.linalg.norm(feats, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ValueError(f"zero-norm row at index {zero[0]}")
    scaled = (feats / norms[:, None]).astype(np.float32)
    return replace(fs, features=scaled, normalized=True)


def _manifest_path(path: Path) -> Path:
    return path.with_name(path.name + ".manifest.json")


def save_feature_set(
    fs: FeatureSet,
    path: str | Path,
    dataset_name: str = "dataset",
    split_name: str = "all",
    extra: dict | None = None,
) -> None:
    """Write a FeatureSet to disk; CSV when the path ends in .csv, else FSF1.

    FSF1 layout: magic ``FSF1``, u32 row count, u32 dim, rows*dim little-endian
    f32 in row-major order, then rows little-endian u32 labels. A JSON manifest
    sidecar (``<name>.manifest.json``) carries class names and per-class counts.
    """
    path = Path(path)
    if path.suffix == ".csv":
        _save_csv(fs, path)
        return
    counts = fs.class_counts()
    manifest = SplitManifest(
        dataset_name=dataset_name,
        split_name=split_name,
        per_class_counts=tuple(
            (name, int(counts[i])) for i, name in enumerate(fs.class_names)
        ),
        num_rows=fs.num_rows,
        dim=fs.dim,
        extra=extra or {},
    )
    header = FSF1_MAGIC + struct.pack("<II", fs.num_rows, fs.dim)
    body = fs.features.astype("<f4").tobytes(order="C")
    tail = fs.labels.astype("<u4").tobytes(order="C")
    path.write_bytes(header + body + tail)
    _manifest_path(path).write_text(manifest.to_json(), encoding="utf-8")


def load_feature_set(path: str | Path) -> FeatureSet:
    """Load a feature file (FSF1 with manifest sidecar, or CSV).

    Returns a FeatureSet with ``normalized=False``; callers normalize
    explicitly. Raises FeatureFormatError on malformed files and ValueError
    on invariant violations (negative or non-finite entries, label issues).
    """
    path = Path(path)
    if not path.exists():
        raise FeatureFormatError(f"no such file: {path}")
    if path.suffix == ".csv":
        return _load_csv(path)
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != FSF1_MAGIC:
        raise FeatureFormatError(f"{path}: bad magic, not an FSF1 file")
    num_rows, dim = struct.unpack("<II", raw[4:12])
    if num_rows == 0 or dim == 0:
        raise FeatureFormatError(f"{path}: empty set in header")
    expected = 12 + 4 * num_rows * dim + 4 * num_rows
    if len(raw) != expected:
        raise FeatureFormatError(
            f"{path}: size {len(raw)} does not match header (expected {expected})"
        )
    feats = np.frombuffer(raw, dtype="<f4", count=num_rows * dim, offset=12)
    feats = feats.reshape(num_rows, dim).astype(np.float32)
    labels = np.frombuffer(raw, dtype="<u4", count=num_rows, offset=12 + 4 * num_rows * dim)
    mpath = _manifest_path(path)
    if not mpath.exists():
        raise FeatureFormatError(f"missing manifest sidecar: {mpath}")
    manifest = SplitManifest.from_json(mpath.read_text(encoding="utf-8"))
    if manifest.dtype != "f32":
        raise FeatureFormatError(f"unsupported dtype tag {manifest.dtype!r}")
    if manifest.storage_order != "row-major":
        raise FeatureFormatError(f"unsupported storage order {manifest.storage_order!r}")
    if manifest.num_rows and manifest.num_rows != num_rows:
        raise FeatureFormatError(
            f"row count mismatch: header {num_rows}, manifest {manifest.num_rows}"
        )
    if manifest.dim and manifest.dim != dim:
        raise FeatureFormatError(f"dimension mismatch: header {dim}, manifest {manifest.dim}")
    declared = sum(c for _, c in manifest.per_class_counts)
    if declared != num_rows:
        raise FeatureFormatError(
            f"manifest counts sum to {declared}, data file has {num_rows} rows"
        )
    class_names = tuple(name for name, _ in manifest.per_class_counts)
    fs = FeatureSet(feats, labels.astype(np.int64), class_names)
    actual = fs.class_counts()
    for i, (name, count) in enumerate(manifest.per_class_counts):
        if actual[i] != count:
            raise FeatureFormatError(
                f"class {name!r}: manifest declares {count} rows, file has {actual[i]}"
            )
    return fs


def _save_csv(fs: FeatureSet, path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["class"] + [f"f{i}" for i in range(fs.dim)])
        for row, label in zip(fs.features, fs.labels):
            writer.writerow([fs.class_names[label]] + [repr(float(v)) for v in row])


def _load_csv(path: Path) -> FeatureSet:
    with path.open("r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FeatureFormatError(f"{path}: empty CSV") from None
        dim = len(header) - 1
        if dim < 1 or header[0] != "class" or header[1:] != [f"f{i}" for i in range(dim)]:
            raise FeatureFormatError(f"{path}: expected header class,f0,...,f{{d-1}}")
        names: list[str] = []
        values: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != dim + 1:
                raise FeatureFormatError(f"{path}:{lineno}: expected {dim + 1} fields")
            names.append(row[0])
            try:
                values.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise FeatureFormatError(f"{path}:{lineno}: {exc}") from exc
    if not values:
        raise FeatureFormatError(f"{path}: empty set")
    class_names = tuple(sorted(set(names)))
    index = {name: i for i, name in enumerate(class_names)}
    labels = np.array([index[n] for n in names], dtype=np.int64)
    return FeatureSet(np.array(values, dtype=np.float32), labels, class_names)


def subset_classes(fs: FeatureSet, class_ids: Sequence[int]) -> FeatureSet:
    """New FeatureSet containing only the given classes, relabeled 0..len-1."""
    ids = [int(c) for c in class_ids]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate class id")
    for c in ids:
        if not 0 <= c < fs.num_classes:
            raise ValueError(f"class id {c} out of range")
    remap = {c: i for i, c in enumerate(ids)}
    mask = np.isin(fs.labels, ids)
    labels = np.array([remap[int(c)] for c in fs.labels[mask]], dtype=np.int64)
    names = tuple(fs.class_names[c] for c in ids)
    return FeatureSet(fs.features[mask], labels, names, normalized=fs.normalized)


def synth_generate(
    num_classes: int,
    per_class: int,
    dim: int,
    separation: float | Sequence[float],
    spread: float,
    seed: int,
) -> FeatureSet:
    """Generate a synthetic nonnegative, L2-normalized feature set.

    Class centroids sit at ``normalize(u + s_c * w_c)`` where ``u`` is the
    uniform direction, ``w_c`` a per-class axis (one-hot while c < dim, else a
    random nonnegative direction) and ``s_c`` the separation. ``separation``
    may be a single float or one value per class, which yields heterogeneous
    class geometry. Points are centroid + Gaussian(spread) noise, clamped to
    nonnegative and renormalized. Pure function of its arguments.
    """
    if num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    if dim < 2:
        raise ValueError("dim must be >= 2")
    if spread <= 0:
        raise ValueError("spread must be > 0")
    if isinstance(separation, (int, float, np.integer, np.floating)):
        seps = np.full(num_classes, float(separation))
    else:
        seps = np.asarray(separation, dtype=np.float64)
        if seps.shape != (num_classes,):
            raise ValueError("separation sequence must have one value per class")
    if (seps < 0).any():
        raise ValueError("separation must be >= 0")

    rng = np.random.default_rng(canonical_seed(seed))
    base = np.ones(dim) / np.sqrt(dim)
    rows = np.empty((num_classes * per_class, dim), dtype=np.float64)
    labels = np.repeat(np.arange(num_classes), per_class)
    for c in range(num_classes):
        if c < dim:
            axis = np.zeros(dim)
            axis[c] = 1.0
        else:
            axis = np.abs(rng.standard_normal(dim))
            axis /= np.linalg.norm(axis)
        centroid = base + seps[c] * axis
        centroid /= np.linalg.norm(centroid)
        block = centroid[None, :] + spread * rng.standard_normal((per_class, dim))
        np.clip(block, 0.0, None, out=block)
        for attempt in range(_SYNTH_MAX_RETRIES):
            dead = np.flatnonzero(np.linalg.norm(block, axis=1) == 0)
            if dead.size == 0:
                break
            redraw = centroid[None, :] + spread * rng.standard_normal((dead.size, dim))
            block[dead] = np.clip(redraw, 0.0, None)
        else:
            raise ValueError(
                f"class {c}: all-zero sample persisted after {_SYNTH_MAX_RETRIES} redraws"
            )
        rows[c * per_class : (c + 1) * per_class] = block

    rows /= np.linalg.norm(rows, axis=1)[:, None]
    names = tuple(f"class_{c:03d}" for c in range(num_classes))
    return FeatureSet(rows.astype(np.float32), labels, names, normalized=True)
