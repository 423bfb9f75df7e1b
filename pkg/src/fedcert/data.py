"""Dataset ingestion, synthetic generation, and client partitioning.

Three partition schemes split a labeled dataset across ``K`` simulated
clients: equal shards, fixed count ratios, and label-skewed shards whose
per-class client shares follow a Dirichlet distribution (small ``alpha``
means heavy skew). Every scheme is deterministic given its seed, and each
client's shard is further split into a train part and a held-out part that
later serves as the population-risk proxy.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "LabeledDataset",
    "PartitionSpec",
    "Partition",
    "partition",
    "synth_blobs",
    "load_csv",
    "load_idx",
]

TEST_FRACTION = 0.2

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix with integer class labels."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2 or labels.ndim != 1:
            raise ValueError("features must be 2-D and labels 1-D")
        if features.shape[0] != labels.shape[0]:
            raise ValueError(
                f"feature rows ({features.shape[0]}) and labels "
                f"({labels.shape[0]}) disagree"
            )
        if features.shape[0] < 1:
            raise ValueError("dataset must contain at least one sample")
        if not np.all(np.isfinite(features)):
            raise ValueError("features contain non-finite values")
        if self.num_classes < 1:
            raise ValueError("num_classes must be positive")
        if np.any(labels < 0) or np.any(labels >= self.num_classes):
            raise ValueError(
                f"labels must lie in [0, {self.num_classes}), "
                f"got range [{labels.min()}, {labels.max()}]"
            )
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def num_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class PartitionSpec:
    """Declarative description of a client split.

    scheme: one of "balanced", "unbalanced" (requires ``ratios``), or
    "dirichlet" (requires ``alpha``).
    """

    scheme: str
    num_clients: int
    seed: int = 0
    ratios: tuple | None = None
    alpha: float | None = None

    def __post_init__(self):
        if self.scheme not in ("balanced", "unbalanced", "dirichlet"):
            raise ValueError(
                f"unknown scheme {self.scheme!r}; expected balanced, "
                f"unbalanced, or dirichlet"
            )
        if self.num_clients < 1:
            raise ValueError("num_clients must be positive")
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")
        if self.scheme == "unbalanced":
            if self.ratios is None:
                raise ValueError("unbalanced scheme requires ratios")
            ratios = tuple(float(r) for r in self.ratios)
            if len(ratios) != self.num_clients:
                raise ValueError(
                    f"ratios length {len(ratios)} must equal num_clients "
                    f"{self.num_clients}"
                )
            if any(r <= 0.0 for r in ratios):
                raise ValueError("ratios must be positive")
            if abs(sum(ratios) - 1.0) > 1e-9:
                raise ValueError(f"ratios must sum to 1 within 1e-9, got {sum(ratios)!r}")
            object.__setattr__(self, "ratios", ratios)
        if self.scheme == "dirichlet":
            if self.alpha is None or self.alpha <= 0.0:
                raise ValueError("dirichlet scheme requires alpha > 0")


@dataclass(frozen=True)
class Partition:
    """Disjoint per-client index lists plus the train/test split of each."""

    assignments: tuple
    train_indices: tuple
    test_indices: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "assignments",
            tuple(np.asarray(a, dtype=np.int64) for a in self.assignments))
        object.__setattr__(
            self, "train_indices",
            tuple(np.asarray(a, dtype=np.int64) for a in self.train_indices))
        object.__setattr__(
            self, "test_indices",
            tuple(np.asarray(a, dtype=np.int64) for a in self.test_indices))

    @property
    def num_clients(self) -> int:
        return len(self.assignments)

    @property
    def train_counts(self) -> np.ndarray:
        return np.array([len(t) for t in self.train_indices], dtype=np.int64)


def _split_train_test(indices: np.ndarray, rng: np.random.Generator):
    """Hold out a fifth of a shard (at least one sample when possible)."""
    shuffled = indices[rng.permutation(len(indices))]
    if len(shuffled) < 2:
        return shuffled, shuffled[:0]
    n_test = max(1, int(round(TEST_FRACTION * len(shuffled))))
    return shuffled[n_test:], shuffled[:n_test]


def _build_partition(assignments, rng: np.random.Generator) -> Partition:
    train, test = [], []
    for a in assignments:
        tr, te = _split_train_test(np.asarray(a, dtype=np.int64), rng)
        train.append(np.sort(tr))
        test.append(np.sort(te))
    return Partition(tuple(np.sort(np.asarray(a)) for a in assignments),
                     tuple(train), tuple(test))


def _dirichlet_proportions(rng: np.random.Generator, alpha: float, k: int) -> np.ndarray:
    # Normalized Gamma draws: reproducible construction of Dirichlet(alpha * 1_K).
    while True:
        g = rng.gamma(alpha, 1.0, size=k)
        total = g.sum()
        if total > 0.0:
            return g / total


def partition(ds: LabeledDataset, spec: PartitionSpec) -> Partition:
    """Split a dataset across clients according to ``spec``.

    balanced: equal counts, truncating the remainder. unbalanced: client k
    gets ``floor(ratios[k] * N)`` samples, the remainder going to the last
    client. dirichlet: each class's share across clients is drawn from
    Dirichlet(alpha), inducing both count and label skew.
    """
    n, k = ds.num_samples, spec.num_clients
    if n < k:
        raise ValueError(f"need at least {k} samples for {k} clients, got {n}")
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))

    if spec.scheme == "balanced":
        per = n // k
        order = rng.permutation(n)[: per * k]
        assignments = [order[i * per:(i + 1) * per] for i in range(k)]
    elif spec.scheme == "unbalanced":
        counts = [int(np.floor(r * n)) for r in spec.ratios]
        counts[-1] = n - sum(counts[:-1])
        order = rng.permutation(n)
        assignments, pos = [], 0
        for c in counts:
            assignments.append(order[pos:pos + c])
            pos += c
    else:  # dirichlet
        assignments = [[] for _ in range(k)]
        for cls in range(ds.num_classes):
            cls_idx = np.flatnonzero(ds.labels == cls)
            if len(cls_idx) == 0:
                continue
            cls_idx = cls_idx[rng.permutation(len(cls_idx))]
            props = _dirichlet_proportions(rng, spec.alpha, k)
            cuts = (np.cumsum(props)[:-1] * len(cls_idx)).astype(np.int64)
            for client, chunk in enumerate(np.split(cls_idx, cuts)):
                assignments[client].extend(chunk.tolist())
        assignments = [np.asarray(a, dtype=np.int64) for a in assignments]

    for client, a in enumerate(assignments):
        if len(a) == 0:
            raise ValueError(f"client {client} would receive 0 samples")
    return _build_partition(assignments, rng)


def synth_blobs(num_clients: int, per_client: int, dim: int, num_classes: int,
                skew: float, seed: int):
    """Gaussian class blobs with optional per-client covariate shift.

    Each class has a global center; client ``k`` sees that center displaced
    by ``skew`` times a client-specific offset, so ``skew = 0`` yields IID
    clients and larger values progressively separate their distributions.
    Returns the pooled dataset and the natural per-client block partition.
    """
    if min(num_clients, per_client, dim, num_classes) < 1:
        raise ValueError("num_clients, per_client, dim, num_classes must be positive")
    if not 0.0 <= skew <= 1.0:
        raise ValueError(f"skew must lie in [0, 1], got {skew!r}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    centers = rng.normal(0.0, 2.0, size=(num_classes, dim))
    offsets = rng.normal(0.0, 2.0, size=(num_clients, num_classes, dim))

    features = np.empty((num_clients * per_client, dim))
    labels = np.empty(num_clients * per_client, dtype=np.int64)
    assignments = []
    for k in range(num_clients):
        base = k * per_client
        y = np.arange(per_client) % num_classes
        rng.shuffle(y)
        client_centers = centers + skew * offsets[k]
        features[base:base + per_client] = (
            client_centers[y] + rng.normal(0.0, 1.0, size=(per_client, dim)))
        labels[base:base + per_client] = y
        assignments.append(np.arange(base, base + per_client))

    ds = LabeledDataset(features, labels, num_classes)
    return ds, _build_partition(assignments, rng)


def load_csv(path, num_classes: int | None = None) -> LabeledDataset:
    """Load a comma-separated dataset: one row per sample, last column the
    integer class label. ``num_classes`` defaults to ``max(label) + 1``."""
    path = Path(path)
    rows, labels = [], []
    width = None
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if width is None:
                width = len(row)
                if width < 2:
                    raise ValueError(
                        f"{path}:{lineno}: need at least one feature column "
                        f"and a label column, got {width}")
            elif len(row) != width:
                raise ValueError(
                    f"{path}:{lineno}: ragged row with {len(row)} columns, "
                    f"expected {width}")
            try:
                values = [float(v) for v in row]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric value: {exc}") from None
            label = values[-1]
            if label != int(label) or label < 0:
                raise ValueError(
                    f"{path}:{lineno}: label column must hold nonnegative "
                    f"integers, got {row[-1]!r}")
            rows.append(values[:-1])
            labels.append(int(label))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    labels = np.asarray(labels, dtype=np.int64)
    inferred = int(labels.max()) + 1
    if num_classes is None:
        num_classes = inferred
    elif inferred > num_classes:
        raise ValueError(
            f"{path}: labels reach {labels.max()} but num_classes is {num_classes}")
    return LabeledDataset(np.asarray(rows, dtype=np.float64), labels, num_classes)


def _read_idx_header(raw: bytes, path, expected_magic: int, num_dims: int):
    header_len = 4 * (1 + num_dims)
    if len(raw) < header_len:
        raise ValueError(f"{path}: truncated header, need {header_len} bytes, "
                         f"got {len(raw)}")
    fields = struct.unpack(f">{1 + num_dims}I", raw[:header_len])
    if fields[0] != expected_magic:
        raise ValueError(
            f"{path}: magic number mismatch at byte 0: expected "
            f"0x{expected_magic:08x}, got 0x{fields[0]:08x}")
    return fields[1:], raw[header_len:]


def load_idx(path_images, path_labels) -> LabeledDataset:
    """Load the big-endian IDX image/label pair used by MNIST-family files.

    Images: magic 0x00000803, dims (count, rows, cols), unsigned bytes.
    Labels: magic 0x00000801, dims (count,). Pixels are scaled to [0, 1]
    and flattened to one row per image.
    """
    path_images, path_labels = Path(path_images), Path(path_labels)
    (n_img, n_rows, n_cols), img_payload = _read_idx_header(
        path_images.read_bytes(), path_images, IDX_IMAGES_MAGIC, 3)
    (n_lab,), lab_payload = _read_idx_header(
        path_labels.read_bytes(), path_labels, IDX_LABELS_MAGIC, 1)
    if n_img != n_lab:
        raise ValueError(
            f"image count {n_img} ({path_images}) does not match label "
            f"count {n_lab} ({path_labels})")
    expected = n_img * n_rows * n_cols
    if len(img_payload) != expected:
        raise ValueError(
            f"{path_images}: payload holds {len(img_payload)} bytes, "
            f"expected {expected}")
    if len(lab_payload) != n_lab:
        raise ValueError(
            f"{path_labels}: payload holds {len(lab_payload)} bytes, "
            f"expected {n_lab}")
    features = (np.frombuffer(img_payload, dtype=np.uint8)
                .astype(np.float64).reshape(n_img, n_rows * n_cols) / 255.0)
    labels = np.frombuffer(lab_payload, dtype=np.uint8).astype(np.int64)
    return LabeledDataset(features, labels, int(labels.max()) + 1)
