"""Datasets: feature-file I/O, synthetic blobs, and the session split.

The on-disk feature format is plain UTF-8 CSV, one example per line,
LF endings, no header: an integer class label followed by the feature
components. Floats are written with shortest round-trip repr so a
save/load cycle is bit-exact.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, FormatError, ParseError, SplitError
from .seeding import substream

MIN_VALIDATION_PER_CLASS = 5
VALIDATION_FRACTION = 0.2


@dataclass
class LabeledExample:
    features: np.ndarray
    label: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 1:
            raise DataError(f"features must be 1-D, got shape {self.features.shape}")
        if not np.all(np.isfinite(self.features)):
            raise DataError("features contain non-finite values")


@dataclass
class SessionDataset:
    """One session's train/validation examples over an ordered label tuple."""

    session_index: int
    train: list[LabeledExample]
    validation: list[LabeledExample]
    labels: tuple[int, ...]

    def __post_init__(self):
        allowed = set(self.labels)
        for ex in self.train + self.validation:
            if ex.label not in allowed:
                raise DataError(
                    f"example label {ex.label} not in session {self.session_index} label set")

    @property
    def label_set(self) -> frozenset[int]:
        return frozenset(self.labels)


@dataclass
class SessionStream:
    """Ordered sessions with pairwise-disjoint label spaces."""

    sessions: list[SessionDataset]
    feature_dim: int

    def __post_init__(self):
        seen: set[int] = set()
        for t, sess in enumerate(self.sessions):
            if sess.session_index != t:
                raise DataError(f"session indices not contiguous at position {t}")
            overlap = seen & set(sess.labels)
            if overlap:
                raise DataError(f"label spaces overlap at session {t}: {sorted(overlap)}")
            seen |= set(sess.labels)

    def __len__(self) -> int:
        return len(self.sessions)

    def class_order(self, up_to: int | None = None) -> tuple[int, ...]:
        """Class ids in first-appearance order through session `up_to`."""
        last = len(self.sessions) - 1 if up_to is None else up_to
        order: list[int] = []
        for sess in self.sessions[: last + 1]:
            order.extend(sess.labels)
        return tuple(order)

    def session_of_class(self) -> dict[int, int]:
        return {label: sess.session_index for sess in self.sessions for label in sess.labels}


@dataclass
class SplitConfig:
    total_classes: int
    base_classes: int
    ways: int
    shots: int
    seed: int

    def __post_init__(self):
        if self.ways < 1:
            raise SplitError(f"ways must be >= 1, got {self.ways}")
        if self.shots < 1:
            raise SplitError(f"shots must be >= 1, got {self.shots}")
        if self.base_classes < 2:
            raise SplitError(f"need at least 2 base classes, got {self.base_classes}")
        leftover = self.total_classes - self.base_classes
        if leftover < 0 or leftover % self.ways != 0:
            raise SplitError(
                f"{self.total_classes} classes cannot split into {self.base_classes} base"
                f" + k sessions of {self.ways}")

    @property
    def num_sessions(self) -> int:
        return 1 + (self.total_classes - self.base_classes) // self.ways


def as_arrays(examples: list[LabeledExample]) -> tuple[np.ndarray, np.ndarray]:
    """Stack examples into a (n, d) feature matrix and an (n,) label vector."""
    if not examples:
        raise DataError("cannot stack an empty example list")
    x = np.stack([ex.features for ex in examples])
    y = np.array([ex.label for ex in examples], dtype=np.int64)
    return x, y


def feature_dim(examples: list[LabeledExample]) -> int:
    if not examples:
        raise DataError("feature dimension of an empty dataset is undefined")
    return int(examples[0].features.shape[0])


def load_feature_file(path: str) -> tuple[list[LabeledExample], int | None]:
    """Parse a feature CSV; returns the examples and their dimension.

    An empty file yields ([], None). Malformed rows raise ParseError with
    the 1-based line number; a dimension change raises FormatError.
    """
    if not os.path.exists(path):
        raise DataError(f"feature file not found: {path}")
    examples: list[LabeledExample] = []
    dim: int | None = None
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if line == "":
                continue
            fields = line.split(",")
            if len(fields) < 2:
                raise ParseError(f"expected label plus features, got {len(fields)} fields", lineno)
            try:
                label = int(fields[0])
            except ValueError:
                raise ParseError(f"bad label {fields[0]!r}", lineno) from None
            if label < 0:
                raise ParseError(f"negative label {label}", lineno)
            try:
                values = [float(f) for f in fields[1:]]
            except ValueError:
                raise ParseError("bad feature value", lineno) from None
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise FormatError(
                    f"line {lineno}: dimension {len(values)} differs from first row's {dim}")
            examples.append(LabeledExample(np.array(values), label))
    return examples, dim


def save_feature_file(examples: list[LabeledExample], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in examples:
            parts = [str(ex.label)] + [repr(float(v)) for v in ex.features]
            fh.write(",".join(parts) + "\n")


def gen_gaussian_blobs(classes: int, per_class: int, dim: int, spread: float,
                       seed: int) -> list[LabeledExample]:
    """Isotropic Gaussian blobs around seeded unit-norm class centers.

    Centers and per-class samples come from separate substreams, so e.g.
    changing per_class never moves the centers.
    """
    if classes < 2:
        raise ValueError(f"need >= 2 classes, got {classes}")
    if per_class < 1:
        raise ValueError(f"need >= 1 example per class, got {per_class}")
    if spread <= 0:
        raise ValueError(f"spread must be positive, got {spread}")
    center_rng = substream(seed, "data-gen", "centers")
    centers = center_rng.standard_normal((classes, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    examples: list[LabeledExample] = []
    for c in range(classes):
        rng = substream(seed, "data-gen", "class", c)
        points = centers[c] + spread * rng.standard_normal((per_class, dim))
        examples.extend(LabeledExample(p, c) for p in points)
    return examples


def _holdout_count(n: int) -> int:
    return max(MIN_VALIDATION_PER_CLASS, int(round(VALIDATION_FRACTION * n)))


def split_sessions(examples: list[LabeledExample], config: SplitConfig) -> SessionStream:
    """Split labeled examples into a base session plus N-way K-shot sessions.

    Classes are dealt to sessions in seeded-shuffle order; per class, a
    validation holdout is peeled off first and the few-shot sessions then
    take their K train examples from the head of the remaining pool.
    """
    if not examples:
        raise SplitError("no examples to split")
    dim = feature_dim(examples)
    by_class: dict[int, list[LabeledExample]] = {}
    for ex in examples:
        by_class.setdefault(ex.label, []).append(ex)
    if len(by_class) != config.total_classes:
        raise SplitError(
            f"config expects {config.total_classes} classes, data has {len(by_class)}")

    class_rng = substream(config.seed, "data-split")
    shuffled = list(class_rng.permutation(sorted(by_class)))

    pools: dict[int, tuple[list[LabeledExample], list[LabeledExample]]] = {}
    for label in shuffled:
        members = by_class[int(label)]
        order = substream(config.seed, "data-split", "class", int(label)).permutation(len(members))
        shuffled_members = [members[i] for i in order]
        holdout = _holdout_count(len(members))
        pool = shuffled_members[: len(members) - holdout]
        validation = shuffled_members[len(members) - holdout:]
        if not pool:
            raise SplitError(
                f"class {int(label)} has {len(members)} examples, all consumed by the"
                f" {holdout}-example validation holdout")
        pools[int(label)] = (pool, validation)

    sessions: list[SessionDataset] = []
    base_labels = tuple(int(c) for c in shuffled[: config.base_classes])
    base_train = [ex for c in base_labels for ex in pools[c][0]]
    base_val = [ex for c in base_labels for ex in pools[c][1]]
    sessions.append(SessionDataset(0, base_train, base_val, base_labels))

    cursor = config.base_classes
    for t in range(1, config.num_sessions):
        labels = tuple(int(c) for c in shuffled[cursor: cursor + config.ways])
        cursor += config.ways
        train: list[LabeledExample] = []
        validation: list[LabeledExample] = []
        for c in labels:
            pool, val = pools[c]
            if len(pool) < config.shots:
                raise SplitError(
                    f"class {c} has only {len(pool)} train examples for {config.shots} shots")
            train.extend(pool[: config.shots])
            validation.extend(val)
        sessions.append(SessionDataset(t, train, validation, labels))

    return SessionStream(sessions, dim)


def validation_union(stream: SessionStream, up_to: int) -> list[LabeledExample]:
    """All validation examples of sessions 0..up_to, in stable order."""
    if not 0 <= up_to < len(stream.sessions):
        raise DataError(f"session index {up_to} out of range 0..{len(stream.sessions) - 1}")
    union: list[LabeledExample] = []
    for sess in stream.sessions[: up_to + 1]:
        union.extend(sess.validation)
    return union
