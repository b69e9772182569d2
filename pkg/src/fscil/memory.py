"""Prototype memory: one class-mean backbone feature per seen class.

Prototypes live at the backbone-feature level and are replayed through
the full projector path during incremental training. The memory is
append-only: the backbone is frozen once incremental sessions start, so
stored vectors never need recomputation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import SessionDataset, as_arrays
from .errors import ProtocolError, PrototypeError
from .model import Backbone


@dataclass
class PrototypeMemory:
    entries: list[tuple[np.ndarray, int]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def class_ids(self) -> list[int]:
        return [label for _, label in self.entries]

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Stack prototypes into (n, d) features and (n,) class-id labels."""
        if not self.entries:
            raise PrototypeError("memory is empty")
        protos = np.stack([vec for vec, _ in self.entries])
        labels = np.array([label for _, label in self.entries], dtype=np.int64)
        return protos, labels


def compute_prototypes(backbone: Backbone, dataset: SessionDataset) -> list[tuple[np.ndarray, int]]:
    """Per-class arithmetic mean of backbone features over the train split."""
    if not dataset.train:
        raise PrototypeError(f"session {dataset.session_index} has no train examples")
    x, y = as_arrays(dataset.train)
    features = backbone.forward(x)
    prototypes: list[tuple[np.ndarray, int]] = []
    for label in dataset.labels:
        mask = y == label
        if not mask.any():
            raise PrototypeError(f"class {label} has zero train examples")
        prototypes.append((features[mask].mean(axis=0), int(label)))
    return prototypes


def init_memory(backbone: Backbone, base: SessionDataset) -> PrototypeMemory:
    """Fresh memory covering exactly the base session's classes."""
    if base.session_index != 0:
        raise ProtocolError(f"memory initializes from session 0, got {base.session_index}")
    return PrototypeMemory(compute_prototypes(backbone, base))


def update_memory(memory: PrototypeMemory, backbone: Backbone,
                  session: SessionDataset) -> PrototypeMemory:
    """Append the session's class prototypes; earlier entries are untouched."""
    if session.session_index < 1:
        raise ProtocolError("update_memory is for incremental sessions")
    seen = set(memory.class_ids())
    duplicates = seen & set(session.labels)
    if duplicates:
        raise ProtocolError(f"classes already in memory: {sorted(duplicates)}")
    memory.entries.extend(compute_prototypes(backbone, session))
    return memory
