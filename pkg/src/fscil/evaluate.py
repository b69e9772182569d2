"""Metrics over the cumulative validation union, plus embedding export.

Predictions break argmax ties toward the lowest class id so metrics are
reproducible regardless of how classes were dealt to head rows.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LabeledExample, as_arrays
from .errors import MetricError
from .model import SdcModel


@dataclass
class SessionMetrics:
    session: int
    accuracy: float
    old_class_accuracy: float | None
    new_class_accuracy: float | None
    count_total: int
    correct_total: int
    count_old: int
    correct_old: int
    count_new: int
    correct_new: int


def predict_classes(model: SdcModel, x: np.ndarray,
                    class_to_index: dict[int, int]) -> np.ndarray:
    """Argmax class ids; ties resolve to the lowest class id."""
    logits = model.forward(x)
    ids = np.array(sorted(class_to_index), dtype=np.int64)
    columns = np.array([class_to_index[int(c)] for c in ids])
    # argmax returns the first maximum, i.e. the lowest id in sorted order
    return ids[np.argmax(logits[:, columns], axis=1)]


def session_accuracy(model: SdcModel, eval_set: list[LabeledExample],
                     class_to_index: dict[int, int], session: int,
                     new_classes: frozenset[int] = frozenset()) -> SessionMetrics:
    """Accuracy over an evaluation set, split into old/new class groups.

    At session 0 there is no old/new distinction: the old slot reports the
    base accuracy and the new slot is absent.
    """
    if not eval_set:
        raise MetricError("cannot evaluate an empty set")
    x, y = as_arrays(eval_set)
    predicted = predict_classes(model, x, class_to_index)
    correct = predicted == y

    if session == 0:
        total = len(eval_set)
        right = int(correct.sum())
        acc = right / total
        return SessionMetrics(0, acc, acc, None, total, right, total, right, 0, 0)

    is_new = np.isin(y, sorted(new_classes))
    count_new = int(is_new.sum())
    count_old = len(eval_set) - count_new
    correct_new = int(correct[is_new].sum())
    correct_old = int(correct[~is_new].sum())
    return SessionMetrics(
        session=session,
        accuracy=(correct_old + correct_new) / len(eval_set),
        old_class_accuracy=correct_old / count_old if count_old else None,
        new_class_accuracy=correct_new / count_new if count_new else None,
        count_total=len(eval_set),
        correct_total=correct_old + correct_new,
        count_old=count_old,
        correct_old=correct_old,
        count_new=count_new,
        correct_new=correct_new,
    )


def average_accuracy(accuracies: list[float]) -> float:
    if not accuracies:
        raise MetricError("no session accuracies to average")
    return float(np.mean(accuracies))


def export_embeddings(model: SdcModel, examples: list[LabeledExample],
                      session_of_class: dict[int, int],
                      stage: str = "pre-fc") -> list[str]:
    """CSV rows `label,session,e1,...,ed`, no header.

    `pre-fc` rows are the normalized vectors fed to the head; `post-blend`
    rows are the raw blended projector outputs.
    """
    x, y = as_arrays(examples)
    embedded = model.embed(x, stage=stage)
    rows = []
    for label, vec in zip(y, embedded):
        parts = [str(int(label)), str(session_of_class[int(label)])]
        parts.extend(repr(float(v)) for v in vec)
        rows.append(",".join(parts))
    return rows
