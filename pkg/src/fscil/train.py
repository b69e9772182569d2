"""Training stages: base-session fit and incremental fit with replay.

The base stage minimizes plain cross-entropy over the base dataset. Each
incremental stage minimizes the sum of two means: cross-entropy over the
session's few-shot examples plus cross-entropy over the whole prototype
memory, both routed through the blended projector path. The memory is
small (at most one entry per seen class) so every step replays it fully.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .data import SessionDataset, as_arrays
from .errors import DivergenceError, ProtocolError
from .memory import PrototypeMemory
from .model import SdcModel
from .nn import softmax_cross_entropy
from .optim import sgd_momentum_step
from .seeding import substream

DYNAMIC_INITS = ("copy-static", "fresh-random")
DYNAMIC_LIFETIMES = ("carry", "reinit")


@dataclass
class TrainConfig:
    base_epochs: int = 100
    inc_epochs: int = 100
    base_lr: float = 0.1
    inc_lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32
    alpha: float = 0.5
    seed: int = 0
    dynamic_init: str = "copy-static"
    dynamic_lifetime: str = "carry"
    use_memory: bool = True
    track_old_new: bool = False

    def __post_init__(self):
        if self.base_lr <= 0 or self.inc_lr <= 0:
            raise ValueError("learning rates must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.base_epochs < 0 or self.inc_epochs < 0:
            raise ValueError("epoch counts must be >= 0")
        if self.dynamic_init not in DYNAMIC_INITS:
            raise ValueError(f"dynamic_init must be one of {DYNAMIC_INITS}")
        if self.dynamic_lifetime not in DYNAMIC_LIFETIMES:
            raise ValueError(f"dynamic_lifetime must be one of {DYNAMIC_LIFETIMES}")


@dataclass
class SessionReport:
    session: int
    per_epoch_loss: list[float] = field(default_factory=list)
    final_train_accuracy: float = 0.0
    per_epoch_data_loss: list[float] = field(default_factory=list)
    per_epoch_memory_loss: list[float] = field(default_factory=list)
    old_new_curve: list[tuple[float, float]] = field(default_factory=list)


def map_labels(labels: np.ndarray, class_to_index: dict[int, int]) -> np.ndarray:
    return np.array([class_to_index[int(l)] for l in labels], dtype=np.int64)


def _train_accuracy(model: SdcModel, x: np.ndarray, y_idx: np.ndarray) -> float:
    logits = model.forward(x)
    return float(np.mean(np.argmax(logits, axis=1) == y_idx))


def train_base(model: SdcModel, base: SessionDataset, cfg: TrainConfig) -> SessionReport:
    """Mini-batch SGD over the base session; the trained static projector
    stays in place as the frozen reference for later sessions."""
    if model.session != 0:
        raise ProtocolError(f"train_base called at session {model.session}")
    class_to_index = {label: i for i, label in enumerate(base.labels)}
    x, y_raw = as_arrays(base.train)
    y = map_labels(y_raw, class_to_index)
    n = len(base.train)

    report = SessionReport(session=0)
    rng = substream(cfg.seed, "shuffle", "base")
    params = model.parameters()
    for epoch in range(cfg.base_epochs):
        order = rng.permutation(n)
        total = 0.0
        for batch_i, start in enumerate(range(0, n, cfg.batch_size)):
            take = order[start:start + cfg.batch_size]
            model.zero_grads()
            logits, ctx = model.forward_ctx(x[take])
            loss, dlogits = softmax_cross_entropy(logits, y[take])
            if not np.isfinite(loss):
                raise DivergenceError("non-finite base loss", epoch, batch_i)
            model.backward(ctx, dlogits)
            sgd_momentum_step(params, cfg.base_lr, cfg.momentum)
            total += loss * len(take)
        report.per_epoch_loss.append(total / n)
    report.final_train_accuracy = _train_accuracy(model, x, y)
    return report


def incremental_loss_terms(model: SdcModel, data_x: np.ndarray, data_y_idx: np.ndarray,
                           memory: PrototypeMemory | None,
                           class_to_index: dict[int, int]) -> tuple[float, float, float]:
    """Forward-only evaluation of the incremental objective.

    Returns (total, data_term, memory_term); the total is the plain float
    sum of the two independently computed means.
    """
    features = model.backbone.forward(data_x)
    logits, _ = model.classifier_forward_ctx(features)
    data_term, _ = softmax_cross_entropy(logits, data_y_idx)
    memory_term = 0.0
    if memory is not None and len(memory) > 0:
        protos, proto_labels = memory.as_arrays()
        m_logits, _ = model.classifier_forward_ctx(protos)
        memory_term, _ = softmax_cross_entropy(m_logits, map_labels(proto_labels, class_to_index))
    return data_term + memory_term, data_term, memory_term


def train_incremental(model: SdcModel, dataset: SessionDataset, memory: PrototypeMemory,
                      cfg: TrainConfig, class_to_index: dict[int, int],
                      epoch_eval: Callable[[int], tuple[float, float]] | None = None,
                      ) -> SessionReport:
    """Fit the dynamic projector and head on few-shot data plus replayed
    prototypes; backbone and static projector must already be frozen."""
    t = dataset.session_index
    if model.session != t or t < 1:
        raise ProtocolError(
            f"model at session {model.session} cannot train dataset session {t}")
    if model.dynamic_proj is None:
        raise ProtocolError("dynamic projector not instantiated")
    expected_memory = set(class_to_index) - set(dataset.labels)
    if set(memory.class_ids()) != expected_memory:
        raise ProtocolError(
            f"memory covers {len(memory)} classes, expected {len(expected_memory)}")
    if model.fc.num_classes != len(class_to_index):
        raise ProtocolError(
            f"head has {model.fc.num_classes} rows for {len(class_to_index)} classes")

    x, y_raw = as_arrays(dataset.train)
    y = map_labels(y_raw, class_to_index)
    n = len(dataset.train)
    protos, proto_labels_raw = memory.as_arrays()
    proto_y = map_labels(proto_labels_raw, class_to_index)
    # prototypes are backbone-level features; they skip the backbone and
    # enter the classifier path directly
    data_features = model.backbone.forward(x)

    report = SessionReport(session=t)
    rng = substream(cfg.seed, "shuffle", "session", t)
    params = model.parameters()
    for epoch in range(cfg.inc_epochs):
        order = rng.permutation(n)
        total = data_total = mem_total = 0.0
        steps = 0
        for batch_i, start in enumerate(range(0, n, cfg.batch_size)):
            take = order[start:start + cfg.batch_size]
            model.zero_grads()

            logits, ctx = model.classifier_forward_ctx(data_features[take])
            data_loss, dlogits = softmax_cross_entropy(logits, y[take])
            model.classifier_backward(ctx, dlogits)

            mem_loss = 0.0
            if cfg.use_memory:
                m_logits, m_ctx = model.classifier_forward_ctx(protos)
                mem_loss, m_dlogits = softmax_cross_entropy(m_logits, proto_y)
                model.classifier_backward(m_ctx, m_dlogits)

            loss = data_loss + mem_loss
            if not np.isfinite(loss):
                raise DivergenceError("non-finite incremental loss", epoch, batch_i)
            sgd_momentum_step(params, cfg.inc_lr, cfg.momentum)
            total += loss
            data_total += data_loss
            mem_total += mem_loss
            steps += 1
        report.per_epoch_loss.append(total / steps)
        report.per_epoch_data_loss.append(data_total / steps)
        report.per_epoch_memory_loss.append(mem_total / steps)
        if epoch_eval is not None:
            report.old_new_curve.append(epoch_eval(epoch))
    logits, _ = model.classifier_forward_ctx(data_features)
    report.final_train_accuracy = float(np.mean(np.argmax(logits, axis=1) == y))
    return report
