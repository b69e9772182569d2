"""End-to-end session protocol and the ablation sweeps built on it.

One run: train the base session, snapshot class prototypes, then for each
incremental session expand the head, refresh the dynamic projector per
config, train on few-shot data plus replay, evaluate on the cumulative
validation union, and absorb the session into the memory.

Sweeps reuse a single trained base stage across cells, so the session-0
column is constant by construction.
"""
from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field

from .data import SessionStream, validation_union
from .errors import ProtocolError
from .evaluate import SessionMetrics, average_accuracy, session_accuracy
from .memory import PrototypeMemory, init_memory, update_memory
from .model import (SdcModel, build_model, expand_fc, instantiate_dynamic,
                    set_trainable_for_session)
from .seeding import substream
from .train import SessionReport, TrainConfig, train_base, train_incremental

ALPHA_GRID_DEFAULT = (0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0)


@dataclass
class ArchConfig:
    projector_layers: int = 2
    projector_dim: int = 32
    backbone: str = "identity"
    backbone_dim: int | None = None

    def __post_init__(self):
        if self.projector_layers < 1:
            raise ValueError("projector needs at least one layer")
        if self.projector_dim < 1:
            raise ValueError("projector dim must be >= 1")
        if self.backbone not in ("identity", "mlp"):
            raise ValueError(f"unknown backbone {self.backbone!r}")


@dataclass
class ExperimentRecord:
    train_config: TrainConfig
    arch: ArchConfig
    session_metrics: list[SessionMetrics] = field(default_factory=list)
    session_reports: list[SessionReport] = field(default_factory=list)
    average_accuracy: float = 0.0
    final_memory_size: int = 0


@dataclass
class ProtocolResult:
    record: ExperimentRecord
    model: SdcModel
    memory: PrototypeMemory


@dataclass
class BaseStage:
    """Trained session-0 state, reusable across sweep cells."""

    model: SdcModel
    memory: PrototypeMemory
    report: SessionReport
    metrics: SessionMetrics


def run_base_stage(stream: SessionStream, cfg: TrainConfig, arch: ArchConfig) -> BaseStage:
    if len(stream.sessions) == 0:
        raise ProtocolError("empty session stream")
    base = stream.sessions[0]
    rng = substream(cfg.seed, "init", "model")
    model = build_model(rng, stream.feature_dim, len(base.labels),
                        arch.projector_layers, arch.projector_dim, cfg.alpha,
                        backbone_kind=arch.backbone, backbone_dim=arch.backbone_dim)
    set_trainable_for_session(model, 0)
    report = train_base(model, base, cfg)
    class_to_index = {label: i for i, label in enumerate(base.labels)}
    metrics = session_accuracy(model, validation_union(stream, 0), class_to_index, 0)
    memory = init_memory(model.backbone, base)
    return BaseStage(model, memory, report, metrics)


def _epoch_eval_hook(model: SdcModel, stream: SessionStream, t: int,
                     class_to_index: dict[int, int]):
    """Per-epoch old/new accuracy probe for the stability/plasticity curve."""
    eval_set = validation_union(stream, t)
    new_classes = frozenset(stream.sessions[t].labels)

    def hook(_epoch: int) -> tuple[float, float]:
        m = session_accuracy(model, eval_set, class_to_index, t, new_classes)
        return (m.old_class_accuracy or 0.0, m.new_class_accuracy or 0.0)

    return hook


def run_incremental_stages(model: SdcModel, memory: PrototypeMemory,
                           stream: SessionStream, cfg: TrainConfig,
                           ) -> tuple[list[SessionMetrics], list[SessionReport]]:
    """Advance a trained base-stage model through all incremental sessions."""
    metrics_out: list[SessionMetrics] = []
    reports: list[SessionReport] = []
    for t in range(1, len(stream.sessions)):
        session = stream.sessions[t]
        expand_fc(model, len(session.labels), substream(cfg.seed, "init", "fc-expand", t))
        model.session = t
        if t == 1 or cfg.dynamic_lifetime == "reinit":
            instantiate_dynamic(model, cfg.dynamic_init,
                                substream(cfg.seed, "init", "dynamic", t))
        set_trainable_for_session(model, t)

        class_to_index = {label: i for i, label in enumerate(stream.class_order(t))}
        hook = _epoch_eval_hook(model, stream, t, class_to_index) if cfg.track_old_new else None
        reports.append(train_incremental(model, session, memory, cfg, class_to_index,
                                         epoch_eval=hook))
        metrics_out.append(session_accuracy(
            model, validation_union(stream, t), class_to_index, t,
            frozenset(session.labels)))
        update_memory(memory, model.backbone, session)
    return metrics_out, reports


def run_protocol(stream: SessionStream, cfg: TrainConfig, arch: ArchConfig) -> ProtocolResult:
    """Full multi-session run; returns the record plus final model state."""
    base = run_base_stage(stream, cfg, arch)
    inc_metrics, inc_reports = run_incremental_stages(base.model, base.memory, stream, cfg)
    metrics = [base.metrics] + inc_metrics
    record = ExperimentRecord(
        train_config=cfg,
        arch=arch,
        session_metrics=metrics,
        session_reports=[base.report] + inc_reports,
        average_accuracy=average_accuracy([m.accuracy for m in metrics]),
        final_memory_size=len(base.memory),
    )
    return ProtocolResult(record, base.model, base.memory)


def continue_from_base(base: BaseStage, stream: SessionStream,
                       cfg: TrainConfig) -> ProtocolResult:
    """Clone the shared base stage and run the incremental sessions on it."""
    model = copy.deepcopy(base.model)
    memory = copy.deepcopy(base.memory)
    model.alpha = cfg.alpha
    inc_metrics, inc_reports = run_incremental_stages(model, memory, stream, cfg)
    metrics = [base.metrics] + inc_metrics
    record = ExperimentRecord(
        train_config=cfg,
        arch=ArchConfig(),  # caller overwrites when it matters
        session_metrics=metrics,
        session_reports=[base.report] + inc_reports,
        average_accuracy=average_accuracy([m.accuracy for m in metrics]),
        final_memory_size=len(memory),
    )
    return ProtocolResult(record, model, memory)


def sweep_alpha(stream: SessionStream, cfg: TrainConfig, arch: ArchConfig,
                alphas: list[float] | None = None) -> list[ProtocolResult]:
    """One row per blend factor, all continuing the same trained base stage."""
    grid = list(ALPHA_GRID_DEFAULT) if alphas is None else list(alphas)
    if not grid:
        raise ValueError("alpha grid is empty")
    for a in grid:
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"alpha {a} outside [0, 1]")
    base = run_base_stage(stream, cfg, arch)
    results = []
    for a in grid:
        cell_cfg = dataclasses.replace(cfg, alpha=float(a))
        result = continue_from_base(base, stream, cell_cfg)
        result.record.arch = arch
        results.append(result)
    return results


@dataclass
class ArchCell:
    layers: int
    dim: int
    base_accuracy: float
    first_accuracy: float | None
    final_accuracy: float | None


def sweep_architecture(stream: SessionStream, cfg: TrainConfig,
                       layers_grid: list[int], dims_grid: list[int],
                       backbone: str = "identity",
                       backbone_dim: int | None = None) -> list[ArchCell]:
    """Base/First/Final accuracy per (layer count, projector dim) cell.

    Each cell retrains from scratch since the architecture changes the
    base stage itself.
    """
    if not layers_grid or not dims_grid:
        raise ValueError("architecture grid is empty")
    cells = []
    for layers in layers_grid:
        for dim in dims_grid:
            arch = ArchConfig(projector_layers=layers, projector_dim=dim,
                              backbone=backbone, backbone_dim=backbone_dim)
            record = run_protocol(stream, cfg, arch).record
            accs = [m.accuracy for m in record.session_metrics]
            cells.append(ArchCell(
                layers=layers,
                dim=dim,
                base_accuracy=accs[0],
                first_accuracy=accs[1] if len(accs) > 1 else None,
                final_accuracy=accs[-1] if len(accs) > 1 else None,
            ))
    return cells


def no_memory_ablation(cfg: TrainConfig) -> TrainConfig:
    """The incremental objective without the replay term."""
    return dataclasses.replace(cfg, use_memory=False)
