"""SGD with momentum, plus a finite-difference gradient checker."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .nn import Parameter


def zero_grads(params: Sequence[Parameter]) -> None:
    for p in params:
        p.zero_grad()


def sgd_momentum_step(params: Sequence[Parameter], lr: float, momentum: float) -> None:
    """One heavy-ball update: v <- m·v + g, w <- w - lr·v.

    Frozen parameters are left untouched, gradients included. Consumed
    gradients are zeroed.
    """
    for p in params:
        if p.frozen:
            continue
        p.velocity *= momentum
        p.velocity += p.grad
        p.value -= lr * p.velocity
        p.grad[...] = 0.0


@dataclass
class GradCheckEntry:
    name: str
    max_rel_error: float
    worst_index: tuple[int, int]


@dataclass
class GradCheckReport:
    max_rel_error: float
    entries: list[GradCheckEntry] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)

    def passed(self, tolerance: float) -> bool:
        return self.max_rel_error < tolerance


def _rel_error(analytic: float, numeric: float) -> float:
    scale = max(abs(analytic), abs(numeric))
    # below the FD noise floor a ratio is meaningless; compare absolutely
    if scale < 1e-6:
        return abs(analytic - numeric)
    return abs(analytic - numeric) / scale


def grad_check(loss_fn: Callable[[], float], params: Sequence[Parameter],
               fd_step: float = 1e-5) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    `loss_fn` must run a deterministic forward+backward, accumulate into
    each parameter's grad and return the scalar loss. Frozen parameters
    are reported as skipped, not failed.
    """
    zero_grads(params)
    loss_fn()
    analytic = {id(p): p.grad.copy() for p in params}
    zero_grads(params)

    report = GradCheckReport(max_rel_error=0.0)
    for p in params:
        label = p.name or f"param{params.index(p)}"
        if p.frozen:
            report.skipped.append(label)
            continue
        grads = analytic[id(p)]
        worst = 0.0
        worst_idx = (0, 0)
        it = np.nditer(p.value, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = p.value[idx]
            p.value[idx] = orig + fd_step
            loss_plus = loss_fn()
            p.value[idx] = orig - fd_step
            loss_minus = loss_fn()
            p.value[idx] = orig
            numeric = (loss_plus - loss_minus) / (2.0 * fd_step)
            err = _rel_error(float(grads[idx]), numeric)
            if err > worst:
                worst = err
                worst_idx = idx
            it.iternext()
        zero_grads(params)
        report.entries.append(GradCheckEntry(label, worst, worst_idx))
        report.max_rel_error = max(report.max_rel_error, worst)
    return report
