"""Dense-matrix layer primitives with hand-written backward passes.

Everything is float64. Batches are row-major: an input is (batch, dim) and
a linear layer with weight (out_dim, in_dim) maps it to (batch, out_dim).
Backward passes accumulate into Parameter.grad; callers zero grads before
each step (the optimizer only zeroes what it consumed).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, DimensionError, LabelError

NORM_EPS = 1e-12


@dataclass
class Parameter:
    """A weight matrix with its gradient, momentum buffer and freeze flag."""

    value: np.ndarray
    grad: np.ndarray = field(init=False)
    velocity: np.ndarray = field(init=False)
    frozen: bool = False
    name: str = ""

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.velocity = np.zeros_like(self.value)

    @property
    def size(self) -> int:
        return self.value.size

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


def glorot_uniform(rng: np.random.Generator, out_dim: int, in_dim: int,
                   scale: float = 1.0) -> np.ndarray:
    """Uniform init in ±scale·sqrt(6/(fan_in+fan_out))."""
    bound = scale * np.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-bound, bound, size=(out_dim, in_dim))


class LinearLayer:
    """Affine map out = x @ W.T + b, bias stored as an (out_dim, 1) column."""

    def __init__(self, weight: np.ndarray, bias: np.ndarray | None, name: str = ""):
        self.weight = Parameter(weight, name=f"{name}.w" if name else "w")
        self.bias = Parameter(bias, name=f"{name}.b" if name else "b") if bias is not None else None

    @classmethod
    def init(cls, rng: np.random.Generator, in_dim: int, out_dim: int,
             with_bias: bool = True, name: str = "") -> "LinearLayer":
        weight = glorot_uniform(rng, out_dim, in_dim)
        bias = np.zeros((out_dim, 1)) if with_bias else None
        return cls(weight, bias, name=name)

    @property
    def in_dim(self) -> int:
        return self.weight.value.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.value.shape[0]

    def parameters(self) -> list[Parameter]:
        return [self.weight] if self.bias is None else [self.weight, self.bias]

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise DimensionError(
                f"linear layer expects (batch, {self.in_dim}), got {x.shape}")
        out = x @ self.weight.value.T
        if self.bias is not None:
            out += self.bias.value[:, 0]
        return out

    def backward(self, x: np.ndarray, dout: np.ndarray) -> np.ndarray:
        """Accumulate dW, db for the forward that consumed `x`; return dx."""
        self.weight.grad += dout.T @ x
        if self.bias is not None:
            self.bias.grad += dout.sum(axis=0)[:, None]
        return dout @ self.weight.value


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, dout: np.ndarray) -> np.ndarray:
    # subgradient at exactly 0 is taken as 0
    return dout * (x > 0.0)


class MlpBlock:
    """Stack of linear layers with ReLU between them (none after the last)."""

    def __init__(self, layers: list[LinearLayer]):
        if not layers:
            raise DimensionError("MlpBlock needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.out_dim != b.in_dim:
                raise DimensionError(
                    f"layer dims do not chain: {a.out_dim} -> {b.in_dim}")
        self.layers = layers

    @classmethod
    def init(cls, rng: np.random.Generator, dims: list[int], name: str = "") -> "MlpBlock":
        """Build from a dim chain, e.g. [16, 32, 32] gives two layers."""
        layers = [
            LinearLayer.init(rng, dims[i], dims[i + 1], name=f"{name}.{i}" if name else str(i))
            for i in range(len(dims) - 1)
        ]
        return cls(layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def parameters(self) -> list[Parameter]:
        return [p for layer in self.layers for p in layer.parameters()]

    def set_frozen(self, frozen: bool) -> None:
        for p in self.parameters():
            p.frozen = frozen

    @property
    def frozen(self) -> bool:
        return all(p.frozen for p in self.parameters())

    def forward(self, x: np.ndarray) -> np.ndarray:
        out, _ = self.forward_ctx(x)
        return out

    def forward_ctx(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Forward pass keeping the inputs each stage needs for backward."""
        cache = []
        h = x
        for i, layer in enumerate(self.layers):
            cache.append(h)
            h = layer.forward(h)
            if i < len(self.layers) - 1:
                cache.append(h)  # pre-activation, needed for the ReLU mask
                h = relu(h)
        return h, cache

    def backward(self, cache: list[np.ndarray], dout: np.ndarray) -> np.ndarray:
        d = dout
        k = len(cache)
        for i in range(len(self.layers) - 1, -1, -1):
            if i < len(self.layers) - 1:
                k -= 1
                d = relu_backward(cache[k], d)
            k -= 1
            d = self.layers[i].backward(cache[k], d)
        return d


def l2_normalize(x: np.ndarray) -> np.ndarray:
    """Scale each row to unit Euclidean norm.

    Raises DegenerateInputError if any row norm is <= 1e-12; collapsed
    features are a bug upstream and must not be silently zeroed.
    """
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms <= NORM_EPS):
        bad = int(np.argmin(norms))
        raise DegenerateInputError(
            f"row {bad} has norm {norms[bad, 0]:.3e} <= {NORM_EPS}")
    return x / norms


def l2_normalize_backward(x: np.ndarray, dout: np.ndarray) -> np.ndarray:
    """Full Jacobian of row-wise normalization: dx = (I - ŷŷᵀ)/‖x‖ · dout."""
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    y = x / norms
    return (dout - y * np.sum(dout * y, axis=1, keepdims=True)) / norms


def softmax_cross_entropy(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean CE over the batch plus the gradient w.r.t. the logits.

    Targets are integer class indices into the logit columns. Stabilized
    by per-row max subtraction.
    """
    batch, n_classes = logits.shape
    if n_classes < 2:
        raise LabelError(f"need at least 2 classes, got {n_classes}")
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != (batch,):
        raise LabelError(f"targets shape {targets.shape} does not match batch {batch}")
    if targets.min() < 0 or targets.max() >= n_classes:
        raise LabelError(
            f"target out of range [0, {n_classes}): {targets.min()}..{targets.max()}")

    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(total)
    rows = np.arange(batch)
    loss = float(-log_probs[rows, targets].mean())

    grad = exp / total
    grad[rows, targets] -= 1.0
    grad /= batch
    return loss, grad
