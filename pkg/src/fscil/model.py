"""The incremental classifier: backbone, two projectors, expanding head.

Base sessions route features through the static projector only; from
session 1 on, a dynamic projector is blended in with weight alpha before
row-wise l2 normalization and the bias-free class head:

    base:        logits = FC(norm(static(f)))
    incremental: logits = FC(norm((1-alpha)*static(f) + alpha*dynamic(f)))

The blend short-circuits at exactly alpha=0/1 so the endpoint paths are
bit-identical to single-projector routing.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError, ProtocolError
from .nn import (LinearLayer, MlpBlock, Parameter, glorot_uniform,
                 l2_normalize, l2_normalize_backward)

EXPANSION_INIT_SCALE = 0.1


class Backbone:
    """Feature extractor: identity over precomputed features, or a small MLP."""

    def __init__(self, kind: str, net: MlpBlock | None = None):
        if kind not in ("identity", "mlp"):
            raise ValueError(f"unknown backbone kind {kind!r}")
        if kind == "mlp" and net is None:
            raise ValueError("mlp backbone needs a network")
        self.kind = kind
        self.net = net

    @classmethod
    def identity(cls) -> "Backbone":
        return cls("identity")

    @classmethod
    def mlp(cls, rng: np.random.Generator, in_dim: int, out_dim: int) -> "Backbone":
        net = MlpBlock.init(rng, [in_dim, out_dim, out_dim], name="backbone")
        return cls("mlp", net)

    def parameters(self) -> list[Parameter]:
        return [] if self.net is None else self.net.parameters()

    def set_frozen(self, frozen: bool) -> None:
        if self.net is not None:
            self.net.set_frozen(frozen)

    @property
    def frozen(self) -> bool:
        return True if self.net is None else self.net.frozen

    def forward(self, x: np.ndarray) -> np.ndarray:
        return x if self.net is None else self.net.forward(x)

    def forward_ctx(self, x: np.ndarray):
        if self.net is None:
            return x, None
        return self.net.forward_ctx(x)

    def backward(self, cache, dout: np.ndarray) -> None:
        if self.net is not None:
            self.net.backward(cache, dout)


def make_projector(rng: np.random.Generator, in_dim: int, out_dim: int,
                   num_layers: int, name: str) -> MlpBlock:
    """Projector MLP; hidden widths equal the output dimension."""
    if num_layers < 1:
        raise DimensionError(f"projector needs >= 1 layer, got {num_layers}")
    dims = [in_dim] + [out_dim] * num_layers
    return MlpBlock.init(rng, dims, name=name)


class FcHead:
    """Bias-free classification head over l2-normalized embeddings."""

    def __init__(self, weight: np.ndarray):
        self.weight = Parameter(weight, name="fc.w")

    @classmethod
    def init(cls, rng: np.random.Generator, num_classes: int, embed_dim: int) -> "FcHead":
        return cls(glorot_uniform(rng, num_classes, embed_dim))

    @property
    def num_classes(self) -> int:
        return self.weight.value.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.weight.value.shape[1]

    def parameters(self) -> list[Parameter]:
        return [self.weight]

    def forward(self, z: np.ndarray) -> np.ndarray:
        if z.shape[1] != self.embed_dim:
            raise DimensionError(f"head expects dim {self.embed_dim}, got {z.shape[1]}")
        return z @ self.weight.value.T

    def backward(self, z: np.ndarray, dlogits: np.ndarray) -> np.ndarray:
        self.weight.grad += dlogits.T @ z
        return dlogits @ self.weight.value


@dataclass
class ClassifierCtx:
    features: np.ndarray
    static_cache: list[np.ndarray] | None
    dynamic_cache: list[np.ndarray] | None
    pre_norm: np.ndarray
    embedding: np.ndarray


class SdcModel:
    """Backbone + static/dynamic projectors + expanding head, with session state."""

    def __init__(self, backbone: Backbone, static_proj: MlpBlock, fc: FcHead,
                 alpha: float):
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {alpha}")
        if static_proj.out_dim != fc.embed_dim:
            raise DimensionError(
                f"projector output {static_proj.out_dim} != head input {fc.embed_dim}")
        self.backbone = backbone
        self.static_proj = static_proj
        self.dynamic_proj: MlpBlock | None = None
        self.fc = fc
        self.alpha = float(alpha)
        self.session = 0

    def parameters(self) -> list[Parameter]:
        params = self.backbone.parameters() + self.static_proj.parameters()
        if self.dynamic_proj is not None:
            params += self.dynamic_proj.parameters()
        return params + self.fc.parameters()

    def trainable_parameters(self) -> list[Parameter]:
        return [p for p in self.parameters() if not p.frozen]

    def zero_grads(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    # -- forward/backward ------------------------------------------------

    def classifier_forward_ctx(self, features: np.ndarray) -> tuple[np.ndarray, ClassifierCtx]:
        """Projector path from backbone-level features to logits."""
        if self.session == 0 or self.dynamic_proj is None:
            if self.session > 0:
                raise ProtocolError("incremental session has no dynamic projector")
            static_out, static_cache = self.static_proj.forward_ctx(features)
            pre_norm = static_out
            dynamic_cache = None
        elif self.alpha == 0.0:
            pre_norm, static_cache = self.static_proj.forward_ctx(features)
            dynamic_cache = None
        elif self.alpha == 1.0:
            pre_norm, dynamic_cache = self.dynamic_proj.forward_ctx(features)
            static_cache = None
        else:
            static_out, static_cache = self.static_proj.forward_ctx(features)
            dynamic_out, dynamic_cache = self.dynamic_proj.forward_ctx(features)
            pre_norm = (1.0 - self.alpha) * static_out + self.alpha * dynamic_out
        embedding = l2_normalize(pre_norm)
        logits = self.fc.forward(embedding)
        return logits, ClassifierCtx(features, static_cache, dynamic_cache, pre_norm, embedding)

    def classifier_backward(self, ctx: ClassifierCtx, dlogits: np.ndarray) -> np.ndarray:
        """Accumulate grads along the classifier path; returns d(features)."""
        dz = self.fc.backward(ctx.embedding, dlogits)
        dpre = l2_normalize_backward(ctx.pre_norm, dz)
        if ctx.static_cache is not None and ctx.dynamic_cache is not None:
            dfeat = self.static_proj.backward(ctx.static_cache, (1.0 - self.alpha) * dpre)
            dfeat = dfeat + self.dynamic_proj.backward(ctx.dynamic_cache, self.alpha * dpre)
        elif ctx.static_cache is not None:
            dfeat = self.static_proj.backward(ctx.static_cache, dpre)
        else:
            dfeat = self.dynamic_proj.backward(ctx.dynamic_cache, dpre)
        return dfeat

    def forward_ctx(self, x: np.ndarray):
        features, bb_cache = self.backbone.forward_ctx(x)
        logits, ctx = self.classifier_forward_ctx(features)
        return logits, (bb_cache, ctx)

    def backward(self, ctx, dlogits: np.ndarray) -> None:
        bb_cache, cls_ctx = ctx
        dfeat = self.classifier_backward(cls_ctx, dlogits)
        if bb_cache is not None and not self.backbone.frozen:
            self.backbone.backward(bb_cache, dfeat)

    def forward(self, x: np.ndarray) -> np.ndarray:
        logits, _ = self.forward_ctx(x)
        return logits

    def embed(self, x: np.ndarray, stage: str = "pre-fc") -> np.ndarray:
        """Embeddings at `pre-fc` (normalized) or `post-blend` (raw blend)."""
        if stage not in ("pre-fc", "post-blend"):
            raise ValueError(f"unknown embedding stage {stage!r}")
        features = self.backbone.forward(x)
        _, ctx = self.classifier_forward_ctx(features)
        return ctx.embedding if stage == "pre-fc" else ctx.pre_norm


def forward_base(model: SdcModel, x: np.ndarray) -> np.ndarray:
    """Base-session logits; errors if the model has moved past session 0."""
    if model.session != 0:
        raise ProtocolError(f"forward_base called at session {model.session}")
    return model.forward(x)


def forward_incremental(model: SdcModel, x: np.ndarray) -> np.ndarray:
    """Blended-path logits; requires session > 0 with a dynamic projector."""
    if model.session == 0:
        raise ProtocolError("forward_incremental called at session 0")
    if model.dynamic_proj is None:
        raise ProtocolError("dynamic projector not instantiated")
    return model.forward(x)


def instantiate_dynamic(model: SdcModel, init_policy: str,
                        rng: np.random.Generator | None = None) -> None:
    """Create the dynamic projector with the static projector's architecture.

    `copy-static` clones the static weights (warm start); `fresh-random`
    redraws them from `rng`.
    """
    if model.session == 0:
        raise ProtocolError("dynamic projector cannot be created in the base session")
    if init_policy == "copy-static":
        layers = [
            LinearLayer(layer.weight.value.copy(),
                        None if layer.bias is None else layer.bias.value.copy(),
                        name=f"dynamic.{i}")
            for i, layer in enumerate(model.static_proj.layers)
        ]
        model.dynamic_proj = MlpBlock(layers)
    elif init_policy == "fresh-random":
        if rng is None:
            raise ValueError("fresh-random init needs a generator")
        dims = [model.static_proj.in_dim] + [l.out_dim for l in model.static_proj.layers]
        model.dynamic_proj = MlpBlock.init(rng, dims, name="dynamic")
    else:
        raise ValueError(f"unknown dynamic init policy {init_policy!r}")


def expand_fc(model: SdcModel, new_classes: int, rng: np.random.Generator) -> None:
    """Grow the head by `new_classes` rows, preserving old rows and momentum."""
    if new_classes < 1:
        raise ValueError(f"new_classes must be >= 1, got {new_classes}")
    weight = model.fc.weight
    old_rows, embed_dim = weight.value.shape
    # small init keeps fresh-class logits from perturbing old predictions
    bound = EXPANSION_INIT_SCALE * np.sqrt(6.0 / (embed_dim + old_rows + new_classes))
    new_rows = rng.uniform(-bound, bound, size=(new_classes, embed_dim))
    weight.value = np.vstack([weight.value, new_rows])
    weight.velocity = np.vstack([weight.velocity, np.zeros_like(new_rows)])
    weight.grad = np.zeros_like(weight.value)


def set_trainable_for_session(model: SdcModel, session: int) -> None:
    """Apply the freeze protocol: everything trains at session 0; from then
    on only the dynamic projector and head do."""
    if session < 0:
        raise ProtocolError(f"negative session {session}")
    base = session == 0
    model.backbone.set_frozen(not base)
    model.static_proj.set_frozen(not base)
    if model.dynamic_proj is not None:
        model.dynamic_proj.set_frozen(False)
    for p in model.fc.parameters():
        p.frozen = False


def param_hash(params: Sequence[Parameter]) -> str:
    """SHA-256 over parameter values; stable fingerprint for freeze checks."""
    digest = hashlib.sha256()
    for p in params:
        digest.update(np.ascontiguousarray(p.value).tobytes())
    return digest.hexdigest()


def build_model(rng: np.random.Generator, input_dim: int, base_classes: int,
                projector_layers: int, projector_dim: int, alpha: float,
                backbone_kind: str = "identity",
                backbone_dim: int | None = None) -> SdcModel:
    """Assemble a fresh session-0 model."""
    if backbone_kind == "identity":
        backbone = Backbone.identity()
        feat_dim = input_dim
    else:
        feat_dim = backbone_dim or input_dim
        backbone = Backbone.mlp(rng, input_dim, feat_dim)
    static = make_projector(rng, feat_dim, projector_dim, projector_layers, name="static")
    fc = FcHead.init(rng, base_classes, projector_dim)
    return SdcModel(backbone, static, fc, alpha)
