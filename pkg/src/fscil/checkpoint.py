"""Self-describing text checkpoints for model + memory.

JSON with sorted keys and shortest round-trip float repr: save -> load ->
save reproduces the file byte-for-byte, which binary containers with
embedded timestamps cannot guarantee.
"""
from __future__ import annotations

import json

import numpy as np

from .errors import FormatError
from .memory import PrototypeMemory
from .model import Backbone, FcHead, SdcModel
from .nn import LinearLayer, MlpBlock, Parameter

FORMAT_TAG = "fscil-checkpoint-v1"


def _param_out(p: Parameter) -> dict:
    return {
        "shape": list(p.value.shape),
        "frozen": p.frozen,
        "value": p.value.tolist(),
        "velocity": p.velocity.tolist(),
    }


def _param_in(blob: dict, name: str) -> Parameter:
    p = Parameter(np.array(blob["value"], dtype=np.float64), name=name)
    p.velocity = np.array(blob["velocity"], dtype=np.float64)
    p.frozen = bool(blob["frozen"])
    if list(p.value.shape) != blob["shape"]:
        raise FormatError(f"checkpoint shape mismatch for {name}")
    return p


def _mlp_out(block: MlpBlock) -> dict:
    return {
        "layers": [
            {"weight": _param_out(l.weight),
             "bias": None if l.bias is None else _param_out(l.bias)}
            for l in block.layers
        ]
    }


def _mlp_in(blob: dict, name: str) -> MlpBlock:
    layers = []
    for i, lb in enumerate(blob["layers"]):
        layer = LinearLayer.__new__(LinearLayer)
        layer.weight = _param_in(lb["weight"], f"{name}.{i}.w")
        layer.bias = None if lb["bias"] is None else _param_in(lb["bias"], f"{name}.{i}.b")
        layers.append(layer)
    return MlpBlock(layers)


def checkpoint_payload(model: SdcModel, memory: PrototypeMemory | None = None) -> dict:
    payload = {
        "format": FORMAT_TAG,
        "session": model.session,
        "alpha": model.alpha,
        "backbone": {
            "kind": model.backbone.kind,
            "net": None if model.backbone.net is None else _mlp_out(model.backbone.net),
        },
        "static_proj": _mlp_out(model.static_proj),
        "dynamic_proj": None if model.dynamic_proj is None else _mlp_out(model.dynamic_proj),
        "fc": _param_out(model.fc.weight),
        "memory": None if memory is None else [
            {"class": label, "vector": vec.tolist()} for vec, label in memory.entries
        ],
    }
    return payload


def save_checkpoint(model: SdcModel, path: str,
                    memory: PrototypeMemory | None = None) -> None:
    payload = checkpoint_payload(model, memory)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_checkpoint(path: str) -> tuple[SdcModel, PrototypeMemory | None]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != FORMAT_TAG:
        raise FormatError(f"not a checkpoint file: {path}")

    bb_blob = payload["backbone"]
    if bb_blob["kind"] == "identity":
        backbone = Backbone.identity()
    else:
        backbone = Backbone("mlp", _mlp_in(bb_blob["net"], "backbone"))

    static = _mlp_in(payload["static_proj"], "static")
    fc = FcHead.__new__(FcHead)
    fc.weight = _param_in(payload["fc"], "fc.w")

    model = SdcModel(backbone, static, fc, float(payload["alpha"]))
    model.session = int(payload["session"])
    if payload["dynamic_proj"] is not None:
        model.dynamic_proj = _mlp_in(payload["dynamic_proj"], "dynamic")

    memory = None
    if payload["memory"] is not None:
        memory = PrototypeMemory([
            (np.array(e["vector"], dtype=np.float64), int(e["class"]))
            for e in payload["memory"]
        ])
    return model, memory
