"""Student-only export: strip the teacher and guidance heads, keep exactly
what inference needs (input block, adapted student blocks, student decoder,
normalization statistics), and reload it as a standalone predictor."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ExportError
from .input_block import AttentionParams, InputBlockParams, encode
from .layers import Mlp
from .model import JointModel
from .student import LoraPair, StudentState, TransformerBlockParams, merge_lora, student_forward
from .tensor import Tensor, no_grad

KEEP_PREFIXES = ("input.", "student.", "norm.")
STRIP_PREFIXES = ("teacher.", "guide.")


@dataclass
class ExportInfo:
    path: Path
    total_params: int
    trainable_params: int
    removed_params: int
    merged: bool


def export_student(model: JointModel, path, merge: bool = False) -> ExportInfo:
    """Write the inference artifact (checkpoint + manifest + config sidecar).

    With merge=True the LoRA updates are folded into the frozen matrices
    and the adapters are dropped from the artifact.
    """
    if not model.trained:
        raise ExportError("refusing to export: training has not finished on this model")
    path = Path(path)
    tensors: dict[str, np.ndarray] = {}
    trainable: dict[str, bool] = {}
    removed = 0
    for name, t in model.params.items():
        if name.startswith(STRIP_PREFIXES):
            removed += t.data.size
            continue
        if merge and (".lora_q." in name or ".lora_v." in name):
            continue
        tensors[name] = t.data.copy()
        trainable[name] = t.requires_grad
    if merge:
        for i, blk in enumerate(model.student.blocks):
            merged = merge_lora(blk)
            tensors[f"student.b{i}.w_q"] = merged["w_q"]
            tensors[f"student.b{i}.w_v"] = merged["w_v"]
    save_checkpoint(path, tensors, trainable)

    spec = model.spec
    sidecar = {
        "lookback": spec.lookback,
        "horizon": spec.horizon,
        "channels": spec.channels,
        "d_model": spec.d_model,
        "input_heads": spec.input_heads,
        "student_heads": spec.student_heads,
        "student_blocks": spec.student_blocks,
        "lora_rank": spec.lora_rank,
        "lora_alpha": spec.lora_alpha,
        "causal_mask": spec.causal_mask,
        "use_positional": spec.use_positional,
        "merged_lora": merge,
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))
    return ExportInfo(path=path, total_params=sum(a.size for a in tensors.values()),
                      trainable_params=model.params.trainable_count(),
                      removed_params=removed, merged=merge)


class StudentArtifact:
    """Reloaded student-only forecaster; every tensor is frozen."""

    def __init__(self, input_block: InputBlockParams, student: StudentState,
                 norm_mean: np.ndarray, norm_std: np.ndarray, meta: dict):
        self.input_block = input_block
        self.student = student
        self.norm_mean = norm_mean
        self.norm_std = norm_std
        self.meta = meta

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Normalized (B, L, C) batch -> normalized (B, T, C) forecast."""
        with no_grad():
            _, z1 = encode(Tensor(x, dtype=self.input_block.embed_w.data.dtype),
                           self.input_block)
            pred, _, _ = student_forward(z1, self.student)
        return pred.data

    def attention_snapshot(self, x: np.ndarray) -> np.ndarray:
        with no_grad():
            _, z1 = encode(Tensor(x, dtype=self.input_block.embed_w.data.dtype),
                           self.input_block)
            _, _, attn = student_forward(z1, self.student, collect_attention=True)
        stacked = np.stack(attn, axis=0)
        if stacked.ndim == 5:
            stacked = stacked.mean(axis=1)
        return stacked


def load_student_artifact(path) -> StudentArtifact:
    path = Path(path)
    meta = json.loads(Path(str(path) + ".json").read_text())
    arrays = load_checkpoint(path)
    bad = [n for n in arrays if n.startswith(STRIP_PREFIXES)]
    if bad:
        raise ExportError(f"artifact contains training-only tensors: {bad[:3]}")

    def frz(name: str) -> Tensor:
        return Tensor(arrays[name], requires_grad=False, dtype=arrays[name].dtype)

    input_block = InputBlockParams(
        embed_w=frz("input.embed_w"),
        self_attn=AttentionParams(frz("input.self.w_q"), frz("input.self.w_k"),
                                  frz("input.self.w_v")),
        cross_attn=AttentionParams(frz("input.cross.w_q"), frz("input.cross.w_k"),
                                   frz("input.cross.w_v")),
        dictionary=frz("input.dictionary"),
        heads=meta["input_heads"],
    )
    d_model = meta["d_model"]
    rank = meta["lora_rank"]
    scaling = meta["lora_alpha"] / rank
    merged = meta["merged_lora"]
    dtype = arrays["input.embed_w"].dtype

    def lora(prefix: str) -> LoraPair:
        if merged:
            zero = Tensor(np.zeros((d_model, 1)), requires_grad=False, dtype=dtype)
            zero_b = Tensor(np.zeros((1, d_model)), requires_grad=False, dtype=dtype)
            return LoraPair(a=zero, b=zero_b, scaling=0.0)
        return LoraPair(a=frz(f"{prefix}.a"), b=frz(f"{prefix}.b"), scaling=scaling)

    blocks = []
    for i in range(meta["student_blocks"]):
        p = f"student.b{i}"
        blocks.append(TransformerBlockParams(
            w_q=frz(f"{p}.w_q"), w_k=frz(f"{p}.w_k"), w_v=frz(f"{p}.w_v"),
            w_o=frz(f"{p}.w_o"),
            ffn_w1=frz(f"{p}.ffn_w1"), ffn_b1=frz(f"{p}.ffn_b1"),
            ffn_w2=frz(f"{p}.ffn_w2"), ffn_b2=frz(f"{p}.ffn_b2"),
            ln1_g=frz(f"{p}.ln1_g"), ln1_b=frz(f"{p}.ln1_b"),
            ln2_g=frz(f"{p}.ln2_g"), ln2_b=frz(f"{p}.ln2_b"),
            lora_q=lora(f"{p}.lora_q"), lora_v=lora(f"{p}.lora_v"),
        ))
    positional = frz("student.positional") if "student.positional" in arrays else None
    student = StudentState(
        blocks=blocks,
        decoder=Mlp(frz("student.dec.w1"), frz("student.dec.b1"),
                    frz("student.dec.w2"), frz("student.dec.b2")),
        heads=meta["student_heads"],
        causal=meta["causal_mask"],
        positional=positional,
    )
    return StudentArtifact(input_block, student, arrays["norm.mean"], arrays["norm.std"],
                           meta)
