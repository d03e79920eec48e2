"""Joint training-time model: input block + teacher branch + student branch
+ guidance heads, with one parameter registry for optimization and
checkpointing."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .input_block import InputBlockParams, build_dictionary, encode, init_input_block
from .seeding import spawn_rng
from .student import StudentState, init_student, student_forward
from .teacher import (DEFAULT_CAPACITY, CapacitySchedule, TeacherState, init_teacher,
                      teacher_forward)
from .tensor import ParameterSet, Tensor, no_grad


@dataclass
class ModelSpec:
    """Everything needed to build the joint model deterministically."""

    lookback: int
    horizon: int
    channels: int
    d_model: int
    input_heads: int = 4
    dict_size: int = 16
    dict_source: str = "synthetic"      # "synthetic" or an embedding-file path
    student_blocks: int = 6
    student_heads: int = 4
    d_ff: int | None = None
    lora_rank: int = 8
    lora_alpha: float = 16.0
    teacher_blocks: int = 2
    kernel: int = 25
    d_pool: int = 64
    d_gate: int = 64
    decoder_hidden: int | None = None
    capacity_schedule: list = field(default_factory=lambda: [list(p) for p in DEFAULT_CAPACITY])
    guidance_depths: tuple[int, ...] = (2, 3)
    causal_mask: bool = False
    use_positional: bool = False

    def validate(self) -> None:
        for depth in self.guidance_depths:
            if depth < 2 or depth > self.teacher_blocks + 1:
                raise ConfigError(
                    f"guidance depth {depth} has no teacher feature (teacher has "
                    f"{self.teacher_blocks} blocks)")
            if depth > self.student_blocks + 1:
                raise ConfigError(
                    f"guidance depth {depth} has no student feature (student has "
                    f"{self.student_blocks} blocks)")


@dataclass
class GuidanceHeads:
    """Per-depth projection pairs; train-time only, dropped at export."""

    student_heads: dict[int, Tensor]
    teacher_heads: dict[int, Tensor]


@dataclass
class JointOutputs:
    teacher_pred: Tensor
    student_pred: Tensor
    teacher_feats: dict[int, Tensor]
    student_feats: dict[int, Tensor]
    attention: list[np.ndarray]


class JointModel:
    def __init__(self, spec: ModelSpec, input_block: InputBlockParams,
                 teacher: TeacherState, student: StudentState, guidance: GuidanceHeads,
                 norm_mean: Tensor, norm_std: Tensor):
        self.spec = spec
        self.input_block = input_block
        self.teacher = teacher
        self.student = student
        self.guidance = guidance
        self.norm_mean = norm_mean
        self.norm_std = norm_std
        self.trained = False
        self.params = _register(self)

    # -- forward --------------------------------------------------------

    def forward(self, x: Tensor, collect_attention: bool = False) -> JointOutputs:
        e1, z1 = encode(x, self.input_block)
        t_pred, t_feats = teacher_forward(e1, self.teacher)
        s_pred, s_feats, attn = student_forward(z1, self.student,
                                                collect_attention=collect_attention)
        return JointOutputs(t_pred, s_pred, t_feats, s_feats, attn)

    def predict_student(self, x: np.ndarray) -> np.ndarray:
        """Student-branch forecast on a normalized (B, L, C) batch."""
        with no_grad():
            _, z1 = encode(Tensor(x, dtype=self._dtype()), self.input_block)
            pred, _, _ = student_forward(z1, self.student)
        return pred.data

    def predict_teacher(self, x: np.ndarray) -> np.ndarray:
        with no_grad():
            e1, _ = encode(Tensor(x, dtype=self._dtype()), self.input_block)
            pred, _ = teacher_forward(e1, self.teacher)
        return pred.data

    def attention_snapshot(self, x: np.ndarray) -> np.ndarray:
        """Per-block attention weights on a batch, averaged over the batch:
        (layers, heads, C, C)."""
        with no_grad():
            _, z1 = encode(Tensor(x, dtype=self._dtype()), self.input_block)
            _, _, attn = student_forward(z1, self.student, collect_attention=True)
        if not attn:
            return np.zeros((0, self.student.heads, x.shape[-1], x.shape[-1]))
        stacked = np.stack(attn, axis=0)       # (layers, B, heads, C, C) or (layers, heads, C, C)
        if stacked.ndim == 5:
            stacked = stacked.mean(axis=1)
        return stacked

    def input_attention_snapshot(self, x: np.ndarray) -> np.ndarray:
        """Self-attention weights of the input block, batch-averaged:
        (heads, C, C)."""
        from .input_block import embed, mha_weights

        with no_grad():
            e0 = embed(Tensor(x, dtype=self._dtype()), self.input_block)
            q = (e0 @ self.input_block.self_attn.w_q).data
            k = (e0 @ self.input_block.self_attn.w_k).data
        w = mha_weights(q, k, self.input_block.heads)
        return w.mean(axis=0) if w.ndim == 4 else w

    def set_norm_stats(self, mean: np.ndarray, std: np.ndarray) -> None:
        self.norm_mean.data = np.asarray(mean, dtype=self.norm_mean.data.dtype)
        self.norm_std.data = np.asarray(std, dtype=self.norm_std.data.dtype)

    def _dtype(self):
        return self.input_block.embed_w.data.dtype


def build_model(spec: ModelSpec, seed: int, dtype=None) -> JointModel:
    spec.validate()
    if spec.dict_source == "synthetic":
        dictionary = build_dictionary("synthetic", spec.dict_size, spec.d_model,
                                      rng=spawn_rng(seed, "dictionary"))
    else:
        dictionary = build_dictionary(spec.dict_source, spec.dict_size, spec.d_model)

    input_block = init_input_block(spawn_rng(seed, "input"), spec.lookback, spec.d_model,
                                   spec.input_heads, dictionary, dtype=dtype)
    teacher = init_teacher(spawn_rng(seed, "teacher"), spec.d_model, spec.channels,
                           spec.horizon, blocks=spec.teacher_blocks, kernel=spec.kernel,
                           d_pool=spec.d_pool, d_gate=spec.d_gate,
                           decoder_hidden=spec.decoder_hidden,
                           schedule=CapacitySchedule([tuple(p) for p in spec.capacity_schedule]),
                           dtype=dtype)
    student = init_student(spawn_rng(seed, "student"), spec.d_model, spec.horizon,
                           blocks=spec.student_blocks, heads=spec.student_heads,
                           d_ff=spec.d_ff, lora_rank=spec.lora_rank,
                           lora_alpha=spec.lora_alpha, decoder_hidden=spec.decoder_hidden,
                           causal=spec.causal_mask,
                           positional_tokens=spec.channels if spec.use_positional else 0,
                           dtype=dtype)
    g_rng = spawn_rng(seed, "guidance")
    scale = 1.0 / np.sqrt(spec.d_model)
    guidance = GuidanceHeads(
        student_heads={k: Tensor(g_rng.standard_normal((spec.d_model, spec.d_model)) * scale,
                                 requires_grad=True, dtype=dtype) for k in spec.guidance_depths},
        teacher_heads={k: Tensor(g_rng.standard_normal((spec.d_model, spec.d_model)) * scale,
                                 requires_grad=True, dtype=dtype) for k in spec.guidance_depths},
    )
    norm_mean = Tensor(np.zeros(spec.channels), requires_grad=False, dtype=dtype)
    norm_std = Tensor(np.ones(spec.channels), requires_grad=False, dtype=dtype)
    return JointModel(spec, input_block, teacher, student, guidance, norm_mean, norm_std)


def _register(m: JointModel) -> ParameterSet:
    ps = ParameterSet()
    ib = m.input_block
    ps.add("input.embed_w", ib.embed_w)
    for tag, attn in (("self", ib.self_attn), ("cross", ib.cross_attn)):
        ps.add(f"input.{tag}.w_q", attn.w_q)
        ps.add(f"input.{tag}.w_k", attn.w_k)
        ps.add(f"input.{tag}.w_v", attn.w_v)
    ps.add("input.dictionary", ib.dictionary)

    for i, blk in enumerate(m.teacher.blocks):
        p = f"teacher.b{i}"
        ps.add(f"{p}.w_trend", blk.w_trend)
        ps.add(f"{p}.w_season", blk.w_season)
        ps.add(f"{p}.theta", blk.asb.theta)
        ps.add(f"{p}.gamma_g_re", blk.asb.gamma_g_re)
        ps.add(f"{p}.gamma_g_im", blk.asb.gamma_g_im)
        ps.add(f"{p}.gamma_l_re", blk.asb.gamma_l_re)
        ps.add(f"{p}.gamma_l_im", blk.asb.gamma_l_im)
        ps.add(f"{p}.w_spec", blk.w_spec)
        ps.add(f"{p}.pool.lift", blk.pool.lift)
        for part in ("w1", "b1", "w2", "b2"):
            ps.add(f"{p}.pool.{part}", getattr(blk.pool.score_mlp, part))
        for part in ("w1", "b1", "w2", "b2"):
            ps.add(f"{p}.gate.{part}", getattr(blk.gate_mlp, part))
    for part in ("w1", "b1", "w2", "b2"):
        ps.add(f"teacher.dec.{part}", getattr(m.teacher.decoder, part))

    for i, blk in enumerate(m.student.blocks):
        p = f"student.b{i}"
        for part in ("w_q", "w_k", "w_v", "w_o", "ffn_w1", "ffn_b1", "ffn_w2", "ffn_b2",
                     "ln1_g", "ln1_b", "ln2_g", "ln2_b"):
            ps.add(f"{p}.{part}", getattr(blk, part))
        ps.add(f"{p}.lora_q.a", blk.lora_q.a)
        ps.add(f"{p}.lora_q.b", blk.lora_q.b)
        ps.add(f"{p}.lora_v.a", blk.lora_v.a)
        ps.add(f"{p}.lora_v.b", blk.lora_v.b)
    if m.student.positional is not None:
        ps.add("student.positional", m.student.positional)
    for part in ("w1", "b1", "w2", "b2"):
        ps.add(f"student.dec.{part}", getattr(m.student.decoder, part))

    for k in sorted(m.guidance.student_heads):
        ps.add(f"guide.k{k}.psi_s", m.guidance.student_heads[k])
        ps.add(f"guide.k{k}.psi_t", m.guidance.teacher_heads[k])

    ps.add("norm.mean", m.norm_mean)
    ps.add("norm.std", m.norm_std)
    return ps
