"""Transformer student with a frozen backbone and trainable low-rank adapters.

Pre-norm GPT-2 block ordering. Tokens are channels, so the causal mask is
off by default (flag available). Only the LoRA pairs and the decoder train;
everything else stays frozen.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .input_block import mha, mha_weights
from .layers import Mlp, init_mlp, layer_norm, mlp_forward
from .tensor import Tensor, gelu, matmul

MAX_BLOCKS = 6
DEFAULT_LORA_RANK = 8
DEFAULT_LORA_ALPHA = 16.0


@dataclass
class LoraPair:
    a: Tensor            # d_in x r, trainable
    b: Tensor            # r x d_out, trainable, zero at init
    scaling: float       # alpha / r


@dataclass
class TransformerBlockParams:
    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor
    ffn_w1: Tensor
    ffn_b1: Tensor
    ffn_w2: Tensor
    ffn_b2: Tensor
    ln1_g: Tensor
    ln1_b: Tensor
    ln2_g: Tensor
    ln2_b: Tensor
    lora_q: LoraPair
    lora_v: LoraPair


@dataclass
class StudentState:
    blocks: list[TransformerBlockParams]
    decoder: Mlp                   # d_model -> hidden -> T, shared across channels
    heads: int
    causal: bool = False
    positional: Tensor | None = None   # optional frozen position table over channel tokens


def init_student(rng: np.random.Generator, d_model: int, horizon: int, blocks: int = MAX_BLOCKS,
                 heads: int = 4, d_ff: int | None = None, lora_rank: int = DEFAULT_LORA_RANK,
                 lora_alpha: float = DEFAULT_LORA_ALPHA, decoder_hidden: int | None = None,
                 causal: bool = False, positional_tokens: int = 0, dtype=None) -> StudentState:
    if blocks < 0 or blocks > MAX_BLOCKS:
        raise ConfigError(f"student depth must be in [0, {MAX_BLOCKS}], got {blocks}")
    if d_model % heads != 0:
        raise ConfigError(f"d_model {d_model} not divisible by heads {heads}")
    if lora_rank < 1 or lora_rank > d_model:
        raise ConfigError(f"LoRA rank must be in [1, {d_model}], got {lora_rank}")
    d_ff = d_ff or 4 * d_model

    def frozen(shape, scale=0.02):
        return Tensor(rng.standard_normal(shape) * scale, requires_grad=False, dtype=dtype)

    def lora() -> LoraPair:
        return LoraPair(
            a=Tensor(rng.standard_normal((d_model, lora_rank)) / np.sqrt(d_model),
                     requires_grad=True, dtype=dtype),
            b=Tensor(np.zeros((lora_rank, d_model)), requires_grad=True, dtype=dtype),
            scaling=lora_alpha / lora_rank,
        )

    def blk() -> TransformerBlockParams:
        return TransformerBlockParams(
            w_q=frozen((d_model, d_model)), w_k=frozen((d_model, d_model)),
            w_v=frozen((d_model, d_model)), w_o=frozen((d_model, d_model)),
            ffn_w1=frozen((d_model, d_ff)), ffn_b1=frozen((d_ff,), scale=0.0),
            ffn_w2=frozen((d_ff, d_model)), ffn_b2=frozen((d_model,), scale=0.0),
            ln1_g=Tensor(np.ones(d_model), requires_grad=False, dtype=dtype),
            ln1_b=Tensor(np.zeros(d_model), requires_grad=False, dtype=dtype),
            ln2_g=Tensor(np.ones(d_model), requires_grad=False, dtype=dtype),
            ln2_b=Tensor(np.zeros(d_model), requires_grad=False, dtype=dtype),
            lora_q=lora(), lora_v=lora(),
        )

    positional = None
    if positional_tokens > 0:
        positional = frozen((positional_tokens, d_model))
    return StudentState(
        blocks=[blk() for _ in range(blocks)],
        decoder=init_mlp(rng, d_model, decoder_hidden or d_model, horizon, dtype=dtype),
        heads=heads,
        causal=causal,
        positional=positional,
    )


def lora_linear(x: Tensor, frozen_w: Tensor, pair: LoraPair) -> Tensor:
    """x @ W + scaling * (x @ A) @ B; equals the frozen product while B is zero."""
    if pair.a.data.shape[1] > frozen_w.data.shape[0]:
        raise ConfigError(
            f"LoRA rank {pair.a.data.shape[1]} exceeds matrix dimension {frozen_w.data.shape[0]}")
    return matmul(x, frozen_w) + matmul(matmul(x, pair.a), pair.b) * pair.scaling


def _block_forward(z: Tensor, blk: TransformerBlockParams, heads: int,
                   causal: bool) -> tuple[Tensor, np.ndarray]:
    a = layer_norm(z, blk.ln1_g, blk.ln1_b)
    q = lora_linear(a, blk.w_q, blk.lora_q)
    k = matmul(a, blk.w_k)
    v = lora_linear(a, blk.w_v, blk.lora_v)
    attn = mha(q, k, v, heads, causal=causal)
    z = z + matmul(attn, blk.w_o)
    b = layer_norm(z, blk.ln2_g, blk.ln2_b)
    f = matmul(gelu(matmul(b, blk.ffn_w1) + blk.ffn_b1), blk.ffn_w2) + blk.ffn_b2
    weights = mha_weights(q.data, k.data, heads)
    return z + f, weights


def student_forward(z1: Tensor, state: StudentState,
                    collect_attention: bool = False
                    ) -> tuple[Tensor, dict[int, Tensor], list[np.ndarray]]:
    """Run the adapted blocks and decode.

    Returns the forecast (..., T, C), per-depth block outputs (depth k is
    the stream after block k - 1 under 1-based stream indexing), and the
    per-block attention weight arrays when requested.
    """
    z = z1
    if state.positional is not None:
        n_tok = z.data.shape[-2]
        z = z + state.positional[:n_tok, :]
    feats: dict[int, Tensor] = {}
    attn_maps: list[np.ndarray] = []
    for n, blk in enumerate(state.blocks):
        z, weights = _block_forward(z, blk, state.heads, state.causal)
        feats[n + 2] = z
        if collect_attention:
            attn_maps.append(weights)
    pred = mlp_forward(z, state.decoder, hidden_act="gelu")  # (..., C, T)
    return pred.swapaxes(-1, -2), feats, attn_maps


def merge_lora(blk: TransformerBlockParams) -> dict[str, np.ndarray]:
    """Fold the adapters into copies of the frozen matrices."""
    return {
        "w_q": blk.w_q.data + blk.lora_q.scaling * (blk.lora_q.a.data @ blk.lora_q.b.data),
        "w_v": blk.w_v.data + blk.lora_v.scaling * (blk.lora_v.a.data @ blk.lora_v.b.data),
    }


def lora_param_count(state: StudentState) -> int:
    """Trainable adapter size: each adapted matrix contributes 2 * d_model * r."""
    return sum(p.a.data.size + p.b.data.size
               for blk in state.blocks for p in (blk.lora_q, blk.lora_v))


def decoder_param_count(state: StudentState) -> int:
    d = state.decoder
    return d.w1.data.size + d.b1.data.size + d.w2.data.size + d.b2.data.size
