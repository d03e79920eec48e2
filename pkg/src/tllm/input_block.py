"""Input encoding: channels-as-tokens embedding, self-attention, and
cross-attention against a compact word-embedding dictionary.

Produces the two branch inputs (teacher side and student side), both
C x d_model. The attention scale factor is 1/sqrt(d_model) throughout,
not the per-head 1/sqrt(d_model/h).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, ShapeError
from .tensor import Tensor, concat, matmul, softmax

EMBED_MAGIC = b"TLLMEMB"


@dataclass
class AttentionParams:
    w_q: Tensor
    w_k: Tensor
    w_v: Tensor


@dataclass
class InputBlockParams:
    """Embedding map, self-attention, cross-attention, and the dictionary."""

    embed_w: Tensor          # L x d_model, bias-free, shared across channels
    self_attn: AttentionParams
    cross_attn: AttentionParams
    dictionary: Tensor       # P x d_model, fixed (not trained)
    heads: int

    @property
    def d_model(self) -> int:
        return self.embed_w.data.shape[1]

    @property
    def lookback(self) -> int:
        return self.embed_w.data.shape[0]


def init_input_block(rng: np.random.Generator, lookback: int, d_model: int, heads: int,
                     dictionary: np.ndarray, dtype=None) -> InputBlockParams:
    if d_model % heads != 0:
        raise ConfigError(f"d_model {d_model} not divisible by heads {heads}")
    if dictionary.ndim != 2 or dictionary.shape[1] != d_model:
        raise ConfigError(f"dictionary must be P x d_model, got {dictionary.shape}")

    def lin(rows, cols, scale):
        return Tensor(rng.standard_normal((rows, cols)) * scale, requires_grad=True, dtype=dtype)

    s = 1.0 / np.sqrt(d_model)
    return InputBlockParams(
        embed_w=Tensor(rng.standard_normal((lookback, d_model)) / np.sqrt(lookback),
                       requires_grad=True, dtype=dtype),
        self_attn=AttentionParams(lin(d_model, d_model, s), lin(d_model, d_model, s),
                                  lin(d_model, d_model, s)),
        cross_attn=AttentionParams(lin(d_model, d_model, s), lin(d_model, d_model, s),
                                   lin(d_model, d_model, s)),
        dictionary=Tensor(dictionary, requires_grad=False, dtype=dtype),
        heads=heads,
    )


def embed(x: Tensor, params: InputBlockParams) -> Tensor:
    """Map a (..., L, C) window to channel tokens (..., C, d_model)."""
    if x.data.shape[-2] != params.lookback:
        raise ConfigError(
            f"window length {x.data.shape[-2]} does not match embedding input size {params.lookback}")
    return matmul(x.swapaxes(-1, -2), params.embed_w)


def mha(q: Tensor, k: Tensor, v: Tensor, heads: int, causal: bool = False) -> Tensor:
    """Scaled dot-product attention with `heads` parallel heads.

    Scale is 1/sqrt(d_model) regardless of head count. Returns the
    concatenated head outputs (no output projection here).
    """
    d_model = q.data.shape[-1]
    if k.data.shape[-1] != d_model or v.data.shape[-1] != d_model:
        raise ShapeError(f"q/k/v widths disagree: {q.data.shape} {k.data.shape} {v.data.shape}")
    if k.data.shape[-2] != v.data.shape[-2]:
        raise ShapeError(f"k and v token counts disagree: {k.data.shape} vs {v.data.shape}")
    if d_model % heads != 0:
        raise ConfigError(f"d_model {d_model} not divisible by heads {heads}")
    dh = d_model // heads
    scale = 1.0 / np.sqrt(d_model)
    mask = None
    if causal:
        n, m = q.data.shape[-2], k.data.shape[-2]
        mask_arr = np.triu(np.full((n, m), -1e30, dtype=q.data.dtype), k=1)
        mask = Tensor(mask_arr, dtype=q.data.dtype)
    outs = []
    for h in range(heads):
        sl = slice(h * dh, (h + 1) * dh)
        qh, kh, vh = q[..., sl], k[..., sl], v[..., sl]
        scores = matmul(qh, kh.swapaxes(-1, -2)) * scale
        if mask is not None:
            scores = scores + mask
        attn = softmax(scores, axis=-1)
        outs.append(matmul(attn, vh))
    return concat(outs, axis=-1) if heads > 1 else outs[0]


def mha_weights(q: np.ndarray, k: np.ndarray, heads: int) -> np.ndarray:
    """Attention weight matrices per head (no grad), shape (..., heads, n, m)."""
    d_model = q.shape[-1]
    dh = d_model // heads
    scale = 1.0 / np.sqrt(d_model)
    ws = []
    for h in range(heads):
        sl = slice(h * dh, (h + 1) * dh)
        scores = np.matmul(q[..., sl], k[..., sl].swapaxes(-1, -2)) * scale
        m = scores.max(axis=-1, keepdims=True)
        e = np.exp(scores - m)
        ws.append(e / e.sum(axis=-1, keepdims=True))
    return np.stack(ws, axis=-3)


def self_attend(e0: Tensor, params: InputBlockParams) -> Tensor:
    """Channel-mixing self-attention over the embedded tokens."""
    return mha(matmul(e0, params.self_attn.w_q),
               matmul(e0, params.self_attn.w_k),
               matmul(e0, params.self_attn.w_v),
               params.heads)


def cross_attend(e1: Tensor, params: InputBlockParams) -> Tensor:
    """Project tokens into the text embedding space via the dictionary."""
    if params.dictionary.data.shape[0] < 1:
        raise ConfigError("dictionary is empty")
    return mha(matmul(e1, params.cross_attn.w_q),
               matmul(params.dictionary, params.cross_attn.w_k),
               matmul(params.dictionary, params.cross_attn.w_v),
               params.heads)


def encode(x: Tensor, params: InputBlockParams) -> tuple[Tensor, Tensor]:
    """Full input block: window -> (teacher_input, student_input)."""
    e0 = embed(x, params)
    e1 = self_attend(e0, params)
    z1 = cross_attend(e1, params)
    return e1, z1


def build_dictionary(source, size: int, d_model: int,
                     rng: np.random.Generator | None = None) -> np.ndarray:
    """Construct the compact dictionary (size x d_model).

    source "synthetic": `size` random rows, orthonormalized (requires
    size <= d_model). Otherwise `source` is an embedding matrix
    (|A| x d_model ndarray or a file path in the embedding format) and the
    rows are its top-`size` principal directions.
    """
    if isinstance(source, str) and source == "synthetic":
        if rng is None:
            raise ConfigError("synthetic dictionary needs an rng")
        if size > d_model:
            raise ConfigError(f"synthetic dictionary size {size} exceeds d_model {d_model}")
        g = rng.standard_normal((d_model, size))
        q, _ = np.linalg.qr(g)
        return np.ascontiguousarray(q[:, :size].T)

    if isinstance(source, str):
        source = read_embedding_file(source)
    emb = np.asarray(source, dtype=np.float64)
    if emb.ndim != 2 or emb.shape[1] != d_model:
        raise ConfigError(f"embedding matrix must be |A| x {d_model}, got {emb.shape}")
    if size > min(emb.shape):
        raise ConfigError(
            f"dictionary size {size} exceeds min(|A|, d_model) = {min(emb.shape)}")
    centered = emb - emb.mean(axis=0, keepdims=True)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    rows = vt[:size]
    # deterministic sign: largest-magnitude component of each direction positive
    for i in range(rows.shape[0]):
        j = int(np.argmax(np.abs(rows[i])))
        if rows[i, j] < 0:
            rows[i] = -rows[i]
    return np.ascontiguousarray(rows)


def write_embedding_file(path: str, matrix: np.ndarray) -> None:
    """Binary embedding matrix: magic, u32 rows, u32 cols, float32 row-major LE."""
    m = np.ascontiguousarray(matrix, dtype="<f4")
    if m.ndim != 2:
        raise DataError(f"embedding matrix must be 2-d, got shape {m.shape}")
    with open(path, "wb") as f:
        f.write(EMBED_MAGIC)
        f.write(struct.pack("<II", m.shape[0], m.shape[1]))
        f.write(m.tobytes())


def read_embedding_file(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.read(len(EMBED_MAGIC))
        if magic != EMBED_MAGIC:
            raise DataError(f"{path}: not an embedding file (bad magic {magic!r})")
        rows, cols = struct.unpack("<II", f.read(8))
        data = np.frombuffer(f.read(rows * cols * 4), dtype="<f4")
        if data.size != rows * cols:
            raise DataError(f"{path}: truncated embedding file")
    return data.reshape(rows, cols).astype(np.float64)
