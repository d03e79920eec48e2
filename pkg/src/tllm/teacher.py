"""Temporal-spectral teacher: the lightweight forecaster that supervises
the student during training and is discarded afterwards.

Each block runs two parallel paths over the channel tokens and fuses them:

  trend path     moving-average decomposition + dual linear heads
  spectral path  rFFT -> learnable power-threshold masking with global and
                 local complex modulation -> frequency-axis compression ->
                 attention pooling back to d_model
  fusion         horizon-conditioned sigmoid gate, convex combination

Blocks stack (two by default); a per-channel MLP decoder maps the final
representation to the forecast horizon.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .layers import Mlp, init_mlp, mlp_forward
from .spectral import (ComplexSpectrum, cs_add, cs_magnitude, cs_mul, cs_project,
                       cs_power, cs_scale, half_length, rfft, threshold_mask)
from .tensor import Tensor, concat, matmul, no_grad, sigmoid, softmax

DEFAULT_KERNEL = 25          # DLinear-lineage moving-average window
DEFAULT_CAPACITY = ((96, 64), (192, 96), (336, 96), (720, 128))
STE_TAU = 1.0


@dataclass
class CapacitySchedule:
    """Horizon -> spectral capacity lookup, horizons strictly increasing."""

    pairs: list[tuple[int, int]]

    def __post_init__(self):
        if not self.pairs:
            raise ConfigError("capacity schedule must be nonempty")
        self.pairs = [(int(t), int(d)) for t, d in self.pairs]
        horizons = [t for t, _ in self.pairs]
        if any(b <= a for a, b in zip(horizons, horizons[1:])):
            raise ConfigError(f"schedule horizons must be strictly increasing: {horizons}")
        if any(d <= 0 for _, d in self.pairs):
            raise ConfigError("schedule capacities must be positive")

    @property
    def max_horizon(self) -> int:
        return self.pairs[-1][0]


def select_capacity(horizon: int, schedule: CapacitySchedule) -> int:
    """Capacity of the nearest schedule horizon; ties go to the smaller one."""
    best_dist, best_cap = None, None
    for t_i, d_i in schedule.pairs:
        dist = abs(horizon - t_i)
        if best_dist is None or dist < best_dist:
            best_dist, best_cap = dist, d_i
    return best_cap


@dataclass
class AsbParams:
    """Adaptive spectral filtering: threshold plus complex modulators."""

    theta: Tensor        # scalar learnable power threshold
    gamma_g_re: Tensor   # global modulation, C x d_fft
    gamma_g_im: Tensor
    gamma_l_re: Tensor   # local (masked) modulation, C x d_fft
    gamma_l_im: Tensor

    @property
    def gamma_g(self) -> ComplexSpectrum:
        return ComplexSpectrum(self.gamma_g_re, self.gamma_g_im)

    @property
    def gamma_l(self) -> ComplexSpectrum:
        return ComplexSpectrum(self.gamma_l_re, self.gamma_l_im)


@dataclass
class PoolParams:
    lift: Tensor      # 1 x d_model, shared across frequency bins
    score_mlp: Mlp    # d_model -> d_pool -> 1


@dataclass
class TempSpecBlockParams:
    w_trend: Tensor
    w_season: Tensor
    asb: AsbParams
    w_spec: Tensor    # d_fft x d_red
    pool: PoolParams
    gate_mlp: Mlp     # (d_model + 1) -> d_gate -> C


@dataclass
class TeacherState:
    blocks: list[TempSpecBlockParams]
    decoder: Mlp                     # d_model -> hidden -> T, shared across channels
    kernel: int
    horizon: int
    d_red: int
    horizon_norm: float              # horizon / max schedule horizon
    schedule: CapacitySchedule = field(default_factory=lambda: CapacitySchedule(list(DEFAULT_CAPACITY)))


def init_teacher(rng: np.random.Generator, d_model: int, channels: int, horizon: int,
                 blocks: int = 2, kernel: int = DEFAULT_KERNEL, d_pool: int = 64,
                 d_gate: int = 64, decoder_hidden: int | None = None,
                 schedule: CapacitySchedule | None = None, dtype=None) -> TeacherState:
    schedule = schedule or CapacitySchedule(list(DEFAULT_CAPACITY))
    d_red = select_capacity(horizon, schedule)
    d_fft = half_length(d_model)
    if d_red > d_fft:
        raise ConfigError(f"selected capacity {d_red} exceeds spectrum length {d_fft}")
    if kernel % 2 == 0 or kernel < 1 or kernel > d_model:
        raise ConfigError(f"decomposition kernel must be odd and in [1, {d_model}], got {kernel}")

    def blk() -> TempSpecBlockParams:
        s = 1.0 / np.sqrt(d_model)
        return TempSpecBlockParams(
            w_trend=Tensor(rng.standard_normal((d_model, d_model)) * s, requires_grad=True, dtype=dtype),
            w_season=Tensor(rng.standard_normal((d_model, d_model)) * s, requires_grad=True, dtype=dtype),
            asb=AsbParams(
                theta=Tensor(0.0, requires_grad=True, dtype=dtype),
                gamma_g_re=Tensor(np.ones((channels, d_fft)), requires_grad=True, dtype=dtype),
                gamma_g_im=Tensor(np.zeros((channels, d_fft)), requires_grad=True, dtype=dtype),
                gamma_l_re=Tensor(np.zeros((channels, d_fft)), requires_grad=True, dtype=dtype),
                gamma_l_im=Tensor(np.zeros((channels, d_fft)), requires_grad=True, dtype=dtype),
            ),
            w_spec=Tensor(rng.standard_normal((d_fft, d_red)) / np.sqrt(d_fft),
                          requires_grad=True, dtype=dtype),
            pool=PoolParams(
                lift=Tensor(rng.standard_normal((1, d_model)) * s, requires_grad=True, dtype=dtype),
                score_mlp=init_mlp(rng, d_model, d_pool, 1, dtype=dtype),
            ),
            gate_mlp=init_mlp(rng, d_model + 1, d_gate, channels, dtype=dtype),
        )

    return TeacherState(
        blocks=[blk() for _ in range(blocks)],
        decoder=init_mlp(rng, d_model, decoder_hidden or d_model, horizon, dtype=dtype),
        kernel=kernel,
        horizon=horizon,
        d_red=d_red,
        horizon_norm=horizon / schedule.max_horizon,
        schedule=schedule,
    )


def decompose(e: Tensor, kernel: int) -> tuple[Tensor, Tensor]:
    """Centered moving average along the feature axis (edges replicated)
    and the exact residual; trend + season reproduces the input."""
    d = e.data.shape[-1]
    if kernel % 2 == 0:
        raise ConfigError(f"decomposition kernel must be odd, got {kernel}")
    if kernel < 1 or kernel > d:
        raise ConfigError(f"decomposition kernel must be in [1, {d}], got {kernel}")
    if kernel == 1:
        return e, e - e
    r = kernel // 2
    pads = [e[..., :1]] * r + [e] + [e[..., -1:]] * r
    padded = concat(pads, axis=-1)
    acc = padded[..., 0:d]
    for off in range(1, kernel):
        acc = acc + padded[..., off:off + d]
    trend = acc * (1.0 / kernel)
    return trend, e - trend


def trend_head(trend: Tensor, season: Tensor, w_trend: Tensor, w_season: Tensor) -> Tensor:
    return matmul(trend, w_trend) + matmul(season, w_season)


def adaptive_spectral(e: Tensor, asb: AsbParams, tau: float = STE_TAU) -> ComplexSpectrum:
    """rFFT the tokens, mask coefficients whose power clears the learnable
    threshold, and mix global and masked-local modulated copies."""
    f = rfft(e, axis=-1)
    power = cs_power(f)
    mask = threshold_mask(power, asb.theta, tau=tau)
    f_global = cs_mul(asb.gamma_g, f)
    f_local = cs_mul(asb.gamma_l, cs_scale(f, mask))
    return cs_add(f_global, f_local)


def dsp(f_spec: ComplexSpectrum, w_spec: Tensor) -> ComplexSpectrum:
    """Compress the frequency axis with a learnable real projection."""
    d_fft = f_spec.re.data.shape[-1]
    if w_spec.data.shape[0] != d_fft:
        raise ConfigError(f"projection rows {w_spec.data.shape[0]} != spectrum length {d_fft}")
    if w_spec.data.shape[1] > d_fft:
        raise ConfigError(
            f"reduced dimension {w_spec.data.shape[1]} exceeds spectrum length {d_fft}")
    return cs_project(f_spec, w_spec)


def attention_pool(f_red: ComplexSpectrum, pool: PoolParams) -> Tensor:
    """Lift each frequency bin's magnitude to d_model, score with a small
    MLP, softmax over bins, and sum."""
    mag = cs_magnitude(f_red)                      # (..., C, d_red)
    lifted = mag.reshape(mag.shape + (1,)) * pool.lift   # (..., C, d_red, d_model)
    scores = mlp_forward(lifted, pool.score_mlp)   # (..., C, d_red, 1)
    alpha = softmax(scores, axis=-2)
    return (alpha * lifted).sum(axis=-2)           # (..., C, d_model)


def fusion_gate(h_tilde: Tensor, f_tilde: Tensor, horizon_norm: float, gate_mlp: Mlp) -> Tensor:
    """Convex per-channel mix of trend and spectral representations,
    conditioned on the token-pooled trend summary and the normalized horizon."""
    pooled = h_tilde.mean(axis=-2, keepdims=True)  # (..., 1, d_model)
    t_col = Tensor(np.full(pooled.data.shape[:-1] + (1,), horizon_norm),
                   dtype=pooled.data.dtype)
    gate_in = concat([pooled, t_col], axis=-1)     # (..., 1, d_model + 1)
    g = sigmoid(mlp_forward(gate_in, gate_mlp))    # (..., 1, C)
    g = g.swapaxes(-1, -2)                         # (..., C, 1)
    return g * f_tilde + (1.0 - g) * h_tilde


def temp_spec_block(e: Tensor, block: TempSpecBlockParams, state: TeacherState) -> Tensor:
    trend, season = decompose(e, state.kernel)
    h_tilde = trend_head(trend, season, block.w_trend, block.w_season)
    f_spec = adaptive_spectral(e, block.asb)
    f_red = dsp(f_spec, block.w_spec)
    f_tilde = attention_pool(f_red, block.pool)
    return fusion_gate(h_tilde, f_tilde, state.horizon_norm, block.gate_mlp)


def teacher_forward(e1: Tensor, state: TeacherState) -> tuple[Tensor, dict[int, Tensor]]:
    """Run the stacked blocks and decode.

    Returns the forecast (..., T, C) and the per-depth block outputs
    (depth k holds the representation entering guidance at that depth:
    block n's output is depth n + 1).
    """
    e = e1
    feats: dict[int, Tensor] = {}
    for n, block in enumerate(state.blocks):
        e = temp_spec_block(e, block, state)
        feats[n + 2] = e
    pred = mlp_forward(e, state.decoder, hidden_act="gelu")  # (..., C, T)
    return pred.swapaxes(-1, -2), feats


def warm_init_thresholds(state: TeacherState, e1_batch: Tensor) -> None:
    """Set each block's threshold to the median power of its own input
    spectrum on the given batch (run once before training)."""
    with no_grad():
        e = e1_batch
        for block in state.blocks:
            power = cs_power(rfft(e, axis=-1))
            block.asb.theta.data = np.asarray(np.median(power.data),
                                              dtype=block.asb.theta.data.dtype)
            e = temp_spec_block(e, block, state)
