"""Declarative run configuration: JSON (comments allowed) -> RunConfig.

A run is reproducible from the config plus its seed alone; the snapshot
written at run start has every default materialized.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .data import SeriesDataset, fewshot_take, load_csv, make_splits, synthesize
from .distill import TASKS, LossWeights, TrainConfig
from .errors import ConfigError
from .metrics import PROTOCOLS
from .model import ModelSpec

DEFAULT_SCHEDULE = [[96, 64], [192, 96], [336, 96], [720, 128]]


@dataclass
class RunConfig:
    # data
    dataset: str = "synthetic"          # CSV path, or "synthetic"
    dataset_name: str | None = None
    synth_kind: str = "sine_trend"
    synth_length: int = 1600
    synth_channels: int = 2
    synth_amplitude: float = 1.0
    synth_period: float = 24.0
    synth_slope: float = 0.0
    synth_noise: float = 0.1
    split_ratios: list | None = None
    split_sizes: list | None = None
    lookback: int = 96
    horizon: int = 96
    stride: int = 1
    protocol: str = "long_term"
    fewshot_fraction: float = 0.10
    fewshot_tail: bool = False
    seasonal_period: int = 1
    eval_original_units: bool = True
    # model
    d_model: int = 64
    input_heads: int = 4
    dict_size: int = 16
    dict_source: str = "synthetic"
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
    capacity_schedule: list = field(default_factory=lambda: [list(p) for p in DEFAULT_SCHEDULE])
    guidance_depths: list = field(default_factory=lambda: [2, 3])
    causal_mask: bool = False
    use_positional: bool = False
    # loss
    task: str = "long_term_ett"
    lambda1: float = 1.0
    lambda2: float = 0.01
    lambda3: float = 1.0
    omega: dict = field(default_factory=lambda: {"2": 1.0, "3": 1.0})
    detach_imitation: bool = True
    # optimization
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 3
    warm_init_theta: bool = True
    trace_epochs: list = field(default_factory=list)
    # run
    seed: int = 0
    precision: str = "f32"
    threads: int = 1
    output_dir: str = "runs/out"

    def validate(self) -> None:
        problems = []
        if self.protocol not in PROTOCOLS:
            problems.append(f"protocol {self.protocol!r} not in {PROTOCOLS}")
        if self.task not in TASKS:
            problems.append(f"task {self.task!r} not in {TASKS}")
        if self.precision not in ("f32", "f64"):
            problems.append(f"precision {self.precision!r} not in ('f32', 'f64')")
        if self.lookback < 1 or self.horizon < 1:
            problems.append("lookback and horizon must be positive")
        if self.batch_size < 1:
            problems.append("batch_size must be positive")
        if self.max_epochs < 0:
            problems.append("max_epochs must be >= 0")
        if self.d_model % self.input_heads or self.d_model % self.student_heads:
            problems.append(f"d_model {self.d_model} must be divisible by both head counts")
        if not 0 < self.fewshot_fraction <= 1:
            problems.append(f"fewshot_fraction {self.fewshot_fraction} not in (0, 1]")
        if problems:
            raise ConfigError("invalid configuration:\n  " + "\n  ".join(problems))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def strip_json_comments(text: str) -> str:
    """Remove // line and /* block */ comments outside string literals."""
    out = []
    i = 0
    n = len(text)
    in_str = False
    while i < n:
        ch = text[i]
        if in_str:
            out.append(ch)
            if ch == "\\" and i + 1 < n:
                out.append(text[i + 1])
                i += 2
                continue
            if ch == '"':
                in_str = False
            i += 1
            continue
        if ch == '"':
            in_str = True
            out.append(ch)
            i += 1
            continue
        if ch == "/" and i + 1 < n and text[i + 1] == "/":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch == "/" and i + 1 < n and text[i + 1] == "*":
            i += 2
            while i + 1 < n and not (text[i] == "*" and text[i + 1] == "/"):
                i += 1
            i += 2
            continue
        out.append(ch)
        i += 1
    return "".join(out)


def config_from_dict(raw: dict) -> RunConfig:
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return RunConfig(**raw)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(strip_json_comments(path.read_text()))
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}")
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return config_from_dict(raw)


def save_config_snapshot(cfg: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")


def build_dataset(cfg: RunConfig) -> SeriesDataset:
    """Materialize, split, and (for the few-shot protocol) truncate."""
    if cfg.dataset == "synthetic":
        ds = synthesize(cfg.synth_kind, cfg.seed, cfg.synth_length, cfg.synth_channels,
                        amplitude=cfg.synth_amplitude, period=cfg.synth_period,
                        slope=cfg.synth_slope, noise=cfg.synth_noise,
                        name=cfg.dataset_name or None)
    else:
        ds = load_csv(cfg.dataset, name=cfg.dataset_name)
    ratios = tuple(cfg.split_ratios) if cfg.split_ratios else None
    sizes = tuple(cfg.split_sizes) if cfg.split_sizes else None
    ds = make_splits(ds, ratios=ratios, sizes=sizes)
    if cfg.protocol == "few_shot":
        ds = fewshot_take(ds, cfg.fewshot_fraction, tail=cfg.fewshot_tail)
    return ds


def model_spec(cfg: RunConfig, channels: int) -> ModelSpec:
    return ModelSpec(
        lookback=cfg.lookback, horizon=cfg.horizon, channels=channels,
        d_model=cfg.d_model, input_heads=cfg.input_heads, dict_size=cfg.dict_size,
        dict_source=cfg.dict_source, student_blocks=cfg.student_blocks,
        student_heads=cfg.student_heads, d_ff=cfg.d_ff, lora_rank=cfg.lora_rank,
        lora_alpha=cfg.lora_alpha, teacher_blocks=cfg.teacher_blocks, kernel=cfg.kernel,
        d_pool=cfg.d_pool, d_gate=cfg.d_gate, decoder_hidden=cfg.decoder_hidden,
        capacity_schedule=[list(p) for p in cfg.capacity_schedule],
        guidance_depths=tuple(cfg.guidance_depths), causal_mask=cfg.causal_mask,
        use_positional=cfg.use_positional,
    )


def train_config(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(
        task=cfg.task,
        weights=LossWeights(lambda1=cfg.lambda1, lambda2=cfg.lambda2, lambda3=cfg.lambda3,
                            omega={int(k): float(v) for k, v in cfg.omega.items()}),
        lr=cfg.lr, betas=(cfg.beta1, cfg.beta2), adam_eps=cfg.adam_eps,
        batch_size=cfg.batch_size, max_epochs=cfg.max_epochs, patience=cfg.patience,
        seed=cfg.seed, detach_imitation=cfg.detach_imitation,
        seasonal_period=cfg.seasonal_period, warm_init_theta=cfg.warm_init_theta,
        trace_epochs=tuple(cfg.trace_epochs),
    )
