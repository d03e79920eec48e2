"""Dataset ingestion, chronological splitting, sliding windows, and the
few-shot / zero-shot protocol plumbing."""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DataError
from .seeding import spawn_rng

# (train, val, test) row counts for the recognized benchmark layouts
NAMED_SPLITS = {
    "weather": (36456, 5175, 10444),
    "traffic": (11849, 1661, 3413),
    "electricity": (17981, 2537, 5165),
    "ili": (549, 74, 170),
    "ettm1": (34129, 11425, 11425),
    "ettm2": (34129, 11425, 11425),
    "etth1": (8209, 2785, 2785),
    "etth2": (8209, 2785, 2785),
}

DEFAULT_RATIOS = (0.7, 0.1, 0.2)


@dataclass(frozen=True)
class Split:
    start: int
    stop: int

    def __len__(self) -> int:
        return self.stop - self.start


@dataclass
class SeriesDataset:
    name: str
    values: np.ndarray                 # time x channels, float64
    granularity: str = ""
    train: Split | None = None
    val: Split | None = None
    test: Split | None = None
    norm_mean: np.ndarray | None = None
    norm_std: np.ndarray | None = None

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    @property
    def length(self) -> int:
        return self.values.shape[0]

    def split(self, which: str) -> Split:
        s = getattr(self, which, None)
        if s is None:
            raise ConfigError(f"dataset {self.name!r} has no {which!r} split; call make_splits")
        return s

    def normalize(self, rows: np.ndarray) -> np.ndarray:
        return (rows - self.norm_mean) / self.norm_std

    def denormalize(self, rows: np.ndarray) -> np.ndarray:
        return rows * self.norm_std + self.norm_mean


@dataclass(frozen=True)
class SeriesWindow:
    """One training example: `input` (L x C) is followed in source time by
    `target` (T x C); both are z-scored with the train-split statistics."""

    input: np.ndarray
    target: np.ndarray
    origin: int


def load_csv(path, name: str | None = None, granularity: str = "") -> SeriesDataset:
    """Parse a header-first CSV; an optional leading date column is dropped."""
    try:
        f = open(path, newline="")
    except FileNotFoundError:
        raise DataError(f"dataset file not found: {path}")
    with f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file")
        if not header:
            raise DataError(f"{path}: empty header row")
        drop_first = header[0].strip().lower() in ("date", "time", "timestamp", "")
        rows = []
        for r_idx, row in enumerate(reader, start=2):
            if not row:
                continue
            cells = row[1:] if drop_first else row
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                bad = next(i for i, c in enumerate(cells) if not _is_number(c))
                col = bad + (1 if drop_first else 0)
                raise DataError(f"{path}: non-numeric cell at row {r_idx}, column {col + 1}")
    if not rows:
        raise DataError(f"{path}: no data rows (header only)")
    values = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise DataError(f"{path}: missing or non-finite values are not accepted")
    return SeriesDataset(name=name or str(path), values=values, granularity=granularity)


def _is_number(c: str) -> bool:
    try:
        float(c)
        return True
    except ValueError:
        return False


def _train_stats(values: np.ndarray, train: Split) -> tuple[np.ndarray, np.ndarray]:
    seg = values[train.start:train.stop]
    mean = seg.mean(axis=0)
    std = seg.std(axis=0)
    flat = np.where(std <= 0)[0]
    if flat.size:
        raise DataError(f"constant channel(s) {flat.tolist()} in training split "
                        "(zero standard deviation)")
    return mean, std


def make_splits(ds: SeriesDataset, ratios: tuple[float, float, float] | None = None,
                sizes: tuple[int, int, int] | None = None) -> SeriesDataset:
    """Chronological (train, val, test) split; stats come from train only.

    Recognized benchmark names use their published row counts unless
    explicit `sizes` or `ratios` are given.
    """
    if sizes is None and ratios is None and ds.name.lower() in NAMED_SPLITS:
        sizes = NAMED_SPLITS[ds.name.lower()]
    if sizes is not None:
        n_train, n_val, n_test = (int(s) for s in sizes)
    else:
        r = ratios or DEFAULT_RATIOS
        if len(r) != 3 or any(x <= 0 for x in r) or abs(sum(r) - 1.0) > 1e-9:
            raise ConfigError(f"split ratios must be 3 positives summing to 1, got {r}")
        n_train = int(ds.length * r[0])
        n_val = int(ds.length * r[1])
        n_test = ds.length - n_train - n_val
    if n_train <= 0 or n_val <= 0 or n_test <= 0:
        raise ConfigError(f"split sizes must be positive, got {(n_train, n_val, n_test)}")
    if n_train + n_val + n_test > ds.length:
        raise ConfigError(f"split sizes {(n_train, n_val, n_test)} exceed series "
                          f"length {ds.length}")
    train = Split(0, n_train)
    val = Split(n_train, n_train + n_val)
    test = Split(n_train + n_val, n_train + n_val + n_test)
    mean, std = _train_stats(ds.values, train)
    return replace(ds, train=train, val=val, test=test, norm_mean=mean, norm_std=std)


def windows(ds: SeriesDataset, which: str, lookback: int, horizon: int,
            stride: int = 1) -> list[SeriesWindow]:
    """Sliding normalized windows fully inside the named split."""
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    sp = ds.split(which)
    span = lookback + horizon
    if len(sp) < span:
        raise ConfigError(f"{which} split has {len(sp)} rows, needs >= {span}")
    out = []
    for start in range(sp.start, sp.stop - span + 1, stride):
        block = ds.normalize(ds.values[start:start + span])
        out.append(SeriesWindow(input=block[:lookback], target=block[lookback:],
                                origin=start))
    return out


def window_arrays(ws: list[SeriesWindow]) -> tuple[np.ndarray, np.ndarray]:
    """Stack windows into (N, L, C) inputs and (N, T, C) targets."""
    return (np.stack([w.input for w in ws]), np.stack([w.target for w in ws]))


def fewshot_take(ds: SeriesDataset, fraction: float = 0.10, tail: bool = False) -> SeriesDataset:
    """Shrink the training split to floor(fraction * len) rows (earliest by
    default, latest with tail=True); stats are recomputed on what remains."""
    if not 0 < fraction <= 1:
        raise ConfigError(f"few-shot fraction must be in (0, 1], got {fraction}")
    train = ds.split("train")
    keep = int(len(train) * fraction)
    if keep <= 0:
        raise ConfigError(f"few-shot fraction {fraction} leaves no training rows")
    if tail:
        new_train = Split(train.stop - keep, train.stop)
    else:
        new_train = Split(train.start, train.start + keep)
    mean, std = _train_stats(ds.values, new_train)
    return replace(ds, train=new_train, norm_mean=mean, norm_std=std)


@dataclass(frozen=True)
class ZeroShotBinding:
    """Train on `source`, evaluate on `target` test windows (normalized with
    the target's own training statistics); no parameter updates on target."""

    source: SeriesDataset
    target: SeriesDataset


def zeroshot_pair(source: SeriesDataset, target: SeriesDataset) -> ZeroShotBinding:
    if source.channels != target.channels:
        raise ConfigError(f"zero-shot transfer needs equal channel counts: "
                          f"source has {source.channels}, target has {target.channels}")
    source.split("train")
    target.split("test")
    return ZeroShotBinding(source=source, target=target)


SYNTH_KINDS = ("sine_trend", "noise", "step")


def synthesize(kind: str, seed: int, length: int, channels: int,
               amplitude: float = 1.0, period: float = 24.0, slope: float = 0.0,
               noise: float = 0.0, name: str | None = None) -> SeriesDataset:
    """Deterministic synthetic series for desk-scale runs.

    sine_trend: a*sin(2*pi*t/p + phase_c) + b*t + eps, phases staggered per
    channel. noise: pure N(0, noise). step: amplitude square wave of the
    given period plus noise.
    """
    if kind not in SYNTH_KINDS:
        raise ConfigError(f"unknown synthetic kind {kind!r}; valid: {', '.join(SYNTH_KINDS)}")
    rng = spawn_rng(seed, "synth", kind)
    t = np.arange(length, dtype=np.float64)[:, None]
    c = np.arange(channels, dtype=np.float64)[None, :]
    eps = rng.standard_normal((length, channels)) * noise
    if kind == "sine_trend":
        phase = 2.0 * np.pi * c / max(channels, 1)
        vals = amplitude * np.sin(2.0 * np.pi * t / period + phase) + slope * t + eps
    elif kind == "noise":
        vals = eps
    else:
        vals = amplitude * ((t // period) % 2) + eps
    return SeriesDataset(name=name or f"synthetic-{kind}", values=vals,
                         granularity="synthetic")
