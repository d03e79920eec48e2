"""Forecast metrics (MSE, MAE, SMAPE, MASE, OWA), the Naive2 reference
forecaster, and the evaluation runners for the long-term, short-term,
few-shot, and zero-shot protocols."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, asdict

import numpy as np

from .data import SeriesDataset, ZeroShotBinding, window_arrays, windows
from .errors import ConfigError

SMAPE_EPS = 1e-8
MASE_EPS = 1e-8
PROTOCOLS = ("long_term", "short_term", "few_shot", "zero_shot")


def mse(pred: np.ndarray, truth: np.ndarray) -> float:
    _check_shapes(pred, truth)
    return float(np.mean((np.asarray(pred, float) - np.asarray(truth, float)) ** 2))


def mae(pred: np.ndarray, truth: np.ndarray) -> float:
    _check_shapes(pred, truth)
    return float(np.mean(np.abs(np.asarray(pred, float) - np.asarray(truth, float))))


def smape(pred: np.ndarray, truth: np.ndarray) -> float:
    """200 * mean(|p - y| / (|p| + |y|)); near-zero denominators contribute 0."""
    _check_shapes(pred, truth)
    p = np.asarray(pred, float)
    y = np.asarray(truth, float)
    denom = np.abs(p) + np.abs(y)
    ratio = np.where(denom < SMAPE_EPS, 0.0, np.abs(p - y) / np.where(denom < SMAPE_EPS, 1.0, denom))
    return float(200.0 * ratio.mean())


def mase(pred: np.ndarray, truth: np.ndarray, insample: np.ndarray, m: int) -> float:
    """Forecast MAE scaled by the in-sample seasonal-naive MAE.

    Accepts one sample ((T, C) with (L, C) in-sample) or a batch with a
    leading sample axis; batches average the per-sample values. A constant
    seasonal in-sample makes the scale zero; that sample is flagged
    infinite with a warning rather than raised.
    """
    _check_shapes(pred, truth)
    pred = np.asarray(pred, float)
    truth = np.asarray(truth, float)
    insample = np.asarray(insample, float)
    if pred.ndim == 2:
        pred, truth, insample = pred[None], truth[None], insample[None]
    if insample.shape[-2] <= m:
        raise ConfigError(f"in-sample length {insample.shape[-2]} must exceed period {m}")
    vals = []
    for i in range(pred.shape[0]):
        num = np.mean(np.abs(pred[i] - truth[i]))
        den = np.mean(np.abs(insample[i, m:] - insample[i, :-m]))
        if den < MASE_EPS:
            warnings.warn(f"MASE sample {i}: constant seasonal in-sample, scale ~ 0; "
                          "value flagged infinite")
            vals.append(np.inf)
        else:
            vals.append(num / den)
    return float(np.mean(vals))


def owa(model_smape: float, model_mase: float, naive2_smape: float,
        naive2_mase: float) -> float:
    """Mean of the SMAPE and MASE ratios against the Naive2 reference."""
    if naive2_smape <= 0 or naive2_mase <= 0:
        raise ConfigError("OWA reference metrics must be positive")
    return 0.5 * (model_smape / naive2_smape + model_mase / naive2_mase)


def _check_shapes(pred, truth) -> None:
    if np.shape(pred) != np.shape(truth):
        raise ConfigError(f"metric operands differ in shape: "
                          f"{np.shape(pred)} vs {np.shape(truth)}")


# -- Naive2 ---------------------------------------------------------------


@dataclass
class Naive2Model:
    m: int
    indices: np.ndarray          # multiplicative seasonal indices, geometric mean 1
    seasonal: bool               # seasonality test verdict (and positivity)


def autocorrelation(x: np.ndarray, lag: int) -> float:
    x = np.asarray(x, float)
    xc = x - x.mean()
    denom = float(np.sum(xc * xc))
    if denom == 0.0:
        return 0.0
    return float(np.sum(xc[lag:] * xc[:-lag]) / denom)


def seasonality_test(x: np.ndarray, m: int) -> bool:
    """Lag-m autocorrelation significance at 90% (Bartlett bound)."""
    x = np.asarray(x, float)
    if m <= 1 or len(x) < 3 * m:
        return False
    s = sum(autocorrelation(x, i) ** 2 for i in range(1, m))
    limit = 1.645 * np.sqrt((1.0 + 2.0 * s) / len(x))
    return abs(autocorrelation(x, m)) > limit


def _centered_ma(x: np.ndarray, m: int) -> np.ndarray:
    """Classical-decomposition centered moving average (valid points only)."""
    if m % 2 == 1:
        kernel = np.full(m, 1.0 / m)
        return np.convolve(x, kernel, mode="valid")
    first = np.convolve(x, np.full(m, 1.0 / m), mode="valid")
    return np.convolve(first, np.full(2, 0.5), mode="valid")


def fit_naive2(insample: np.ndarray, m: int) -> Naive2Model:
    """Estimate multiplicative seasonal indices from one series."""
    x = np.asarray(insample, float)
    usable = m > 1 and np.all(x > 0) and seasonality_test(x, m)
    if not usable:
        return Naive2Model(m=m, indices=np.ones(max(m, 1)), seasonal=False)
    cma = _centered_ma(x, m)
    offset = (m - 1) // 2 if m % 2 == 1 else m // 2
    ratios = x[offset:offset + len(cma)] / cma
    positions = (np.arange(offset, offset + len(cma))) % m
    idx = np.ones(m)
    for j in range(m):
        sel = ratios[positions == j]
        if sel.size:
            idx[j] = sel.mean()
    idx = idx / np.exp(np.mean(np.log(idx)))   # multiplicative normalization: GM = 1
    return Naive2Model(m=m, indices=idx, seasonal=True)


def naive2_forecast(insample: np.ndarray, m: int, horizon: int) -> np.ndarray:
    """Deseasonalize, repeat the last value, reseasonalize.

    Falls back to a plain repeat-last forecast when the seasonality test
    fails, m == 1, or the series is not strictly positive.
    """
    x = np.asarray(insample, float)
    model = fit_naive2(x, m)
    n = len(x)
    if not model.seasonal:
        return np.full(horizon, x[-1])
    des = x / model.indices[np.arange(n) % m]
    future = model.indices[(n + np.arange(horizon)) % m]
    return des[-1] * future


def repeat_last_forecast(x: np.ndarray, horizon: int) -> np.ndarray:
    """Naive baseline: the final observed row, repeated over the horizon."""
    x = np.asarray(x, float)
    last = x[..., -1:, :]
    reps = [1] * x.ndim
    reps[-2] = horizon
    return np.tile(last, reps)


# -- evaluation runners ----------------------------------------------------


@dataclass
class MetricReport:
    dataset: str
    protocol: str
    horizon: int
    count: int
    mse: float | None = None
    mae: float | None = None
    smape: float | None = None
    mase: float | None = None
    owa: float | None = None

    def to_json(self) -> str:
        return json.dumps({k: v for k, v in asdict(self).items() if v is not None},
                          indent=2, sort_keys=True)

    def to_text(self) -> str:
        rows = [("dataset", self.dataset), ("protocol", self.protocol),
                ("horizon", str(self.horizon)), ("windows", str(self.count))]
        for k in ("mse", "mae", "smape", "mase", "owa"):
            v = getattr(self, k)
            if v is not None:
                rows.append((k.upper(), f"{v:.6f}"))
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


def _batched_predict(predictor, x: np.ndarray, batch_size: int) -> np.ndarray:
    outs = [predictor.predict(x[lo:lo + batch_size])
            for lo in range(0, len(x), batch_size)]
    return np.concatenate(outs, axis=0)


def evaluate(predictor, dataset, protocol: str, lookback: int, horizon: int,
             seasonal_period: int = 1, denormalize: bool = True,
             batch_size: int = 256, oracle: bool = False) -> MetricReport:
    """Score a predictor over the full test window set.

    `predictor.predict` maps a normalized (B, L, C) batch to a normalized
    (B, T, C) forecast. Long-term style protocols report MSE/MAE (in
    original units by default); short_term reports SMAPE/MASE/OWA against
    Naive2 in original units. `oracle=True` replaces predictions with the
    ground truth (metric-plumbing check).
    """
    if protocol not in PROTOCOLS:
        raise ConfigError(f"unknown protocol {protocol!r}; valid: {', '.join(PROTOCOLS)}")
    if isinstance(dataset, ZeroShotBinding):
        ds = dataset.target
    elif isinstance(dataset, SeriesDataset):
        ds = dataset
    else:
        raise ConfigError(f"evaluate needs a SeriesDataset or ZeroShotBinding, "
                          f"got {type(dataset).__name__}")
    ws = windows(ds, "test", lookback, horizon)
    x_norm, y_norm = window_arrays(ws)
    preds_norm = y_norm if oracle else _batched_predict(predictor, x_norm, batch_size)

    if denormalize:
        preds = ds.denormalize(preds_norm)
        truth = ds.denormalize(y_norm)
    else:
        preds, truth = preds_norm, y_norm

    report = MetricReport(dataset=ds.name, protocol=protocol, horizon=horizon,
                          count=len(ws))
    if protocol == "short_term":
        raw_insample = np.stack([ds.values[w.origin:w.origin + lookback] for w in ws])
        report.smape = smape(preds, truth)
        report.mase = mase(preds, truth, raw_insample, seasonal_period)
        naive = np.stack([
            np.stack([naive2_forecast(raw_insample[i][:, c], seasonal_period, horizon)
                      for c in range(ds.channels)], axis=1)
            for i in range(len(ws))])
        n2_smape = smape(naive, truth)
        n2_mase = mase(naive, truth, raw_insample, seasonal_period)
        report.owa = owa(report.smape, report.mase, n2_smape, n2_mase)
    else:
        report.mse = mse(preds, truth)
        report.mae = mae(preds, truth)
    return report


def average_reports(reports: list[MetricReport]) -> MetricReport:
    """Arithmetic mean over per-horizon reports (Table-style averaging)."""
    if not reports:
        raise ConfigError("no reports to average")
    out = MetricReport(dataset=reports[0].dataset, protocol=reports[0].protocol,
                       horizon=0, count=sum(r.count for r in reports))
    for k in ("mse", "mae", "smape", "mase", "owa"):
        vals = [getattr(r, k) for r in reports]
        if all(v is not None for v in vals):
            setattr(out, k, float(np.mean(vals)))
    return out


def write_horizon_csv(reports: list[MetricReport], path) -> None:
    """Plot-ready per-horizon metric table."""
    with open(path, "w") as f:
        f.write("horizon,count,mse,mae,smape,mase,owa\n")
        for r in reports:
            cells = [str(r.horizon), str(r.count)]
            for k in ("mse", "mae", "smape", "mase", "owa"):
                v = getattr(r, k)
                cells.append("" if v is None else f"{v:.10g}")
            f.write(",".join(cells) + "\n")
