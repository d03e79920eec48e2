"""Representation-similarity instrumentation: linear CKA over attention
matrices across layers and training epochs, layer-group aggregation, and
plot-ready CSV emission."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

GROUP_SIZE = 3  # consecutive attention layers per aggregated group


def cka(x: np.ndarray, y: np.ndarray) -> float:
    """Linear centered kernel alignment between n x p and n x q matrices.

    ||Yc^T Xc||_F^2 / (||Xc^T Xc||_F * ||Yc^T Yc||_F) after column
    centering. Degenerate (zero-variance) inputs score 0 with a warning.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.ndim != 2 or y.ndim != 2:
        raise ConfigError(f"cka needs 2-d matrices, got {x.shape} and {y.shape}")
    if x.shape[0] != y.shape[0] or x.shape[0] < 2:
        raise ConfigError(f"cka needs matching row counts >= 2, got {x.shape} and {y.shape}")
    xc = x - x.mean(axis=0, keepdims=True)
    yc = y - y.mean(axis=0, keepdims=True)
    xx = np.linalg.norm(xc.T @ xc)
    yy = np.linalg.norm(yc.T @ yc)
    if xx == 0.0 or yy == 0.0:
        warnings.warn("cka: zero-variance input, similarity defined as 0")
        return 0.0
    return float(np.linalg.norm(yc.T @ xc) ** 2 / (xx * yy))


@dataclass
class AttentionTrace:
    """Attention weights per (epoch, layer, head): each entry is an
    (heads, tokens, tokens) array, batch-averaged upstream."""

    entries: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)

    @property
    def epochs(self) -> list[int]:
        return sorted({e for e, _ in self.entries})

    @property
    def layers(self) -> list[int]:
        return sorted({l for _, l in self.entries})

    def add_snapshot(self, epoch: int, snapshot: np.ndarray) -> None:
        """Record a (layers, heads, tokens, tokens) stack for one epoch."""
        for layer in range(snapshot.shape[0]):
            arr = snapshot[layer]
            rows = arr.sum(axis=-1)
            if not np.allclose(rows, 1.0, atol=1e-6):
                raise DataError(f"attention rows at epoch {epoch}, layer {layer} "
                                f"do not sum to 1 (max dev {np.abs(rows - 1).max():.2e})")
            self.entries[(epoch, layer)] = arr

    def head_averaged(self, epoch: int, layer: int) -> np.ndarray:
        return self.entries[(epoch, layer)].mean(axis=0)


def trace_from_snapshots(snapshots: dict[int, np.ndarray]) -> AttentionTrace:
    """Build a trace out of epoch -> (layers, heads, C, C) snapshots, as
    collected by the training loop."""
    trace = AttentionTrace()
    for epoch in sorted(snapshots):
        trace.add_snapshot(epoch, snapshots[epoch])
    return trace


def trace_attention(model, x: np.ndarray, epoch: int = 0) -> AttentionTrace:
    """Single-epoch trace from any model exposing attention_snapshot."""
    trace = AttentionTrace()
    trace.add_snapshot(epoch, model.attention_snapshot(x))
    return trace


def cka_vs_reference(trace: AttentionTrace, reference_epoch: int | None = None) -> np.ndarray:
    """Grid[layer, epoch] of CKA between each epoch's attention and the
    reference epoch's (default: the last recorded epoch); head-averaged
    matrices are compared directly."""
    epochs = trace.epochs
    layers = trace.layers
    if not epochs:
        raise DataError("empty attention trace")
    ref = epochs[-1] if reference_epoch is None else reference_epoch
    grid = np.zeros((len(layers), len(epochs)))
    for li, layer in enumerate(layers):
        ref_mat = trace.head_averaged(ref, layer)
        for ei, epoch in enumerate(epochs):
            grid[li, ei] = cka(trace.head_averaged(epoch, layer), ref_mat)
    return grid


def group_attention_means(trace: AttentionTrace, group_size: int = GROUP_SIZE) -> np.ndarray:
    """Grid[group, epoch] of mean attention weight, aggregating
    `group_size` consecutive layers per group."""
    epochs = trace.epochs
    layers = trace.layers
    if not epochs:
        raise DataError("empty attention trace")
    n_groups = max(1, len(layers) // group_size)
    grid = np.zeros((n_groups, len(epochs)))
    for gi in range(n_groups):
        members = layers[gi * group_size:(gi + 1) * group_size]
        for ei, epoch in enumerate(epochs):
            grid[gi, ei] = np.mean([trace.head_averaged(epoch, l).mean() for l in members])
    return grid


def layer_group_count(n_layers: int, group_size: int = GROUP_SIZE) -> int:
    return max(1, n_layers // group_size)


def emit_heatmap_data(grid: np.ndarray, path, row_label: str = "layer",
                      col_label: str = "epoch", col_ids: list | None = None) -> None:
    """CSV with one row per layer/group and one column per epoch."""
    grid = np.asarray(grid)
    if grid.size == 0:
        raise DataError("refusing to emit an empty grid")
    if grid.ndim != 2:
        raise ConfigError(f"heatmap grid must be 2-d, got shape {grid.shape}")
    cols = col_ids if col_ids is not None else list(range(grid.shape[1]))
    with open(path, "w") as f:
        f.write(row_label + "," + ",".join(f"{col_label}_{c}" for c in cols) + "\n")
        for i, row in enumerate(grid):
            f.write(str(i) + "," + ",".join(f"{v:.12g}" for v in row) + "\n")


def read_heatmap_data(path) -> np.ndarray:
    rows = []
    with open(path) as f:
        next(f)
        for line in f:
            cells = line.strip().split(",")
            rows.append([float(c) for c in cells[1:]])
    return np.asarray(rows)
