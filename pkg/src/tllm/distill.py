"""Reverse distillation: the four-term objective, head-tail guidance, and
the joint training loop with teacher-convergence early stopping.

The teacher is optimized for accuracy; the student is pulled toward the
teacher's predictions (imitation), receives feature-level guidance at the
configured depths, and stays anchored to the ground truth. The imitation
target is detached by default so it never drags the teacher toward the
student.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NonFiniteError
from .model import GuidanceHeads, JointModel
from .optim import Adam
from .seeding import spawn_rng
from .teacher import warm_init_thresholds
from .tensor import Tensor, clip_min, matmul, no_grad, tabs
from .input_block import encode

SIM_KINDS = ("L1", "smoothL1", "MSE", "SMAPE", "MASE")
SMOOTH_L1_BETA = 1.0
SMAPE_EPS = 1e-8

TASKS = ("long_term_ett", "long_term_other", "short_term_m4")


@dataclass
class LossWeights:
    lambda1: float = 1.0    # imitation
    lambda2: float = 0.01   # guidance
    lambda3: float = 1.0    # student supervision
    omega: dict[int, float] = field(default_factory=lambda: {2: 1.0, 3: 1.0})

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0 or self.lambda3 < 0:
            raise ConfigError("loss weights must be nonnegative")
        if any(w < 0 for w in self.omega.values()):
            raise ConfigError("guidance depth weights must be nonnegative")


@dataclass
class DistillLossReport:
    l_teach: float
    l_imit: float
    l_guide: float
    l_stud: float
    total: float

    def decomposition_error(self, w: LossWeights) -> float:
        recon = self.l_teach + w.lambda1 * self.l_imit + w.lambda2 * self.l_guide \
            + w.lambda3 * self.l_stud
        return abs(self.total - recon)


def loss_schedule_for_task(task: str) -> dict[str, str]:
    """Similarity kinds per loss component for each benchmark family."""
    if task == "long_term_ett":
        return {"teach": "L1", "stud": "L1", "imit": "L1", "guide": "L1"}
    if task == "long_term_other":
        return {"teach": "smoothL1", "stud": "smoothL1", "imit": "smoothL1",
                "guide": "smoothL1"}
    if task == "short_term_m4":
        return {"teach": "SMAPE", "stud": "SMAPE", "imit": "MASE", "guide": "smoothL1"}
    raise ConfigError(f"unknown task {task!r}; valid: {', '.join(TASKS)}")


def sim(a: Tensor, b: Tensor, kind: str, mase_scale=None) -> Tensor:
    """Mean-reduced similarity loss of the named kind.

    MASE needs `mase_scale`: the per-sample in-sample seasonal-naive MAE
    (scalar, or shape (B,) for batched (B, T, C) inputs).
    """
    if a.data.shape != b.data.shape:
        raise ConfigError(f"sim operands differ in shape: {a.data.shape} vs {b.data.shape}")
    diff = a - b
    if kind == "L1":
        return tabs(diff).mean()
    if kind == "MSE":
        return (diff * diff).mean()
    if kind == "smoothL1":
        ad = tabs(diff)
        quad = diff * diff * (0.5 / SMOOTH_L1_BETA)
        lin = ad - 0.5 * SMOOTH_L1_BETA
        inside = Tensor((ad.data < SMOOTH_L1_BETA).astype(a.data.dtype), dtype=a.data.dtype)
        return (quad * inside + lin * (1.0 - inside)).mean()
    if kind == "SMAPE":
        num = tabs(diff)
        denom = tabs(a) + tabs(b)
        live = Tensor((denom.data >= SMAPE_EPS).astype(a.data.dtype), dtype=a.data.dtype)
        return (num * live / clip_min(denom, SMAPE_EPS)).mean() * 200.0
    if kind == "MASE":
        if mase_scale is None:
            raise ConfigError("MASE similarity needs mase_scale (in-sample seasonal MAE)")
        err = tabs(diff)
        if err.ndim >= 3:
            per_sample = err.mean(axis=(-2, -1))
        else:
            per_sample = err.mean()
        scale = Tensor(np.asarray(mase_scale), dtype=a.data.dtype)
        return (per_sample / scale).mean()
    raise ConfigError(f"unknown similarity kind {kind!r}; valid: {', '.join(SIM_KINDS)}")


def guidance_loss(student_feats: dict[int, Tensor], teacher_feats: dict[int, Tensor],
                  heads: GuidanceHeads, omega: dict[int, float], kind: str) -> Tensor:
    """Weighted sum over configured depths of sim between projected features."""
    total = None
    for k in sorted(heads.student_heads):
        if k not in student_feats:
            raise ConfigError(f"student features missing guidance depth {k}")
        if k not in teacher_feats:
            raise ConfigError(f"teacher features missing guidance depth {k}")
        proj_s = matmul(student_feats[k], heads.student_heads[k])
        proj_t = matmul(teacher_feats[k], heads.teacher_heads[k])
        term = sim(proj_s, proj_t, kind) * omega.get(k, 1.0)
        total = term if total is None else total + term
    if total is None:
        raise ConfigError("no guidance depths configured")
    return total


def total_loss(teacher_pred: Tensor, student_pred: Tensor, target: Tensor,
               student_feats: dict[int, Tensor], teacher_feats: dict[int, Tensor],
               heads: GuidanceHeads, weights: LossWeights, kinds: dict[str, str],
               detach_imitation: bool = True, mase_scale=None
               ) -> tuple[Tensor, DistillLossReport]:
    """Assemble the four-component objective.

    Zero-weighted components are still measured for the report but stay off
    the gradient tape, so e.g. lambda1 = lambda2 = 0 reproduces a plain
    supervised run bit for bit.
    """
    l_teach = sim(teacher_pred, target, kinds["teach"], mase_scale)
    imit_ref = teacher_pred.detach() if detach_imitation else teacher_pred
    l_imit = sim(student_pred, imit_ref, kinds["imit"], mase_scale)
    l_guide = guidance_loss(student_feats, teacher_feats, heads, weights.omega,
                            kinds["guide"])
    l_stud = sim(student_pred, target, kinds["stud"], mase_scale)

    total = l_teach
    for lam, term in ((weights.lambda1, l_imit), (weights.lambda2, l_guide),
                      (weights.lambda3, l_stud)):
        if lam != 0.0:
            total = total + term * lam
    report = DistillLossReport(float(l_teach.data), float(l_imit.data),
                               float(l_guide.data), float(l_stud.data), float(total.data))
    return total, report


class EarlyStopper:
    """Stops once the watched loss has failed to improve for `patience`
    consecutive epochs."""

    def __init__(self, patience: int):
        if patience < 1:
            raise ConfigError(f"patience must be >= 1, got {patience}")
        self.patience = patience
        self.best = np.inf
        self.stale = 0

    def update(self, value: float) -> bool:
        if value < self.best:
            self.best = value
            self.stale = 0
            return False
        self.stale += 1
        return self.stale >= self.patience


@dataclass
class TrainConfig:
    task: str = "long_term_ett"
    weights: LossWeights = field(default_factory=LossWeights)
    lr: float = 5e-4
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 3
    seed: int = 0
    detach_imitation: bool = True
    seasonal_period: int = 1
    warm_init_theta: bool = True
    trace_epochs: tuple[int, ...] = ()


@dataclass
class EpochRecord:
    epoch: int
    l_teach: float
    l_imit: float
    l_guide: float
    l_stud: float
    total: float
    val_teacher: float
    val_student: float


@dataclass
class TrainResult:
    history: list[EpochRecord]
    best_epoch: int
    stopped_epoch: int
    attention_traces: dict[int, np.ndarray] = field(default_factory=dict)


def _mase_scale(x: np.ndarray, m: int) -> np.ndarray:
    """Per-sample in-sample seasonal-naive MAE over (B, L, C) inputs."""
    if x.shape[-2] <= m:
        raise ConfigError(f"in-sample length {x.shape[-2]} must exceed seasonal period {m}")
    d = np.abs(x[..., m:, :] - x[..., :-m, :])
    return d.mean(axis=(-2, -1))


def _batch_losses(model: JointModel, xb: np.ndarray, yb: np.ndarray,
                  kinds: dict[str, str], cfg: TrainConfig, weights: LossWeights):
    scale = None
    if "MASE" in kinds.values():
        scale = _mase_scale(xb, cfg.seasonal_period)
    x_t = Tensor(xb, dtype=model._dtype())
    y_t = Tensor(yb, dtype=model._dtype())
    out = model.forward(x_t)
    total, report = total_loss(out.teacher_pred, out.student_pred, y_t,
                               out.student_feats, out.teacher_feats, model.guidance,
                               weights, kinds, detach_imitation=cfg.detach_imitation,
                               mase_scale=scale)
    return total, report


def _validate(model: JointModel, val_x: np.ndarray, val_y: np.ndarray,
              kinds: dict[str, str], cfg: TrainConfig) -> tuple[float, float]:
    t_sum = s_sum = 0.0
    n = 0
    with no_grad():
        for lo in range(0, len(val_x), cfg.batch_size):
            xb = val_x[lo:lo + cfg.batch_size]
            yb = val_y[lo:lo + cfg.batch_size]
            scale = None
            if "MASE" in kinds.values():
                scale = _mase_scale(xb, cfg.seasonal_period)
            x_t = Tensor(xb, dtype=model._dtype())
            y_t = Tensor(yb, dtype=model._dtype())
            e1, z1 = encode(x_t, model.input_block)
            from .teacher import teacher_forward
            from .student import student_forward
            t_pred, _ = teacher_forward(e1, model.teacher)
            s_pred, _, _ = student_forward(z1, model.student)
            t_sum += float(sim(t_pred, y_t, kinds["teach"], scale).data) * len(xb)
            s_sum += float(sim(s_pred, y_t, kinds["stud"], scale).data) * len(xb)
            n += len(xb)
    return t_sum / n, s_sum / n


def train(model: JointModel, train_x: np.ndarray, train_y: np.ndarray,
          val_x: np.ndarray, val_y: np.ndarray, cfg: TrainConfig) -> TrainResult:
    """Jointly optimize all trainable parameters with Adam.

    Stops when the teacher's validation loss has not improved for
    `patience` consecutive epochs; the returned model holds the parameters
    of the epoch with the lowest *student* validation loss seen so far.
    """
    if cfg.max_epochs == 0:
        model.trained = True
        return TrainResult(history=[], best_epoch=0, stopped_epoch=0)

    kinds = loss_schedule_for_task(cfg.task)
    opt = Adam(model.params, lr=cfg.lr, betas=cfg.betas, eps=cfg.adam_eps)
    stopper = EarlyStopper(cfg.patience)
    shuffle_rng = spawn_rng(cfg.seed, "shuffle")

    if cfg.warm_init_theta:
        with no_grad():
            first = Tensor(train_x[:cfg.batch_size], dtype=model._dtype())
            e1, _ = encode(first, model.input_block)
            warm_init_thresholds(model.teacher, e1)

    probe = val_x[:cfg.batch_size] if len(val_x) else train_x[:cfg.batch_size]
    traces: dict[int, np.ndarray] = {}
    if 0 in cfg.trace_epochs:
        traces[0] = model.attention_snapshot(probe)

    history: list[EpochRecord] = []
    best_val_student = np.inf
    best_state = None
    best_epoch = 0
    stopped_epoch = 0

    for epoch in range(1, cfg.max_epochs + 1):
        perm = shuffle_rng.permutation(len(train_x))
        sums = np.zeros(5)
        seen = 0
        for lo in range(0, len(perm), cfg.batch_size):
            idx = perm[lo:lo + cfg.batch_size]
            total, report = _batch_losses(model, train_x[idx], train_y[idx], kinds,
                                          cfg, cfg.weights)
            for label, value in (("l_teach", report.l_teach), ("l_imit", report.l_imit),
                                 ("l_guide", report.l_guide), ("l_stud", report.l_stud),
                                 ("total", report.total)):
                if not np.isfinite(value):
                    raise NonFiniteError(
                        f"{label} is non-finite at epoch {epoch} (batch offset {lo})")
            opt.zero_grad()
            total.backward()
            opt.step()
            sums += np.array([report.l_teach, report.l_imit, report.l_guide,
                              report.l_stud, report.total]) * len(idx)
            seen += len(idx)
        means = sums / seen
        val_teacher, val_student = _validate(model, val_x, val_y, kinds, cfg)
        history.append(EpochRecord(epoch, *means.tolist(), val_teacher, val_student))

        if epoch in cfg.trace_epochs:
            traces[epoch] = model.attention_snapshot(probe)
        if val_student < best_val_student:
            best_val_student = val_student
            best_state = model.params.state()
            best_epoch = epoch
        stopped_epoch = epoch
        if stopper.update(val_teacher):
            break

    if best_state is not None:
        model.params.load_state(best_state)
    model.trained = True
    return TrainResult(history=history, best_epoch=best_epoch,
                       stopped_epoch=stopped_epoch, attention_traces=traces)


HISTORY_FIELDS = ("epoch", "l_teach", "l_imit", "l_guide", "l_stud", "total",
                  "val_teacher", "val_student")


def write_history_csv(history: list[EpochRecord], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(HISTORY_FIELDS)
        for rec in history:
            w.writerow([rec.epoch] + [f"{getattr(rec, k):.10g}" for k in HISTORY_FIELDS[1:]])
