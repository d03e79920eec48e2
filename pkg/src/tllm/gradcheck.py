"""Finite-difference verification of taped gradients.

Central differences are unusable at float32 resolution, so the checker
refuses anything but float64 parameters.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .tensor import Tensor

# Denominator floor for the relative error. Central differences of an O(1)
# loss carry ~1e-10 of roundoff, so gradients below the floor are held to an
# absolute bound of floor * tol (1e-8 at the default tol) instead.
REL_ERR_FLOOR = 1e-4


@dataclass
class GradCheckEntry:
    name: str
    max_rel_err: float
    max_abs_err: float
    ok: bool


@dataclass
class GradCheckReport:
    entries: list[GradCheckEntry]
    tol: float

    @property
    def ok(self) -> bool:
        return all(e.ok for e in self.entries)

    @property
    def worst(self) -> float:
        return max((e.max_rel_err for e in self.entries), default=0.0)

    def failures(self) -> list[GradCheckEntry]:
        return [e for e in self.entries if not e.ok]

    def __str__(self) -> str:
        lines = [f"grad check (tol {self.tol:g}):"]
        for e in self.entries:
            flag = "ok " if e.ok else "FAIL"
            lines.append(f"  {flag} {e.name}: rel {e.max_rel_err:.3e} abs {e.max_abs_err:.3e}")
        return "\n".join(lines)


def grad_check(f, params, eps: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare taped gradients of scalar f() against central differences.

    Args:
        f: zero-argument callable rebuilding the graph and returning a scalar Tensor.
        params: iterable of (name, Tensor) leaves; frozen ones are skipped.
        eps: finite-difference step.
        tol: per-parameter max relative error bound.
    """
    params = [(n, p) for n, p in params]
    checked = [(n, p) for n, p in params if p.requires_grad]
    for n, p in checked:
        if p.data.dtype != np.float64:
            raise ConfigError(f"grad_check requires float64 parameters, {n!r} is {p.data.dtype}")

    for _, p in params:
        p.grad = None
    out = f()
    if not isinstance(out, Tensor) or out.data.size != 1:
        raise ConfigError("grad_check target must return a scalar Tensor")
    out.backward()
    analytic = {n: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for n, p in checked}

    entries = []
    for n, p in checked:
        flat = p.data.reshape(-1)
        numeric = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(f().data)
            flat[i] = orig - eps
            f_minus = float(f().data)
            flat[i] = orig
            numeric[i] = (f_plus - f_minus) / (2.0 * eps)
        a = analytic[n].reshape(-1)
        abs_err = np.abs(a - numeric)
        scale = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), REL_ERR_FLOOR)
        rel = abs_err / scale
        entries.append(GradCheckEntry(n, float(rel.max(initial=0.0)),
                                      float(abs_err.max(initial=0.0)),
                                      bool(rel.max(initial=0.0) <= tol)))
    return GradCheckReport(entries, tol)
