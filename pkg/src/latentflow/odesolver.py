"""Adaptive Dormand-Prince 5(4) integration for latent refinement.

Works on plain float64 ndarrays of any shape; the right-hand side is an
arbitrary callable rhs(z, t) -> dz/dt evaluated in inference mode.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import NumericalError, ValidationError

# Dormand & Prince (1980) 7-stage 5(4) pair, FSAL.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# b5 - b4: weights of the embedded error estimate
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])


@dataclass
class SolverConfig:
    """Adaptive step-control settings; defaults follow the reference setup
    (tolerances 1e-5, max step 0.1 so a unit interval takes >= 10 steps)."""

    abs_tol: float = 1e-5
    rel_tol: float = 1e-5
    max_step: float = 0.1
    initial_step: float | None = None
    safety: float = 0.9
    min_factor: float = 0.2
    max_factor: float = 5.0
    max_rejected: int = 20

    def validate(self) -> "SolverConfig":
        if not 0.0 < self.max_step <= 1.0:
            raise ValidationError(f"solver: max_step must be in (0, 1], got {self.max_step}")
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValidationError("solver: tolerances must be positive")
        if self.initial_step is not None and self.initial_step <= 0:
            raise ValidationError("solver: initial_step must be positive")
        return self


@dataclass
class SolveStats:
    accepted: int = 0
    rejected: int = 0
    rhs_evals: int = 0
    final_error_estimate: float = 0.0
    step_sizes: list = field(default_factory=list)


def dopri5_step(rhs, z: np.ndarray, t: float, h: float, k1: np.ndarray | None = None):
    """One embedded step: returns (z5, error_estimate, k_stages).

    ``k1`` may be the previous step's last stage (FSAL reuse). The error
    estimate is the difference between the 5th- and 4th-order solutions.
    """
    if h <= 0:
        raise ValidationError(f"dopri5_step: step size must be positive, got {h}")
    ks = [k1 if k1 is not None else rhs(z, t)]
    for s in range(1, 7):
        acc = _A[s][0] * ks[0]
        for j in range(1, s):
            acc = acc + _A[s][j] * ks[j]
        ks.append(rhs(z + h * acc, t + _C[s] * h))
    for s, k in enumerate(ks):
        if not np.all(np.isfinite(k)):
            raise NumericalError(f"dopri5_step: non-finite value in stage {s + 1} at t={t:.6g}")
    increment = _B5[0] * ks[0]
    err = _E[0] * ks[0]
    for s in range(1, 7):
        if _B5[s] != 0.0:
            increment = increment + _B5[s] * ks[s]
        if _E[s] != 0.0:
            err = err + _E[s] * ks[s]
    z5 = z + h * increment
    return z5, h * err, ks


def solve(rhs, z0: np.ndarray, t0: float = 0.0, t1: float = 1.0, cfg: SolverConfig | None = None):
    """Integrate dz/dt = rhs(z, t) from t0 to t1 adaptively.

    Error norm: rms of e_i / (abs_tol + rel_tol * max(|z_i|, |z'_i|));
    a step is accepted when the norm is <= 1. The proposed factor
    0.9 * err^(-1/5) is clamped to [0.2, 5.0] and the step to max_step.
    The final step is truncated to land exactly on t1.
    """
    cfg = (cfg or SolverConfig()).validate()
    if t1 <= t0:
        raise ValidationError(f"solve: need t1 > t0, got [{t0}, {t1}]")
    z = np.asarray(z0, dtype=np.float64)
    stats = SolveStats()
    t = t0
    h = min(cfg.initial_step if cfg.initial_step is not None else cfg.max_step, cfg.max_step, t1 - t0)
    k1: np.ndarray | None = None
    rejected_run = 0
    while t < t1:
        if t1 - (t + h) < 1e-12:
            h = t1 - t
        if k1 is None:
            k1 = rhs(z, t)
            stats.rhs_evals += 1
        z_new, err_vec, ks = dopri5_step(rhs, z, t, h, k1=k1)
        stats.rhs_evals += 6
        scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(z), np.abs(z_new))
        err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
        if err <= 1.0:
            t = t1 if t1 - (t + h) < 1e-12 else t + h
            z = z_new
            if not np.all(np.isfinite(z)):
                raise NumericalError(f"solve: NaN in state after accepted step; last accepted t={t:.6g}")
            k1 = ks[6]  # FSAL: last stage is rhs at (t_new, z_new)
            stats.accepted += 1
            stats.step_sizes.append(h)
            stats.final_error_estimate = err
            rejected_run = 0
        else:
            stats.rejected += 1
            rejected_run += 1
            if rejected_run > cfg.max_rejected:
                raise NumericalError(
                    f"solve: {rejected_run} consecutive rejected steps at t={t:.6g} (h={h:.3g}, err={err:.3g})"
                )
        factor = cfg.max_factor if err == 0.0 else cfg.safety * err ** (-0.2)
        factor = min(max(factor, cfg.min_factor), cfg.max_factor)
        h = min(h * factor, cfg.max_step)
    return z, stats
