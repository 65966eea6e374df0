"""Dormand-Prince 5(4) explicit integrator with exact output times."""

import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import (DivergenceError, InvalidInputError, StepBudgetError,
                     StepSizeUnderflowError)

# Butcher tableau
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
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# 5th minus embedded 4th order weights
_E = _B - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0
# PI step control exponents (usual DOPRI5 choice)
_BETA_PI = 0.04
_ALPHA_PI = 0.2 - 0.75 * _BETA_PI


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-3
    atol: float = 1e-6
    h_init: float = 1e-2
    h_max: float = math.inf
    max_steps: int = 10_000_000

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0 and self.h_init > 0):
            raise InvalidInputError("rtol, atol and h_init must be positive")
        if not self.h_max >= self.h_init:
            raise InvalidInputError("h_max must be at least h_init")
        if self.max_steps < 1:
            raise InvalidInputError("max_steps must be positive")


@dataclass
class OdeSolution:
    times: np.ndarray
    states: np.ndarray
    n_accepted: int
    n_rejected: int
    wall_time_s: float
    n_rhs: int = 0


def solve_ivp(rhs, y0, t_span, output_times, cfg=None):
    """Integrate ``y' = rhs(t, y)`` and return the states at ``output_times``.

    Steps are shortened so that every output time is hit exactly.  The error
    of a step is max_i |err_i| / (atol + rtol * max(|y_i|, |y_new_i|)); steps
    with error above one are rejected.
    """
    cfg = cfg or IntegratorConfig()
    t0, tf = float(t_span[0]), float(t_span[1])
    if not tf > t0:
        raise InvalidInputError(f"empty time span [{t0}, {tf}]")
    out_t = np.asarray(output_times, dtype=float)
    if out_t.ndim != 1 or out_t.size == 0:
        raise InvalidInputError("output_times must be a non-empty vector")
    if np.any(np.diff(out_t) <= 0):
        raise InvalidInputError("output_times must be strictly increasing")
    if out_t[0] < t0 or out_t[-1] > tf:
        raise InvalidInputError("output_times must lie inside t_span")

    y = np.array(y0, dtype=float)
    if not np.all(np.isfinite(y)):
        raise DivergenceError("non-finite initial state", t=t0)
    dim = y.shape[0]
    states = np.empty((dim, out_t.size))
    h_min = 1e-14 * (tf - t0)
    K = np.empty((7, dim))
    rtol, atol = cfg.rtol, cfg.atol

    start = time.perf_counter()
    t = t0
    k_out = 0
    while k_out < out_t.size and out_t[k_out] <= t0:
        states[:, k_out] = y
        k_out += 1
    n_acc = n_rej = 0
    err_old = 1e-4
    h = min(cfg.h_init, cfg.h_max)
    K[0] = rhs(t, y)
    n_rhs = 1
    t_end = out_t[-1]

    while k_out < out_t.size:
        if n_acc + n_rej >= cfg.max_steps:
            raise StepBudgetError(f"exceeded {cfg.max_steps} steps at t={t:.6g}", t=t)
        target = out_t[k_out]
        h_free = h
        clamped = t + h >= target - 1e-12 * max(1.0, abs(target))
        if clamped:
            h = target - t
        for i in range(1, 7):
            K[i] = rhs(t + _C[i] * h, y + h * (_A[i] @ K[:i]))
        n_rhs += 6
        y_new = y + h * (_A[6] @ K[:6])  # equals the 5th order solution (FSAL row)
        err_vec = h * (_E @ K)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.max(np.abs(err_vec) / scale))
        if not math.isfinite(err):
            err = math.inf

        if err <= 1.0:
            if not np.all(np.isfinite(y_new)):
                raise DivergenceError(f"non-finite state at t={t + h:.6g}", t=t + h)
            t = target if clamped else t + h
            y = y_new
            K[0] = K[6]
            n_acc += 1
            if clamped:
                states[:, k_out] = y
                k_out += 1
            if err == 0.0:
                fac = MAX_FACTOR
            else:
                fac = min(MAX_FACTOR, max(MIN_FACTOR, SAFETY * err ** -_ALPHA_PI * err_old ** _BETA_PI))
            err_old = max(err, 1e-4)
            h_next = h * fac
            if clamped:
                h_next = h_free
            h = min(h_next, cfg.h_max)
        else:
            n_rej += 1
            fac = MIN_FACTOR if not math.isfinite(err) else max(MIN_FACTOR, SAFETY * err ** -_ALPHA_PI)
            h = h * min(1.0, fac)
            if h < h_min:
                raise StepSizeUnderflowError(f"step size underflow (h={h:.3g}) at t={t:.6g}", t=t)
        if t >= t_end:
            break

    wall = time.perf_counter() - start
    return OdeSolution(out_t.copy(), states, n_acc, n_rej, wall, n_rhs)
