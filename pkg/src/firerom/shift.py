"""Discrete shift operators and path-dependent mode matrices.

``shift_apply(op, phi, p)`` approximates ``phi(x - p)``: positive ``p`` moves
a feature towards larger ``x``.  Off-grid values come from a cubic Lagrange
polynomial on the four source nodes around the sample point.
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DimensionError, InvalidInputError
from .fom import Grid1D


class Extrapolation(str, Enum):
    CONSTANT = "constant"
    ZERO = "zero"
    PERIODIC = "periodic"


@dataclass(frozen=True)
class ShiftOperator:
    grid: Grid1D
    extrapolation: Extrapolation = Extrapolation.CONSTANT

    def __post_init__(self):
        object.__setattr__(self, "extrapolation", Extrapolation(self.extrapolation))

    def with_extrapolation(self, extrapolation):
        return ShiftOperator(self.grid, Extrapolation(extrapolation))

    def apply(self, modes, p):
        """Shift a vector or every column of a matrix by ``p`` meters."""
        p = float(p)
        if not math.isfinite(p):
            raise InvalidInputError(f"shift must be finite, got {p}")
        a = np.asarray(modes, dtype=float)
        n = self.grid.n_x
        if a.shape[0] != n:
            raise DimensionError(f"expected {n} rows, got {a.shape[0]}")
        # sample point of node i in index space: i + s, s = b0 + t, t in [0, 1)
        s = -p / self.grid.dx
        b0 = math.floor(s)
        t = s - b0
        if t == 0.0:
            weights = ((0, 1.0),)
        else:
            weights = (
                (-1, -t * (t - 1.0) * (t - 2.0) / 6.0),
                (0, (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0),
                (1, -(t + 1.0) * t * (t - 2.0) / 2.0),
                (2, (t + 1.0) * t * (t - 1.0) / 6.0),
            )
        base = np.arange(n) + b0
        out = np.zeros_like(a)
        mode = self.extrapolation
        for off, w in weights:
            src = base + off
            if mode is Extrapolation.PERIODIC:
                out += w * a[src % n]
            elif mode is Extrapolation.CONSTANT:
                out += w * a[np.clip(src, 0, n - 1)]
            else:
                lo, hi = max(0, -b0 - off), min(n, n - b0 - off)
                if hi > lo:
                    out[lo:hi] += w * a[src[lo:hi]]
        return out


def shift_apply(op, mode, p):
    return op.apply(mode, p)


def shift_derivative_apply(op, mode, p, d1_onesided):
    """d/dp of ``shift_apply(op, mode, p)``, discretised as -T_0(p) D mode.

    ``T_0`` is the shift with zero extrapolation and ``D`` the first
    derivative with one-sided boundary closures.  The minus sign follows
    from d/dp phi(x - p) = -phi'(x - p).
    """
    a = np.asarray(mode, dtype=float)
    zero_op = op.with_extrapolation(Extrapolation.ZERO)
    return -zero_op.apply(d1_onesided @ a, p)


@dataclass(frozen=True)
class TransformedFrame:
    """Modes sharing one shift path: temperature, supply mass fraction and nonlinearity."""

    shift_op: ShiftOperator
    temp_modes: np.ndarray
    smf_modes: np.ndarray
    nonlin_modes: np.ndarray

    def __post_init__(self):
        n = self.shift_op.grid.n_x
        for name in ("temp_modes", "smf_modes", "nonlin_modes"):
            a = getattr(self, name)
            if a.ndim != 2 or a.shape[0] != n:
                raise DimensionError(f"{name} must have {n} rows, got shape {a.shape}")
        if self.temp_modes.shape[1] + self.smf_modes.shape[1] < 1:
            raise InvalidInputError("a frame needs at least one state mode")
        for name in ("temp_modes", "smf_modes", "nonlin_modes"):
            norms = np.linalg.norm(getattr(self, name), axis=0)
            if norms.size and np.max(np.abs(norms - 1.0)) > 1e-8:
                raise InvalidInputError(f"{name} columns must have unit norm")

    @property
    def n_state_modes(self):
        return self.temp_modes.shape[1] + self.smf_modes.shape[1]

    @property
    def n_nonlin_modes(self):
        return self.nonlin_modes.shape[1]


def _stack_blocks(temp_cols, smf_cols):
    n_x = temp_cols.shape[0]
    out = np.zeros((2 * n_x, temp_cols.shape[1] + smf_cols.shape[1]))
    out[:n_x, :temp_cols.shape[1]] = temp_cols
    out[n_x:, temp_cols.shape[1]:] = smf_cols
    return out


def frame_column_counts(frames, pod_modes=None):
    """Per-frame state column counts and the POD tail count."""
    counts = [f.n_state_modes for f in frames]
    tail = 0 if pod_modes is None else pod_modes.shape[1]
    return counts, tail


def assemble_V_W(frames, pod_modes, p, d1_onesided):
    """Shifted state modes ``V(p)`` and their path derivatives ``W(p)``.

    Columns per frame: temperature modes then supply-mass-fraction modes,
    each embedded in the stacked ``[T; S]`` layout; the untransformed POD
    columns ``pod_modes`` (already stacked, ``2 n_x`` rows) come last and
    have zero columns in ``W``.
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if p.shape[0] != len(frames):
        raise DimensionError(f"{len(frames)} frames but {p.shape[0]} path values")
    blocks_v, blocks_w = [], []
    for frame, p_rho in zip(frames, p):
        op = frame.shift_op
        blocks_v.append(_stack_blocks(op.apply(frame.temp_modes, p_rho), op.apply(frame.smf_modes, p_rho)))
        blocks_w.append(_stack_blocks(shift_derivative_apply(op, frame.temp_modes, p_rho, d1_onesided),
                                      shift_derivative_apply(op, frame.smf_modes, p_rho, d1_onesided)))
    if pod_modes is not None and pod_modes.shape[1]:
        n = blocks_v[0].shape[0] if blocks_v else pod_modes.shape[0]
        if pod_modes.shape[0] != n:
            raise DimensionError(f"POD modes have {pod_modes.shape[0]} rows, expected {n}")
        blocks_v.append(pod_modes)
        blocks_w.append(np.zeros_like(pod_modes))
    return np.hstack(blocks_v), np.hstack(blocks_w)


def assemble_U(frames, pod_nonlin, p):
    """Shifted nonlinearity modes ``U(p)`` (``n_x`` rows), POD columns last."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if p.shape[0] != len(frames):
        raise DimensionError(f"{len(frames)} frames but {p.shape[0]} path values")
    blocks = [f.shift_op.apply(f.nonlin_modes, p_rho) for f, p_rho in zip(frames, p)]
    if pod_nonlin is not None and pod_nonlin.shape[1]:
        blocks.append(pod_nonlin)
    return np.hstack(blocks)
