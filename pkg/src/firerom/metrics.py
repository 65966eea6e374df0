"""Relative error in the time-discrete L2(0, t_f) norm."""

import numpy as np

from .errors import DimensionError, UndefinedErrorMetric


def _trapz(y, x):
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x))) if y.size > 1 else 0.0


def relative_l2_error(ref, approx, times):
    """sqrt(int ||ref - approx||^2 dt) / sqrt(int ||ref||^2 dt), trapezoidal in time.

    ``ref`` and ``approx`` hold one state per column.  A vanishing reference
    norm raises :class:`UndefinedErrorMetric`.
    """
    ref = np.asarray(ref, dtype=float)
    approx = np.asarray(approx, dtype=float)
    times = np.asarray(times, dtype=float)
    if ref.ndim == 1:
        ref, approx = ref[None, :], approx[None, :]
    if ref.shape != approx.shape:
        raise DimensionError(f"reference {ref.shape} and approximation {approx.shape} differ")
    if ref.shape[1] != times.size:
        raise DimensionError(f"{ref.shape[1]} columns but {times.size} time points")
    den = _trapz(np.sum(ref**2, axis=0), times)
    if not den > 0.0:
        raise UndefinedErrorMetric("reference trajectory has zero norm")
    num = _trapz(np.sum((ref - approx) ** 2, axis=0), times)
    return float(np.sqrt(num / den))


def relative_errors(ref, approx, times, n_x):
    """Relative errors of the temperature and supply-mass-fraction blocks of stacked states."""
    return (relative_l2_error(ref[:n_x], approx[:n_x], times),
            relative_l2_error(ref[n_x:], approx[n_x:], times))
