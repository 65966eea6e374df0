"""POD via thin SVD and QR-pivoted (Q-DEIM) interpolation points."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, InvalidInputError, SelectionError


@dataclass(frozen=True)
class PodBasis:
    modes: np.ndarray
    singular_values: np.ndarray
    energy_captured: float
    # full spectrum, kept so the basis can be re-truncated without a new SVD
    spectrum: np.ndarray = None

    @property
    def rank(self):
        return self.modes.shape[1]

    def truncate(self, r):
        if r > self.rank:
            raise InvalidInputError(f"cannot truncate a rank-{self.rank} basis to {r} modes")
        spec = self.spectrum if self.spectrum is not None else self.singular_values
        return PodBasis(self.modes[:, :r], self.singular_values[:r],
                        _energy(spec, r), spec)


def _energy(sv, r):
    total = float(np.sum(sv**2))
    if total == 0.0:
        return 0.0
    return float(np.sum(sv[:r] ** 2) / total)


def _fix_signs(u):
    # largest-magnitude entry of every column positive
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs


def pod(snapshots, rank=None, energy=None):
    """Leading left singular vectors of ``snapshots``.

    Give either ``rank`` or an ``energy`` threshold in (0, 1]; with neither,
    all non-trivial modes are returned.  An explicit rank wins over energy.
    """
    X = np.asarray(snapshots, dtype=float)
    if X.ndim != 2 or X.size == 0:
        raise InvalidInputError("snapshot matrix must be a non-empty 2D array")
    n, s = X.shape
    if rank is not None and not 0 <= rank <= min(n, s):
        raise InvalidInputError(f"rank {rank} out of range for a {n}x{s} snapshot matrix")
    u, sv, _ = sla.svd(X, full_matrices=False, lapack_driver="gesdd")
    if rank is None:
        if energy is not None:
            if not 0 < energy <= 1:
                raise InvalidInputError("energy threshold must lie in (0, 1]")
            cum = np.cumsum(sv**2) / max(np.sum(sv**2), np.finfo(float).tiny)
            rank = int(min(np.searchsorted(cum, energy - 1e-15) + 1, sv.size))
        else:
            rank = int(np.sum(sv > sv[0] * max(n, s) * np.finfo(float).eps)) if sv[0] > 0 else 0
    if rank > 0 and sv[rank - 1] == 0.0:
        raise InvalidInputError(f"snapshot matrix has rank below the requested {rank} modes")
    modes = _fix_signs(u[:, :rank])
    return PodBasis(modes, sv[:rank], _energy(sv, rank), sv)


@dataclass(frozen=True)
class PointSelection:
    indices: np.ndarray

    def __len__(self):
        return self.indices.shape[0]


def qdeim_points(U, rtol=1e-12):
    """Rows chosen by QR with column pivoting of ``U.T``."""
    U = np.asarray(U, dtype=float)
    if U.ndim != 2:
        raise DimensionError("basis must be a matrix")
    n, m = U.shape
    if m == 0:
        return PointSelection(np.zeros(0, dtype=np.int64))
    if m > n:
        raise SelectionError(f"cannot select {m} points from {n} rows")
    _, R, piv = sla.qr(U.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag[0] == 0.0 or diag[m - 1] <= rtol * diag[0]:
        raise SelectionError(f"basis is rank deficient (|R_mm|/|R_11| = {diag[m - 1] / max(diag[0], 1e-300):.3g})")
    return PointSelection(np.asarray(piv[:m], dtype=np.int64))


def deim_apply(U, sel, f_at_points):
    """U (S^T U)^{-1} f_at_points."""
    U = np.asarray(U, dtype=float)
    f = np.asarray(f_at_points, dtype=float)
    if f.shape[0] != len(sel) or U.shape[1] != len(sel):
        raise DimensionError("selection, basis and samples disagree in size")
    coeff = sla.solve(U[sel.indices], f)
    return U @ coeff
