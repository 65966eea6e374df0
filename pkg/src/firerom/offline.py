"""Offline stage for the shifted-mode ROM.

Frames are ordered (right-going, left-going).  Paths are relative shifts in
meters: the right-going frame carries non-negative values, the left-going
one non-positive values.  The right-going frame owns the upper half of the
domain (rows ``n_x/2 .. n_x-1``), the left-going one the lower half.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla

from .decomp import PodBasis, pod, qdeim_points
from .errors import (DimensionError, InvalidInputError, OfflineError,
                     SelectionError, TrackingError)
from .shift import TransformedFrame, assemble_U, assemble_V_W

log = logging.getLogger(__name__)

FRAME_SIDES = ("right", "left")


@dataclass(frozen=True)
class PathTrajectory:
    times: np.ndarray
    raw_paths: np.ndarray
    smooth_paths: np.ndarray
    # absolute front positions (meters) where the paths are zero
    origin: np.ndarray

    @property
    def n_frames(self):
        return self.raw_paths.shape[0]


def front_positions(temp, d1, dx, min_slope=1e-8):
    """Positions (right-going front, left-going front) from the steepest slopes of ``temp``."""
    g = d1 @ np.asarray(temp, dtype=float)
    if np.max(np.abs(g)) < min_slope:
        raise TrackingError("temperature profile is flat; no fronts to track")
    return np.array([np.argmin(g) * dx, np.argmax(g) * dx])


def track_fronts(temp_snapshots, d1, dx, times=None, origin=None):
    """Raw front paths from temperature snapshots (``n_x x s``).

    The steepest descent marks the right-going front and the steepest ascent
    the left-going one.  Paths are measured relative to ``origin`` (absolute
    positions), by default the positions in the first column.
    """
    X = np.asarray(temp_snapshots, dtype=float)
    if X.ndim != 2:
        raise DimensionError("temperature snapshots must be a matrix")
    G = d1 @ X
    flat = np.max(np.abs(G), axis=0) < 1e-8
    if np.any(flat):
        raise TrackingError(f"flat temperature in snapshot column {int(np.argmax(flat))}")
    pos = np.vstack([np.argmin(G, axis=0), np.argmax(G, axis=0)]).astype(float) * dx
    if origin is None:
        origin = pos[:, 0].copy()
    raw = pos - np.asarray(origin, dtype=float)[:, None]
    if times is None:
        times = np.arange(X.shape[1], dtype=float)
    times = np.asarray(times, dtype=float)
    return PathTrajectory(times, raw, raw.copy(), np.asarray(origin, dtype=float))


def smooth_paths(paths, mode="full_linear", fraction=0.985):
    """Replace (part of) the step-like raw paths by a linear interpolant.

    ``full_linear`` uses the line through the first and last samples.
    ``tail_linear`` keeps the raw values before ``t0 + (1 - fraction) (tf - t0)``
    and interpolates linearly from the last kept sample to the final one.
    """
    raw, t = paths.raw_paths, paths.times
    s = t.shape[0]
    if s < 2:
        raise InvalidInputError("need at least two samples to smooth a path")
    if mode == "full_linear":
        keep = 1
    elif mode == "tail_linear":
        if not 0 < fraction <= 1:
            raise InvalidInputError("fraction must lie in (0, 1]")
        t_junction = t[0] + (1.0 - fraction) * (t[-1] - t[0])
        keep = max(1, int(np.searchsorted(t, t_junction, side="left")))
        keep = min(keep, s - 1)
    else:
        raise InvalidInputError(f"unknown smoothing mode {mode!r}")
    sm = raw.copy()
    j = keep - 1
    slope = (raw[:, -1] - raw[:, j]) / (t[-1] - t[j])
    sm[:, j:] = raw[:, j:j + 1] + slope[:, None] * (t[j:] - t[j])[None, :]
    return replace(paths, smooth_paths=sm)


def frame_masks(n_x):
    """Boolean row masks per frame (right-going: upper half, left-going: lower half)."""
    half = n_x // 2
    right = np.zeros(n_x, dtype=bool)
    right[half:] = True
    return [right, ~right]


def separate_waves(snapshots, paths, shift_op):
    """Masked snapshots of each frame moved into that frame's co-moving coordinates.

    ``snapshots`` is ``n_x x s`` for one variable, ``paths`` is ``q x s``.
    """
    X = np.asarray(snapshots, dtype=float)
    P = np.asarray(paths, dtype=float)
    if P.shape[1] != X.shape[1]:
        raise DimensionError(f"{X.shape[1]} snapshots but {P.shape[1]} path samples")
    out = []
    for mask, p_row in zip(frame_masks(X.shape[0]), P):
        masked = np.where(mask[:, None], X, 0.0)
        out.append(_shift_columns(shift_op, masked, -p_row))
    return out


def _shift_columns(op, X, shifts):
    out = np.empty_like(X)
    for j, p in enumerate(shifts):
        out[:, j] = op.apply(X[:, j], p)
    return out


def frame_reconstruction(modes, coeffs, paths, shift_op):
    """sum_rho T(p_rho(t)) modes_rho coeffs_rho(t) for each column t."""
    n_x = modes[0].shape[0]
    out = np.zeros((n_x, paths.shape[1]))
    for phi, a, p_row in zip(modes, coeffs, paths):
        if phi.shape[1] == 0:
            continue
        out += _shift_columns(shift_op, phi @ a, p_row)
    return out


def build_frame_bases(comoving_temp, comoving_smf, comoving_nonlin, n_modes, n_nonlin, shift_op):
    """POD per frame and variable of co-moving data; returns ``TransformedFrame`` objects.

    ``comoving_*`` are lists (one matrix per frame); ``n_modes`` is the mode
    count per variable and frame, ``n_nonlin`` the nonlinearity mode count per
    frame (conventionally ``2 * n_modes``).
    """
    frames = []
    for Xt, Xs, Xf in zip(comoving_temp, comoving_smf, comoving_nonlin):
        frames.append(TransformedFrame(
            shift_op,
            pod(Xt, rank=n_modes).modes,
            pod(Xs, rank=n_modes).modes,
            pod(Xf, rank=n_nonlin).modes,
        ))
    return frames


def extrapolate_coefficients(times, coeffs, degree, target_times):
    """Least-squares polynomial fit of each coefficient row, evaluated at ``target_times``."""
    t = np.asarray(times, dtype=float)
    C = np.atleast_2d(np.asarray(coeffs, dtype=float))
    if C.shape[1] != t.shape[0]:
        raise DimensionError(f"{t.shape[0]} times but {C.shape[1]} coefficient samples")
    if degree < 0 or t.shape[0] < degree + 1:
        raise InvalidInputError(f"cannot fit degree {degree} to {t.shape[0]} samples")
    center = 0.5 * (t[0] + t[-1])
    scale = max(0.5 * (t[-1] - t[0]), 1.0)
    poly = np.polynomial.polynomial.polyfit((t - center) / scale, C.T, degree)
    tt = (np.asarray(target_times, dtype=float) - center) / scale
    return np.polynomial.polynomial.polyval(tt, poly)


def residual_pod(snapshots, reconstruction, r_pod):
    """POD of what the travelling-wave part leaves unexplained."""
    X = np.asarray(snapshots, dtype=float)
    R = np.asarray(reconstruction, dtype=float)
    if X.shape != R.shape:
        raise DimensionError(f"snapshot shape {X.shape} differs from reconstruction {R.shape}")
    if r_pod == 0:
        return PodBasis(np.zeros((X.shape[0], 0)), np.zeros(0), 0.0, np.zeros(0))
    return pod(X - R, rank=r_pod)


@dataclass(frozen=True)
class ActiveSubspace:
    """Directions in path space to sample on.

    ``direction`` is set when a single direction suffices; the sampling
    coordinate is then the first path component, ``p = c * direction / direction[0]``.
    """

    singular_values: np.ndarray
    direction: np.ndarray = None

    @property
    def is_reduced(self):
        return self.direction is not None

    def point(self, c):
        return c * self.direction / self.direction[0]

    def coordinate(self, p):
        return self.direction[0] * float(np.dot(p, self.direction))


def detect_active_subspace(paths, rtol=1e-6):
    """SVD of the ``q x s`` path matrix; one direction if the rest is negligible."""
    P = np.atleast_2d(np.asarray(paths, dtype=float))
    u, sv, _ = np.linalg.svd(P, full_matrices=False)
    if sv.size > 1 and sv[1] >= rtol * sv[0]:
        log.warning("paths span %d dimensions; sampling the full path space is expensive", P.shape[0])
        return ActiveSubspace(sv)
    d = u[:, 0].copy()
    if d[0] < 0:
        d = -d
    if d[0] == 0:
        raise OfflineError("leading path direction does not move the first frame")
    return ActiveSubspace(sv, d)


@dataclass(frozen=True)
class SampledMatrixTable:
    """Path-dependent reduced matrices on an equidistant sample grid.

    ``axes`` holds one coordinate vector per sampled dimension; with an
    active subspace there is one axis (the first path component).  Leading
    array dimensions enumerate samples in C order over the axes.
    """

    axes: tuple
    direction: np.ndarray
    M1: np.ndarray
    M2: np.ndarray
    N: np.ndarray
    A1: np.ndarray  # (samples, k, r, r)
    A2: np.ndarray
    Vhat_temp: np.ndarray  # V^T [U; 0] (S^T U)^{-1}, (samples, r, m)
    Vhat_smf: np.ndarray  # V^T [0; U] (S^T U)^{-1}
    What_temp: np.ndarray
    What_smf: np.ndarray
    Vtilde: np.ndarray  # (samples, 2m, r) gathered rows of V

    @property
    def n_samples(self):
        return self.M1.shape[0]

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes)

    def index(self, p, warn=True):
        """Nearest sample (ties to the lower index), clamped to the grid."""
        p = np.atleast_1d(np.asarray(p, dtype=float))
        coords = [self.direction[0] * float(p @ self.direction)] if self.direction is not None else list(p)
        flat = 0
        for c, ax in zip(coords, self.axes):
            k = _nearest(c, ax, warn)
            flat = flat * len(ax) + k
        return flat


def _nearest(c, ax, warn):
    if len(ax) == 1:
        return 0
    step = ax[1] - ax[0]
    k = math.ceil((c - ax[0]) / step - 0.5)
    if k < 0 or k > len(ax) - 1:
        if warn:
            log.warning("path coordinate %.6g outside sampled range [%.6g, %.6g]; clamping", c, ax[0], ax[-1])
        k = min(max(k, 0), len(ax) - 1)
    return k


@dataclass(frozen=True)
class SdeimTable:
    indices: np.ndarray  # (samples, m)
    gather_rows: np.ndarray  # (samples, 2m): rows of the stacked state feeding f
    det: np.ndarray  # |det(S^T U)| per sample

    @property
    def m(self):
        return self.indices.shape[1]


def _select(U):
    try:
        return qdeim_points(U).indices
    except SelectionError:
        # second attempt on an orthonormalised basis, which spans the same space
        q, _ = np.linalg.qr(U)
        return qdeim_points(q).indices


def _sample_one(p, frames, pod_tail, pod_nonlin, affine_ops, d1_onesided):
    V, W = assemble_V_W(frames, pod_tail, p, d1_onesided)
    U = assemble_U(frames, pod_nonlin, p)
    n_x = U.shape[0]
    try:
        idx = _select(U)
    except SelectionError as exc:
        raise OfflineError(f"sDEIM point selection failed at path sample {np.round(p, 6).tolist()}: {exc}") from exc
    SU = U[idx]
    lu = sla.lu_factor(SU)
    det = float(abs(np.prod(np.diag(lu[0]))))
    if det == 0.0 or not np.isfinite(det):
        raise OfflineError(f"singular S^T U at path sample {np.round(p, 6).tolist()}")

    def oblique(B):
        # B (S^T U)^{-1} for B of shape (r, m)
        return sla.lu_solve(lu, B.T, trans=1).T

    AV = [A @ V for A in affine_ops]
    return dict(
        M1=V.T @ V, M2=W.T @ W, N=V.T @ W,
        A1=np.stack([V.T @ x for x in AV]), A2=np.stack([W.T @ x for x in AV]),
        Vhat_temp=oblique(V[:n_x].T @ U), Vhat_smf=oblique(V[n_x:].T @ U),
        What_temp=oblique(W[:n_x].T @ U), What_smf=oblique(W[n_x:].T @ U),
        Vtilde=V[np.concatenate([idx, idx + n_x])],
        idx=idx, det=det,
    )


def sample_path_tables(frames, pod_tail, pod_nonlin, affine_ops, d1_onesided, subspace,
                       p_max, dp, p_min=0.0, workers=1):
    """Sample all path-dependent reduced matrices and sDEIM data.

    With a reduced ``subspace`` the first path component runs over
    ``[p_min, p_max]`` in steps of ``dp``; otherwise every component is
    sampled on that range (sign-matched to the frame's direction of travel).
    """
    if not dp > 0:
        raise InvalidInputError("sampling step must be positive")
    n_steps = int(round((p_max - p_min) / dp))
    base_axis = p_min + dp * np.arange(n_steps + 1)
    if subspace.is_reduced:
        axes = (base_axis,)
        points = [subspace.point(c) for c in base_axis]
        direction = subspace.direction
    else:
        signs = [1.0 if i % 2 == 0 else -1.0 for i in range(len(frames))]
        axes = tuple(s * base_axis if s > 0 else -base_axis[::-1] for s in signs)
        grids = np.meshgrid(*axes, indexing="ij")
        points = [np.array(v) for v in zip(*(g.ravel() for g in grids))]
        direction = None

    def work(p):
        return _sample_one(np.asarray(p, dtype=float), frames, pod_tail, pod_nonlin, affine_ops, d1_onesided)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            samples = list(ex.map(work, points))
    else:
        samples = [work(p) for p in points]

    def stack(key):
        return np.stack([s[key] for s in samples])

    table = SampledMatrixTable(
        axes=axes, direction=direction,
        M1=stack("M1"), M2=stack("M2"), N=stack("N"), A1=stack("A1"), A2=stack("A2"),
        Vhat_temp=stack("Vhat_temp"), Vhat_smf=stack("Vhat_smf"),
        What_temp=stack("What_temp"), What_smf=stack("What_smf"),
        Vtilde=stack("Vtilde"),
    )
    n_x = frames[0].shift_op.grid.n_x
    idx = stack("idx")
    sdeim = SdeimTable(idx, np.concatenate([idx, idx + n_x], axis=1), np.array([s["det"] for s in samples]))
    return table, sdeim
