"""End-to-end offline builds for the two wildfire scenarios and the POD-DEIM baseline."""

import logging
from dataclasses import dataclass, replace

import numpy as np

from .decomp import pod, qdeim_points
from .fom import DiffOps, FullOrderModel, _rate, affine_operators
from .integrate import IntegratorConfig, solve_ivp
from .metrics import relative_l2_error
from .model import PodRom, ReducedModel, SwitchingData
from .offline import (build_frame_bases, detect_active_subspace, extrapolate_coefficients,
                      frame_reconstruction, residual_pod, sample_path_tables,
                      separate_waves, smooth_paths, track_fronts)
from .rom import initial_reduced_state
from .shift import Extrapolation, ShiftOperator

log = logging.getLogger(__name__)


@dataclass
class SnapshotSet:
    beta: float
    times: np.ndarray
    states: np.ndarray  # (2 n_x, s)
    nonlin: np.ndarray  # (n_x, s), f evaluated on the stored states
    wall_time_s: float = 0.0

    @property
    def n_x(self):
        return self.nonlin.shape[0]

    @property
    def temp(self):
        return self.states[:self.n_x]

    @property
    def smf(self):
        return self.states[self.n_x:]


def snapshot_times(t_f, dt, t0=0.0):
    n = int(np.floor((t_f - t0) / dt + 1e-9))
    t = t0 + dt * np.arange(n + 1)
    if t[-1] < t_f - 1e-9:
        t = np.append(t, t_f)
    return t


def generate_snapshots(grid, params, z0, t_f, dt_snap=1.0, cfg=None, ops=None):
    model = FullOrderModel(grid, params, ops)
    times = snapshot_times(t_f, dt_snap)
    sol = solve_ivp(model.rhs, z0, (0.0, t_f), times, cfg or IntegratorConfig())
    nonlin = sol.states[grid.n_x:] * _rate(sol.states[:grid.n_x], params.beta)
    return SnapshotSet(params.beta, times, sol.states, nonlin, sol.wall_time_s)


def _stacked_blocks(temp_modes, smf_modes):
    n_x = temp_modes.shape[0]
    out = np.zeros((2 * n_x, temp_modes.shape[1] + smf_modes.shape[1]))
    out[:n_x, :temp_modes.shape[1]] = temp_modes
    out[n_x:, temp_modes.shape[1]:] = smf_modes
    return out


def build_pod_rom(snapsets, n_per_var, n_nonlin, ops, columns=None):
    """Block POD (temperature / supply mass fraction) with Q-DEIM for f.

    ``columns`` optionally restricts every snapshot set to a boolean time mask.
    """
    def cols(s):
        return slice(None) if columns is None else columns(s)

    T = np.hstack([s.temp[:, cols(s)] for s in snapsets])
    S = np.hstack([s.smf[:, cols(s)] for s in snapsets])
    F = np.hstack([s.nonlin[:, cols(s)] for s in snapsets])
    V = _stacked_blocks(pod(T, rank=n_per_var).modes, pod(S, rank=n_per_var).modes)
    U = pod(F, rank=n_nonlin).modes
    idx = qdeim_points(U).indices
    return PodRom.build(V, U, affine_operators(ops), idx)


@dataclass
class OfflineInfo:
    """Diagnostics of an offline build (not needed online)."""

    paths: list  # PathTrajectory per training set
    subspace: object
    offline_errors: list  # (err_T, err_S) per training set
    frame_coeffs: list = None


def _paths_for(snaps, ops, dx, mode, fraction):
    out = []
    origin = None
    for s in snaps:
        tr = track_fronts(s.temp, ops.d1, dx, s.times, origin)
        if origin is None:
            origin = tr.origin
        out.append(smooth_paths(tr, mode, fraction))
    return out


def _comoving(snaps, paths, shift_op, col_masks):
    """Per variable ('T', 'S', 'f'), per frame: co-moving data of all sets, hstacked."""
    data = {}
    for var in ("T", "S", "f"):
        per_frame = None
        for s, pt in zip(snaps, paths):
            X = {"T": s.temp, "S": s.smf, "f": s.nonlin}[var]
            cm = col_masks[var](s)
            parts = separate_waves(X[:, cm], pt.smooth_paths[:, cm], shift_op)
            per_frame = parts if per_frame is None else [np.hstack([a, b]) for a, b in zip(per_frame, parts)]
        data[var] = per_frame
    return data


def offline_error(frames, snap, path, shift_op):
    """Relative errors (T, S) of the co-moving projection shifted back to the lab frame."""
    errs = []
    for var, X, attr in (("T", snap.temp, "temp_modes"), ("S", snap.smf, "smf_modes")):
        parts = separate_waves(X, path.smooth_paths, shift_op)
        modes = [getattr(f, attr) for f in frames]
        coeffs = [phi.T @ cm for phi, cm in zip(modes, parts)]
        approx = frame_reconstruction(modes, coeffs, path.smooth_paths, shift_op)
        errs.append(relative_l2_error(X, approx, snap.times))
    return tuple(errs)


def build_separated_model(snaps, grid, z0, n_modes, n_nonlin=None, p_max=300.0, dp=20 / 3,
                          extrapolation=Extrapolation.CONSTANT, workers=1, ops=None):
    """Shifted ROM for already separated combustion waves.

    ``n_modes`` modes per variable and frame; ``n_nonlin`` nonlinearity modes
    per frame (default ``2 * n_modes``).
    """
    ops = ops or DiffOps.from_grid(grid)
    n_nonlin = 2 * n_modes if n_nonlin is None else n_nonlin
    shift_op = ShiftOperator(grid, extrapolation)
    paths = _paths_for(snaps, ops, grid.dx, "full_linear", 1.0)
    subspace = detect_active_subspace(np.hstack([p.smooth_paths for p in paths]))
    every = {v: (lambda s: slice(None)) for v in ("T", "S", "f")}
    data = _comoving(snaps, paths, shift_op, every)
    frames = build_frame_bases(data["T"], data["S"], data["f"], n_modes, n_nonlin, shift_op)
    del data
    empty_state = np.zeros((2 * grid.n_x, 0))
    empty_nl = np.zeros((grid.n_x, 0))
    table, sdeim = sample_path_tables(frames, empty_state, empty_nl, affine_operators(ops), ops.d1_onesided,
                                      subspace, p_max, dp, workers=workers)
    model = ReducedModel(grid, frames, empty_state, empty_nl, table, sdeim,
                         np.zeros(sum(f.n_state_modes for f in frames)), np.zeros(len(frames)),
                         paths[0].origin,
                         meta={"case": "separated_waves", "train_betas": [float(s.beta) for s in snaps],
                               "n_modes": n_modes, "n_nonlin": n_nonlin, "p_max": p_max, "dp": dp})
    a0, resid = initial_reduced_state(model, z0)
    model = replace(model, a0=a0)
    errors = [offline_error(frames, s, pt, shift_op) for s, pt in zip(snaps, paths)]
    log.info("separated model: r=%d, initial projection residual %.3g", model.r, resid)
    return model, OfflineInfo(paths, subspace, errors)


def build_gaussian_model(snaps, grid, t_switch=100.0, n_pre=14, n_modes=4, n_tail=2,
                         frac_temp=0.65, frac_smf=0.80, degree=1, path_fraction=0.985,
                         p_max=500.0, dp=1 / 3, extrapolation=Extrapolation.CONSTANT, workers=1, ops=None):
    """Switched ROM: POD-DEIM before ``t_switch``, shifted modes plus POD tail after.

    Travelling-wave modes come from the trailing ``frac_temp`` (temperature
    and nonlinearity) or ``frac_smf`` (supply mass fraction) part of the
    post-switch interval; their coefficients are extrapolated backwards with
    a degree-``degree`` polynomial and the residual feeds the POD tail.
    """
    ops = ops or DiffOps.from_grid(grid)
    shift_op = ShiftOperator(grid, extrapolation)
    affine = affine_operators(ops)

    pre = build_pod_rom(snaps, n_pre, 2 * n_pre, ops, columns=lambda s: s.times <= t_switch + 1e-9)

    paths = _paths_for(snaps, ops, grid.dx, "tail_linear", path_fraction)
    post_masks = [s.times >= t_switch - 1e-9 for s in snaps]
    subspace = detect_active_subspace(np.hstack([p.smooth_paths[:, m] for p, m in zip(paths, post_masks)]))

    def window(frac):
        def mask(s):
            t_f = s.times[-1]
            return s.times >= t_f - frac * (t_f - t_switch) - 1e-9
        return mask

    windows = {"T": window(frac_temp), "S": window(frac_smf), "f": window(frac_temp)}
    data = _comoving(snaps, paths, shift_op, windows)
    frames = build_frame_bases(data["T"], data["S"], data["f"], n_modes, 2 * n_modes, shift_op)
    del data

    # travelling-wave reconstruction over the post-switch interval, per variable
    residuals = {"T": [], "S": [], "f": []}
    coeff_log = []
    attr = {"T": "temp_modes", "S": "smf_modes", "f": "nonlin_modes"}
    for s, pt, post in zip(snaps, paths, post_masks):
        t_post = s.times[post]
        P = pt.smooth_paths[:, post]
        per_var = {}
        for var, X in (("T", s.temp), ("S", s.smf), ("f", s.nonlin)):
            Xp = X[:, post]
            win = windows[var](s)[post]
            parts = separate_waves(Xp[:, win], P[:, win], shift_op)
            coeffs = []
            for frame, cm in zip(frames, parts):
                phi = getattr(frame, attr[var])
                a_win = phi.T @ cm
                a = np.empty((phi.shape[1], t_post.size))
                a[:, win] = a_win
                if np.any(~win):
                    a[:, ~win] = extrapolate_coefficients(t_post[win], a_win, degree, t_post[~win])
                coeffs.append(a)
            per_var[var] = coeffs
            recon = frame_reconstruction([getattr(f, attr[var]) for f in frames], coeffs, P, shift_op)
            residuals[var].append((Xp, recon))
        coeff_log.append(per_var)

    def tail(var, r):
        X = np.hstack([x for x, _ in residuals[var]])
        R = np.hstack([rec for _, rec in residuals[var]])
        return residual_pod(X, R, r).modes

    pod_tail = _stacked_blocks(tail("T", n_tail), tail("S", n_tail))
    pod_nonlin = tail("f", 2 * n_tail)
    del residuals

    table, sdeim = sample_path_tables(frames, pod_tail, pod_nonlin, affine, ops.d1_onesided,
                                      subspace, p_max, dp, workers=workers)
    r = sum(f.n_state_modes for f in frames) + pod_tail.shape[1]
    model = ReducedModel(grid, frames, pod_tail, pod_nonlin, table, sdeim, np.zeros(r), np.zeros(len(frames)),
                         paths[0].origin, SwitchingData(float(t_switch), pre),
                         meta={"case": "gaussian", "train_betas": [float(s.beta) for s in snaps],
                               "n_pre": n_pre, "n_modes": n_modes, "n_tail": n_tail, "t_switch": t_switch,
                               "p_max": p_max, "dp": dp, "degree": degree})
    errors = [_switched_offline_error(model, s, pt, post, c) for s, pt, post, c in
              zip(snaps, paths, post_masks, coeff_log)]
    return model, OfflineInfo(paths, subspace, errors, coeff_log)


def _switched_offline_error(model, snap, path, post, coeffs):
    """Offline errors of the switched representation on one training set.

    Before the switch: orthogonal projection on the POD basis.  After: the
    travelling-wave reconstruction plus the orthogonal projection of its
    residual on the POD tail.
    """
    n_x = snap.n_x
    pre = model.switching.pre
    approx = np.empty_like(snap.states)
    pre_cols = ~post
    approx[:, pre_cols] = pre.lift(pre.project(snap.states[:, pre_cols]))
    shift_op = model.frames[0].shift_op
    P = path.smooth_paths[:, post]
    T = frame_reconstruction([f.temp_modes for f in model.frames], coeffs["T"], P, shift_op)
    S = frame_reconstruction([f.smf_modes for f in model.frames], coeffs["S"], P, shift_op)
    trav = np.vstack([T, S])
    res = snap.states[:, post] - trav
    tail = model.pod_tail
    approx[:, post] = trav + tail @ (tail.T @ res)
    return (relative_l2_error(snap.temp, approx[:n_x], snap.times),
            relative_l2_error(snap.smf, approx[n_x:], snap.times))
