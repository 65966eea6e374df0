"""Online reduced simulations: POD-DEIM, shifted sPOD-sDEIM and the switched driver.

The shifted ROM state is ``y = [a_hat; p]``.  Its right-hand side solves

    [[M1, N D], [D^T N^T, D^T M2 D]] [a'; p'] = [A1 a + F1; D^T (A2 a + F2)]

with all matrices looked up from the path-sampled tables.
"""

import logging
import math
import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from numba import njit

from .errors import DimensionError, OnlineError, TrackingError
from .fom import _rate, reduced_nonlinearity
from .integrate import IntegratorConfig, solve_ivp
from .offline import front_positions
from .shift import assemble_V_W

log = logging.getLogger(__name__)

COND_LIMIT = 1e12
SV_CUTOFF = 1e-12


# ---------------------------------------------------------------- POD-DEIM


class BoundPodRom:
    """POD-DEIM ROM with parameters folded into its reduced operators."""

    def __init__(self, rom, params):
        self.rom = rom
        self.params = params
        self.A = np.tensordot(params.affine_weights(), rom.A, axes=1)
        self.deim = params.alpha * rom.deim_temp - params.gamma_s * rom.deim_smf
        self.gather = np.ascontiguousarray(rom.gather)
        self.beta = params.beta
        self.m = rom.m

    def rhs(self, t, a):
        zt = self.gather @ a
        m = self.m
        fv = zt[m:] * _rate(zt[:m], self.beta)
        return self.A @ a + self.deim @ fv


def pod_rom_rhs(a_hat, params, model):
    """A(mu) a + V^T (c (x) U)(S^T U)^{-1} f(gathered rows of V a)."""
    a_hat = np.asarray(a_hat, dtype=float)
    if a_hat.shape != (model.r,):
        raise DimensionError(f"expected {model.r} coefficients, got {a_hat.shape}")
    A = np.tensordot(params.affine_weights(), model.A, axes=1)
    fv = reduced_nonlinearity(model.gather @ a_hat, params.beta)
    return A @ a_hat + (params.alpha * model.deim_temp - params.gamma_s * model.deim_smf) @ fv


# ---------------------------------------------------------------- shifted ROM


@dataclass(frozen=True)
class ReducedState:
    a_hat: np.ndarray
    p: np.ndarray

    def stacked(self):
        return np.concatenate([self.a_hat, self.p])


def _solve_mass_system(M, b):
    """Pivoted LU solve; truncated least squares when the 1-norm condition exceeds ``COND_LIMIT``."""
    try:
        lu, piv = sla.lu_factor(M, check_finite=False)
        pivots = np.abs(np.diag(lu))
        if pivots.min() > 0:
            rcond = sla.lapack.dgecon(lu, np.linalg.norm(M, 1), norm="1")[0]
            if rcond > 1.0 / COND_LIMIT:
                return sla.lu_solve((lu, piv), b, check_finite=False)
    except (sla.LinAlgError, ValueError):
        pass
    return _truncated_lstsq(M, b)


def _truncated_lstsq(M, b):
    u, s, vt = np.linalg.svd(M)
    if not np.all(np.isfinite(s)) or s[0] == 0.0:
        raise OnlineError("mass matrix is zero or non-finite")
    keep = s > SV_CUTOFF * s[0]
    return vt[keep].T @ ((u[:, keep].T @ b) / s[keep])


def mass_matrix(M1, M2, N, D):
    r, q = D.shape
    ND = N @ D
    out = np.empty((r + q, r + q))
    out[:r, :r] = M1
    out[:r, r:] = ND
    out[r:, :r] = ND.T
    out[r:, r:] = D.T @ M2 @ D
    return out


def _lookup(table, p, interpolate=False):
    """Table matrices at path ``p`` as a dict (piecewise constant or linear in 1D)."""
    keys = ("M1", "M2", "N", "A1", "A2", "Vhat_temp", "Vhat_smf", "What_temp", "What_smf", "Vtilde")
    if interpolate and table.direction is not None and len(table.axes[0]) > 1:
        ax = table.axes[0]
        c = table.direction[0] * float(np.dot(p, table.direction))
        x = (min(max(c, ax[0]), ax[-1]) - ax[0]) / (ax[1] - ax[0])
        k = min(int(math.floor(x)), len(ax) - 2)
        w = x - k
        out = {key: (1 - w) * getattr(table, key)[k] + w * getattr(table, key)[k + 1] for key in keys}
        # gathered rows change with the selection; keep the nearest sample's
        near = k if w <= 0.5 else k + 1
        for key in ("Vhat_temp", "Vhat_smf", "What_temp", "What_smf", "Vtilde"):
            out[key] = getattr(table, key)[near]
        return out
    k = table.index(p)
    return {key: getattr(table, key)[k] for key in keys}


def trom_rhs(state, params, model, interpolate=False):
    """Time derivative of the shifted ROM (reference implementation).

    Returns a :class:`ReducedState` holding ``(a_hat', p')``.  Only
    table-sized arrays are touched; nothing scales with the full dimension.
    """
    a, p = np.asarray(state.a_hat, dtype=float), np.asarray(state.p, dtype=float)
    if a.shape != (model.r,) or p.shape != (model.q,):
        raise DimensionError(f"state sizes ({a.shape}, {p.shape}) do not match the model ({model.r}, {model.q})")
    T = _lookup(model.table, p, interpolate)
    w = params.affine_weights()
    A1 = np.tensordot(w, T["A1"], axes=1)
    A2 = np.tensordot(w, T["A2"], axes=1)
    fv = reduced_nonlinearity(T["Vtilde"] @ a, params.beta)
    F1 = (params.alpha * T["Vhat_temp"] - params.gamma_s * T["Vhat_smf"]) @ fv
    F2 = (params.alpha * T["What_temp"] - params.gamma_s * T["What_smf"]) @ fv
    D = model.D(a)
    M = mass_matrix(T["M1"], T["M2"], T["N"], D)
    b = np.concatenate([A1 @ a + F1, D.T @ (A2 @ a + F2)])
    x = _solve_mass_system(M, b)
    r = model.r
    return ReducedState(x[:r], x[r:])


@njit(cache=True)
def _lu_inverse_cond(M):
    """Inverse and 1-norm condition of a small matrix via partial pivoting; cond=inf if singular."""
    n = M.shape[0]
    lu = M.copy()
    perm = np.arange(n)
    for k in range(n):
        piv = k
        best = abs(lu[k, k])
        for i in range(k + 1, n):
            v = abs(lu[i, k])
            if v > best:
                best = v
                piv = i
        if best == 0.0:
            return lu, np.inf
        if piv != k:
            for j in range(n):
                tmp = lu[k, j]
                lu[k, j] = lu[piv, j]
                lu[piv, j] = tmp
            t = perm[k]
            perm[k] = perm[piv]
            perm[piv] = t
        for i in range(k + 1, n):
            lu[i, k] /= lu[k, k]
            f = lu[i, k]
            for j in range(k + 1, n):
                lu[i, j] -= f * lu[k, j]
    inv = np.zeros((n, n))
    for col in range(n):
        # solve L U x = P e_col
        x = np.zeros(n)
        for i in range(n):
            s = 1.0 if perm[i] == col else 0.0
            for j in range(i):
                s -= lu[i, j] * x[j]
            x[i] = s
        for i in range(n - 1, -1, -1):
            s = x[i]
            for j in range(i + 1, n):
                s -= lu[i, j] * x[j]
            x[i] = s / lu[i, i]
        for i in range(n):
            inv[i, col] = x[i]
    na = 0.0
    ni = 0.0
    for j in range(n):
        sa = 0.0
        si = 0.0
        for i in range(n):
            sa += abs(M[i, j])
            si += abs(inv[i, j])
        na = max(na, sa)
        ni = max(ni, si)
    return inv, na * ni


@njit(cache=True)
def _trom_kernel(y, r, q, frame_col, direction, ax0, step, n_samp,
                 M1, M2, N, LIN, NL, Vt, beta, mass_out, rhs_out):
    """Assemble mass matrix and right side at ``y``; returns (solution, ok)."""
    p = y[r:]
    c = 0.0
    for i in range(q):
        c += p[i] * direction[i]
    c *= direction[0]
    if n_samp > 1:
        k = int(math.ceil((c - ax0) / step - 0.5))
        if k < 0:
            k = 0
        elif k > n_samp - 1:
            k = n_samp - 1
    else:
        k = 0
    a = np.ascontiguousarray(y[:r])
    zt = Vt[k] @ a
    m = zt.shape[0] // 2
    fv = np.zeros(m)
    for i in range(m):
        if zt[i] > 0.0:
            fv[i] = zt[m + i] * math.exp(-beta / zt[i])
    g = LIN[k] @ a + NL[k] @ fv
    D = np.zeros((r, q))
    for i in range(r):
        if frame_col[i] >= 0:
            D[i, frame_col[i]] = a[i]
    ND = N[k] @ D
    DM2D = D.T @ (M2[k] @ D)
    Mk = M1[k]
    for i in range(r):
        for j in range(r):
            mass_out[i, j] = Mk[i, j]
        for j in range(q):
            mass_out[i, r + j] = ND[i, j]
            mass_out[r + j, i] = ND[i, j]
        rhs_out[i] = g[i]
    for i in range(q):
        for j in range(q):
            mass_out[r + i, r + j] = DM2D[i, j]
        s = 0.0
        for l in range(r):
            s += D[l, i] * g[r + l]
        rhs_out[r + i] = s
    inv, cond = _lu_inverse_cond(mass_out)
    if cond > 1e12 or not math.isfinite(cond):
        return rhs_out.copy(), False
    return inv @ rhs_out, True


class BoundTransformedRom:
    """Shifted ROM with parameters folded into its sampled tables.

    Binding costs O(samples * r^2) and is independent of the full dimension.
    Piecewise-constant lookup on a one-dimensional active subspace runs in a
    compiled kernel; other table layouts fall back to :func:`trom_rhs`.
    """

    def __init__(self, model, params, interpolate=False):
        self.model = model
        self.params = params
        self.r, self.q = model.r, model.q
        t = model.table
        self.fast = t.direction is not None and not interpolate
        self.interpolate = interpolate
        self.n_fallback = 0
        if self.fast:
            w = params.affine_weights()
            A1 = np.tensordot(t.A1, w, axes=([1], [0]))
            A2 = np.tensordot(t.A2, w, axes=([1], [0]))
            Vh = params.alpha * t.Vhat_temp - params.gamma_s * t.Vhat_smf
            Wh = params.alpha * t.What_temp - params.gamma_s * t.What_smf
            self._LIN = np.ascontiguousarray(np.concatenate([A1, A2], axis=1))
            self._NL = np.ascontiguousarray(np.concatenate([Vh, Wh], axis=1))
            self._M1 = np.ascontiguousarray(t.M1)
            self._M2 = np.ascontiguousarray(t.M2)
            self._N = np.ascontiguousarray(t.N)
            self._Vt = np.ascontiguousarray(t.Vtilde)
            self._frame_col = model.frame_of_column()
            self._dir = np.ascontiguousarray(t.direction, dtype=float)
            ax = t.axes[0]
            self._ax0 = float(ax[0])
            self._step = float(ax[1] - ax[0]) if len(ax) > 1 else 1.0
            self._n_samp = len(ax)
            self._mass = np.empty((self.r + self.q, self.r + self.q))
            self._rhs = np.empty(self.r + self.q)
            self._range = (float(ax[0]), float(ax[-1]))
            self._warned = False

    def rhs(self, t, y):
        if not self.fast:
            d = trom_rhs(ReducedState(y[:self.r], y[self.r:]), self.params, self.model, self.interpolate)
            return d.stacked()
        x, ok = _trom_kernel(y, self.r, self.q, self._frame_col, self._dir, self._ax0, self._step,
                             self._n_samp, self._M1, self._M2, self._N, self._LIN, self._NL, self._Vt,
                             self.params.beta, self._mass, self._rhs)
        if not self._warned:
            c = self._dir[0] * float(y[self.r:] @ self._dir)
            half = 0.5 * self._step
            if c < self._range[0] - half or c > self._range[1] + half:
                log.warning("path coordinate %.6g outside sampled range %s; clamping", c, self._range)
                self._warned = True
        if ok:
            return x
        self.n_fallback += 1
        return _truncated_lstsq(self._mass, self._rhs)


def initial_reduced_state(model, z0, p=None):
    """Orthogonal projection of ``z0`` onto span V(p) (full-dimensional, done once)."""
    p = np.zeros(model.q) if p is None else np.asarray(p, dtype=float)
    V, _ = assemble_V_W(model.frames, model.pod_tail, p, _d1_onesided(model))
    M1 = V.T @ V
    a = sla.solve(M1, V.T @ z0, assume_a="pos")
    resid = np.linalg.norm(z0 - V @ a) / max(np.linalg.norm(z0), 1e-300)
    return a, float(resid)


_D1_CACHE = {}


def _d1_onesided(model):
    from .fom import DiffOps
    key = (model.grid.length_m, model.grid.n_x)
    if key not in _D1_CACHE:
        _D1_CACHE[key] = DiffOps.from_grid(model.grid).d1_onesided
    return _D1_CACHE[key]


def lift(model, a_hat, p):
    """Full state(s) V(p) a for one reduced state or for columns of a trajectory."""
    a_hat = np.asarray(a_hat, dtype=float)
    p = np.asarray(p, dtype=float)
    d1 = _d1_onesided(model)
    if a_hat.ndim == 1:
        V, _ = assemble_V_W(model.frames, model.pod_tail, p, d1)
        return V @ a_hat
    out = np.empty((2 * model.grid.n_x, a_hat.shape[1]))
    for j in range(a_hat.shape[1]):
        out[:, j] = lift_fast(model, a_hat[:, j], p[:, j])
    return out


def lift_fast(model, a_hat, p):
    """V(p) a without assembling W."""
    n_x = model.grid.n_x
    z = np.zeros(2 * n_x)
    col = 0
    for frame, p_rho in zip(model.frames, p):
        k_t, k_s = frame.temp_modes.shape[1], frame.smf_modes.shape[1]
        op = frame.shift_op
        z[:n_x] += op.apply(frame.temp_modes @ a_hat[col:col + k_t], p_rho)
        col += k_t
        z[n_x:] += op.apply(frame.smf_modes @ a_hat[col:col + k_s], p_rho)
        col += k_s
    if model.pod_tail.shape[1]:
        z += model.pod_tail @ a_hat[col:]
    return z


@dataclass
class RomTrajectory:
    times: np.ndarray
    coeffs: np.ndarray
    paths: np.ndarray
    wall_time_s: float
    n_steps: int
    # full states for the switched driver (None until lifted)
    states: np.ndarray = None
    handoff_residual: float = None
    n_fallback: int = 0


def run_trom(model, params, t_span, output_times, cfg=None, y0=None, interpolate=False):
    bound = BoundTransformedRom(model, params, interpolate)
    if y0 is None:
        y0 = np.concatenate([model.a0, model.p0])
    sol = solve_ivp(bound.rhs, y0, t_span, output_times, cfg or IntegratorConfig())
    r = model.r
    return RomTrajectory(sol.times, sol.states[:r], sol.states[r:], sol.wall_time_s,
                         sol.n_accepted + sol.n_rejected, n_fallback=bound.n_fallback)


def run_pod(rom, params, a0, t_span, output_times, cfg=None):
    bound = BoundPodRom(rom, params)
    sol = solve_ivp(bound.rhs, a0, t_span, output_times, cfg or IntegratorConfig())
    return RomTrajectory(sol.times, sol.states, np.zeros((0, sol.times.size)), sol.wall_time_s,
                         sol.n_accepted + sol.n_rejected)


def handoff(model, z):
    """Initial shifted-ROM state from a full state at the switching time."""
    from .fom import DiffOps
    d1 = DiffOps.from_grid(model.grid).d1
    try:
        pos = front_positions(z[:model.grid.n_x], d1, model.grid.dx)
    except TrackingError as exc:
        raise TrackingError(f"front tracking failed at the switch ({exc}); choose a later t_switch") from exc
    p = pos - model.origin
    a, resid = initial_reduced_state(model, z, p)
    return a, p, resid


def run_switched(model, params, t_f, output_times, z0, cfg=None):
    """POD-DEIM on [0, t_switch], shifted ROM on [t_switch, t_f], lifted to full states.

    The reported wall time covers both integrations and the handoff.
    """
    if model.switching is None:
        raise DimensionError("model carries no switching data")
    cfg = cfg or IntegratorConfig()
    ts = model.switching.t_switch
    pre = model.switching.pre
    out_t = np.asarray(output_times, dtype=float)
    pre_t = out_t[out_t <= ts]
    if pre_t.size == 0 or pre_t[-1] < ts:
        pre_t = np.append(pre_t, ts)
    start = time.perf_counter()
    a0 = pre.project(z0)
    pre_run = run_pod(pre, params, a0, (0.0, ts), pre_t, cfg)
    if ts >= t_f:
        wall = time.perf_counter() - start
        states = pre.lift(pre_run.coeffs)
        keep = np.isin(pre_t, out_t)
        return RomTrajectory(out_t, pre_run.coeffs[:, keep], np.zeros((model.q, keep.sum())), wall,
                             pre_run.n_steps, states=states[:, keep], handoff_residual=0.0)
    z_switch = pre.lift(pre_run.coeffs[:, -1])
    a_s, p_s, resid = handoff(model, z_switch)
    post_t = out_t[out_t > ts]
    post_t = np.concatenate([[ts], post_t]) if post_t.size else np.array([ts, t_f])
    post = run_trom(model, params, (ts, t_f), post_t, cfg, y0=np.concatenate([a_s, p_s]))
    wall = time.perf_counter() - start

    keep_pre = np.isin(pre_t, out_t)
    pre_states = pre.lift(pre_run.coeffs[:, keep_pre])
    post_keep = np.isin(post.times, out_t) & (post.times > ts)
    post_states = lift(model, post.coeffs[:, post_keep], post.paths[:, post_keep])
    states = np.hstack([pre_states, post_states])
    paths = np.hstack([np.full((model.q, keep_pre.sum()), np.nan), post.paths[:, post_keep]])
    return RomTrajectory(out_t, None, paths, wall, pre_run.n_steps + post.n_steps,
                         states=states, handoff_residual=resid, n_fallback=post.n_fallback)
