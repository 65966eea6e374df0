"""Full-order wildland fire model on a periodic 1D strip.

The state is the stacked vector ``z = [T - T_a; S]`` of relative temperature
and supply mass fraction.  The model reads

    dT/dt = k T'' - v T' - alpha*gamma T + alpha f(S, T),
    dS/dt = -gamma_s f(S, T),

with ``f = S * exp(-beta / T)`` where ``T > 0`` and zero elsewhere.
"""

import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import snapio
from .errors import DimensionError, InvalidInputError

log = logging.getLogger(__name__)

# 6th-order central weights, offsets -3..3
CENTRAL_D1 = np.array([-1 / 60, 3 / 20, -3 / 4, 0.0, 3 / 4, -3 / 20, 1 / 60])
CENTRAL_D2 = np.array([1 / 90, -3 / 20, 3 / 2, -49 / 18, 3 / 2, -3 / 20, 1 / 90])

SEPARATED_IC_BETA = 558.49
SEPARATED_IC_TIME = 700.0


@dataclass(frozen=True)
class Grid1D:
    length_m: float = 1000.0
    n_x: int = 3000
    periodic: bool = True

    def __post_init__(self):
        if int(self.n_x) != self.n_x or self.n_x < 1:
            raise InvalidInputError(f"n_x must be a positive integer, got {self.n_x}")
        if not (self.length_m > 0 and math.isfinite(self.length_m)):
            raise InvalidInputError(f"length_m must be positive, got {self.length_m}")

    @property
    def dx(self):
        return self.length_m / self.n_x

    @property
    def x(self):
        return np.arange(self.n_x) * self.dx


@dataclass(frozen=True)
class FireParams:
    """Model coefficients; defaults are the fixed values used in all studies."""

    k: float = 0.2136
    v: float = 0.0
    alpha: float = 187.93
    beta: float = 558.49
    gamma: float = 4.8372e-5
    gamma_s: float = 0.1625
    t_ambient: float = 300.0

    def __post_init__(self):
        for name in ("k", "v", "alpha", "beta", "gamma", "gamma_s", "t_ambient"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidInputError(f"{name} must be finite")
        if self.k < 0 or self.gamma_s < 0 or self.beta <= 0:
            raise InvalidInputError("require k >= 0, gamma_s >= 0 and beta > 0")

    def with_beta(self, beta):
        return replace(self, beta=float(beta))

    def affine_weights(self):
        """Weights of the affine operators returned by :func:`affine_operators`."""
        return np.array([self.k, self.v, self.alpha * self.gamma])

    @property
    def nonlinear_coupling(self):
        """The vector ``c`` with ``F = c (x) f``."""
        return np.array([self.alpha, -self.gamma_s])


@dataclass(frozen=True)
class FullState:
    temp_rel: np.ndarray
    smf: np.ndarray

    def __post_init__(self):
        if self.temp_rel.shape != self.smf.shape or self.temp_rel.ndim != 1:
            raise DimensionError("temp_rel and smf must be vectors of equal length")

    @property
    def n_x(self):
        return self.temp_rel.shape[0]

    def stacked(self):
        return np.concatenate([self.temp_rel, self.smf])

    @classmethod
    def from_stacked(cls, z):
        z = np.asarray(z, dtype=float)
        if z.ndim != 1 or z.shape[0] % 2:
            raise DimensionError(f"stacked state must have even length, got {z.shape}")
        n_x = z.shape[0] // 2
        return cls(z[:n_x].copy(), z[n_x:].copy())


def fd_weights(offsets, deriv):
    """Finite-difference weights for the ``deriv``-th derivative on integer ``offsets``.

    Solves the moment conditions sum_j w_j o_j^k / k! = delta_{k, deriv}.
    """
    o = np.asarray(offsets, dtype=float)
    n = o.size
    if deriv >= n:
        raise InvalidInputError("need more offsets than the derivative order")
    k = np.arange(n)
    vander = o[None, :] ** k[:, None] / np.array([math.factorial(i) for i in k])[:, None]
    rhs = np.zeros(n)
    rhs[deriv] = 1.0
    return np.linalg.solve(vander, rhs)


def _periodic_stencil(n, weights, scale):
    half = len(weights) // 2
    if n <= 2 * half:
        raise InvalidInputError(f"grid with {n} nodes too small for a {len(weights)}-point stencil")
    rows, cols, vals = [], [], []
    idx = np.arange(n)
    for j, w in enumerate(weights):
        if w == 0.0:
            continue
        rows.append(idx)
        cols.append((idx + j - half) % n)
        vals.append(np.full(n, w * scale))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


def _onesided_d1(n, dx):
    half = 3
    if n < 7:
        raise InvalidInputError("one-sided 6th-order closure needs at least 7 nodes")
    lil = sp.lil_matrix((n, n))
    for i in range(n):
        if i < half:
            cols = np.arange(7)
        elif i >= n - half:
            cols = np.arange(n - 7, n)
        else:
            cols = np.arange(i - half, i + half + 1)
        w = CENTRAL_D1 if half <= i < n - half else fd_weights(cols - i, 1)
        lil[i, cols] = w / dx
    return lil.tocsr()


@dataclass(frozen=True)
class DiffOps:
    d1: sp.csr_matrix
    d2: sp.csr_matrix
    d1_onesided: sp.csr_matrix

    @classmethod
    def from_grid(cls, grid):
        n, dx = grid.n_x, grid.dx
        return cls(
            d1=_periodic_stencil(n, CENTRAL_D1, 1.0 / dx),
            d2=_periodic_stencil(n, CENTRAL_D2, 1.0 / dx**2),
            d1_onesided=_onesided_d1(n, dx),
        )

    @property
    def n_x(self):
        return self.d1.shape[0]


def _check_finite(a, name):
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} contains non-finite entries")


def arrhenius_rate(temp_rel, beta):
    """exp(-beta / T) for T > 0, else 0 (T relative to ambient)."""
    t = np.asarray(temp_rel, dtype=float)
    _check_finite(t, "temp_rel")
    if not beta > 0:
        raise InvalidInputError(f"beta must be positive, got {beta}")
    return _rate(t, beta)


def _rate(t, beta):
    # the clamp keeps the division finite; the result for T <= 0 is masked to 0
    return np.exp(-beta / np.maximum(t, 1e-300)) * (t > 0.0)


def nonlinearity_f(smf, temp_rel, beta):
    smf = np.asarray(smf, dtype=float)
    temp_rel = np.asarray(temp_rel, dtype=float)
    if smf.shape != temp_rel.shape:
        raise DimensionError(f"smf {smf.shape} and temp_rel {temp_rel.shape} differ")
    return smf * arrhenius_rate(temp_rel, beta)


def reduced_nonlinearity(gathered, beta):
    """f restricted to interpolation rows: input ``[T_1..T_m, S_1..S_m]``, output length m."""
    m = gathered.shape[0] // 2
    return gathered[m:] * _rate(gathered[:m], beta)


def fom_rhs(state, params, ops):
    """Time derivative of ``state`` as a :class:`FullState`."""
    if state.n_x != ops.n_x:
        raise DimensionError(f"state has {state.n_x} nodes, operators {ops.n_x}")
    T, S = state.temp_rel, state.smf
    f = nonlinearity_f(S, T, params.beta)
    dT = (params.k * (ops.d2 @ T) - params.v * (ops.d1 @ T)
          - params.alpha * params.gamma * T + params.alpha * f)
    dS = -params.gamma_s * f
    return FullState(dT, dS)


def affine_operators(ops):
    """The matrices A_nu (n x n, n = 2 n_x) with A(mu) = sum_nu q_nu(mu) A_nu.

    Channels: diffusion ``D2``, advection ``-D1``, heat loss ``-I``; all act on
    the temperature block only.
    """
    n_x = ops.n_x
    zero = sp.csr_matrix((n_x, n_x))
    blocks = [ops.d2, -ops.d1, -sp.identity(n_x, format="csr")]
    return [sp.bmat([[b, zero], [zero, zero]], format="csr") for b in blocks]


class FullOrderModel:
    """Fast right-hand side ``z -> A(mu) z + F(z, mu)`` for the integrator."""

    def __init__(self, grid, params, ops=None):
        self.grid = grid
        self.params = params
        self.ops = ops if ops is not None else DiffOps.from_grid(grid)
        n_x = grid.n_x
        self.n_x = n_x
        self._a_temp = (params.k * self.ops.d2 - params.v * self.ops.d1
                        - params.alpha * params.gamma * sp.identity(n_x, format="csr")).tocsr()

    def rhs(self, t, z):
        n_x = self.n_x
        T = z[:n_x]
        f = z[n_x:] * _rate(T, self.params.beta)
        out = np.empty_like(z)
        out[:n_x] = self._a_temp @ T + self.params.alpha * f
        out[n_x:] = -self.params.gamma_s * f
        return out

    def nonlinearity(self, z):
        n_x = self.n_x
        return z[n_x:] * _rate(z[:n_x], self.params.beta)


def initial_condition_gaussian(grid):
    x = grid.x
    return FullState(1200.0 * np.exp(-((x - 500.0) ** 2) / 200.0), np.ones(grid.n_x))


def initial_condition_separated(params, grid, cache_dir=None, cfg=None):
    """State after 700 s of the Gaussian ignition at beta = 558.49 K.

    Only ``beta`` of ``params`` is overridden; the other coefficients are used
    as given.  With ``cache_dir`` the state is stored as a snapshot file keyed
    by grid size, beta and time and reused when present.
    """
    from .integrate import IntegratorConfig, solve_ivp

    run_params = params.with_beta(SEPARATED_IC_BETA)
    path = None
    if cache_dir is not None:
        key = f"ic_sep_nx{grid.n_x}_beta{SEPARATED_IC_BETA:g}_t{SEPARATED_IC_TIME:g}.smor"
        path = Path(cache_dir) / key
        if path.exists():
            z = snapio.read_matrix(path)[:, 0]
            return FullState.from_stacked(z)
    model = FullOrderModel(grid, run_params)
    z0 = initial_condition_gaussian(grid).stacked()
    sol = solve_ivp(model.rhs, z0, (0.0, SEPARATED_IC_TIME), [0.0, SEPARATED_IC_TIME],
                    cfg or IntegratorConfig())
    z = sol.states[:, -1]
    if path is not None:
        snapio.write_matrix(path, z)
        log.info("cached separated-waves initial condition at %s", path)
    return FullState.from_stacked(z)
