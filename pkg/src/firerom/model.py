"""Offline payloads (POD-DEIM ROM, shifted ROM) and their file format."""

import hashlib
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import snapio
from .errors import DimensionError, FormatError
from .fom import Grid1D
from .offline import SampledMatrixTable, SdeimTable
from .shift import Extrapolation, ShiftOperator, TransformedFrame


@dataclass(frozen=True)
class PodRom:
    """POD-Galerkin ROM with DEIM for the Arrhenius term.

    ``deim_temp``/``deim_smf`` are ``V^T [U; 0] (S^T U)^{-1}`` and
    ``V^T [0; U] (S^T U)^{-1}``; the physical coupling (alpha, -gamma_s) is
    applied when binding parameters.
    """

    basis: np.ndarray
    A: np.ndarray
    deim_temp: np.ndarray
    deim_smf: np.ndarray
    gather: np.ndarray
    indices: np.ndarray

    @property
    def r(self):
        return self.basis.shape[1]

    @property
    def m(self):
        return self.indices.shape[0]

    @classmethod
    def build(cls, V, U, affine_ops, indices):
        V = np.asarray(V, dtype=float)
        n_x = U.shape[0]
        if V.shape[0] != 2 * n_x:
            raise DimensionError(f"state basis has {V.shape[0]} rows, nonlinearity basis {n_x}")
        idx = np.asarray(indices, dtype=np.int64)
        lu = sla.lu_factor(U[idx])

        def oblique(B):
            return sla.lu_solve(lu, B.T, trans=1).T

        return cls(
            basis=V,
            A=np.stack([V.T @ (Aop @ V) for Aop in affine_ops]),
            deim_temp=oblique(V[:n_x].T @ U),
            deim_smf=oblique(V[n_x:].T @ U),
            gather=V[np.concatenate([idx, idx + n_x])],
            indices=idx,
        )

    def project(self, z):
        return self.basis.T @ z

    def lift(self, a):
        return self.basis @ a


@dataclass(frozen=True)
class SwitchingData:
    t_switch: float
    pre: PodRom


@dataclass(frozen=True)
class ReducedModel:
    """Everything the online phase of the shifted ROM needs.

    Only ``table``, ``sdeim`` and the small vectors enter the online right-hand
    side; frames and POD tails are kept for lifting and for the handoff.
    """

    grid: Grid1D
    frames: list
    pod_tail: np.ndarray  # (2 n_x, r_pod) stacked POD modes
    pod_nonlin: np.ndarray  # (n_x, m_pod)
    table: SampledMatrixTable
    sdeim: SdeimTable
    a0: np.ndarray
    p0: np.ndarray
    origin: np.ndarray  # absolute front positions at zero path
    switching: SwitchingData = None
    meta: dict = field(default_factory=dict)

    @property
    def q(self):
        return len(self.frames)

    @property
    def r(self):
        return sum(f.n_state_modes for f in self.frames) + self.pod_tail.shape[1]

    @property
    def n_frame_modes(self):
        return sum(f.n_state_modes for f in self.frames)

    def frame_of_column(self):
        """Frame index of every coefficient, -1 for POD-tail columns."""
        out = []
        for rho, f in enumerate(self.frames):
            out += [rho] * f.n_state_modes
        out += [-1] * self.pod_tail.shape[1]
        return np.array(out, dtype=np.int64)

    def D(self, a_hat):
        """Block arrangement D(a) (r x q) of the frame coefficients."""
        out = np.zeros((self.r, self.q))
        col = self.frame_of_column()
        rows = np.nonzero(col >= 0)[0]
        out[rows, col[rows]] = a_hat[rows]
        return out


def _frame_arrays(frames):
    out = {}
    for i, f in enumerate(frames):
        out[f"frame{i}.temp"] = f.temp_modes
        out[f"frame{i}.smf"] = f.smf_modes
        out[f"frame{i}.nonlin"] = f.nonlin_modes
    return out


_TABLE_KEYS = ("M1", "M2", "N", "A1", "A2", "Vhat_temp", "Vhat_smf", "What_temp", "What_smf", "Vtilde")
_POD_KEYS = ("basis", "A", "deim_temp", "deim_smf", "gather", "indices")


def save_model(path, model):
    arrays = _frame_arrays(model.frames)
    arrays["pod_tail"] = model.pod_tail
    arrays["pod_nonlin"] = model.pod_nonlin
    for k in _TABLE_KEYS:
        arrays[f"table.{k}"] = getattr(model.table, k)
    for i, ax in enumerate(model.table.axes):
        arrays[f"table.axis{i}"] = ax
    if model.table.direction is not None:
        arrays["table.direction"] = model.table.direction
    arrays["sdeim.indices"] = model.sdeim.indices
    arrays["sdeim.gather_rows"] = model.sdeim.gather_rows
    arrays["sdeim.det"] = model.sdeim.det
    arrays["a0"] = model.a0
    arrays["p0"] = model.p0
    arrays["origin"] = model.origin
    meta = {
        "kind": "shifted_rom",
        "grid": {"length_m": model.grid.length_m, "n_x": model.grid.n_x, "periodic": model.grid.periodic},
        "extrapolation": model.frames[0].shift_op.extrapolation.value,
        "n_frames": model.q,
        "n_axes": len(model.table.axes),
        "switching": None,
        "meta": model.meta,
    }
    if model.switching is not None:
        meta["switching"] = {"t_switch": model.switching.t_switch}
        for k in _POD_KEYS:
            arrays[f"pre.{k}"] = getattr(model.switching.pre, k)
    snapio.write_container(path, arrays, meta)


def load_model(path):
    arrays, meta = snapio.read_container(path)
    if meta.get("kind") != "shifted_rom":
        raise FormatError(f"{path}: not a reduced model file")
    g = meta["grid"]
    grid = Grid1D(g["length_m"], g["n_x"], g["periodic"])
    op = ShiftOperator(grid, Extrapolation(meta["extrapolation"]))
    frames = [TransformedFrame(op, arrays[f"frame{i}.temp"], arrays[f"frame{i}.smf"], arrays[f"frame{i}.nonlin"])
              for i in range(meta["n_frames"])]
    table = SampledMatrixTable(
        axes=tuple(arrays[f"table.axis{i}"] for i in range(meta["n_axes"])),
        direction=arrays.get("table.direction"),
        **{k: arrays[f"table.{k}"] for k in _TABLE_KEYS},
    )
    sdeim = SdeimTable(arrays["sdeim.indices"], arrays["sdeim.gather_rows"], arrays["sdeim.det"])
    switching = None
    if meta["switching"] is not None:
        pre = PodRom(**{k: arrays[f"pre.{k}"] for k in _POD_KEYS})
        switching = SwitchingData(meta["switching"]["t_switch"], pre)
    return ReducedModel(grid, frames, arrays["pod_tail"], arrays["pod_nonlin"], table, sdeim,
                        arrays["a0"], arrays["p0"], arrays["origin"], switching, meta["meta"])


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
