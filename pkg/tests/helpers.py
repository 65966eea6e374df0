"""Small synthetic reduced models shared by several test modules."""

import numpy as np

from firerom.fom import DiffOps, Grid1D, affine_operators
from firerom.model import PodRom, ReducedModel
from firerom.offline import detect_active_subspace, sample_path_tables
from firerom.shift import ShiftOperator, TransformedFrame


def unit(a):
    a = np.atleast_2d(np.asarray(a, dtype=float).T).T
    return a / np.linalg.norm(a, axis=0)


def gauss(x, c, w):
    return np.exp(-((x - c) / w) ** 2)


def advection_model(n_x=200, length=100.0, tail=0, p_max=10.0, dp=0.05, q=1):
    """Shifted model with smooth bump modes per frame and an optional POD tail in the smf block.

    With ``q = 2`` the second frame mirrors the first.
    """
    grid = Grid1D(length, n_x)
    ops = DiffOps.from_grid(grid)
    x = grid.x
    op = ShiftOperator(grid)
    frames = []
    centres = [0.6 * length, 0.4 * length][:q]
    for c in centres:
        frames.append(TransformedFrame(
            op,
            unit(np.column_stack([gauss(x, c, 4.0), (x - c) * gauss(x, c, 4.0)])),
            unit(gauss(x, c, 6.0)),
            unit(np.column_stack([gauss(x, c, 3.0), (x - c) * gauss(x, c, 3.0)])),
        ))
    rng = np.random.default_rng(11)
    if tail:
        pod_tail = np.zeros((2 * n_x, tail))
        pod_tail[n_x:], _ = np.linalg.qr(np.column_stack([gauss(x, length / 2, 20.0 + 5 * j) for j in range(tail)]))
        pod_nonlin, _ = np.linalg.qr(rng.standard_normal((n_x, 1)))
    else:
        pod_tail = np.zeros((2 * n_x, 0))
        pod_nonlin = np.zeros((n_x, 0))
    t = np.arange(5.0)
    paths = np.vstack([t, -t][:q])
    sub = detect_active_subspace(paths)
    table, sdeim = sample_path_tables(frames, pod_tail, pod_nonlin, affine_operators(ops), ops.d1_onesided,
                                      sub, p_max=p_max, dp=dp)
    r = sum(f.n_state_modes for f in frames) + tail
    model = ReducedModel(grid, frames, pod_tail, pod_nonlin, table, sdeim,
                         np.zeros(r), np.zeros(q), np.array(centres), None, {"note": "synthetic"})
    return model, ops


def identity_pod_rom(n_x):
    grid = Grid1D(50.0, n_x)
    ops = DiffOps.from_grid(grid)
    return PodRom.build(np.eye(2 * n_x), np.eye(n_x), affine_operators(ops), np.arange(n_x)), ops, grid
