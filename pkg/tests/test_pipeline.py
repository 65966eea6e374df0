"""Desk-scale (n_x = 750) checks of the offline builds and the POD-DEIM baseline."""

import numpy as np
import pytest

from firerom.decomp import pod
from firerom.fom import (DiffOps, FireParams, Grid1D, initial_condition_gaussian, nonlinearity_f)
from firerom.harness import (ExperimentConfig, build_offline, generate_training_data,
                             load_training_data, pareto_compare, run_rom)
from firerom.metrics import relative_errors
from firerom.offline import build_frame_bases
from firerom.pipeline import (_comoving, _paths_for, build_pod_rom, generate_snapshots,
                              offline_error, snapshot_times)
from firerom.shift import ShiftOperator

BETA = 558.49


def test_snapshot_times():
    t = snapshot_times(1400.0, 1.0)
    assert t.size == 1401 and t[0] == 0.0 and t[-1] == 1400.0
    assert np.array_equal(snapshot_times(10.0, 3.0), [0.0, 3.0, 6.0, 9.0, 10.0])
    assert snapshot_times(2100.0, 1.0).size == 2101


@pytest.fixture(scope="module")
def gauss_run():
    grid = Grid1D(1000.0, 750)
    z0 = initial_condition_gaussian(grid).stacked()
    return grid, generate_snapshots(grid, FireParams(), z0, 200.0, 1.0)


def test_nonlinearity_snapshots_evaluated_on_states(gauss_run):
    grid, snap = gauss_run
    for j in (0, 50, 200):
        assert np.array_equal(snap.nonlin[:, j], nonlinearity_f(snap.smf[:, j], snap.temp[:, j], BETA))


def test_smf_non_increasing_along_fom_trajectory(gauss_run):
    grid, snap = gauss_run
    assert np.max(np.diff(snap.smf, axis=1)) <= 1e-10


def test_fom_symmetric_about_midpoint(gauss_run):
    grid, snap = gauss_run
    n = grid.n_x
    mirror = (n - np.arange(n)) % n  # x_i -> 1000 - x_i about x = 500
    T = snap.temp
    assert np.max(np.abs(T[mirror] - T)) <= 1e-6 * np.abs(T).max()


@pytest.fixture(scope="module")
def desk_sep(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk_sep")
    cfg = ExperimentConfig.for_case("separated_waves", "desk", out_dir=str(out), train_betas=(BETA,),
                                    test_betas=(BETA,), repeats=1)
    snaps = load_training_data(cfg, generate_training_data(cfg))
    return cfg, snaps


def test_training_manifest(desk_sep):
    cfg, snaps = desk_sep
    man = generate_training_data(cfg)
    assert [e["beta"] for e in man["entries"]] == [BETA]
    e = man["entries"][0]
    assert e["status"] == "ok" and e["states"].endswith(".states.smor") and e["nonlin"].endswith(".nonlin.smor")
    assert snaps[0].states.shape == (1500, 1401) and snaps[0].nonlin.shape == (750, 1401)


def test_offline_error_non_increasing_in_modes(desk_sep):
    cfg, snaps = desk_sep
    ops = DiffOps.from_grid(cfg.grid)
    op = ShiftOperator(cfg.grid)
    paths = _paths_for(snaps, ops, cfg.grid.dx, "full_linear", 1.0)
    every = {v: (lambda s: slice(None)) for v in ("T", "S", "f")}
    data = _comoving(snaps, paths, op, every)
    errs = []
    for r in (1, 2, 3, 4):
        frames = build_frame_bases(data["T"], data["S"], data["f"], r, 2 * r, op)
        errs.append(offline_error(frames, snaps[0], paths[0], op))
    for (t0, s0), (t1, s1) in zip(errs, errs[1:]):
        assert t1 <= t0 and s1 <= s0


def test_separated_model_structure(desk_sep):
    cfg, snaps = desk_sep
    model, info = build_offline(cfg.__class__(**{**cfg.__dict__, "n_modes": 1}), snaps)
    assert model.r == 4 and model.q == 2
    assert info.subspace.is_reduced
    assert np.allclose(np.abs(info.subspace.direction), 1 / np.sqrt(2), atol=1e-8)
    # right-going frame travels to larger x, left-going to smaller
    p = info.paths[0].smooth_paths
    assert p[0, -1] > 100 and p[1, -1] < -100
    assert np.all(np.diff(p[0]) >= 0)
    assert model.table.axes[0][0] == 0.0 and model.table.axes[0][-1] <= cfg.p_max + 1e-9
    assert model.meta["config_digest"] == cfg.__class__(**{**cfg.__dict__, "n_modes": 1}).digest()
    for fr in model.frames:
        assert fr.nonlin_modes.shape[1] == 2 * fr.temp_modes.shape[1]


def test_pod_deim_fails_on_transport(desk_sep):
    cfg, snaps = desk_sep
    rows = pareto_compare(cfg, [2], [60, 80, 100, 120], BETA, snaps=snaps)
    pod_rows = [r for r in rows if r["method"] == "pod_deim"]
    spod = [r for r in rows if r["method"] == "spod_sdeim"][0]
    errs = [r["err_temp"] for r in pod_rows]
    # order one error at 60 modes
    assert 0.3 <= errs[0] <= 3.0
    # non-increasing in the mode count up to 5 % noise
    assert all(b <= 1.05 * a for a, b in zip(errs, errs[1:]))
    assert all(r["dof"] >= 60 for r in pod_rows) and spod["dof"] <= 34
    # shifted model at 10 DOF dominates POD-DEIM at 120 modes
    assert spod["dof"] == 10
    assert 10 * spod["err_temp"] <= pod_rows[-1]["err_temp"]


def test_pod_rom_basis_blocks(desk_sep):
    cfg, snaps = desk_sep
    ops = DiffOps.from_grid(cfg.grid)
    rom = build_pod_rom(snaps, 5, 10, ops)
    n = cfg.grid.n_x
    V = rom.basis
    assert V.shape == (2 * n, 10) and rom.m == 10
    assert np.allclose(V.T @ V, np.eye(10), atol=1e-10)
    assert np.all(V[n:, :5] == 0) and np.all(V[:n, 5:] == 0)
    ref = pod(snaps[0].temp, rank=5).modes
    assert np.allclose(V[:n, :5], ref, atol=1e-10)


@pytest.fixture(scope="module")
def desk_gauss(tmp_path_factory):
    out = tmp_path_factory.mktemp("desk_gauss")
    cfg = ExperimentConfig.for_case("gaussian", "desk", out_dir=str(out), repeats=1)
    snaps = load_training_data(cfg, generate_training_data(cfg))
    model, info = build_offline(cfg, snaps)
    return cfg, snaps, model, info


def test_gaussian_model_structure(desk_gauss):
    cfg, snaps, model, info = desk_gauss
    assert model.switching is not None and model.switching.t_switch == 100.0
    assert model.switching.pre.r == 28 and model.switching.pre.m == 28
    assert model.pod_tail.shape[1] == 4 and model.pod_nonlin.shape[1] == 4
    assert model.r == 2 * 2 * cfg.n_modes + 4
    for et, es in info.offline_errors:
        assert et < 1e-2 and es < 1e-2
    # paths: raw head, linear tail after 1.5 % of the interval
    p = info.paths[0]
    k = np.searchsorted(p.times, 0.015 * 2100.0)
    assert np.array_equal(p.smooth_paths[:, :k], p.raw_paths[:, :k])


def test_gaussian_switched_run_desk(desk_gauss):
    cfg, snaps, model, info = desk_gauss
    times = snapshot_times(cfg.t_f, cfg.snapshot_dt)
    z0 = snaps[0].states[:, 0]
    states, wall, extras = run_rom(cfg, model, 560.0, times, z0)
    assert states.shape == snaps[1].states.shape and np.all(np.isfinite(states))
    assert extras["handoff_residual"] < 0.05
    et, es = relative_errors(snaps[1].states, states, times, cfg.grid.n_x)
    assert np.isfinite(et) and np.isfinite(es)
