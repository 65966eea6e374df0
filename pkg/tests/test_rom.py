import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from dataclasses import replace

from helpers import advection_model, gauss, identity_pod_rom, unit

from firerom.errors import DimensionError, TrackingError
from firerom.fom import FireParams, FullState, affine_operators, fom_rhs
from firerom.model import PodRom, SwitchingData
from firerom.rom import (BoundPodRom, BoundTransformedRom, ReducedState, _lookup, handoff,
                         initial_reduced_state, lift, mass_matrix, pod_rom_rhs, run_pod,
                         run_switched, run_trom, trom_rhs)
from firerom.integrate import IntegratorConfig
from firerom.offline import front_positions
from firerom.shift import assemble_V_W

ADVECT = FireParams(k=0.0, v=2.0, alpha=0.0, gamma=0.0, gamma_s=0.0)


@pytest.fixture(scope="module")
def adv():
    return advection_model()


@pytest.fixture(scope="module")
def adv_tail():
    return advection_model(tail=2)


@pytest.fixture(scope="module")
def two_frame():
    return advection_model(q=2, tail=1, p_max=20.0, dp=0.5)


# ---------------------------------------------------------------- POD-DEIM


def test_full_order_pod_rom_equals_fom():
    n_x = 24
    rom, ops, grid = identity_pod_rom(n_x)
    rng = np.random.default_rng(0)
    z = np.concatenate([rng.uniform(-20, 900, n_x), rng.uniform(0, 1, n_x)])
    p = FireParams(v=0.3)
    ref = fom_rhs(FullState.from_stacked(z), p, ops).stacked()
    assert np.linalg.norm(pod_rom_rhs(z, p, rom) - ref) <= 1e-12 * np.linalg.norm(ref)
    assert np.linalg.norm(BoundPodRom(rom, p).rhs(0.0, z) - ref) <= 1e-12 * np.linalg.norm(ref)


def test_pod_rom_cold_state_is_linear():
    n_x = 24
    rom, ops, grid = identity_pod_rom(n_x)
    z = np.concatenate([-np.linspace(1, 5, n_x), np.ones(n_x)])
    p = FireParams()
    A = sum(w * Ak.toarray() for w, Ak in zip(p.affine_weights(), affine_operators(ops)))
    assert np.array_equal(pod_rom_rhs(z, p, rom), np.tensordot(p.affine_weights(), rom.A, axes=1) @ z)
    assert np.allclose(pod_rom_rhs(z, p, rom), A @ z, atol=1e-12)


def test_pod_rom_dimension_check():
    rom, *_ = identity_pod_rom(8)
    with pytest.raises(DimensionError):
        pod_rom_rhs(np.zeros(3), FireParams(), rom)


def test_pod_rom_projection_on_random_basis():
    n_x = 30
    _, ops, grid = identity_pod_rom(n_x)
    rng = np.random.default_rng(1)
    V, _ = np.linalg.qr(rng.standard_normal((2 * n_x, 6)))
    U, _ = np.linalg.qr(rng.standard_normal((n_x, 5)))
    rom = PodRom.build(V, U, affine_operators(ops), np.array([0, 4, 9, 17, 25]))
    assert rom.r == 6 and rom.m == 5 and rom.A.shape == (3, 6, 6)
    a = rng.standard_normal(6)
    assert np.allclose(rom.project(rom.lift(a)), a, atol=1e-12)


# ---------------------------------------------------------------- shifted ROM


def test_pure_advection_rhs(adv):
    model, ops = adv
    a = np.array([1.0, 0.0, 0.0])
    d = trom_rhs(ReducedState(a, np.zeros(1)), ADVECT, model)
    assert d.p[0] == pytest.approx(ADVECT.v, rel=1e-3)
    assert np.max(np.abs(d.a_hat)) <= 1e-3 * ADVECT.v


def test_pure_advection_trajectory(adv):
    model, ops = adv
    y0 = np.array([1.0, 0.0, 0.0, 0.0])
    tr = run_trom(model, ADVECT, (0.0, 1.0), [0.5, 1.0], IntegratorConfig(rtol=1e-8, atol=1e-10), y0=y0)
    assert tr.paths[0, -1] == pytest.approx(ADVECT.v * 1.0, rel=1e-3)
    assert np.allclose(tr.coeffs[:, -1], [1.0, 0.0, 0.0], atol=1e-3)
    # lifted state is the translated profile
    x = model.grid.x
    want = unit(gauss(x, 60.0 + ADVECT.v, 4.0))[:, 0]
    got = lift(model, tr.coeffs[:, -1], tr.paths[:, -1])[: model.grid.n_x]
    assert np.linalg.norm(got - want) <= 1e-3 * np.linalg.norm(want)


def test_mass_matrix_symmetry(two_frame):
    model, ops = two_frame
    rng = np.random.default_rng(4)
    for _ in range(10):
        a = rng.standard_normal(model.r)
        p = rng.uniform(0, 20) * np.array([1.0, -1.0])
        T = _lookup(model.table, p)
        M = mass_matrix(T["M1"], T["M2"], T["N"], model.D(a))
        assert np.allclose(M, M.T, atol=1e-10 * np.abs(M).max())


def test_D_excludes_pod_tail(two_frame):
    model, ops = two_frame
    a = np.arange(1.0, model.r + 1)
    D = model.D(a)
    assert D.shape == (model.r, 2)
    assert np.array_equal(D[:3, 0], a[:3]) and np.array_equal(D[3:6, 1], a[3:6])
    assert np.all(D[6:] == 0.0)
    a2 = a.copy()
    a2[6:] += 5.0
    assert np.array_equal(model.D(a2), D)


def test_pod_tail_path_freeze(adv_tail):
    # tail lives in the smf block, which the linear part ignores, and f = 0:
    # changing tail coefficients must not change the path velocity
    model, ops = adv_tail
    a = np.array([1.0, 0.2, 0.0, 0.0, 0.0])
    base = trom_rhs(ReducedState(a, np.array([1.0])), ADVECT, model)
    for eps in (1e-3, 1e-1):
        b = a.copy()
        b[3:] += eps
        pert = trom_rhs(ReducedState(b, np.array([1.0])), ADVECT, model)
        assert pert.p[0] == pytest.approx(base.p[0], rel=1e-9, abs=1e-12)


def test_vanishing_frame_amplitude_regularised(adv_tail):
    model, ops = adv_tail
    a = np.array([0.0, 0.0, 0.0, 0.5, -0.2])
    params = FireParams(v=1.0)
    d = trom_rhs(ReducedState(a, np.array([2.0])), params, model)
    assert d.p[0] == 0.0 or abs(d.p[0]) < 1e-12
    T = _lookup(model.table, np.array([2.0]))
    A1 = np.tensordot(params.affine_weights(), T["A1"], axes=1)
    fv = np.zeros(T["Vtilde"].shape[0] // 2)
    expected = np.linalg.lstsq(T["M1"], A1 @ a, rcond=None)[0]
    assert np.allclose(d.a_hat, expected, atol=1e-10)
    # compiled path agrees
    bound = BoundTransformedRom(model, params)
    y = np.concatenate([a, [2.0]])
    assert np.allclose(bound.rhs(0.0, y), d.stacked(), atol=1e-10)
    assert bound.n_fallback == 1


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 20.0))
def test_compiled_kernel_matches_reference(two_frame, seed, c):
    model, ops = two_frame
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(model.r)
    a[[0, 3]] = rng.uniform(0.5, 2.0, 2)  # frames carry amplitude
    a[:3] *= 400.0  # hot temperature so the Arrhenius branch is active
    p = c * np.array([1.0, -1.0])
    params = FireParams(beta=rng.uniform(540, 580))
    ref = trom_rhs(ReducedState(a, p), params, model).stacked()
    got = BoundTransformedRom(model, params).rhs(0.0, np.concatenate([a, p]))
    assert np.allclose(got, ref, rtol=1e-8, atol=1e-8 * np.abs(ref).max())


def test_interpolated_lookup_at_samples(two_frame):
    model, ops = two_frame
    for k in (0, 3, 7):
        p = model.table.axes[0][k] * np.array([1.0, -1.0])
        a = _lookup(model.table, p, interpolate=True)
        b = _lookup(model.table, p)
        for key in ("M1", "N", "A1"):
            assert np.allclose(a[key], b[key], atol=1e-12)


def test_trom_dimension_check(adv):
    model, ops = adv
    with pytest.raises(DimensionError):
        trom_rhs(ReducedState(np.zeros(2), np.zeros(1)), ADVECT, model)


def test_initial_projection_roundtrip(two_frame):
    model, ops = two_frame
    rng = np.random.default_rng(8)
    a = rng.standard_normal(model.r)
    p = np.array([3.3, -3.3])
    z = lift(model, a, p)
    a_back, resid = initial_reduced_state(model, z, p)
    assert np.allclose(a_back, a, atol=1e-9)
    assert resid < 1e-12
    V, _ = assemble_V_W(model.frames, model.pod_tail, p, ops.d1_onesided)
    assert np.allclose(z, V @ a, atol=1e-12)


# ---------------------------------------------------------------- switching


def _switching_model(two_frame, t_switch):
    model, ops = two_frame
    n_x = model.grid.n_x
    x = model.grid.x
    rng = np.random.default_rng(2)
    V = np.zeros((2 * n_x, 4))
    V[:n_x, :2] = unit(np.column_stack([gauss(x, 50.0, 10.0), gauss(x, 50.0, 20.0)]))
    V[n_x:, 2:] = unit(np.column_stack([np.ones(n_x), gauss(x, 50.0, 15.0)]))
    V[:, :2], _ = np.linalg.qr(V[:, :2])
    V[:, 2:], _ = np.linalg.qr(V[:, 2:])
    U, _ = np.linalg.qr(np.column_stack([gauss(x, 50.0, w) for w in (5.0, 10.0, 20.0)]))
    from firerom.decomp import qdeim_points
    pre = PodRom.build(V, U, affine_operators(ops), qdeim_points(U).indices)
    return replace(model, switching=SwitchingData(t_switch, pre)), pre


def test_switch_at_final_time_is_pure_pod(two_frame):
    model, pre = _switching_model(two_frame, 5.0)
    n_x = model.grid.n_x
    z0 = np.concatenate([600 * gauss(model.grid.x, 50.0, 10.0), np.ones(n_x)])
    times = np.arange(0.0, 6.0)
    params = FireParams()
    sw = run_switched(model, params, 5.0, times, z0)
    direct = run_pod(pre, params, pre.project(z0), (0.0, 5.0), times)
    assert np.array_equal(sw.states, pre.lift(direct.coeffs))
    assert sw.handoff_residual == 0.0


def test_handoff_tracks_and_projects(two_frame):
    model, ops = two_frame
    a = np.zeros(model.r)
    a[0], a[3] = 500.0, 500.0
    # odd modes skew each wave so that its outer flank is the steepest
    a[1], a[4] = -300.0, 300.0
    a[2], a[5] = 0.3, 0.3
    # origin as the offline stage sets it: front positions at zero path
    origin = front_positions(lift(model, a, np.zeros(2))[: model.grid.n_x], ops.d1, model.grid.dx)
    m = replace(model, origin=origin)
    p = np.array([4.0, -4.0])  # whole grid cells
    z = lift(m, a, p)
    a_h, p_h, resid = handoff(m, z)
    assert np.array_equal(p_h, p)
    assert np.allclose(a_h, a, atol=1e-8 * np.abs(a).max())
    assert resid < 1e-12


def test_handoff_flat_state_fails(two_frame):
    model, ops = two_frame
    with pytest.raises(TrackingError, match="t_switch"):
        handoff(model, np.concatenate([np.zeros(model.grid.n_x), np.ones(model.grid.n_x)]))


def test_run_switched_requires_switching(two_frame):
    model, ops = two_frame
    with pytest.raises(DimensionError):
        run_switched(model, FireParams(), 1.0, [1.0], np.zeros(2 * model.grid.n_x))


def test_run_switched_two_phases(two_frame):
    model, pre = _switching_model(two_frame, 2.0)
    n_x = model.grid.n_x
    x = model.grid.x
    z0 = np.concatenate([600 * gauss(x, 50.0, 10.0), np.ones(n_x)])
    times = np.arange(0.0, 5.0)
    sw = run_switched(model, FireParams(), 4.0, times, z0)
    assert sw.states.shape == (2 * n_x, times.size)
    assert np.all(np.isfinite(sw.states))
    assert np.all(np.isnan(sw.paths[:, :3])) and np.all(np.isfinite(sw.paths[:, 3:]))
    assert sw.handoff_residual is not None and sw.handoff_residual >= 0
