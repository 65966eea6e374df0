import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from firerom.errors import (DivergenceError, InvalidInputError, StepBudgetError,
                            StepSizeUnderflowError)
from firerom.integrate import IntegratorConfig, solve_ivp


def test_zero_rhs_keeps_state():
    sol = solve_ivp(lambda t, y: np.zeros_like(y), [1.0, 2.0], [0.0, 1.0], [0.0, 1.0])
    assert np.array_equal(sol.states, [[1.0, 1.0], [2.0, 2.0]])
    assert sol.states.shape[1] == sol.times.size


def test_exponential_decay():
    cfg = IntegratorConfig(rtol=1e-8, atol=1e-12)
    sol = solve_ivp(lambda t, y: -y, [1.0], [0.0, 1.0], [1.0], cfg)
    assert abs(sol.states[0, -1] - math.exp(-1)) < 1e-7


def test_quadrature_of_cosine():
    cfg = IntegratorConfig(rtol=1e-8, atol=1e-12)
    sol = solve_ivp(lambda t, y: np.array([math.cos(t)]), [0.0], [0.0, math.pi / 2], [math.pi / 2], cfg)
    assert abs(sol.states[0, -1] - 1.0) < 1e-7


def test_output_times_hit_exactly():
    times = np.linspace(0.0, 3.0, 31)
    sol = solve_ivp(lambda t, y: -y, [1.0], [0.0, 3.0], times, IntegratorConfig(rtol=1e-9, atol=1e-12))
    assert np.array_equal(sol.times, times)
    assert np.max(np.abs(sol.states[0] - np.exp(-times))) < 1e-8


def test_error_decreases_with_rtol():
    errs = []
    for rtol in [1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10]:
        sol = solve_ivp(lambda t, y: -y, [1.0], [0.0, 1.0], [1.0], IntegratorConfig(rtol=rtol, atol=1e-14))
        errs.append(abs(sol.states[0, -1] - math.exp(-1)))
    floor = 1e-15
    for a, b in zip(errs, errs[1:]):
        assert b <= a or b < floor


def test_harmonic_oscillator_matches_closed_form():
    cfg = IntegratorConfig(rtol=1e-9, atol=1e-12)
    t = np.linspace(0, 10, 11)
    sol = solve_ivp(lambda t, y: np.array([y[1], -y[0]]), [0.0, 1.0], [0.0, 10.0], t, cfg)
    assert np.max(np.abs(sol.states[0] - np.sin(t))) < 1e-7
    assert np.max(np.abs(sol.states[1] - np.cos(t))) < 1e-7


@settings(max_examples=20, deadline=None)
@given(st.floats(-3.0, 3.0), st.floats(0.1, 2.0))
def test_linear_scalar_property(lam, tf):
    cfg = IntegratorConfig(rtol=1e-9, atol=1e-12)
    sol = solve_ivp(lambda t, y: lam * y, [2.0], [0.0, tf], [tf], cfg)
    exact = 2.0 * math.exp(lam * tf)
    assert abs(sol.states[0, -1] - exact) <= 1e-6 * abs(exact)


def test_deterministic():
    rhs = lambda t, y: np.array([y[1], -math.sin(y[0])])
    a = solve_ivp(rhs, [1.0, 0.0], [0.0, 20.0], np.arange(21.0))
    b = solve_ivp(rhs, [1.0, 0.0], [0.0, 20.0], np.arange(21.0))
    assert np.array_equal(a.states, b.states)
    assert (a.n_accepted, a.n_rejected) == (b.n_accepted, b.n_rejected)


def test_config_validation():
    with pytest.raises(InvalidInputError):
        IntegratorConfig(rtol=0.0)
    with pytest.raises(InvalidInputError):
        IntegratorConfig(h_init=1.0, h_max=0.5)
    with pytest.raises(InvalidInputError):
        IntegratorConfig(max_steps=0)


def test_input_validation():
    f = lambda t, y: y
    with pytest.raises(InvalidInputError):
        solve_ivp(f, [1.0], [0.0, 1.0], [0.5, 0.2])
    with pytest.raises(InvalidInputError):
        solve_ivp(f, [1.0], [0.0, 1.0], [2.0])
    with pytest.raises(InvalidInputError):
        solve_ivp(f, [1.0], [1.0, 1.0], [1.0])


def test_budget_error():
    with pytest.raises(StepBudgetError):
        solve_ivp(lambda t, y: -y, [1.0], [0.0, 100.0], [100.0],
                  IntegratorConfig(h_init=1e-3, h_max=1e-3, max_steps=10))


def test_divergence_error():
    with pytest.raises(DivergenceError):
        solve_ivp(lambda t, y: y, [np.nan], [0.0, 1.0], [1.0])


def test_blowup_fails_cleanly():
    # y' = y^2 blows up at t = 1
    with pytest.raises((StepSizeUnderflowError, DivergenceError)):
        solve_ivp(lambda t, y: y**2, [1.0], [0.0, 2.0], [2.0])
