import numpy as np
import pytest
from hypothesis import given, settings

from mfnash.model import LqGameSpec, TimeGrid, reference_spec, zero_cost_spec
from mfnash.riccati import (BlowUp, GridMismatch, feedback_gains, gains_to_csv,
                            mean_state_closed_form, mean_state_ode, solve_alpha, solve_riccati,
                            tables_to_csv)
from oracles import riccati_dense
from strategies import lq_specs

# initial values on the benchmark game, N = 2000, frozen from this solver and
# matched against an adaptive DOP853 integration (rtol 1e-12)
GOLDEN_T0 = {
    "alpha1": 0.9417661843260174, "alpha2": 0.5582338156739826,
    "tau1": 0.8950680733545099, "tau2": 0.44753403667725494,
    "delta1": 0.046698110971507355, "delta2": 0.11069977899672838,
}


@pytest.fixture(scope="module")
def s1_tables():
    return solve_riccati(reference_spec(), TimeGrid(1.0, 2000))


def test_golden_values(s1_tables):
    for name, value in GOLDEN_T0.items():
        assert getattr(s1_tables, name)[0] == pytest.approx(value, abs=1e-13)


def test_against_independent_integrator(s1_tables):
    sol = riccati_dense(reference_spec())
    ref = sol.sol(s1_tables.grid.nodes)
    names = ("alpha1", "alpha2", "tau1", "tau2", "delta1", "delta2")
    for row, name in zip(ref, names):
        assert np.max(np.abs(getattr(s1_tables, name) - row)) < 1e-11


def test_terminal_conditions_and_gains(s1_tables):
    spec = reference_spec()
    t = s1_tables
    assert (t.alpha1[-1], t.alpha2[-1]) == (spec.h1 + spec.hbar1, spec.h2 + spec.hbar2)
    assert (t.tau1[-1], t.tau2[-1]) == (spec.h1, spec.h2)
    gains = feedback_gains(spec, t)
    assert gains.k_hat1[-1] == -1.0 and gains.k_hat2[-1] == -0.5
    assert np.allclose(gains.k_mean1, -t.delta1)


@settings(max_examples=30, deadline=None)
@given(lq_specs())
def test_identity_alpha_equals_tau_plus_delta(spec):
    # delta is integrated on its own, so the identity holds up to RK4 truncation
    assert solve_riccati(spec, TimeGrid(spec.horizon, 2000)).identity_residual() < 1e-8


@settings(max_examples=30, deadline=None)
@given(lq_specs())
def test_nonnegative_weights_keep_tables_nonnegative(spec):
    t = solve_riccati(spec, TimeGrid(spec.horizon, 200))
    assert t.tau1.min() >= -1e-12 and t.tau2.min() >= -1e-12
    assert t.alpha1.min() >= -1e-12 and t.alpha2.min() >= -1e-12


def test_symmetric_players_share_tables():
    spec = reference_spec().replace(g2=1.0, gbar2=0.1, h2=1.0)
    t = solve_riccati(spec, TimeGrid(1.0, 100))
    assert np.array_equal(t.alpha1, t.alpha2) and np.array_equal(t.delta1, t.delta2)


def test_zero_cost_game_has_zero_tables():
    spec = zero_cost_spec()
    t = solve_riccati(spec, TimeGrid(1.0, 50))
    for name in ("alpha1", "alpha2", "tau1", "tau2", "delta1", "delta2"):
        assert not np.any(getattr(t, name))
    # with no feedback the mean grows at rate a + abar
    assert np.allclose(t.ex_mean, np.exp(0.15 * t.grid.nodes), rtol=1e-10)


def test_time_varying_coefficients_converge():
    spec = reference_spec().replace(a=lambda t: 0.1 + 0.3 * np.sin(4 * t), g1=[1.0, 2.0, 0.5])
    coarse = solve_riccati(spec, TimeGrid(1.0, 100))
    fine = solve_riccati(spec, TimeGrid(1.0, 800))
    assert np.max(np.abs(coarse.alpha1 - fine.alpha1[::8])) < 1e-6
    assert coarse.identity_residual() < 1e-8


def test_mean_path_two_routes(s1_tables):
    spec = reference_spec()
    alpha = (s1_tables.alpha1, s1_tables.alpha2)
    closed = mean_state_closed_form(spec, alpha, s1_tables.grid)
    assert np.max(np.abs(closed / s1_tables.ex_mean - 1)) < 1e-8
    assert np.allclose(mean_state_ode(spec, alpha, s1_tables.grid), s1_tables.ex_mean)


def test_mean_path_rejects_wrong_grid(s1_tables):
    with pytest.raises(GridMismatch):
        mean_state_closed_form(reference_spec(), (s1_tables.alpha1, s1_tables.alpha2), TimeGrid(1.0, 10))


def test_negative_terminal_weight_blows_up():
    spec = reference_spec().replace(horizon=3.0, h1=-5.0, h2=-5.0)
    with pytest.raises(BlowUp) as err:
        solve_alpha(spec, TimeGrid(3.0, 3000))
    assert 0.0 <= err.value.t < 3.0


def test_csv_layout(s1_tables):
    text = tables_to_csv(s1_tables)
    lines = text.splitlines()
    assert lines[0] == "t,alpha1,alpha2,tau1,tau2,delta1,delta2,ex_mean"
    assert len(lines) == 2002
    gains = gains_to_csv(feedback_gains(reference_spec(), s1_tables)).splitlines()
    assert gains[0] == "t,k_hat1,k_hat2,k_mean1,k_mean2" and gains[-1].startswith("1.0,-1.0,-0.5,")
    assert float(lines[1].split(",")[1]) == s1_tables.alpha1[0]
