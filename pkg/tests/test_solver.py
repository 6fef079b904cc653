"""Time stepping, the periodic orbit solve, and the geometry fixed point."""

import numpy as np
import pytest

from perifsi.assembly import GalerkinState, assemble
from perifsi.errors import GridMismatch, NoConvergence
from perifsi.solver_periodic import (
    EnergyLedger,
    OuterLoopConfig,
    PeriodicProblem,
    outer_fixed_point,
    periodic_solve,
    poincare_map,
    solve_ivp,
    step,
)


@pytest.fixture(scope="module")
def rest_system(small_model, small_forcing):
    return assemble(small_model, 1.0, small_forcing)


@pytest.fixture(scope="module")
def free_system(small_model):
    return assemble(small_model, 1.0, None)


class TestStepping:
    def test_problem_requires_integer_steps(self, rest_system):
        with pytest.raises(GridMismatch):
            PeriodicProblem(rest_system, 1.0, 1.0 / 64.5)

    def test_unforced_energy_decays(self, free_system, rng):
        n = free_system.n
        state = GalerkinState(0.01 * rng.standard_normal(n),
                              0.01 * rng.standard_normal(n))
        prob = PeriodicProblem(free_system, 1.0, 1.0 / 64)
        traj = poincare_map(prob, state, record=True)
        led = EnergyLedger.from_trajectory(free_system, traj, prob.dt)
        E = led.as_arrays()["E"]
        assert np.all(np.diff(E) <= 1e-12 * E[0])

    def test_step_advances_time(self, rest_system):
        s0 = GalerkinState.zero(rest_system.n)
        s1 = step(rest_system, s0, 1.0 / 64)
        assert s1.t == pytest.approx(1.0 / 64)


class TestPeriodicSolve:
    def test_zero_forcing_zero_orbit(self, free_system):
        prob = PeriodicProblem(free_system, 1.0, 1.0 / 64)
        x_star, info = periodic_solve(prob)
        assert np.max(np.abs(x_star.a)) == 0.0
        assert np.max(np.abs(x_star.a_dot)) == 0.0
        assert info["residual"] <= 1e-12

    def test_forced_orbit_closes_period(self, rest_system):
        prob = PeriodicProblem(rest_system, 1.0, 1.0 / 128)
        x_star, info = periodic_solve(prob)
        x_T = poincare_map(prob, x_star)
        gap = max(np.max(np.abs(x_T.a - x_star.a)),
                  np.max(np.abs(x_T.a_dot - x_star.a_dot)))
        scale = 1.0 + max(np.max(np.abs(x_star.a)), np.max(np.abs(x_star.a_dot)))
        assert gap <= 1e-10 * scale
        assert info["sigma_min"] > 0.0


class TestOuterLoop:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            OuterLoopConfig(eps=-1.0)
        with pytest.raises(ValueError):
            OuterLoopConfig(eps=0.1, theta_r=1.5)

    def test_exhausted_budget_raises(self, small_model, small_forcing):
        cfg = OuterLoopConfig(eps=4.0 / 64, theta_r=0.5, max_iter=1, tol=1e-14)
        with pytest.raises(NoConvergence) as err:
            outer_fixed_point(small_model, 1.0, 64, small_forcing, cfg,
                              n_samples=8)
        assert err.value.iterations == 1
        assert err.value.last_update > 0.0

    def test_converges_small_data(self, small_model, small_forcing):
        cfg = OuterLoopConfig(eps=4.0 / 64, theta_r=1.0, max_iter=30, tol=1e-7)
        res = outer_fixed_point(small_model, 1.0, 64, small_forcing, cfg,
                                n_samples=8)
        assert res.iterations <= 30
        assert res.update <= 1e-7
        scale = 1.0 + max(np.max(np.abs(res.x_star.a)),
                          np.max(np.abs(res.x_star.a_dot)))
        assert res.periodic_residual <= 1e-10 * scale
        assert len(res.trajectory) == 65


class TestIvp:
    def test_unforced_nonlinear_run_dissipates(self, small_model, rng):
        n = small_model.basis.n
        x0 = GalerkinState(0.01 * rng.standard_normal(n),
                           0.01 * rng.standard_normal(n))
        res = solve_ivp(small_model, x0, 0.125, 1.0 / 64)
        assert res.completed
        E = res.ledger.as_arrays()["E"]
        assert np.all(np.diff(E) <= 1e-10 * E[0])

    def test_domain_violation_is_graceful(self, small_model):
        n = small_model.basis.n
        a = np.zeros(n)
        a[0] = 10.0  # coupled mode amplitude far beyond the margin
        res = solve_ivp(small_model, GalerkinState(a, np.zeros(n)), 0.1, 1.0 / 64)
        assert not res.completed
        assert res.violation_time is not None
