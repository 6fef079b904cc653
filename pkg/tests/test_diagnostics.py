"""Energy oracles, Korn identity, and kinematic coupling residuals."""

import numpy as np
import pytest

from perifsi.assembly import GalerkinState, assemble
from perifsi.diagnostics import (
    coupling_residuals,
    diffusion_ratio,
    dissipation_rate,
    energy,
    korn_check,
)
from perifsi.errors import ZeroForcing
from perifsi.fluidgrid import FluidGrid


class _LinearShear:
    """Non-solenoidal control field u = (x, 0, 0) with div u = 1."""

    physical_frame = True

    def tables_from_jets(self, jets):
        Q = jets.r_phys.size
        val = np.zeros((3, Q))
        val[0] = jets.r_phys * np.cos(jets.theta)
        grad = np.zeros((3, 3, Q))
        grad[0, 0] = 1.0
        return {"val": val, "grad": grad, "div": np.ones(Q)}


class TestEnergy:
    def test_nonnegative_and_additive(self, small_model, small_forcing, rng):
        system = assemble(small_model, 1.0, small_forcing)
        n = system.n
        s = GalerkinState(rng.standard_normal(n), rng.standard_normal(n))
        e = energy(system, s)
        assert e.E_kin > 0.0
        assert e.E_el > 0.0
        assert e.E == e.E_kin + e.E_el
        assert dissipation_rate(system, s) > 0.0

    def test_zero_state_zero_energy(self, small_model, small_forcing):
        system = assemble(small_model, 1.0, small_forcing)
        e = energy(system, GalerkinState.zero(system.n))
        assert e.E == 0.0


class TestKorn:
    def test_identity_on_solenoidal_fields(self, small_model):
        grid = small_model.grid
        m = small_model.basis.stokes_basis.modes
        resid, lhs, rhs = korn_check(m[0], m[1], grid)
        assert resid < 1e-6

    def test_residual_decreases_under_refinement(self, small_model):
        cyl = small_model.cyl
        m = small_model.basis.stokes_basis.modes
        coarse = FluidGrid(cyl, n_r=3, n_theta=8, n_z=6)
        fine = FluidGrid(cyl, n_r=10, n_theta=8, n_z=20)
        rc, _, _ = korn_check(m[0], m[0], coarse)
        rf, _, _ = korn_check(m[0], m[0], fine)
        assert rf <= rc + 1e-14

    def test_negative_control_fails(self, small_model):
        u = _LinearShear()
        resid, _, _ = korn_check(u, u, small_model.grid)
        assert resid > 1e-3


class TestCouplingResiduals:
    def test_structural_couplings_hold(self, small_model, rng):
        basis = small_model.basis
        n = basis.n
        s = GalerkinState(0.01 * rng.standard_normal(n),
                          0.01 * rng.standard_normal(n))
        res = coupling_residuals(s, basis, n_theta=8, n_z=9)
        assert res["fluid_trace"] < 1e-8
        assert res["tangential_trace"] < 1e-8
        assert res["solid_trace"] < 1e-8


class TestDiffusionRatio:
    def test_zero_forcing_rejected(self):
        with pytest.raises(ZeroForcing):
            diffusion_ratio(1.0, None)

    def test_finite_for_forced_run(self, small_forcing):
        r = diffusion_ratio(0.5, small_forcing)
        assert np.isfinite(r) and r > 0.0
