"""Divergence-free extension operator, Piola transform, and mollifiers."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perifsi.errors import DomainViolation
from perifsi.extension_ops import PiolaField, mollify, mollify_shell
from perifsi.fluidgrid import QuadJets


class TestExtension:
    def test_linearity_in_boundary_data(self, small_model, rng):
        ext_op = small_model.basis.ext_op
        shell = small_model.basis.shell_basis
        a = rng.standard_normal(shell.n_modes)
        b = rng.standard_normal(shell.n_modes)
        r = np.linspace(0.05, 0.95, 7)
        th = np.linspace(0.0, 2 * np.pi, 7, endpoint=False)
        z = np.linspace(0.1, 1.9, 7)
        fa = ext_op.extend(None, shell.field(a))(r, th, z)
        fb = ext_op.extend(None, shell.field(b))(r, th, z)
        fab = ext_op.extend(None, shell.field(a + 2.0 * b))(r, th, z)
        assert np.max(np.abs(fab - fa - 2.0 * fb)) < 1e-10

    def test_divergence_theorem_flux_balance(self, small_model, rng):
        """Being divergence free, the extension's net boundary flux vanishes:
        outlet minus inlet disk flux balances the lateral interface flux."""
        cyl = small_model.cyl
        ext_op = small_model.basis.ext_op
        shell = small_model.basis.shell_basis
        grid = small_model.grid
        xi = shell.field(rng.standard_normal(shell.n_modes))
        f = ext_op.extend(None, xi)
        disk = {}
        for z0 in (0.0, cyl.L):
            r, th, w, z = grid.disk(z0)
            disk[z0] = float(f.tables(r, th, z)["val"][2] @ w)
        th, z, w = shell.quadrature(refine=2)
        lateral = float((xi.value(th, z) * cyl.R) @ w)
        net = disk[cyl.L] - disk[0.0] + lateral
        scale = abs(lateral) + abs(disk[0.0]) + abs(disk[cyl.L]) + 1e-30
        assert abs(net) < 1e-8 * scale

    def test_time_derivative_matches_finite_difference(self, small_model, rng):
        """extend is affine in delta, so along delta(t) = delta0 + t ddelta the
        field's time derivative is extend_dt(ddelta, xi)."""
        ext_op = small_model.basis.ext_op
        shell = small_model.basis.shell_basis
        c0 = 0.02 * rng.standard_normal(shell.n_modes)
        dc = 0.01 * rng.standard_normal(shell.n_modes)
        xi = shell.field(rng.standard_normal(shell.n_modes))
        r = np.linspace(0.05, 0.9, 6)
        th = np.linspace(0.0, 2 * np.pi, 6, endpoint=False)
        z = np.linspace(0.2, 1.8, 6)
        h = 1e-5
        fp = ext_op.extend(shell.field(c0 + h * dc), xi)(r, th, z)
        fm = ext_op.extend(shell.field(c0 - h * dc), xi)(r, th, z)
        fd = (fp - fm) / (2.0 * h)
        dt_field = ext_op.extend_dt(shell.field(dc), xi)(r, th, z)
        assert np.max(np.abs(dt_field - fd)) < 1e-6

    def test_inadmissible_delta_rejected(self, small_model):
        ext_op = small_model.basis.ext_op
        shell = small_model.basis.shell_basis
        with pytest.raises(DomainViolation):
            ext_op.extend(shell.unit_field(0, amplitude=5.0), shell.unit_field(0))


class TestPiola:
    def test_reference_identity(self, small_model):
        """With no displacement the transform is the identity on fields."""
        cyl = small_model.cyl
        mode = small_model.basis.stokes_basis.modes[0]
        pio = PiolaField(cyl, None, mode)
        r = np.linspace(0.1, 0.9, 8)
        th = np.linspace(0.0, 2 * np.pi, 8, endpoint=False)
        z = np.linspace(0.1, 1.9, 8)
        a = pio.tables(r, th, z)
        b = mode.tables(r, th, z)
        assert np.max(np.abs(a["val"] - b["val"])) < 1e-12
        assert np.max(np.abs(a["grad"] - b["grad"])) < 1e-10

    def test_divergence_preserved_on_moving_domain(self, small_model, rng):
        cyl = small_model.cyl
        shell = small_model.basis.shell_basis
        eta = shell.field(0.03 * rng.standard_normal(shell.n_modes))
        jets = QuadJets(small_model.grid, eta)
        for mode in small_model.basis.stokes_basis.modes[:2]:
            tab = PiolaField(cyl, eta, mode).tables_from_jets(jets)
            scale = np.max(np.abs(tab["val"])) + 1e-30
            assert np.max(np.abs(tab["div"])) < 1e-8 * scale


class TestMollify:
    @given(st.integers(min_value=0, max_value=1000))
    @settings(max_examples=40, deadline=None)
    def test_sup_norm_nonexpansive(self, seed):
        g = np.random.default_rng(seed)
        n = g.integers(16, 128)
        sig = g.standard_normal(n)
        dt = 1.0 / n
        out = mollify(sig, g.uniform(1.0, 8.0) * dt, dt)
        assert np.max(np.abs(out)) <= np.max(np.abs(sig)) + 1e-12

    def test_constants_fixed(self):
        sig = np.full(64, 0.73)
        out = mollify(sig, 5.0 / 64, 1.0 / 64)
        assert np.max(np.abs(out - 0.73)) < 1e-13

    def test_smooths_an_impulse(self):
        sig = np.zeros(64)
        sig[10] = 1.0
        out = mollify(sig, 6.0 / 64, 1.0 / 64)
        assert np.max(np.abs(out)) < 1.0
        assert np.sum(out) == pytest.approx(1.0, rel=1e-10)

    def test_shell_mollifier_nonexpansive(self, small_model, rng):
        shell = small_model.basis.shell_basis
        f = shell.field(rng.standard_normal(shell.n_modes))
        g = mollify_shell(f, 0.1)
        assert g.sup_norm() <= f.sup_norm() + 1e-12
