"""Assembled Galerkin matrices: structure, symmetries, and time sampling."""

import numpy as np
import pytest

from perifsi.assembly import GalerkinState, TimeGridPath, assemble
from perifsi.errors import BasisMismatch, DomainViolation, GridMismatch


@pytest.fixture(scope="module")
def rest_sample(small_model):
    return small_model.sample()


def _moving_inputs(small_model, rng, amp=0.02):
    shell = small_model.basis.shell_basis
    c = amp * rng.standard_normal(shell.n_modes)
    dc = amp * rng.standard_normal(shell.n_modes)
    return shell.field(c), shell.field(dc), c, dc


class TestGalerkinState:
    def test_zero_and_validation(self):
        s = GalerkinState.zero(4)
        assert s.n == 4 and s.t == 0.0
        with pytest.raises(BasisMismatch):
            GalerkinState(np.zeros(3), np.zeros(4))
        with pytest.raises(ValueError):
            GalerkinState(np.array([np.nan]), np.array([0.0]))


class TestTimeGridPath:
    def test_spectral_derivative(self):
        T = 2.0
        N = 32
        t = np.arange(N) * T / N
        path = TimeGridPath(T, np.sin(2 * np.pi * t / T)[:, None])
        d = path.derivative()
        exact = (2 * np.pi / T) * np.cos(2 * np.pi * t / T)
        assert np.max(np.abs(d.samples[:, 0] - exact)) < 1e-12

    def test_coarse_indices_divisibility(self):
        path = TimeGridPath(1.0, np.zeros((12, 1)))
        assert list(path.coarse_indices(4)) == [0, 3, 6, 9]
        with pytest.raises(GridMismatch):
            path.coarse_indices(5)


class TestRestMatrices:
    def test_mass_spd(self, rest_sample, small_model):
        M = rest_sample["M"] + small_model.constants["M_shell"] + small_model.constants["M_solid"]
        assert np.max(np.abs(M - M.T)) < 1e-12
        assert np.all(np.linalg.eigvalsh(M) > 0.0)

    def test_stiffness_symmetric_psd(self, small_model):
        K = small_model.constants["K_sh"] + small_model.constants["A_el"]
        assert np.max(np.abs(K - K.T)) < 1e-9
        assert np.all(np.linalg.eigvalsh(K) > -1e-9 * np.max(np.abs(K)))

    def test_dissipation_psd(self, rest_sample, small_model):
        D = rest_sample["V"] + small_model.constants["A_visc"]
        assert np.all(np.linalg.eigvalsh(0.5 * (D + D.T)) > -1e-10)

    def test_geometry_blocks_vanish_at_rest(self, rest_sample):
        for name in ("G", "B", "Q"):
            assert np.max(np.abs(rest_sample[name])) == 0.0

    def test_flux_vectors(self, rest_sample, small_model):
        qin, qout = rest_sample["qin"], rest_sample["qout"]
        # interior entries: equal flux through both disks (flux conservation)
        assert np.max(np.abs(qin[1::2] - qout[1::2])) < 1e-8
        # coupled entries vanish at the outlet (shell modes clamped at z = L
        # and the plug profile carries no outlet flow)
        assert np.max(np.abs(qout[0::2])) < 1e-8


class TestMovingMatrices:
    def test_mass_derivative_matches_geometry_block(self, small_model, rng):
        """G + G^T equals dM/dt along the prescribed motion (the antisymmetric
        half cancels), checked against central differences in the geometry."""
        delta, dt_delta, c, dc = _moving_inputs(small_model, rng)
        shell = small_model.basis.shell_basis
        s = small_model.sample(delta=delta, dt_delta=dt_delta)
        h = 1e-4
        Mp = small_model.sample(delta=shell.field(c + h * dc))["M"]
        Mm = small_model.sample(delta=shell.field(c - h * dc))["M"]
        fd = (Mp - Mm) / (2.0 * h)
        G = s["G"]
        scale = np.max(np.abs(fd)) + 1e-30
        assert np.max(np.abs(G + G.T - fd)) < 1e-5 * scale

    def test_convection_block_skew(self, small_model, rng):
        delta, dt_delta, _, _ = _moving_inputs(small_model, rng)
        v = rng.standard_normal(small_model.basis.n)
        s = small_model.sample(delta=delta, dt_delta=dt_delta, v_coeff=v)
        B = s["B"]
        assert np.max(np.abs(B + B.T)) < 1e-12 * (1 + np.max(np.abs(B)))
        assert abs(v @ B @ v) < 1e-10 * (1 + v @ v)

    def test_shell_transport_block_structure(self, small_model, rng):
        delta, dt_delta, _, _ = _moving_inputs(small_model, rng)
        s = small_model.sample(delta=delta, dt_delta=dt_delta)
        Q = s["Q"]
        assert np.max(np.abs(Q - Q.T)) < 1e-12 * (1 + np.max(np.abs(Q)))
        # interior rows and columns are empty: the block couples shell modes
        assert np.max(np.abs(Q[1::2, :])) == 0.0
        assert np.max(np.abs(Q[:, 1::2])) == 0.0


class TestAssemble:
    def test_rest_assembly_single_sample(self, small_model, small_forcing):
        system = assemble(small_model, 1.0, small_forcing)
        assert system.times.size == 1
        mats = system.matrices_at(0.3)
        assert np.all(np.linalg.eigvalsh(mats["M"]) > 0.0)

    def test_transport_requires_geometry_path(self, small_model, small_forcing):
        v_path = TimeGridPath(1.0, np.zeros((8, small_model.basis.n)))
        with pytest.raises(GridMismatch):
            assemble(small_model, 1.0, small_forcing, v_path=v_path)

    def test_interpolation_hits_samples(self, small_model, small_forcing):
        shell = small_model.basis.shell_basis
        N = 16
        t = np.arange(N) / N
        samples = np.zeros((N, shell.n_modes))
        samples[:, 0] = 0.02 * np.sin(2 * np.pi * t)
        path = TimeGridPath(1.0, samples)
        system = assemble(small_model, 1.0, small_forcing,
                          delta_path=path, n_samples=8)
        for s, ts in enumerate(system.times):
            M = system.matrices_at(float(ts))["M"]
            direct = (system.stacks["M"][s]
                      + system.constants["M_shell"]
                      + system.constants["M_solid"])
            assert np.max(np.abs(M - direct)) < 1e-10 * np.max(np.abs(direct))

    def test_inadmissible_path_reports_time(self, small_model, small_forcing):
        shell = small_model.basis.shell_basis
        N = 16
        t = np.arange(N) / N
        samples = np.zeros((N, shell.n_modes))
        samples[:, 0] = 3.0 * np.sin(2 * np.pi * t)
        path = TimeGridPath(1.0, samples)
        with pytest.raises(DomainViolation) as err:
            assemble(small_model, 1.0, small_forcing, delta_path=path,
                     n_samples=8)
        assert err.value.time is not None
