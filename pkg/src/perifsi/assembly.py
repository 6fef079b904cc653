"""Interleaved global basis and time-sampled assembly of the Galerkin system.

The single coefficient vector a drives all three unknowns through the basis

    entry 2j   (coupled):  ( F_delta(Y_j),  Y_j,  s(r) Y_j e_r )
    entry 2j+1 (interior): ( Piola(Z_j),    0,    Z_j^S        )

so the kinematic couplings (fluid trace = shell velocity, solid trace = shell
displacement) hold structurally: u = sum a'_k X_k^F, eta = sum a_k X_k,
d = sum a_k X_k^S.

Testing the momentum balance against X_k and splitting the symmetrized moving
mass term d/dt int u.X/2 + int (du/dt.X - u.dX/dt)/2 yields the ODE system

    M(t) a'' + [ G(t) + V + B(t) + Q(t) + A_visc ] a' + [ K_sh + A_el ] a = f(t)

with G = (dM_F/dt)/2 + S/2, S_kj = int (dX_j/dt . X_k - X_j . dX_k/dt)
antisymmetric, V the fluid Dirichlet form, B the convection form linear in the
unknown with a prescribed transport field, Q the shell transport block, and
f the boundary pressure load.  All moving-domain integrals are pulled back to
the reference cylinder; the time derivative of the fluid basis is analytic
(the extension is a fixed linear operator, so its time derivative is the
extension of the product data; Piola entries differentiate through the ALE
jets).  Matrices are sampled on a coarse uniform grid over one period and
trig-interpolated in time.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BasisMismatch, DomainViolation, GridMismatch
from .extension_ops import push_piola, push_piola_dt
from .fluidgrid import FluidGrid, QuadJets
from .geometry import check_injectivity
from .shell_solid import (
    CombinedSolidField,
    LiftedSolidField,
    SolidGrid,
    shell_matrices,
)


@dataclass
class GalerkinState:
    """Shared Galerkin coefficients (a, a_dot) at time t."""

    a: np.ndarray
    a_dot: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.a_dot = np.asarray(self.a_dot, dtype=float)
        if self.a.shape != self.a_dot.shape or self.a.ndim != 1:
            raise BasisMismatch("a and a_dot must be 1D vectors of equal length")
        if not (np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.a_dot))):
            raise ValueError("non-finite Galerkin state")

    @property
    def n(self):
        return self.a.size

    @classmethod
    def zero(cls, n, t=0.0):
        return cls(np.zeros(n), np.zeros(n), t)


class TimeGridPath:
    """Periodic coefficient path sampled on the open uniform grid
    t_j = j T / N, j = 0..N-1."""

    def __init__(self, T, samples):
        self.T = float(T)
        self.samples = np.asarray(samples, dtype=float)
        if self.samples.ndim != 2:
            raise GridMismatch("path samples must be (N_t, n_coeff)")
        self.n_t = self.samples.shape[0]

    @property
    def dt(self):
        return self.T / self.n_t

    def derivative(self):
        """Spectral (circular) time derivative path."""
        F = np.fft.rfft(self.samples, axis=0)
        k = np.arange(F.shape[0])
        F *= (2j * np.pi / self.T) * k[:, None]
        return TimeGridPath(self.T, np.fft.irfft(F, self.n_t, axis=0))

    def coarse_indices(self, n_samples):
        if self.n_t % n_samples:
            raise GridMismatch(
                f"matrix sample count {n_samples} must divide the grid size {self.n_t}"
            )
        return np.arange(n_samples) * (self.n_t // n_samples)

    def sup_norm(self):
        return float(np.max(np.abs(self.samples))) if self.samples.size else 0.0


class GlobalBasis:
    """The interleaved coupled/interior basis with cached component tables."""

    def __init__(self, cyl, shell_basis, solid_basis, stokes_basis, ext_op, n):
        if n % 2:
            raise ValueError("global basis size n must be even")
        half = n // 2
        if half > shell_basis.n_modes:
            raise ValueError("not enough shell modes for the coupled entries")
        if half > stokes_basis.n_modes:
            raise ValueError("not enough interior fluid modes")
        self.cyl = cyl
        self.n = n
        self.shell_basis = shell_basis
        self.solid_basis = solid_basis
        self.stokes_basis = stokes_basis
        self.ext_op = ext_op
        self.shell_modes = [shell_basis.unit_field(j) for j in range(half)]
        self.solid_fields = []
        interior_solid = solid_basis.interior_modes(half)
        for j in range(half):
            self.solid_fields.append(LiftedSolidField(cyl, self.shell_modes[j]))
            self.solid_fields.append(interior_solid[j])
        # entry k: ("coupled", j) at even positions, ("interior", j) at odd
        self.entries = []
        for j in range(half):
            self.entries.append(("coupled", j))
            self.entries.append(("interior", j))
        self.coupled_slice = slice(0, n, 2)
        self.interior_slice = slice(1, n, 2)

    @property
    def half(self):
        return self.n // 2

    def shell_coefficients(self, a):
        """Map global coefficients to shell-basis coefficients (coupled
        entries carry the shell modes, interior entries carry none)."""
        c = np.zeros(self.shell_basis.n_modes)
        c[: self.half] = np.asarray(a)[self.coupled_slice]
        return c

    def shell_field(self, a):
        return self.shell_basis.field(self.shell_coefficients(a))

    def extension_fields(self, delta):
        """The coupled fluid entries F_delta(Y_j) for a given shell field."""
        return [
            self.ext_op.extend(delta, Y, check=False) for Y in self.shell_modes
        ]

    def fluid_tables(self, jets, delta=None, dt_delta=None, with_dt=False,
                     ext_fields=None):
        """Stacked fluid-entry tables at the jets' quadrature nodes.

        Returns (val, grad, dtX) with shapes (n, 3, Q), (n, 3, 3, Q),
        (n, 3, Q); dtX is the Eulerian time derivative at fixed physical
        points and is zero when with_dt is false.
        """
        grid = jets.grid
        Q = grid.n_nodes
        val = np.empty((self.n, 3, Q))
        grad = np.empty((self.n, 3, 3, Q))
        dtX = np.zeros((self.n, 3, Q))
        zval, zgrad = self.stokes_basis.tables_on(grid)
        if ext_fields is None:
            ext_fields = self.extension_fields(delta)
        for j in range(self.half):
            k_c, k_i = 2 * j, 2 * j + 1
            t = ext_fields[j].tables(jets.r_phys, jets.theta, jets.z)
            val[k_c], grad[k_c] = t["val"], t["grad"]
            if jets.moving:
                v, g = push_piola(jets.A, jets.dA, jets.ginv, zval[j], zgrad[j])
                val[k_i], grad[k_i] = v, g
            else:
                val[k_i], grad[k_i] = zval[j], zgrad[j]
            if with_dt:
                if dt_delta is not None:
                    dext = self.ext_op.extend_dt(dt_delta, self.shell_modes[j])
                    dtX[k_c] = dext.tables(jets.r_phys, jets.theta, jets.z)["val"]
                if jets.moving:
                    dtX[k_i] = push_piola_dt(
                        jets.A, jets.dA, jets.dt_A, jets.dt_psi, jets.ginv,
                        zval[j], zgrad[j],
                    )
        return val, grad, dtX


def build_global_basis(cyl, shell_basis, solid_basis, stokes_basis, ext_op, n,
                       delta_path=None, margin=None):
    """Assemble the interleaved basis; checks injectivity along a given path."""
    if margin is None:
        margin = 0.05 * cyl.R
    if delta_path is not None:
        for s in range(delta_path.n_t):
            f = shell_basis.field(delta_path.samples[s])
            if not check_injectivity(f, margin, cyl=cyl):
                raise DomainViolation(
                    "shell path breaks domain injectivity",
                    time=s * delta_path.dt,
                )
    return GlobalBasis(cyl, shell_basis, solid_basis, stokes_basis, ext_op, n)


class AssembledSystem:
    """Time-sampled matrices of the Galerkin ODE over one period.

    matrices_at(t) trig-interpolates the periodic samples; forcing_at(t)
    combines the interpolated flux vectors with the pressure signals.
    """

    def __init__(self, T, times, stacks, constants, forcing, basis):
        self.T = float(T)
        self.times = times
        self.stacks = stacks  # dict name -> (S, n, n) or (S, n)
        self.constants = constants  # dict name -> (n, n)
        self.forcing = forcing
        self.basis = basis
        self.n = basis.n
        S = times.size
        self._fft = {k: np.fft.rfft(v, axis=0) for k, v in stacks.items()} if S > 1 else None

    def _interp(self, name, t):
        if self._fft is None:
            return self.stacks[name][0]
        F = self._fft[name]
        S = self.times.size
        k = np.arange(F.shape[0])
        scale = np.ones(F.shape[0])
        scale[1:] = 2.0
        if S % 2 == 0:
            scale[-1] = 1.0
        phase = (scale * np.exp(2j * np.pi * k * (t / self.T))) / S
        return np.real(np.tensordot(phase, F, axes=(0, 0)))

    def matrices_at(self, t):
        """Return dict(M, G, B, Q, qin, qout) interpolated at t plus the
        constant blocks; damping C = G + V + B + Q + A_visc and stiffness
        K = K_sh + A_el are combined here."""
        out = {name: self._interp(name, t) for name in self.stacks}
        c = self.constants
        M = out["M"] + c["M_shell"] + c["M_solid"]
        C = out["G"] + out["B"] + out["Q"] + out["V"] + c["A_visc"]
        K = c["K_sh"] + c["A_el"]
        return {
            "M": M,
            "C": C,
            "K": K,
            "V_fluid": out["V"],
            "Q": out["Q"],
            "qin": out["qin"],
            "qout": out["qout"],
        }

    def forcing_at(self, t, mats=None):
        if self.forcing is None:
            n = self.n
            return np.zeros(n)
        if mats is None:
            mats = self.matrices_at(t)
        pin, pout = self.forcing.values(t)
        return pin[0] * mats["qin"] - pout[0] * mats["qout"]

    def dissipation_matrix(self, mats):
        """The nonnegative dissipation block V + A_visc."""
        return mats["V_fluid"] + self.constants["A_visc"]


class Assembler:
    """Shared immutable ingredients for assembling the system at any sample.

    Building one of these precomputes everything that does not depend on the
    shell motion: constant shell/solid blocks, Stokes tables, disk tables.
    """

    def __init__(self, cyl, basis, params, grid=None, solid_grid=None):
        self.cyl = cyl
        self.basis = basis
        self.params = params
        sb = basis.shell_basis
        m_shell = (
            sb.max_azimuthal_wavenumber
            if sb.boundary_mode == "periodic-theta"
            else sb.n_theta
        )
        m_max = max(
            m_shell, max((m.m for m in basis.stokes_basis.modes), default=0)
        )
        # uniform-theta rules are spectrally exact once the grid resolves
        # the full bandwidth of triple products of basis fields
        need_theta = max(8, 8 * m_max + 4)
        self.grid = grid or FluidGrid(cyl, n_theta=need_theta)
        self.solid_grid = solid_grid or SolidGrid(cyl, basis.shell_basis)
        self._identity_jets = QuadJets(self.grid, None)
        self._shell_quad = basis.shell_basis.quadrature()
        th, zz, _ = self._shell_quad
        self._shell_tab = basis.shell_basis.eval_modes(th, zz, 2)[: basis.half]
        self.constants = self._constant_blocks()
        self._disk = {
            "in": self.grid.disk(0.0),
            "out": self.grid.disk(cyl.L),
        }
        # interior modes are identical on the disks for every admissible
        # motion (the ALE map is the identity through first derivatives at
        # the clamped ends), so their flux vectors are constant
        self._interior_disk_flux = {}
        for side, (r, t, w, z) in self._disk.items():
            flux = np.zeros(basis.half)
            for j in range(basis.half):
                flux[j] = basis.stokes_basis.modes[j].tables(r, t, z)["val"][2] @ w
            self._interior_disk_flux[side] = flux

    def _constant_blocks(self):
        basis = self.basis
        n = basis.n
        p = self.params
        # shell blocks live on the coupled entries only
        Msh_half, Ksh_half = shell_matrices(basis.shell_basis, range(basis.half))
        M_shell = np.zeros((n, n))
        K_sh = np.zeros((n, n))
        coupled = list(range(0, n, 2))
        M_shell[np.ix_(coupled, coupled)] = Msh_half
        K_sh[np.ix_(coupled, coupled)] = Ksh_half

        g = self.solid_grid
        Qs = g.r.size
        sval = np.empty((n, 3, Qs))
        sgrad = np.empty((n, 3, 3, Qs))
        sdiv = np.empty((n, Qs))
        for k, f in enumerate(basis.solid_fields):
            t = f.tables(g.r, g.theta, g.z)
            sval[k], sgrad[k], sdiv[k] = t["val"], t["grad"], t["div"]
        M_solid = p.rho_s2 * np.einsum("kiq,liq,q->kl", sval, sval, g.w)
        grad_gram = np.einsum("kijq,lijq,q->kl", sgrad, sgrad, g.w)
        div_gram = np.einsum("kq,lq,q->kl", sdiv, sdiv, g.w)
        A_el = p.lambda1 * grad_gram + p.lambda2 * div_gram
        A_visc = p.lambda1 * p.delta_visc * grad_gram
        return {
            "M_shell": M_shell,
            "K_sh": K_sh,
            "M_solid": M_solid,
            "A_el": A_el,
            "A_visc": A_visc,
        }

    def sample(self, delta=None, dt_delta=None, v_coeff=None):
        """Assemble the motion-dependent blocks for one time sample.

        delta / dt_delta are shell fields (or None for the rest state);
        v_coeff is the transport-field coefficient vector over the basis.
        Returns dict(M, G, V, B, Q, qin, qout) — the fluid blocks only;
        constant blocks are added by AssembledSystem.matrices_at.
        """
        basis = self.basis
        n = basis.n
        moving = delta is not None
        jets = (
            QuadJets(self.grid, delta, dt_delta, second=True)
            if moving
            else self._identity_jets
        )
        with_dt = moving and dt_delta is not None
        ext_fields = basis.extension_fields(delta)
        val, grad, dtX = basis.fluid_tables(
            jets, delta=delta, dt_delta=dt_delta, with_dt=with_dt,
            ext_fields=ext_fields,
        )
        w = jets.weight
        Q_nodes = val.shape[-1]
        vflat = val.reshape(n, 3 * Q_nodes)
        vwflat = (val * w).reshape(n, 3 * Q_nodes)
        gflat = grad.reshape(n, 9 * Q_nodes)
        M = vwflat @ vflat.T
        M = 0.5 * (M + M.T)
        V = (grad * w).reshape(n, 9 * Q_nodes) @ gflat.T
        V = 0.5 * (V + V.T)
        G = np.zeros((n, n))
        if with_dt:
            # material derivative of each basis entry along the domain motion
            mat = dtX + np.einsum("kijq,jq->kiq", grad, jets.dt_psi)
            mflat = mat.reshape(n, 3 * Q_nodes)
            T1 = mflat @ vwflat.T
            dM = (
                T1
                + T1.T
                + (val * (jets.grid.w * jets.dt_det)).reshape(n, 3 * Q_nodes)
                @ vflat.T
            )
            D1 = (dtX * w).reshape(n, 3 * Q_nodes) @ vflat.T
            S = D1.T - D1
            G = 0.5 * dM + 0.5 * S
        B = np.zeros((n, n))
        if v_coeff is not None and np.any(v_coeff):
            vval = np.einsum("k,kiq->iq", v_coeff, val)
            conv = np.einsum("jq,kijq->kiq", vval, grad)
            cw = conv.reshape(n, 3 * Q_nodes) @ vwflat.T
            # B[k, j] = b(v, X_j, X_k) in the symmetrized (skew) form
            B = 0.5 * (cw.T - cw)
        Q = np.zeros((n, n))
        if with_dt:
            th, zz, wsh = self._shell_quad
            dval = dt_delta.value(th, zz)
            rval = self.cyl.R + delta.value(th, zz)
            tab0 = self._shell_tab[:, 0]
            Qh = -0.5 * np.einsum("jx,kx,x->kj", tab0, tab0, wsh * dval * rval)
            Q[np.ix_(range(0, n, 2), range(0, n, 2))] = Qh
        qin = self._flux_vector("in", ext_fields)
        qout = self._flux_vector("out", ext_fields)
        return {"M": M, "G": G, "V": V, "B": B, "Q": Q, "qin": qin, "qout": qout}

    def _flux_vector(self, side, ext_fields):
        basis = self.basis
        r, t, w, z = self._disk[side]
        q = np.zeros(basis.n)
        q[1::2] = self._interior_disk_flux[side]
        for j, ext in enumerate(ext_fields):
            q[2 * j] = ext.tables(r, t, z)["val"][2] @ w
        return q


def assemble(assembler, T, forcing, delta_path=None, v_path=None,
             n_samples=None, margin=None):
    """Assemble the linearized periodic system for a given (delta, v) path.

    With delta_path None the geometry is the rest cylinder and the matrices
    are constant (a single sample).  Paths live on the open uniform period
    grid; matrices are sampled on a coarse divisor grid and trig-interpolated.
    """
    basis = assembler.basis
    cyl = assembler.cyl
    if margin is None:
        margin = 0.05 * cyl.R
    if delta_path is None:
        if v_path is not None:
            raise GridMismatch("a transport path requires a shell path grid")
        sample = assembler.sample()
        times = np.zeros(1)
        stacks = {k: v[None] for k, v in sample.items()}
        return AssembledSystem(T, times, stacks, assembler.constants, forcing, basis)
    if v_path is not None and v_path.n_t != delta_path.n_t:
        raise GridMismatch("delta and transport paths must share one time grid")
    if n_samples is None:
        n_samples = min(64, delta_path.n_t)
    idx = delta_path.coarse_indices(n_samples)
    ddt_path = delta_path.derivative()
    times = idx * delta_path.dt
    stacks = None
    for s, i in enumerate(idx):
        delta = basis.shell_basis.field(delta_path.samples[i])
        if not check_injectivity(delta, margin, cyl=cyl):
            raise DomainViolation("shell path breaks domain injectivity",
                                  time=float(times[s]))
        dtd = basis.shell_basis.field(ddt_path.samples[i])
        vc = None if v_path is None else v_path.samples[i]
        sample = assembler.sample(delta=delta, dt_delta=dtd, v_coeff=vc)
        if stacks is None:
            stacks = {k: np.empty((n_samples,) + v.shape) for k, v in sample.items()}
        for k, v in sample.items():
            stacks[k][s] = v
    return AssembledSystem(T, times, stacks, assembler.constants, forcing, basis)


class ReconstructedFluid:
    """u = sum a_dot_k X_k^F evaluated through stacked basis tables."""

    physical_frame = True

    def __init__(self, basis, a_dot, delta=None, dt_delta=None):
        self.basis = basis
        self.a_dot = np.asarray(a_dot, dtype=float)
        self.delta = delta
        self.dt_delta = dt_delta

    def tables_from_jets(self, jets):
        val, grad, _ = self.basis.fluid_tables(
            jets, delta=self.delta, dt_delta=self.dt_delta, with_dt=False
        )
        v = np.einsum("k,kiq->iq", self.a_dot, val)
        g = np.einsum("k,kijq->ijq", self.a_dot, grad)
        return {"val": v, "grad": g, "div": np.einsum("iiq->q", g)}


def reconstruct(state, basis):
    """Physical fields of a Galerkin state: (fluid u, (eta, eta_dot),
    (d, d_dot)).  Kinematic couplings hold by construction."""
    if state.n != basis.n:
        raise BasisMismatch(
            f"state has {state.n} coefficients, basis expects {basis.n}"
        )
    eta = basis.shell_field(state.a)
    eta_dot = basis.shell_field(state.a_dot)
    d = CombinedSolidField(basis.solid_fields, state.a)
    d_dot = CombinedSolidField(basis.solid_fields, state.a_dot)
    u = ReconstructedFluid(basis, state.a_dot, delta=eta, dt_delta=eta_dot)
    return u, (eta, eta_dot), (d, d_dot)
