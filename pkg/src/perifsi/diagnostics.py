"""Energy bookkeeping, identity checks, and coupling residual probes.

Everything here is an oracle over quantities the solver already produces:
energies and dissipation are the quadratic forms of the assembled matrices,
the Korn identity and the kinematic couplings are checked by independent
quadrature over the physical fields, and the diffusion ratio condenses a
converged periodic run into the single constant of the a-priori bound
int_I D <= C * ||P||^2_{L2}.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ZeroForcing
from .extension_ops import PiolaField
from .fluid_basis import _field_tables


@dataclass
class EnergyBreakdown:
    """E = E_kin + E_el; both parts are nonnegative quadratic forms."""

    E_kin: float
    E_el: float

    @property
    def E(self):
        return self.E_kin + self.E_el


def energy(system, state):
    """Total energy of a Galerkin state under the assembled system.

    E_kin = v' M v / 2 collects fluid, shell and solid kinetic energy;
    E_el = a' K a / 2 collects shell bending and solid elastic energy.
    """
    mats = system.matrices_at(state.t)
    Ek = 0.5 * float(state.a_dot @ mats["M"] @ state.a_dot)
    Ee = 0.5 * float(state.a @ mats["K"] @ state.a)
    return EnergyBreakdown(Ek, Ee)


def dissipation_rate(system, state):
    """D = v' (V + A_visc) v: viscous fluid plus viscoelastic solid rate."""
    mats = system.matrices_at(state.t)
    return float(state.a_dot @ system.dissipation_matrix(mats) @ state.a_dot)


def balance_residual(system, traj, dt):
    """Worst per-step defect of the discrete energy identity along traj."""
    from .solver_periodic import EnergyLedger

    return EnergyLedger.from_trajectory(system, traj, dt).max_balance_residual()


def korn_check(u, q, grid, delta=None, jets=None):
    """Relative residual of the Korn identity on the admissible fluid space:

        int grad u : grad q  =  2 int D(u) : D(q)

    which holds for divergence-free fields with normal trace structure on the
    cylinder.  Returns (residual, lhs, rhs) with residual normalized by
    1 + |lhs|; generic non-solenoidal fields serve as the negative control.
    """
    if jets is None:
        from .fluidgrid import QuadJets

        jets = QuadJets(grid, delta)
    tu = _field_tables(u, jets)
    tq = _field_tables(q, jets)
    gu, gq = tu["grad"], tq["grad"]
    w = jets.weight
    lhs = float(np.einsum("ijq,ijq,q->", gu, gq, w))
    su = 0.5 * (gu + gu.transpose(1, 0, 2))
    sq = 0.5 * (gq + gq.transpose(1, 0, 2))
    rhs = 2.0 * float(np.einsum("ijq,ijq,q->", su, sq, w))
    return abs(lhs - rhs) / (1.0 + abs(lhs)), lhs, rhs


def coupling_residuals(state, basis, n_theta=24, n_z=33):
    """Sup-norm defects of the kinematic couplings of a Galerkin state.

    Checks, on a tensor sample of the interface:
      * fluid trace on the moving interface equals the shell velocity times
        the radial direction,
      * solid trace at r = R equals the shell displacement times e_r,
      * the fluid trace has no tangential part.
    All three hold structurally for the interleaved basis; the residuals
    measure evaluation error only.
    """
    cyl = basis.cyl
    eta = basis.shell_field(state.a)
    eta_dot = basis.shell_field(state.a_dot)
    th = np.linspace(0.0, 2.0 * np.pi, n_theta, endpoint=False)
    zz = np.linspace(0.0, cyl.L, n_z)
    TT, ZZ = np.meshgrid(th, zz, indexing="ij")
    tflat, zflat = TT.ravel(), ZZ.ravel()
    eval_eta = eta.value(tflat, zflat)
    eval_etad = eta_dot.value(tflat, zflat)
    r_int = cyl.R + eval_eta

    uval = np.zeros((3, tflat.size))
    moving = bool(np.any(basis.shell_coefficients(state.a)))
    for j in range(basis.half):
        c = state.a_dot[2 * j]
        if c:
            ext = basis.ext_op.extend(eta if moving else None,
                                      basis.shell_modes[j], check=False)
            uval += c * ext.tables(r_int, tflat, zflat)["val"]
    for j in range(basis.half):
        c = state.a_dot[2 * j + 1]
        if c:
            mode = basis.stokes_basis.modes[j]
            field = PiolaField(cyl, eta if moving else None, mode)
            uval += c * field.tables(np.full(tflat.size, cyl.R), tflat, zflat)["val"]

    er = np.stack([np.cos(tflat), np.sin(tflat), np.zeros_like(tflat)])
    target = er * eval_etad
    diff = uval - target
    trace_resid = float(np.max(np.abs(diff)))
    tangential = uval - er * np.einsum("iq,iq->q", uval, er)
    tangential_resid = float(np.max(np.abs(tangential)))

    # solid tables carry cylindrical frame components: target is (eta, 0, 0)
    dval = np.zeros((3, tflat.size))
    for k, f in enumerate(basis.solid_fields):
        c = state.a[k]
        if c:
            dval += c * f.tables(np.full(tflat.size, cyl.R), tflat, zflat)["val"]
    dval[0] -= eval_eta
    solid_resid = float(np.max(np.abs(dval)))
    return {
        "fluid_trace": trace_resid,
        "tangential_trace": tangential_resid,
        "solid_trace": solid_resid,
    }


def diffusion_ratio(integral_D, forcing):
    """The measured constant of int_I D <= C ||P||^2_{L2}.

    Raises ZeroForcing when the pressure signal is identically zero, since
    the ratio is undefined there.
    """
    if forcing is None or forcing.is_zero():
        raise ZeroForcing("diffusion ratio undefined for zero pressure data")
    denom = forcing.l2_norm() ** 2
    if denom == 0.0:
        raise ZeroForcing("diffusion ratio undefined for zero pressure data")
    return float(integral_D) / denom
