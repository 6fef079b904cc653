"""Clamped shell basis with the biharmonic form, and the solid annulus basis
with the viscoelastic Lame form.

Shell modes are tensor products of 1D clamped Euler-Bernoulli beam
eigenfunctions (boundary_mode "clamped-all") or of a trigonometric azimuthal
family with beam functions in z (boundary_mode "periodic-theta").  Solid modes
live on the annulus r in (R, R+H): a lifted family s(r) Y_k(theta, z) e_r that
carries the shell trace into the solid, plus interior modes vanishing on the
interface and on the solid inlet/outlet rings while leaving the outer surface
traction-free.
"""

from dataclasses import dataclass

import numpy as np

from .basis1d import BeamFamily, TrigFamily, gauss
from .errors import BasisMismatch
from .geometry import ShellField

_BOUNDARY_MODES = ("clamped-all", "periodic-theta")


class ShellBasis:
    """Tensor basis of the shell displacement space on omega."""

    def __init__(self, n_theta, n_z, L, boundary_mode="periodic-theta"):
        if boundary_mode not in _BOUNDARY_MODES:
            raise ValueError(f"boundary_mode must be one of {_BOUNDARY_MODES}")
        if n_theta < 1 or n_z < 1:
            raise ValueError("mode counts must be at least 1")
        self.n_theta = int(n_theta)
        self.n_z = int(n_z)
        self.L = float(L)
        self.boundary_mode = boundary_mode
        if boundary_mode == "clamped-all":
            self._theta_family = BeamFamily(self.n_theta, 2.0 * np.pi)
        else:
            self._theta_family = TrigFamily(self.n_theta)
        self._z_family = BeamFamily(self.n_z, self.L)

    @property
    def n_modes(self):
        return self.n_theta * self.n_z

    def mode_index(self, k):
        """Split flat mode index into (theta index, z index)."""
        if not 0 <= k < self.n_modes:
            raise IndexError(f"mode index {k} out of range [0, {self.n_modes})")
        return divmod(k, self.n_z)

    def azimuthal_wavenumber(self, k):
        """Azimuthal wavenumber m of mode k (periodic-theta basis only)."""
        if self.boundary_mode != "periodic-theta":
            raise ValueError("azimuthal wavenumbers only defined for periodic-theta")
        it, _ = self.mode_index(k)
        return self._theta_family.mode_m(it)

    @property
    def max_azimuthal_wavenumber(self):
        return max(self.azimuthal_wavenumber(k) for k in range(self.n_modes))

    def eval_modes(self, theta, z, nderiv=0):
        """Mode table (n_modes, ncomp, npts) with derivative components
        [val], [val, d_t, d_z] or [val, d_t, d_z, d_tt, d_tz, d_zz].

        Tables are memoized on the node-set content, so repeated evaluation
        over a fixed quadrature grid costs one coefficient contraction.
        """
        theta = np.asarray(theta, dtype=float).ravel()
        z = np.asarray(z, dtype=float).ravel()
        if theta.size != z.size:
            raise ValueError("theta and z node arrays must have equal length")
        if not hasattr(self, "_tab_cache"):
            self._tab_cache = {}
        key = (hash(theta.tobytes()), hash(z.tobytes()), nderiv)
        hit = self._tab_cache.get(key)
        if hit is not None:
            return hit
        tt = self._theta_family.eval_table(theta, nderiv)
        tz = self._z_family.eval_table(z, nderiv)
        combos = [(0, 0)]
        if nderiv >= 1:
            combos += [(1, 0), (0, 1)]
        if nderiv >= 2:
            combos += [(2, 0), (1, 1), (0, 2)]
        out = np.empty((self.n_modes, len(combos), theta.size))
        for k in range(self.n_modes):
            it, iz = self.mode_index(k)
            for c, (dt, dz) in enumerate(combos):
                out[k, c] = tt[it, dt] * tz[iz, dz]
        if len(self._tab_cache) > 16:
            self._tab_cache.clear()
        self._tab_cache[key] = out
        return out

    def shell_mode(self, k, theta, z):
        """(value, gradient(2,), hessian(2,2)) of mode k at a point."""
        tab = self.eval_modes(np.atleast_1d(theta), np.atleast_1d(z), 2)[k, :, 0]
        grad = np.array([tab[1], tab[2]])
        hess = np.array([[tab[3], tab[4]], [tab[4], tab[5]]])
        return float(tab[0]), grad, hess

    def field(self, coefficients):
        return ShellField(self, coefficients)

    def unit_field(self, k, amplitude=1.0):
        c = np.zeros(self.n_modes)
        c[k] = amplitude
        return ShellField(self, c)

    def zero_field(self):
        return ShellField(self, np.zeros(self.n_modes))

    def quadrature(self, refine=1):
        """Tensor quadrature over omega: (theta, z, w) flattened arrays.

        Exact for products of basis functions up to quadrature accuracy; the
        azimuthal rule is a uniform (trapezoidal) grid in the periodic case,
        which is spectrally exact for trigonometric integrands.
        """
        if self.boundary_mode == "periodic-theta":
            nt = max(4, 2 * self.n_theta + 2) * refine
            theta = np.linspace(0.0, 2.0 * np.pi, nt, endpoint=False)
            wt = np.full(nt, 2.0 * np.pi / nt)
        else:
            nt = 3 * self.n_theta + 12 * refine
            theta, wt = gauss(nt, 0.0, 2.0 * np.pi)
        nz = 3 * self.n_z + 12 * refine
        z, wz = gauss(nz, 0.0, self.L)
        TT, ZZ = np.meshgrid(theta, z, indexing="ij")
        WW = np.outer(wt, wz)
        return TT.ravel(), ZZ.ravel(), WW.ravel()


def biharmonic_form(eta, xi, refine=1):
    """K(eta, xi) = int_omega Hess(eta) : Hess(xi) dA by tensor quadrature."""
    if eta.basis.n_modes != xi.basis.n_modes or eta.basis.boundary_mode != xi.basis.boundary_mode:
        raise BasisMismatch("shell fields on different bases")
    theta, z, w = eta.basis.quadrature(refine)
    a = eta.evaluate(theta, z, 2)
    b = xi.evaluate(theta, z, 2)
    integrand = a[3] * b[3] + 2.0 * a[4] * b[4] + a[5] * b[5]
    return float(integrand @ w)


def shell_matrices(basis, mode_indices=None):
    """Mass and biharmonic stiffness matrices over the selected shell modes."""
    if mode_indices is None:
        mode_indices = range(basis.n_modes)
    idx = list(mode_indices)
    theta, z, w = basis.quadrature()
    tab = basis.eval_modes(theta, z, 2)[idx]
    M = np.einsum("jx,kx,x->jk", tab[:, 0], tab[:, 0], w)
    K = (
        np.einsum("jx,kx,x->jk", tab[:, 3], tab[:, 3], w)
        + 2.0 * np.einsum("jx,kx,x->jk", tab[:, 4], tab[:, 4], w)
        + np.einsum("jx,kx,x->jk", tab[:, 5], tab[:, 5], w)
    )
    return M, K


@dataclass(frozen=True)
class SolidParams:
    """Lame constants, viscoelastic coefficient and solid density.

    Defaults give the normalized model with all coefficients set to 1.
    delta_visc > 0 is required for the periodic solve.
    """

    lambda1: float = 1.0
    lambda2: float = 1.0
    delta_visc: float = 1.0
    rho_s2: float = 1.0

    def __post_init__(self):
        if self.lambda1 <= 0:
            raise ValueError("lambda1 > 0 required")
        if self.lambda2 < 0:
            raise ValueError("lambda2 >= 0 required")
        if self.delta_visc < 0:
            raise ValueError("delta_visc >= 0 required")
        if self.rho_s2 <= 0:
            raise ValueError("rho_s2 > 0 required")


def cutoff_profile(cyl, r, nderiv=0):
    """Cubic Hermite cutoff s on [R, R+H]: s(R)=1, s'(R)=0, s(R+H)=0,
    s'(R+H)=0.  Returns stacked derivatives (nderiv+1, npts)."""
    r = np.asarray(r, dtype=float).ravel()
    u = (r - cyl.R) / cyl.H
    out = [(1.0 - u) ** 2 * (1.0 + 2.0 * u)]
    if nderiv >= 1:
        out.append(6.0 * u * (u - 1.0) / cyl.H)
    if nderiv >= 2:
        out.append((12.0 * u - 6.0) / cyl.H**2)
    return np.stack(out)


class SolidGrid:
    """Tensor quadrature over the solid annulus (r, theta, z)."""

    def __init__(self, cyl, shell_basis, n_r=12, refine=1):
        self.cyl = cyl
        r, wr = gauss(n_r + 4 * refine, cyl.R, cyl.R + cyl.H)
        theta, z, wtz = shell_basis.quadrature(refine)
        ntz = theta.size
        self.r = np.repeat(r, ntz)
        self.theta = np.tile(theta, r.size)
        self.z = np.tile(z, r.size)
        # cylindrical volume element r dr dtheta dz
        self.w = (np.repeat(wr, ntz) * np.tile(wtz, r.size)) * self.r


class SolidVectorField:
    """Base class: solid displacement fields in cylindrical components."""

    def tables(self, r, theta, z):
        """Return dict with val (3,Q), grad (3,3,Q) in the orthonormal
        cylindrical frame (e_r, e_theta, e_z), and div (Q)."""
        raise NotImplementedError


def _frame_tables(comp, f, f_r, f_t, f_z, r, Q):
    """Gradient/divergence of a single-component field comp in {0:r,1:t,2:z}
    with scalar profile f and partials f_r, f_t, f_z."""
    val = np.zeros((3, Q))
    grad = np.zeros((3, 3, Q))
    val[comp] = f
    grad[comp, 0] = f_r
    grad[comp, 1] = f_t / r
    grad[comp, 2] = f_z
    if comp == 0:
        grad[1, 1] = f / r  # (d_theta d_theta + d_r)/r row
        div = f_r + f / r
    elif comp == 1:
        grad[0, 1] = -f / r
        div = f_t / r
    else:
        div = f_z
    return val, grad, div


class LiftedSolidField(SolidVectorField):
    """F_S(xi) = s(r) xi(theta, z) e_r: carries the shell trace into the
    solid; identically zero at the outer surface."""

    def __init__(self, cyl, xi):
        self.cyl = cyl
        self.xi = xi

    def tables(self, r, theta, z):
        r = np.asarray(r, dtype=float).ravel()
        s = cutoff_profile(self.cyl, r, 1)
        comp = self.xi.evaluate(theta, z, 1)
        f = s[0] * comp[0]
        return dict(
            zip(
                ("val", "grad", "div"),
                _frame_tables(
                    0, f, s[1] * comp[0], s[0] * comp[1], s[0] * comp[2], r, r.size
                ),
            )
        )


class InteriorSolidMode(SolidVectorField):
    """Tensor interior mode: radial sin((2i+1) pi (r-R)/(2H)) (zero at the
    interface, free value at the outer surface), shell-type theta factor,
    sin(j pi z / L) in z, times one frame vector."""

    def __init__(self, cyl, shell_basis, comp, i_r, i_theta, i_z):
        self.cyl = cyl
        self.basis = shell_basis
        self.comp = comp
        self.i_r = i_r
        self.i_theta = i_theta
        self.i_z = i_z

    def tables(self, r, theta, z):
        cyl = self.cyl
        r = np.asarray(r, dtype=float).ravel()
        theta = np.asarray(theta, dtype=float).ravel()
        z = np.asarray(z, dtype=float).ravel()
        kr = (2 * self.i_r + 1) * np.pi / (2.0 * cyl.H)
        pr = np.sin(kr * (r - cyl.R))
        dpr = kr * np.cos(kr * (r - cyl.R))
        tt = self.basis._theta_family.eval_table(theta, 1)[self.i_theta]
        kz = self.i_z * np.pi / self.basis.L
        pz = np.sin(kz * z)
        dpz = kz * np.cos(kz * z)
        f = pr * tt[0] * pz
        val, grad, div = _frame_tables(
            self.comp,
            f,
            dpr * tt[0] * pz,
            pr * tt[1] * pz,
            pr * tt[0] * dpz,
            r,
            r.size,
        )
        return {"val": val, "grad": grad, "div": div}


class CombinedSolidField(SolidVectorField):
    def __init__(self, fields, coefficients):
        if len(fields) != len(coefficients):
            raise BasisMismatch("coefficient count does not match field count")
        self.fields = fields
        self.coefficients = np.asarray(coefficients, dtype=float)

    def tables(self, r, theta, z):
        out = None
        for c, f in zip(self.coefficients, self.fields):
            t = f.tables(r, theta, z)
            if out is None:
                out = {k: c * v for k, v in t.items()}
            else:
                for k in out:
                    out[k] += c * t[k]
        return out


class SolidBasis:
    """Lifted plus interior solid modes paired with a shell basis."""

    def __init__(self, cyl, shell_basis, n_r=4):
        self.cyl = cyl
        self.shell_basis = shell_basis
        self.n_r = int(n_r)

    def lifted_mode(self, k):
        return LiftedSolidField(self.cyl, self.shell_basis.unit_field(k))

    def interior_modes(self, count):
        """First `count` interior modes in a fixed deterministic order."""
        modes = []
        for i_r in range(self.n_r):
            for i_z in range(1, self.shell_basis.n_z + 1):
                for comp in range(3):
                    for i_t in range(self.shell_basis.n_theta):
                        modes.append(
                            InteriorSolidMode(self.cyl, self.shell_basis, comp, i_r, i_t, i_z)
                        )
                        if len(modes) == count:
                            return modes
        raise ValueError(
            f"solid basis too small: {len(modes)} interior modes available, "
            f"{count} requested (increase n_r_solid or n_z)"
        )


def solid_lift(cyl, xi):
    """Extension of a shell field into the solid annulus (trace xi e_r at the
    interface, zero at the outer surface)."""
    return LiftedSolidField(cyl, xi)


def lame_form(d, d_dot, zeta, params, grid):
    """lambda1 int grad d : grad zeta + lambda1 delta_visc int grad d_dot :
    grad zeta + lambda2 int (div d)(div zeta) over the solid annulus."""
    tz = zeta.tables(grid.r, grid.theta, grid.z)
    total = 0.0
    td = d.tables(grid.r, grid.theta, grid.z) if d is not None else None
    if td is not None:
        total += params.lambda1 * np.einsum(
            "ijq,ijq,q->", td["grad"], tz["grad"], grid.w
        )
        total += params.lambda2 * np.einsum("q,q,q->", td["div"], tz["div"], grid.w)
    if d_dot is not None and params.delta_visc > 0:
        tdd = d_dot.tables(grid.r, grid.theta, grid.z)
        total += params.lambda1 * params.delta_visc * np.einsum(
            "ijq,ijq,q->", tdd["grad"], tz["grad"], grid.w
        )
    return float(total)
