"""Interior divergence-free Stokes eigenbasis on the reference cylinder, the
boundary pressure functional, and the skew-symmetrized convection form.

The interior fluid space is { v in H^1 : div v = 0, v = 0 on the lateral wall,
v x e_z = 0 on the inlet/outlet disks } — tangential components die on the
disks while the normal (axial) component is free, so pressure differences
between the disks can do work on these modes.  Per azimuthal wavenumber the
space is discretized by tensor polynomials with built-in boundary factors; the
pointwise divergence (a polynomial) is collocated on an unisolvent Gauss grid
and the generalized eigenproblem

    int grad u : grad v = lambda int u . v

is solved inside the divergence-free nullspace.  Eigenvectors come out
mass-orthonormal, ascending, with a deterministic sign convention.
"""

import numpy as np
from scipy.linalg import eigh

from .basis1d import LegFamily, gauss
from .errors import BasisMismatch, EigenFailure
from .extension_ops import azimuthal_mode_tables
from .fluidgrid import QuadJets, cyl_tensor_to_cart, cyl_vec_to_cart


class _SectorSpace:
    """Tensor-product component profiles of one azimuthal sector.

    Components (r, t, z): radial factors r(R - r) for the in-plane components
    always, and for the axial component r(R - r) when m >= 1 but only (R - r)
    when m = 0 (the axial velocity may be nonzero on the axis); z factors
    z(L - z) for the in-plane components (clamped on the disks) and free
    polynomials for the axial one.
    """

    def __init__(self, cyl, m, n_r, n_z):
        R, L = cyl.R, cyl.L
        rr_fac = [R * R / 4.0, 0.0, -R * R / 4.0]  # r(R-r) in the mapped variable
        zz_fac = [L * L / 4.0, 0.0, -L * L / 4.0]  # z(L-z)
        rz_fac = rr_fac if m >= 1 else [R / 2.0, -R / 2.0]  # (R-r) for axial m=0
        self.m = m
        self.fam = {
            "r": (LegFamily.modal(n_r, (0.0, R), rr_fac), LegFamily.modal(n_z, (0.0, L), zz_fac)),
            "t": (LegFamily.modal(n_r, (0.0, R), rr_fac), LegFamily.modal(n_z, (0.0, L), zz_fac)),
            "z": (LegFamily.modal(n_r, (0.0, R), rz_fac), LegFamily.modal(n_z, (0.0, L))),
        }
        self.block = {c: fr.nfun * fz.nfun for c, (fr, fz) in self.fam.items()}
        self.comps = ["r", "t", "z"]
        self.offsets = {}
        off = 0
        for c in self.comps:
            self.offsets[c] = off
            off += self.block[c]
        self.ndof = off

    def profile_tables(self, dofs, r, z):
        """Component profiles and first partials for azimuthal_mode_tables."""
        out = {}
        for c in self.comps:
            fr, fz = self.fam[c]
            nr, nz = fr.nfun, fz.nfun
            cm = dofs[self.offsets[c] : self.offsets[c] + self.block[c]].reshape(nr, nz)
            Tr = fr.eval_table(r, 1)
            Tz = fz.eval_table(z, 1)
            key = {"r": "fr", "t": "ft", "z": "fz"}[c]
            out[key] = np.einsum("ij,ix,jx->x", cm, Tr[:, 0], Tz[:, 0])
            out[key + "_r"] = np.einsum("ij,ix,jx->x", cm, Tr[:, 1], Tz[:, 0])
            out[key + "_z"] = np.einsum("ij,ix,jx->x", cm, Tr[:, 0], Tz[:, 1])
        return out


def _divergence_constraint(space, cyl, n_r, n_z):
    """Collocation matrix of r * div over the sector space (a polynomial)."""
    m = space.m
    rc, _ = gauss(n_r + 4, 0.0, cyl.R)
    zc, _ = gauss(n_z + 4, 0.0, cyl.L)
    rows = {}
    for c in space.comps:
        fr, fz = space.fam[c]
        Tr = fr.eval_table(rc, 1)
        Tz = fz.eval_table(zc, 1)
        if c == "r":
            # r d_r f + f  (from (1/r) d_r (r f) times r)
            rad, ax = rc[None, :] * Tr[:, 1] + Tr[:, 0], Tz[:, 0]
        elif c == "t":
            rad, ax = float(m) * Tr[:, 0], Tz[:, 0]
        else:
            rad, ax = rc[None, :] * Tr[:, 0], Tz[:, 1]
        rows[c] = np.einsum("ix,jy->ijxy", rad, ax).reshape(space.block[c], -1)
    return np.concatenate([rows[c] for c in space.comps], axis=0).T


def _sector_forms(space, cyl, n_r, n_z):
    """Dirichlet and mass Gram matrices over the sector (2D quadrature with
    the exact azimuthal weight: 2 pi for m = 0, pi otherwise)."""
    m = space.m
    rq, wr = gauss(n_r + 6, 0.0, cyl.R)
    zq, wz = gauss(n_z + 6, 0.0, cyl.L)
    RR, ZZ = np.meshgrid(rq, zq, indexing="ij")
    WW = np.outer(wr * rq, wz).ravel()
    rr, zz = RR.ravel(), ZZ.ravel()
    weight = (2.0 * np.pi if m == 0 else np.pi) * WW
    parity = "axi" if m == 0 else "cos"
    vals = np.empty((space.ndof, 3, rr.size))
    grads = np.empty((space.ndof, 3, 3, rr.size))
    eye = np.eye(space.ndof)
    theta0 = np.zeros(rr.size)
    for k in range(space.ndof):
        prof = space.profile_tables(eye[k], rr, zz)
        if parity == "cos":
            # strip the trig factors: evaluate at theta = 0 and recover the
            # sine-carrying entries from the twin at theta = pi/(2m)
            v0, g0 = azimuthal_mode_tables(m, "cos", prof, rr, theta0)
            v1, g1 = azimuthal_mode_tables(m, "cos", prof, rr, theta0 + np.pi / (2.0 * m))
            vals[k] = v0 + v1
            grads[k] = g0 + g1
        else:
            vals[k], grads[k] = azimuthal_mode_tables(0, "axi", prof, rr, theta0)
    A = np.einsum("kijq,lijq,q->kl", grads, grads, weight)
    M = np.einsum("kiq,liq,q->kl", vals, vals, weight)
    return A, M


class StokesMode:
    """One interior eigenmode: sector profiles plus azimuthal parity.

    tables(r, theta, z) evaluates the Cartesian value, gradient and pointwise
    divergence at reference-cylinder points.
    """

    def __init__(self, cyl, space, parity, eigenvalue, dofs):
        self.cyl = cyl
        self.space = space
        self.m = space.m
        self.parity = parity
        self.eigenvalue = float(eigenvalue)
        self.dofs = dofs

    def tables(self, r, theta, z):
        r = np.asarray(r, dtype=float).ravel()
        theta = np.asarray(theta, dtype=float).ravel()
        z = np.asarray(z, dtype=float).ravel()
        prof = self.space.profile_tables(self.dofs, r, z)
        val, G = azimuthal_mode_tables(self.m, self.parity, prof, r, theta)
        return {
            "val": cyl_vec_to_cart(val[0], val[1], val[2], theta),
            "grad": cyl_tensor_to_cart(G, theta),
            "div": np.einsum("iiq->q", G),
        }

    def __call__(self, r, theta, z):
        return self.tables(r, theta, z)["val"]


class StokesBasis:
    """The n lowest interior Stokes modes, mass-orthonormal."""

    def __init__(self, cyl, modes):
        self.cyl = cyl
        self.modes = modes
        self._grid_cache = {}

    @property
    def n_modes(self):
        return len(self.modes)

    @property
    def eigenvalues(self):
        return np.array([m.eigenvalue for m in self.modes])

    def tables_on(self, grid):
        """Stacked (val, grad) arrays of all modes at the grid's reference
        nodes, cached per grid."""
        key = id(grid)
        if key not in self._grid_cache:
            val = np.empty((self.n_modes, 3, grid.n_nodes))
            grad = np.empty((self.n_modes, 3, 3, grid.n_nodes))
            for k, mode in enumerate(self.modes):
                t = mode.tables(grid.r, grid.theta, grid.z)
                val[k] = t["val"]
                grad[k] = t["grad"]
            self._grid_cache[key] = (val, grad)
        return self._grid_cache[key]


def build_stokes_basis(cyl, n_interior, max_wavenumber=0, n_r=8, n_z=8):
    """Solve the constrained Stokes eigenproblem and return the lowest modes.

    Deterministic: ascending eigenvalue (ties broken by wavenumber, then
    cosine before sine), sign fixed by the first significant profile
    coefficient being positive.
    """
    if n_interior < 1:
        raise ValueError("n_interior must be at least 1")
    candidates = []
    for m in range(max_wavenumber + 1):
        space = _SectorSpace(cyl, m, n_r, n_z)
        C = _divergence_constraint(space, cyl, n_r, n_z)
        _, s, Vt = np.linalg.svd(C, full_matrices=True)
        rank = int(np.sum(s > 1e-10 * s[0]))
        N = Vt[rank:].T
        if N.shape[1] == 0:
            continue
        A, M = _sector_forms(space, cyl, n_r, n_z)
        try:
            lam, vecs = eigh(N.T @ A @ N, N.T @ M @ N)
        except np.linalg.LinAlgError as exc:
            raise EigenFailure(f"sector m={m} eigensolve failed: {exc}") from exc
        for i in range(lam.size):
            dofs = N @ vecs[:, i]
            big = np.flatnonzero(np.abs(dofs) > 1e-8 * np.max(np.abs(dofs)))
            if dofs[big[0]] < 0:
                dofs = -dofs
            parities = ["axi"] if m == 0 else ["cos", "sin"]
            for p_i, parity in enumerate(parities):
                candidates.append((lam[i], m, p_i, StokesMode(cyl, space, parity, lam[i], dofs)))
    candidates.sort(key=lambda c: (c[0], c[1], c[2]))
    if len(candidates) < n_interior:
        raise EigenFailure(
            f"only {len(candidates)} interior modes available, {n_interior} requested"
        )
    if candidates and candidates[0][0] <= 0:
        raise EigenFailure("nonpositive Stokes eigenvalue: discretization broken")
    return StokesBasis(cyl, [c[3] for c in candidates[:n_interior]])


# ---------------------------------------------------------------------------
# trilinear convection form


def trilinear_b(u, v, w, grid, delta=None, jets=None):
    """Skew-symmetrized convection form on the current fluid domain:

        b(u, v, w) = 1/2 int (u . grad) v . w  -  1/2 int (u . grad) w . v

    integrated over the deformed domain by pullback to the reference grid.
    Fields must expose tables_from_jets(jets) or tables(r, theta, z); the
    symmetrization happens pointwise before quadrature summation, so
    b(u, v, v) = 0 and b(u, v, w) = -b(u, w, v) hold exactly.
    """
    if jets is None:
        jets = QuadJets(grid, delta, second=delta is not None)
    tu, tv, tw = (_field_tables(f, jets) for f in (u, v, w))
    conv_v = np.einsum("jq,ijq->iq", tu["val"], tv["grad"])
    conv_w = np.einsum("jq,ijq->iq", tu["val"], tw["grad"])
    integrand = 0.5 * (
        np.einsum("iq,iq->q", conv_v, tw["val"])
        - np.einsum("iq,iq->q", conv_w, tv["val"])
    )
    return float(integrand @ jets.weight)


def _field_tables(f, jets):
    if hasattr(f, "tables_from_jets"):
        return f.tables_from_jets(jets)
    if hasattr(f, "tables"):
        if jets.moving and not getattr(f, "physical_frame", False):
            raise BasisMismatch(
                f"{type(f).__name__} is a reference field; wrap it in a Piola "
                "transform before integrating over a deformed domain"
            )
        return f.tables(jets.r_phys, jets.theta, jets.z)
    raise BasisMismatch(f"{type(f).__name__} does not expose field tables")


# ---------------------------------------------------------------------------
# boundary pressure forcing


class BoundaryForcing:
    """Time-periodic inlet/outlet dynamic pressures over one period [0, T].

    Samples live on the uniform closed grid t_j = j T / (n - 1) with the first
    and last samples equal; values at arbitrary times come from trigonometric
    interpolation of the (n - 1)-point open grid.
    """

    def __init__(self, t, p_in, p_out):
        t = np.asarray(t, dtype=float)
        p_in = np.asarray(p_in, dtype=float)
        p_out = np.asarray(p_out, dtype=float)
        from .errors import GridMismatch

        if t.ndim != 1 or t.size < 3 or p_in.shape != t.shape or p_out.shape != t.shape:
            raise GridMismatch("forcing samples must share one 1D time grid")
        dt = np.diff(t)
        if not np.allclose(dt, dt[0], rtol=1e-10, atol=1e-12 * t[-1]):
            raise GridMismatch("forcing time grid must be uniform")
        if abs(p_in[0] - p_in[-1]) > 1e-12 * (1 + np.max(np.abs(p_in))) or abs(
            p_out[0] - p_out[-1]
        ) > 1e-12 * (1 + np.max(np.abs(p_out))):
            raise GridMismatch("forcing signals must close the period (first = last)")
        self.T = float(t[-1] - t[0])
        self.t = t
        self.p_in = p_in
        self.p_out = p_out
        self._fin = np.fft.rfft(p_in[:-1])
        self._fout = np.fft.rfft(p_out[:-1])
        self._n = t.size - 1

    @classmethod
    def from_callables(cls, f_in, f_out, T, n=257):
        t = np.linspace(0.0, T, n)
        return cls(t, np.array([f_in(s) for s in t]), np.array([f_out(s) for s in t]))

    def values(self, time):
        """(P_in, P_out) at arbitrary times by trigonometric interpolation."""
        time = np.atleast_1d(np.asarray(time, dtype=float))
        k = np.arange(self._fin.size)
        phase = np.exp(2j * np.pi * np.outer(time / self.T, k))
        scale = np.ones(self._fin.size)
        scale[1:] = 2.0
        if self._n % 2 == 0:
            scale[-1] = 1.0
        pin = (phase * (scale * self._fin)).real.sum(axis=1) / self._n
        pout = (phase * (scale * self._fout)).real.sum(axis=1) / self._n
        return pin, pout

    def l2_norm(self):
        """L2(0, T) norm of the pressure pair (trapezoid on the closed grid)."""
        return float(
            np.sqrt(np.trapezoid(self.p_in**2 + self.p_out**2, self.t))
        )

    def is_zero(self):
        return np.max(np.abs(self.p_in)) == 0.0 and np.max(np.abs(self.p_out)) == 0.0


def disk_flux(q, grid, z0):
    """Net axial flux int q_z dA of a reference fluid field through a disk."""
    r, th, w, z = grid.disk(z0)
    t = q.tables(r, th, z)
    return float(t["val"][2] @ w)


def boundary_load(q, pin, pout, grid):
    """Boundary pressure work functional on a reference test field:

        <F, q> = P_in int_{z=0} q_z dA - P_out int_{z=L} q_z dA

    (the weak-form boundary term with outward normals; positive when a higher
    inlet pressure pushes along a field flowing in +z).  Linear in q and in
    the pressure pair.
    """
    val = 0.0
    if pin != 0.0:
        val += pin * disk_flux(q, grid, 0.0)
    if pout != 0.0:
        val -= pout * disk_flux(q, grid, grid.cyl.L)
    return val
