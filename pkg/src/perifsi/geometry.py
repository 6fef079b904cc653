"""Reference cylinder geometry, the radial ALE map, and admissibility checks.

The deformation map sends a reference point (x, y, z) of the cylinder of
radius R to ((R+d)/R x, (R+d)/R y, z) where d is the shell displacement at the
angular coordinates of the point.  Everything downstream (moving-domain
quadrature, Piola transforms, basis transport) consumes the jets computed
here, so the gradient and its spatial/time derivatives are all analytic.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainViolation


@dataclass(frozen=True)
class CylinderConfig:
    """Reference cylinder of radius R and length L with a solid annulus of
    thickness H on the outside."""

    R: float
    L: float
    H: float

    def __post_init__(self):
        if not (self.R > 0 and self.L > 0 and self.H > 0):
            raise ValueError("R, L, H must all be positive")


class ShellField:
    """Scalar field on omega = (0, 2pi) x (0, L) expanded on a shell basis.

    Reused for the displacement eta, the prescribed motion delta and test
    functions xi.  The basis object supplies mode evaluation tables; see
    shell_solid.ShellBasis.
    """

    def __init__(self, basis, coefficients):
        coefficients = np.asarray(coefficients, dtype=float)
        if coefficients.shape != (basis.n_modes,):
            raise ValueError(
                f"expected {basis.n_modes} coefficients, got {coefficients.shape}"
            )
        self.basis = basis
        self.coefficients = coefficients

    @property
    def basis_dims(self):
        return (self.basis.n_theta, self.basis.n_z)

    def evaluate(self, theta, z, nderiv=0):
        """Return derivatives stacked as (ncomp, npts): [val], [val, d_theta,
        d_z] or [val, d_theta, d_z, d_tt, d_tz, d_zz]."""
        tab = self.basis.eval_modes(theta, z, nderiv)
        return np.einsum("k,kcx->cx", self.coefficients, tab)

    def value(self, theta, z):
        return self.evaluate(theta, z, 0)[0]

    def gradient(self, theta, z):
        return self.evaluate(theta, z, 1)[1:]

    def __add__(self, other):
        self._check_same_basis(other)
        return ShellField(self.basis, self.coefficients + other.coefficients)

    def __sub__(self, other):
        self._check_same_basis(other)
        return ShellField(self.basis, self.coefficients - other.coefficients)

    def __mul__(self, scalar):
        return ShellField(self.basis, self.coefficients * float(scalar))

    __rmul__ = __mul__

    def _check_same_basis(self, other):
        if other.basis is not self.basis and (
            other.basis.n_modes != self.basis.n_modes
            or other.basis.boundary_mode != self.basis.boundary_mode
        ):
            raise ValueError("shell fields built on different bases")

    def sample_grid(self, oversample=4):
        """Dense tensor sample of the field (used for sup-norm checks)."""
        basis = self.basis
        nt = max(8, oversample * basis.n_theta)
        nz = max(8, oversample * basis.n_z) + 2
        theta = np.linspace(0.0, 2.0 * np.pi, nt, endpoint=False)
        z = np.linspace(0.0, basis.L, nz)
        tt, zz = np.meshgrid(theta, z, indexing="ij")
        return self.value(tt.ravel(), zz.ravel())

    def sup_norm(self, oversample=4):
        return float(np.max(np.abs(self.sample_grid(oversample))))


@dataclass(frozen=True)
class AleJet:
    """Value, gradient and Jacobian determinant of the ALE map at one point."""

    value: np.ndarray
    gradient: np.ndarray
    det: float


def _delta_tables(cyl, delta, theta, z, nderiv):
    """Evaluate delta and scaled derivative combinations s = (R+delta)/R."""
    comp = delta.evaluate(theta, z, nderiv)
    R = cyl.R
    out = {"s": (R + comp[0]) / R}
    if nderiv >= 1:
        out["s_t"] = comp[1] / R
        out["s_z"] = comp[2] / R
    if nderiv >= 2:
        out["s_tt"] = comp[3] / R
        out["s_tz"] = comp[4] / R
        out["s_zz"] = comp[5] / R
    return out


def ale_jets(cyl, delta, x, y, z, second=False, dt_delta=None):
    """Vectorized ALE jets at reference points given in Cartesian coordinates.

    Returns a dict with keys: psi (3,Q), grad (3,3,Q), det (Q); plus
    dgrad (3,3,3,Q) with dgrad[i,j,a] = d_a d_j psi_i when second=True; plus
    dt_psi, dt_grad, dt_det when the time derivative of delta is supplied.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    z = np.asarray(z, dtype=float).ravel()
    theta = np.arctan2(y, x)
    r2 = np.maximum(x * x + y * y, 1e-300)

    d = _delta_tables(cyl, delta, theta, z, 2 if second else 1)
    s, s_t, s_z = d["s"], d["s_t"], d["s_z"]

    th_x = -y / r2
    th_y = x / r2
    s_x = s_t * th_x
    s_y = s_t * th_y

    Q = x.size
    psi = np.stack([s * x, s * y, z])
    grad = np.zeros((3, 3, Q))
    grad[0, 0] = s + x * s_x
    grad[0, 1] = x * s_y
    grad[0, 2] = x * s_z
    grad[1, 0] = y * s_x
    grad[1, 1] = s + y * s_y
    grad[1, 2] = y * s_z
    grad[2, 2] = 1.0
    det = grad[0, 0] * grad[1, 1] - grad[0, 1] * grad[1, 0]

    out = {"psi": psi, "grad": grad, "det": det, "theta": theta}

    if second:
        s_tt, s_tz, s_zz = d["s_tt"], d["s_tz"], d["s_zz"]
        th = np.zeros((3, Q))  # theta_a
        th[0], th[1] = th_x, th_y
        th2 = np.zeros((3, 3, Q))  # theta_ab
        th2[0, 0] = 2.0 * x * y / r2**2
        th2[0, 1] = th2[1, 0] = (y * y - x * x) / r2**2
        th2[1, 1] = -2.0 * x * y / r2**2
        ez = np.zeros((3, Q))
        ez[2] = 1.0
        # Cartesian Hessian of s via the chain rule through (theta, z)
        s_ab = (
            np.einsum("q,aq,bq->abq", s_tt, th, th)
            + np.einsum("q,abq->abq", s_t, th2)
            + np.einsum("q,aq,bq->abq", s_tz, th, ez)
            + np.einsum("q,aq,bq->abq", s_tz, ez, th)
            + np.einsum("q,aq,bq->abq", s_zz, ez, ez)
        )
        s_a = np.stack([s_x, s_y, s_z])
        xi = np.stack([x, y])
        dgrad = np.zeros((3, 3, 3, Q))
        for i in range(2):
            for j in range(3):
                for a in range(3):
                    term = xi[i] * s_ab[j, a]
                    if i == j:
                        term = term + s_a[a]
                    if i == a:
                        term = term + s_a[j]
                    dgrad[i, j, a] = term
        out["dgrad"] = dgrad

    if dt_delta is not None:
        dd = _delta_tables(cyl, dt_delta, theta, z, 1)
        # dt_delta enters psi and grad exactly like delta does: the entries
        # are linear in (s, s_theta, s_z)
        sd = dd["s"] - 1.0  # (R + ddot)/R - 1 = ddot/R
        sd_t, sd_z = dd["s_t"], dd["s_z"]
        sd_x = sd_t * th_x
        sd_y = sd_t * th_y
        dt_psi = np.stack([sd * x, sd * y, np.zeros(Q)])
        dt_grad = np.zeros((3, 3, Q))
        dt_grad[0, 0] = sd + x * sd_x
        dt_grad[0, 1] = x * sd_y
        dt_grad[0, 2] = x * sd_z
        dt_grad[1, 0] = y * sd_x
        dt_grad[1, 1] = sd + y * sd_y
        dt_grad[1, 2] = y * sd_z
        dt_det = (
            dt_grad[0, 0] * grad[1, 1]
            + grad[0, 0] * dt_grad[1, 1]
            - dt_grad[0, 1] * grad[1, 0]
            - grad[0, 1] * dt_grad[1, 0]
        )
        out["dt_psi"] = dt_psi
        out["dt_grad"] = dt_grad
        out["dt_det"] = dt_det

    return out


def ale_map(cyl, delta, p, margin=None):
    """ALE jet at a single reference point p = (x, y, z).

    Raises DomainViolation when the injectivity check fails.
    """
    if margin is None:
        margin = 0.05 * cyl.R
    if not check_injectivity(delta, margin, cyl=cyl):
        raise DomainViolation("shell displacement breaks domain injectivity")
    p = np.asarray(p, dtype=float)
    jets = ale_jets(cyl, delta, p[0:1], p[1:2], p[2:3])
    return AleJet(
        value=jets["psi"][:, 0].copy(),
        gradient=jets["grad"][:, :, 0].copy(),
        det=float(jets["det"][0]),
    )


def interface_jacobian(cyl, eta, theta, z):
    """Surface Jacobian sqrt((1+(dz eta)^2)(R+eta)^2 + (dtheta eta)^2)."""
    theta = np.asarray(theta, dtype=float)
    z = np.asarray(z, dtype=float)
    comp = eta.evaluate(theta.ravel(), z.ravel(), 1)
    val, dth, dz = comp
    J = np.sqrt((1.0 + dz**2) * (cyl.R + val) ** 2 + dth**2)
    return J.reshape(theta.shape) if theta.shape else float(J[0])


def check_injectivity(eta, margin, cyl=None, R=None):
    """True iff sup |eta| < R - margin on a dense (4x oversampled) grid."""
    R = cyl.R if cyl is not None else R
    if not (0.0 < margin < R):
        raise ValueError("margin must lie in (0, R)")
    return eta.sup_norm(oversample=4) < R - margin
