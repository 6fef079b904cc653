"""Quadrature grids on the reference fluid cylinder and pulled-back jets of
the moving domain.

All moving-domain fluid integrals are evaluated by pulling back to the fixed
reference cylinder: nodes are a tensor product of a composite Gauss rule in r
(elements [0, R/4], [R/4, R/2], [R/2, R], matching the piecewise structure of
the extension operator), a uniform periodic rule in theta and Gauss in z.
`QuadJets` bundles everything field evaluators need at those nodes for a given
shell motion: physical positions, the deformation gradient, its inverse,
spatial derivative and time derivative, and the Jacobian weight.

Gradient convention everywhere: grad[i, j] = d u_i / d x_j (row = component).
"""

import numpy as np

from .basis1d import gauss
from .geometry import ale_jets


def frame_vectors(theta):
    """Orthonormal cylindrical frame as a rotation matrix Q = [e_r e_t e_z]
    with shape (3, 3, Q)."""
    c, s = np.cos(theta), np.sin(theta)
    z = np.zeros_like(c)
    o = np.ones_like(c)
    return np.array([[c, -s, z], [s, c, z], [z, z, o]])


def cyl_vec_to_cart(vr, vt, vz, theta):
    """Cartesian components of v_r e_r + v_t e_theta + v_z e_z, shape (3, Q)."""
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([vr * c - vt * s, vr * s + vt * c, vz])


def cyl_tensor_to_cart(G, theta):
    """Rotate a frame tensor G[i, j] (i component, j direction) to Cartesian:
    Q G Q^T, vectorized over the trailing axis."""
    Q = frame_vectors(theta)
    return np.einsum("ikq,klq,jlq->ijq", Q, G, Q, optimize=True)


class FluidGrid:
    """Tensor quadrature over the reference fluid cylinder."""

    def __init__(self, cyl, n_r=10, n_theta=4, n_z=20):
        self.cyl = cyl
        R, L = cyl.R, cyl.L
        self.breaks = np.array([0.0, R / 4.0, R / 2.0, R])
        rs, wrs = [], []
        for a, b in zip(self.breaks[:-1], self.breaks[1:]):
            x, w = gauss(n_r, a, b)
            rs.append(x)
            wrs.append(w)
        r1, wr1 = np.concatenate(rs), np.concatenate(wrs)
        th1 = np.linspace(0.0, 2.0 * np.pi, n_theta, endpoint=False)
        wt1 = np.full(n_theta, 2.0 * np.pi / n_theta)
        z1, wz1 = gauss(n_z, 0.0, L)
        RR, TT, ZZ = np.meshgrid(r1, th1, z1, indexing="ij")
        WW = (
            wr1[:, None, None] * wt1[None, :, None] * wz1[None, None, :]
        ) * RR
        self.r = RR.ravel()
        self.theta = TT.ravel()
        self.z = ZZ.ravel()
        self.w = WW.ravel()
        self.x = self.r * np.cos(self.theta)
        self.y = self.r * np.sin(self.theta)
        self.n_nodes = self.r.size
        self.n_theta = n_theta
        self._r1, self._wr1 = r1, wr1
        self._th1, self._wt1 = th1, wt1

    def disk(self, z0):
        """Quadrature over the inlet/outlet disk at z = z0: (r, theta, w)."""
        RR, TT = np.meshgrid(self._r1, self._th1, indexing="ij")
        WW = (self._wr1[:, None] * self._wt1[None, :]) * RR
        return RR.ravel(), TT.ravel(), WW.ravel(), np.full(RR.size, z0)


class QuadJets:
    """ALE jets of a shell motion evaluated on a FluidGrid.

    Attributes: grid; delta; r_phys/theta/z_phys physical cylindrical node
    coordinates; det (Q); weight (quadrature weight times det); grad, ginv,
    A = grad/det, dA[i,j,a] = d_a A[i,j]; and when a time derivative of the
    motion is supplied: dt_psi, dt_A, dt_det.
    """

    def __init__(self, grid, delta=None, dt_delta=None, second=True):
        self.grid = grid
        self.delta = delta
        Q = grid.n_nodes
        if delta is None:
            eye = np.zeros((3, 3, Q))
            eye[0, 0] = eye[1, 1] = eye[2, 2] = 1.0
            self.r_phys = grid.r
            self.theta = grid.theta
            self.z = grid.z
            self.det = np.ones(Q)
            self.grad = eye
            self.ginv = eye.copy()
            self.A = eye.copy()
            self.dA = np.zeros((3, 3, 3, Q)) if second else None
            self.dt_psi = np.zeros((3, Q))
            self.dt_A = np.zeros((3, 3, Q))
            self.dt_det = np.zeros(Q)
            self.moving = False
        else:
            jets = ale_jets(
                grid.cyl, delta, grid.x, grid.y, grid.z, second=second, dt_delta=dt_delta
            )
            psi = jets["psi"]
            self.r_phys = np.hypot(psi[0], psi[1])
            self.theta = grid.theta
            self.z = grid.z
            self.det = jets["det"]
            g = jets["grad"]
            self.grad = g
            self.ginv = _invert_grad(g)
            self.A = g / self.det
            if second:
                dg = jets["dgrad"]
                ddet = (
                    dg[0, 0] * g[1, 1][None]
                    + g[0, 0][None] * dg[1, 1]
                    - dg[0, 1] * g[1, 0][None]
                    - g[0, 1][None] * dg[1, 0]
                )  # (3, Q): d_a det
                self.dA = dg / self.det - np.einsum(
                    "ijq,aq->ijaq", g, ddet / self.det**2
                )
            else:
                self.dA = None
            if dt_delta is not None:
                self.dt_psi = jets["dt_psi"]
                self.dt_det = jets["dt_det"]
                self.dt_A = jets["dt_grad"] / self.det - g * (
                    self.dt_det / self.det**2
                )
            else:
                self.dt_psi = np.zeros((3, Q))
                self.dt_A = np.zeros((3, 3, Q))
                self.dt_det = np.zeros(Q)
            self.moving = True
        self.weight = grid.w * self.det


def _invert_grad(g):
    """Inverse of the ALE deformation gradient (third row is (0, 0, 1))."""
    det2 = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
    inv = np.zeros_like(g)
    inv[0, 0] = g[1, 1] / det2
    inv[0, 1] = -g[0, 1] / det2
    inv[1, 0] = -g[1, 0] / det2
    inv[1, 1] = g[0, 0] / det2
    inv[2, 2] = 1.0
    # third column: solve for the z-derivative part: -inv2x2 @ g[:2, 2]
    inv[0, 2] = -(inv[0, 0] * g[0, 2] + inv[0, 1] * g[1, 2])
    inv[1, 2] = -(inv[1, 0] * g[0, 2] + inv[1, 1] * g[1, 2])
    return inv
