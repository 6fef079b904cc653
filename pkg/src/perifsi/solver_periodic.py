"""Time stepping, periodic orbits, and the damped outer fixed point.

The assembled system is the linear second-order ODE

    M(t) a'' + C(t) a' + K a = f(t),        C = G + V + B + Q + A_visc,

integrated as a first-order system in x = (a, a') by the implicit midpoint
rule.  Because the rule is linear, one period defines an affine Poincare map
P(x) = A x + b whose fixed point (the T-periodic trajectory) is found from
(I - A) x* = b; a singular monodromy factor I - A signals a resonance between
the forcing period and an undamped mode.  The outer fixed point iterates the
geometry: solve the linearized periodic problem for a prescribed (shell
motion, transport) pair, mollify the resulting shell displacement and fluid
coefficients, and relax the pair towards them until self-consistency.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .assembly import GalerkinState, TimeGridPath, assemble
from .errors import (
    DomainViolation,
    GridMismatch,
    LinearSolveFailure,
    NoConvergence,
    SingularMonodromy,
)
from .extension_ops import mollify
from .geometry import check_injectivity


@dataclass
class PeriodicProblem:
    """A linear periodic system together with its time grid."""

    system: object
    T: float
    dt: float

    def __post_init__(self):
        ratio = self.T / self.dt
        self.n_steps = int(round(ratio))
        if self.n_steps < 1 or abs(ratio - self.n_steps) > 1e-9 * ratio:
            raise GridMismatch("the period must be an integer number of steps")


def _midpoint_operator(system, t_mid, dt):
    """Factor the implicit midpoint update at one step.

    Eliminating a_{m+1} from the midpoint equations leaves a single n x n
    solve:  P v+ = Pm v- - dt K a- + dt f,  a+ = a- + dt (v- + v+) / 2,
    with P = M + dt C / 2 + dt^2 K / 4 and Pm its reflection.
    """
    mats = system.matrices_at(t_mid)
    M, C, K = mats["M"], mats["C"], mats["K"]
    P = M + 0.5 * dt * C + 0.25 * dt * dt * K
    Pm = M - 0.5 * dt * C - 0.25 * dt * dt * K
    try:
        lu = lu_factor(P)
    except Exception as exc:  # LinAlgError or ValueError on bad values
        raise LinearSolveFailure(f"midpoint operator is singular at t={t_mid}") from exc
    f = system.forcing_at(t_mid, mats)
    return mats, lu, Pm, K, f


def step(system, state, dt):
    """One implicit midpoint step of the assembled system."""
    _, lu, Pm, K, f = _midpoint_operator(system, state.t + 0.5 * dt, dt)
    rhs = Pm @ state.a_dot - dt * (K @ state.a) + dt * f
    v1 = lu_solve(lu, rhs)
    if not np.all(np.isfinite(v1)):
        raise LinearSolveFailure(f"non-finite update at t={state.t}")
    a1 = state.a + 0.5 * dt * (state.a_dot + v1)
    return GalerkinState(a1, v1, state.t + dt)


def poincare_map(problem, x0, record=False):
    """Integrate one period from x0; returns the final state, or the full
    trajectory (a list of n_steps + 1 states) when record is true."""
    dt = problem.dt
    state = GalerkinState(np.array(x0.a), np.array(x0.a_dot), 0.0)
    traj = [state]
    for _ in range(problem.n_steps):
        state = step(problem.system, state, dt)
        if record:
            traj.append(state)
    return traj if record else state


def _affine_period_map(problem):
    """The one-period affine map x -> A x + b in x = (a, a')."""
    system = problem.system
    dt = problem.dt
    n = system.n
    eye = np.eye(n)
    Phi = np.eye(2 * n)
    rho = np.zeros(2 * n)
    for m in range(problem.n_steps):
        t_mid = (m + 0.5) * dt
        _, lu, Pm, K, f = _midpoint_operator(system, t_mid, dt)
        Va = lu_solve(lu, -dt * K)
        Vv = lu_solve(lu, Pm)
        vf = dt * lu_solve(lu, f)
        L = np.block(
            [
                [eye + 0.5 * dt * Va, 0.5 * dt * (eye + Vv)],
                [Va, Vv],
            ]
        )
        r = np.concatenate([0.5 * dt * vf, vf])
        Phi = L @ Phi
        rho = L @ rho + r
    return Phi, rho


def periodic_solve(problem, check_residual=True):
    """Fixed point of the Poincare map via the monodromy factorization.

    Returns (x_star, info) with info containing the map residual and the
    conditioning of I - A.  Raises SingularMonodromy when the period is
    resonant with an undamped mode of the system.
    """
    A, b = _affine_period_map(problem)
    n = problem.system.n
    I2 = np.eye(2 * n)
    F = I2 - A
    sig = np.linalg.svd(F, compute_uv=False)
    if sig[-1] <= 1e-10 * sig[0]:
        raise SingularMonodromy(
            "the period map has a unit multiplier: resonant forcing of an "
            "undamped mode"
        )
    xs = np.linalg.solve(F, b)
    x_star = GalerkinState(xs[:n], xs[n:], 0.0)
    info = {"sigma_min": float(sig[-1]), "sigma_max": float(sig[0])}
    if check_residual:
        x_end = poincare_map(problem, x_star)
        res = np.concatenate([x_end.a - x_star.a, x_end.a_dot - x_star.a_dot])
        info["residual"] = float(np.max(np.abs(res)))
    return x_star, info


@dataclass
class EnergyRecord:
    t: float
    E_kin: float
    E_el: float
    E: float
    D: float
    work_rate: float
    balance_residual: float


class EnergyLedger:
    """Per-step energy bookkeeping of a trajectory.

    E = E_kin + E_el with E_kin = v' M v / 2 and E_el = a' K a / 2; the
    per-step residual tests the discrete identity

        E_{m+1} - E_m = dt [ work_rate - D ]

    with the dissipation D and the rate of work of the pressure load and the
    moving boundary evaluated at the midpoint.  For a frozen geometry the
    identity is exact for the implicit midpoint rule; for a moving geometry
    the residual is O(dt^2) per period.
    """

    def __init__(self, records):
        self.records = records

    @classmethod
    def from_trajectory(cls, system, traj, dt):
        records = []
        for m in range(len(traj) - 1):
            s0, s1 = traj[m], traj[m + 1]
            t_mid = s0.t + 0.5 * dt
            m0 = system.matrices_at(s0.t)
            m1 = system.matrices_at(s1.t)
            mm = system.matrices_at(t_mid)
            E0 = 0.5 * s0.a_dot @ m0["M"] @ s0.a_dot + 0.5 * s0.a @ m0["K"] @ s0.a
            E1 = 0.5 * s1.a_dot @ m1["M"] @ s1.a_dot + 0.5 * s1.a @ m1["K"] @ s1.a
            vbar = 0.5 * (s0.a_dot + s1.a_dot)
            Dm = system.dissipation_matrix(mm)
            D = float(vbar @ Dm @ vbar)
            f = system.forcing_at(t_mid, mm)
            work = float(vbar @ f) - float(vbar @ mm["Q"] @ vbar)
            resid = abs(E1 - E0 + dt * D - dt * work)
            Ek = 0.5 * s0.a_dot @ m0["M"] @ s0.a_dot
            Ee = 0.5 * s0.a @ m0["K"] @ s0.a
            records.append(
                EnergyRecord(s0.t, float(Ek), float(Ee), float(Ek + Ee), D, work, resid)
            )
        return cls(records)

    def as_arrays(self):
        names = ["t", "E_kin", "E_el", "E", "D", "work_rate", "balance_residual"]
        return {n: np.array([getattr(r, n) for r in self.records]) for n in names}

    def sup_energy(self):
        return float(max((r.E for r in self.records), default=0.0))

    def integral_dissipation(self):
        if not self.records:
            return 0.0
        t = np.array([r.t for r in self.records])
        dt = t[1] - t[0] if t.size > 1 else 0.0
        return float(sum(r.D for r in self.records) * dt)

    def max_balance_residual(self):
        return float(max((r.balance_residual for r in self.records), default=0.0))


@dataclass
class OuterLoopConfig:
    """Damped Picard iteration parameters for the geometry fixed point."""

    eps: float
    theta_r: float = 0.5
    max_iter: int = 50
    tol: float = 1e-9
    margin: float = None

    def __post_init__(self):
        if self.eps <= 0.0:
            raise ValueError("mollification width eps must be positive")
        if not 0.0 < self.theta_r <= 1.0:
            raise ValueError("relaxation weight theta_r must lie in (0, 1]")


@dataclass
class OuterResult:
    x_star: GalerkinState
    system: object
    delta_path: TimeGridPath
    v_path: TimeGridPath
    iterations: int
    update: float
    periodic_residual: float
    trajectory: list = field(default_factory=list)


def _regularize_paths(basis, a_traj, v_traj, T, eps):
    """Mollified (shell coefficient, transport coefficient) paths.

    Both paths are smoothed by circular convolution in time; the shell path is
    additionally damped in the azimuthal modes with the mollifier's transfer
    factor so the geometry stays uniformly smooth.
    """
    n_t = a_traj.shape[0]
    dt = T / n_t
    shell_c = np.array([basis.shell_coefficients(a) for a in a_traj])
    shell_s = mollify(shell_c.T, eps, dt).T
    sb = basis.shell_basis
    if sb.boundary_mode == "periodic-theta":
        for k in range(shell_s.shape[1]):
            m = sb.azimuthal_wavenumber(k)
            shell_s[:, k] *= np.exp(-0.5 * (m * eps) ** 2)
    v_s = mollify(v_traj.T, eps, dt).T
    return shell_s, v_s


def outer_fixed_point(assembler, T, n_t, forcing, config, n_samples=None):
    """Damped fixed point over the (shell motion, transport field) pair.

    Each pass assembles the linearized periodic system for the current pair,
    solves for its periodic orbit, regularizes the resulting shell and fluid
    coefficient paths, and relaxes the pair towards them.  Convergence is
    declared when the relaxed update is below config.tol in the sup norm;
    geometry excursions beyond the injectivity margin raise DomainViolation
    and stagnation raises NoConvergence.
    """
    basis = assembler.basis
    cyl = assembler.cyl
    margin = config.margin if config.margin is not None else 0.05 * cyl.R
    dt = T / n_t
    delta_path = None
    v_path = None
    history = []
    for it in range(1, config.max_iter + 1):
        system = assemble(
            assembler, T, forcing,
            delta_path=delta_path, v_path=v_path,
            n_samples=n_samples, margin=margin,
        )
        problem = PeriodicProblem(system, T, dt)
        x_star, info = periodic_solve(problem)
        traj = poincare_map(problem, x_star, record=True)
        a_traj = np.array([s.a for s in traj[:-1]])
        v_traj = np.array([s.a_dot for s in traj[:-1]])
        shell_new, v_new = _regularize_paths(basis, a_traj, v_traj, T, config.eps)
        old_shell = (
            delta_path.samples if delta_path is not None else np.zeros_like(shell_new)
        )
        old_v = v_path.samples if v_path is not None else np.zeros_like(v_new)
        upd_shell = config.theta_r * (shell_new - old_shell)
        upd_v = config.theta_r * (v_new - old_v)
        update = max(
            np.max(np.abs(upd_shell)) if upd_shell.size else 0.0,
            np.max(np.abs(upd_v)) if upd_v.size else 0.0,
        )
        delta_path = TimeGridPath(T, old_shell + upd_shell)
        v_path = TimeGridPath(T, old_v + upd_v)
        history.append(update)
        for s in range(delta_path.n_t):
            f = basis.shell_basis.field(delta_path.samples[s])
            if not check_injectivity(f, margin, cyl=cyl):
                raise DomainViolation(
                    "relaxed shell path breaks domain injectivity",
                    time=s * delta_path.dt,
                )
        if update <= config.tol:
            return OuterResult(
                x_star, system, delta_path, v_path, it, update,
                info.get("residual", np.nan), traj,
            )
    raise NoConvergence(
        f"outer fixed point: update {history[-1]:.3e} > tol {config.tol:.3e} "
        f"after {config.max_iter} iterations",
        iterations=config.max_iter,
        last_update=history[-1],
    )


@dataclass
class IvpResult:
    trajectory: list
    violation_time: float = None
    ledger: EnergyLedger = None

    @property
    def completed(self):
        return self.violation_time is None


class _FrozenSystem:
    """Adapter exposing one assembled sample as a constant-in-t system."""

    def __init__(self, assembler, sample, forcing):
        self.constants = assembler.constants
        self.sample = sample
        self.forcing = forcing
        self.n = assembler.basis.n

    def matrices_at(self, t):
        s, c = self.sample, self.constants
        M = s["M"] + c["M_shell"] + c["M_solid"]
        C = s["G"] + s["B"] + s["Q"] + s["V"] + c["A_visc"]
        K = c["K_sh"] + c["A_el"]
        return {"M": M, "C": C, "K": K, "V_fluid": s["V"], "Q": s["Q"],
                "qin": s["qin"], "qout": s["qout"]}

    def forcing_at(self, t, mats=None):
        if self.forcing is None:
            return np.zeros(self.n)
        if mats is None:
            mats = self.matrices_at(t)
        pin, pout = self.forcing.values(t % self.forcing.T)
        return pin[0] * mats["qin"] - pout[0] * mats["qout"]

    def dissipation_matrix(self, mats):
        return mats["V_fluid"] + self.constants["A_visc"]


def solve_ivp(assembler, x0, t_final, dt, forcing=None, margin=None,
              with_ledger=True):
    """Nonlinear initial value integration with geometry lagged one step.

    At each step the domain motion and the convective transport are frozen at
    the current state (explicit in geometry), and the implicit midpoint step
    is taken in that geometry (implicit in physics).  A state that carries the
    shell beyond the injectivity margin ends the run gracefully: the result
    reports the reached time instead of raising.
    """
    basis = assembler.basis
    cyl = assembler.cyl
    if margin is None:
        margin = 0.05 * cyl.R
    n_steps = int(round(t_final / dt))
    state = GalerkinState(np.array(x0.a), np.array(x0.a_dot), 0.0)
    traj = [state]
    records = []
    rest = None
    for m in range(n_steps):
        eta = basis.shell_field(state.a)
        moving = np.any(basis.shell_coefficients(state.a)) or np.any(
            basis.shell_coefficients(state.a_dot)
        )
        if moving and not check_injectivity(eta, margin, cyl=cyl):
            return IvpResult(traj, violation_time=state.t,
                             ledger=EnergyLedger(records))
        if moving:
            sample = assembler.sample(
                delta=eta,
                dt_delta=basis.shell_field(state.a_dot),
                v_coeff=state.a_dot,
            )
        else:
            if rest is None or np.any(state.a_dot):
                sample = assembler.sample(v_coeff=state.a_dot)
                if not np.any(state.a_dot):
                    rest = sample
            else:
                sample = rest
        frozen = _FrozenSystem(assembler, sample, forcing)
        new = step(frozen, state, dt)
        if with_ledger:
            led = EnergyLedger.from_trajectory(frozen, [state, new], dt)
            records.extend(led.records)
        traj.append(new)
        state = new
    return IvpResult(traj, ledger=EnergyLedger(records))
