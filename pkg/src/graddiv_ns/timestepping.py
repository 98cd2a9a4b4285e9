"""Constant-step time marching of the fully discrete grad-div scheme.

Backward Euler solves

    (M/dt + nu K + mu G + N(U^n)) U^n - B^T p^n = M U^{n-1}/dt + F(t_n),
    B U^n = 0,

Crank-Nicolson puts weight 1/2 on the stiffness, grad-div, and convection
terms at both time levels (convection fully nonlinear in U^n) and averages
the load; the divergence constraint is imposed at t_n.  Boundary velocity
dofs are constrained to the nodal interpolant of the exact velocity at the
step's target time.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import assembly
from .solver import ImplicitStepSystem, NonlinearConfig, solve_nonlinear
from .spaces import FEFunction, interpolate

SCHEMES = ("be", "cn")


@dataclass(frozen=True)
class SchemeConfig:
    scheme: str
    dt: float
    t_end: float
    nu: float
    mu: float = 0.25
    initial: str = "interpolant"  # or "stokes"
    nonlinear: NonlinearConfig = field(default_factory=NonlinearConfig)

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.dt <= 0 or self.t_end <= 0 or self.nu <= 0 or self.mu < 0:
            raise ValueError("dt, t_end, nu must be positive and mu nonnegative")
        if self.initial not in ("interpolant", "stokes"):
            raise ValueError("initial must be 'interpolant' or 'stokes'")
        n = round(self.t_end / self.dt)
        if n < 1 or abs(n * self.dt - self.t_end) > 1e-12 * max(1.0, self.t_end):
            raise ValueError("dt must divide t_end to an integer step count")

    @property
    def n_steps(self):
        return round(self.t_end / self.dt)


@dataclass
class Trajectory:
    times: np.ndarray
    iteration_counts: list
    velocity: FEFunction  # final state
    pressure: FEFunction
    states: list = None  # [(u, p)] per step when stored
    initial_velocity: FEFunction = None


class TransientProblem:
    """Operators and step kernels for one (mixed pair, data, config) run.

    `exact` supplies the boundary data u(x, y, t) and the forcing
    f(x, y, t, nu); passing None means homogeneous Dirichlet data and
    zero forcing (then an explicit initial state is required).
    """

    def __init__(self, mixed, exact, cfg):
        self.mixed = mixed
        self.exact = exact
        self.cfg = cfg
        vel = mixed.velocity
        self.ctx = assembly.cell_context(vel)
        self.pres_ctx = assembly.cell_context(mixed.pressure, rule=self.ctx.rule)
        self.mass = assembly.assemble_mass(vel, ctx=self.ctx)
        self.stiff = assembly.assemble_stiffness(vel, ctx=self.ctx)
        self.graddiv = assembly.assemble_graddiv(vel, ctx=self.ctx)
        self.div = assembly.assemble_divergence(
            vel, mixed.pressure, vel_ctx=self.ctx, pres_ctx=self.pres_ctx
        )
        self.visc = cfg.nu * self.stiff + cfg.mu * self.graddiv
        theta = 1.0 if cfg.scheme == "be" else 0.5
        self.theta = theta
        self.base_vv = self.mass / cfg.dt + theta * self.visc
        self.bdofs = vel.boundary_dofs
        self.rhs_p = np.zeros(mixed.pressure.n_dofs)

    def load_vector(self, t):
        if self.exact is None:
            return np.zeros(self.mixed.velocity.n_dofs)
        cached = getattr(self, "_load_memo", None)
        if cached is not None and cached[0] == t:
            return cached[1]
        vec = assembly.assemble_load(
            self.mixed.velocity,
            lambda x, y: self.exact.f(x, y, t, self.cfg.nu),
            ctx=self.ctx,
        )
        self._load_memo = (t, vec)
        return vec

    def boundary_values(self, t):
        if self.exact is None:
            return np.zeros(self.bdofs.shape[0])
        g = interpolate(self.mixed.velocity, lambda x, y: self.exact.u(x, y, t))
        return g.coeffs[self.bdofs]

    def initial_state(self):
        if self.exact is None:
            raise ValueError("an explicit initial state is required without exact data")
        if self.cfg.initial == "interpolant":
            return interpolate(self.mixed.velocity, lambda x, y: self.exact.u(x, y, 0.0))
        from .solver import stokes_projection

        s_h, _ = stokes_projection(self.exact, 0.0, self.mixed, self.cfg.nu)
        return s_h

    def _solve_step(self, rhs_v, t_n, u_guess):
        step = ImplicitStepSystem(
            mixed=self.mixed,
            base_vv=self.base_vv,
            b_pv=self.div,
            conv_weight=self.theta,
            rhs_v=rhs_v,
            rhs_p=self.rhs_p,
            dirichlet_dofs=self.bdofs,
            dirichlet_vals=self.boundary_values(t_n),
            conv_ctx=self.ctx,
        )
        return solve_nonlinear(step, u_guess, self.cfg.nonlinear)

    def step_backward_euler(self, u_prev, t_n):
        rhs_v = self.mass @ u_prev.coeffs / self.cfg.dt + self.load_vector(t_n)
        return self._solve_step(rhs_v, t_n, u_prev.coeffs)

    def step_crank_nicolson(self, u_prev, t_n, load_prev=None):
        cfg = self.cfg
        vel = self.mixed.velocity
        if load_prev is None:
            load_prev = self.load_vector(t_n - cfg.dt)
        conv_prev = assembly.assemble_convection(u_prev, vel, ctx=self.ctx)
        rhs_v = (
            self.mass @ u_prev.coeffs / cfg.dt
            - 0.5 * (self.visc @ u_prev.coeffs)
            - 0.5 * (conv_prev @ u_prev.coeffs)
            + 0.5 * (load_prev + self.load_vector(t_n))
        )
        return self._solve_step(rhs_v, t_n, u_prev.coeffs)


def run_transient(
    mixed,
    exact,
    cfg,
    observer=None,
    store_states=False,
    initial_state=None,
    t_start=0.0,
):
    """March the scheme from t_start to t_end; N = (t_end - t_start)/dt steps.

    The observer, when given, receives on_start(t0, u0) once and then
    on_step(n, t_n, u, p) after every accepted step.  Restarting from a
    stored mid-trajectory state reproduces the remaining states exactly.
    """
    problem = TransientProblem(mixed, exact, cfg)
    span = cfg.t_end - t_start
    n_steps = round(span / cfg.dt)
    if n_steps < 0 or abs(t_start + n_steps * cfg.dt - cfg.t_end) > 1e-12 * max(1.0, cfg.t_end):
        raise ValueError("t_start must lie on the time grid")

    u0 = initial_state if initial_state is not None else problem.initial_state()
    if u0.space is not mixed.velocity:
        raise ValueError("initial state lives on the wrong space")
    u = u0
    p = None
    if observer is not None:
        observer.on_start(t_start, u)

    times = [t_start]
    iteration_counts = []
    states = [] if store_states else None
    load_prev = problem.load_vector(t_start) if cfg.scheme == "cn" else None
    for n in range(1, n_steps + 1):
        t_n = t_start + n * cfg.dt
        try:
            if cfg.scheme == "be":
                u, p, iters = problem.step_backward_euler(u, t_n)
            else:
                u, p, iters = problem.step_crank_nicolson(u, t_n, load_prev=load_prev)
                load_prev = problem.load_vector(t_n)
        except Exception as exc:
            raise RuntimeError(f"time step {n} (t = {t_n:.6g}) failed: {exc}") from exc
        times.append(t_n)
        iteration_counts.append(iters)
        if store_states:
            states.append((u.copy(), p.copy()))
        if observer is not None:
            observer.on_step(n, t_n, u, p)

    return Trajectory(
        times=np.array(times),
        iteration_counts=iteration_counts,
        velocity=u,
        pressure=p,
        states=states,
        initial_velocity=u0.copy(),
    )
