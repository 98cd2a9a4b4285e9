"""Manufactured solutions, error norms, and convergence-rate extraction.

The error quantities mirror the bounds the scheme is designed to satisfy:
the final-time velocity L2 error, the time-integrated viscous gradient
seminorm, the time-integrated weighted divergence seminorm, their
aggregate, and the L2(0,T; L2) pressure error.  Reported values are the
square roots of the accumulated squared quantities, so second-order
spatial accuracy shows up as observed order 2.

Spatial integrals use a quadrature rule of degree >= 8; time integrals use
the composite trapezoidal rule on the step endpoints for the velocity
terms.  The pressure of an implicit step is matched with the time the
scheme approximates it at: t_n for backward Euler, the interval midpoint
for Crank-Nicolson (whose pressure is the second-order-accurate midpoint
value; pairing it with t_n would floor the error at O(dt)).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import assembly


@dataclass(frozen=True)
class ManufacturedSolution:
    """Closed-form exact solution with forcing derived from the strong form.

    All callables are vectorized: u, dt_u -> shape (..., 2); p -> (...,);
    grad_u -> (..., 2, 2) with entry [a, b] = d u_a / d x_b; div_u -> (...,);
    f(x, y, t, nu) -> (..., 2).
    """

    name: str
    u: object
    p: object
    grad_u: object
    dt_u: object
    div_u: object
    f: object


def _trig_solution(name, amp, amp_dot):
    """Family behind the verification studies: a solenoidal trig velocity
    and a zero-mean trig pressure, modulated in time by `amp`.

    All fields broadcast over both point arrays and time arrays.
    """

    pi = math.pi
    p_shift = (math.cos(1.0) - 1.0) * math.sin(1.0)

    def shape(x, y):
        sx = np.sin(pi * x - 0.7)
        cx = np.cos(pi * x - 0.7)
        sy = np.sin(pi * y + 0.2)
        cy = np.cos(pi * y + 0.2)
        return sx, cx, sy, cy

    def _amp(t):
        return np.asarray(amp(t), dtype=float)[..., None]

    def _amp_dot(t):
        return np.asarray(amp_dot(t), dtype=float)[..., None]

    def u(x, y, t):
        sx, cx, sy, cy = shape(x, y)
        return _amp(t) * np.stack([sx * sy, cx * cy], axis=-1)

    def dt_u(x, y, t):
        sx, cx, sy, cy = shape(x, y)
        return _amp_dot(t) * np.stack([sx * sy, cx * cy], axis=-1)

    def grad_u(x, y, t):
        sx, cx, sy, cy = shape(x, y)
        a = np.asarray(amp(t), dtype=float)
        g = np.empty(np.broadcast(x, y, a).shape + (2, 2))
        g[..., 0, 0] = a * pi * cx * sy
        g[..., 0, 1] = a * pi * sx * cy
        g[..., 1, 0] = -a * pi * sx * cy
        g[..., 1, 1] = -a * pi * cx * sy
        return g

    def div_u(x, y, t):
        return np.zeros(np.broadcast(x, y, np.asarray(t)).shape)

    def p(x, y, t):
        return np.asarray(amp(t), dtype=float) * (np.sin(x) * np.cos(y) + p_shift)

    def f(x, y, t, nu):
        sx, cx, sy, cy = shape(x, y)
        uu = np.stack([sx * sy, cx * cy], axis=-1)
        vel = _amp(t) * uu
        gu = grad_u(x, y, t)
        conv = np.einsum("...b,...ab->...a", vel, gu)
        lap = -2.0 * pi * pi * vel  # componentwise Laplacian of the shape
        grad_p = _amp(t) * np.stack(
            [np.cos(x) * np.cos(y), -np.sin(x) * np.sin(y)], axis=-1
        )
        return _amp_dot(t) * uu - nu * lap + conv + grad_p

    return ManufacturedSolution(
        name=name, u=u, p=p, grad_u=grad_u, dt_u=dt_u, div_u=div_u, f=f
    )


def paper_solution():
    """The manufactured solution of the reference study, modulated by cos(t)."""
    return _trig_solution("trig-cos-t", np.cos, lambda t: -np.sin(t))


def steady_solution():
    """Time-independent variant (cos factor frozen at 1); useful for
    checking that time stepping sits on the spatial-accuracy plateau."""
    return _trig_solution(
        "trig-steady",
        lambda t: np.ones(np.shape(t)),
        lambda t: np.zeros(np.shape(t)),
    )


@dataclass(frozen=True)
class RunMetadata:
    level: int
    nu: float
    mu: float
    dt: float
    scheme: str
    pair_tag: str = "TaylorHood21"
    h_max: float = float("nan")
    avg_nonlinear_iters: float = float("nan")
    max_nonlinear_iters: int = 0
    wall_time_s: float = float("nan")


@dataclass(frozen=True)
class ErrorReport:
    final_velocity_l2: float
    visc_grad_seminorm: float
    divergence_seminorm: float
    pressure_l2l2: float
    velocity_aggregate: float
    metadata: RunMetadata

    ERROR_COLUMNS = (
        "final_velocity_l2",
        "visc_grad_seminorm",
        "divergence_seminorm",
        "velocity_aggregate",
        "pressure_l2l2",
    )


def norm_contexts(mixed, degree=8):
    vel_ctx = assembly.cell_context(mixed.velocity, degree=degree)
    pres_ctx = assembly.cell_context(mixed.pressure, rule=vel_ctx.rule)
    return vel_ctx, pres_ctx


def eval_fe_velocity(u_h, ctx):
    """Values (nc, nq, 2) and gradients (nc, nq, 2, 2) at quadrature points."""
    ns = u_h.space.n_scalar
    vals = np.stack(
        [
            assembly._function_at_quad(ctx, u_h.coeffs[:ns]),
            assembly._function_at_quad(ctx, u_h.coeffs[ns:]),
        ],
        axis=-1,
    )
    grads = np.stack(
        [
            assembly._gradient_at_quad(ctx, u_h.coeffs[:ns]),
            assembly._gradient_at_quad(ctx, u_h.coeffs[ns:]),
        ],
        axis=-2,
    )
    return vals, grads


def eval_exact_velocity(exact, t, ctx):
    vals = np.asarray(exact.u(ctx.points_x, ctx.points_y, t), dtype=float)
    grads = np.asarray(exact.grad_u(ctx.points_x, ctx.points_y, t), dtype=float)
    return vals, grads


def velocity_error_sq(vals, grads, exact_vals, exact_grads, ctx):
    """Squared L2 error, squared H1-seminorm error, squared divergence norm."""
    dv = vals - exact_vals
    dg = grads - exact_grads
    div_h = grads[..., 0, 0] + grads[..., 1, 1]
    vol = ctx.vol
    l2 = float(np.einsum("cq,cqa,cqa->", vol, dv, dv))
    h1 = float(np.einsum("cq,cqab,cqab->", vol, dg, dg))
    div = float(np.einsum("cq,cq,cq->", vol, div_h, div_h))
    return l2, h1, div


def pressure_error_sq(p_h, exact, t, ctx):
    vals = assembly._function_at_quad(ctx, p_h.coeffs)
    diff = vals - np.asarray(exact.p(ctx.points_x, ctx.points_y, t), dtype=float)
    return float(np.einsum("cq,cq,cq->", ctx.vol, diff, diff))


class ErrorAccumulator:
    """Streaming reduction of a transient run into an ErrorReport.

    Designed to be passed to run_transient as the observer; snapshots are
    consumed step by step so full trajectories never need to be stored.
    """

    def __init__(self, mixed, exact, cfg, degree=8):
        self.mixed = mixed
        self.exact = exact
        self.cfg = cfg
        self.vel_ctx, self.pres_ctx = norm_contexts(mixed, degree=degree)
        self.n_steps = cfg.n_steps
        self._grad_sq = {}
        self._div_sq = {}
        self._pressure_sq = 0.0
        self._final_l2_sq = None

    def _velocity_terms(self, t, u_h):
        vals, grads = eval_fe_velocity(u_h, self.vel_ctx)
        evals, egrads = eval_exact_velocity(self.exact, t, self.vel_ctx)
        return velocity_error_sq(vals, grads, evals, egrads, self.vel_ctx)

    def on_start(self, t0, u0):
        _, h1, div = self._velocity_terms(t0, u0)
        self._grad_sq[0] = h1
        self._div_sq[0] = div

    def on_step(self, n, t_n, u_h, p_h):
        l2, h1, div = self._velocity_terms(t_n, u_h)
        self._grad_sq[n] = h1
        self._div_sq[n] = div
        if n == self.n_steps:
            self._final_l2_sq = l2
        if p_h is not None:
            t_p = t_n if self.cfg.scheme == "be" else t_n - 0.5 * self.cfg.dt
            self._pressure_sq += self.cfg.dt * pressure_error_sq(
                p_h, self.exact, t_p, self.pres_ctx
            )

    def report(self, metadata):
        if self._final_l2_sq is None:
            raise ValueError("accumulator has not seen the final step")
        dt = self.cfg.dt
        weights = {n: dt for n in self._grad_sq}
        weights[0] = 0.5 * dt
        weights[self.n_steps] = 0.5 * dt
        grad_int = sum(w * self._grad_sq[n] for n, w in weights.items())
        div_int = sum(w * self._div_sq[n] for n, w in weights.items())
        visc = math.sqrt(self.cfg.nu * grad_int)
        divergence = math.sqrt(self.cfg.mu * div_int)
        final_l2 = math.sqrt(self._final_l2_sq)
        aggregate = math.sqrt(
            self._final_l2_sq + self.cfg.nu * grad_int + self.cfg.mu * div_int
        )
        return ErrorReport(
            final_velocity_l2=final_l2,
            visc_grad_seminorm=visc,
            divergence_seminorm=divergence,
            pressure_l2l2=math.sqrt(self._pressure_sq),
            velocity_aggregate=aggregate,
            metadata=metadata,
        )

    def unweighted_divergence_seminorm(self):
        """sqrt of the plain time integral of the squared divergence, without
        the mu weight; emitted alongside the weighted column for mu sweeps."""
        dt = self.cfg.dt
        weights = {n: dt for n in self._div_sq}
        weights[0] = 0.5 * dt
        weights[self.n_steps] = 0.5 * dt
        return math.sqrt(sum(w * self._div_sq[n] for n, w in weights.items()))


def error_norms(trajectory, exact, cfg, mixed, metadata=None, degree=8):
    """ErrorReport for a trajectory with stored states (replays the stream).

    For long runs prefer passing an ErrorAccumulator directly to
    run_transient and calling .report().
    """
    if trajectory.states is None:
        raise ValueError("trajectory has no stored states; use an ErrorAccumulator")
    if len(trajectory.times) != len(trajectory.states) + 1:
        raise ValueError("trajectory must cover the full time grid from t = 0")
    acc = ErrorAccumulator(mixed, exact, cfg, degree=degree)
    acc.on_start(trajectory.times[0], trajectory.initial_velocity)
    for n, ((u, p), t) in enumerate(zip(trajectory.states, trajectory.times[1:]), start=1):
        acc.on_step(n, t, u, p)
    if metadata is None:
        metadata = RunMetadata(
            level=mixed.velocity.mesh.level,
            nu=cfg.nu,
            mu=cfg.mu,
            dt=cfg.dt,
            scheme=cfg.scheme,
            pair_tag=mixed.pair_tag,
            h_max=mixed.velocity.mesh.h_max,
        )
    return acc.report(metadata)


@dataclass
class ConvergenceTable:
    levels: list
    h_values: list
    errors: dict  # column -> list of errors
    orders: dict  # column -> list of orders between consecutive levels

    def __str__(self):
        cols = list(self.errors)
        lines = ["level  h_max      " + "  ".join(f"{c:>22}" for c in cols)]
        for i, (lvl, h) in enumerate(zip(self.levels, self.h_values)):
            cells = []
            for c in cols:
                order = f" ({self.orders[c][i - 1]:5.2f})" if i > 0 else "        "
                cells.append(f"{self.errors[c][i]:.8e}{order}")
            lines.append(f"{lvl:>5}  {h:.3e}  " + "  ".join(f"{s:>22}" for s in cells))
        return "\n".join(lines)


def convergence_table(reports, columns=ErrorReport.ERROR_COLUMNS):
    """Observed orders log2(E_coarse / E_fine) between consecutive levels."""
    if len(reports) < 2:
        raise ValueError("need at least two reports to extract orders")
    for a, b in zip(reports, reports[1:]):
        ma, mb = a.metadata, b.metadata
        if mb.level != ma.level + 1:
            raise ValueError("reports must be ordered by consecutive refinement levels")
        if (ma.nu, ma.mu, ma.dt, ma.scheme, ma.pair_tag) != (
            mb.nu, mb.mu, mb.dt, mb.scheme, mb.pair_tag,
        ):
            raise ValueError("reports mix different run parameters")
    errors = {c: [getattr(r, c) for r in reports] for c in columns}
    orders = {
        c: [math.log2(e_coarse / e_fine) for e_coarse, e_fine in zip(es, es[1:])]
        for c, es in errors.items()
    }
    return ConvergenceTable(
        levels=[r.metadata.level for r in reports],
        h_values=[r.metadata.h_max for r in reports],
        errors=errors,
        orders=orders,
    )


def observed_order(values, steps):
    """Least-squares slope of log(values) against log(steps)."""
    lx = np.log(np.asarray(steps, dtype=float))
    ly = np.log(np.asarray(values, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


def nu_sweep_comparison(reports, spread_threshold=1.25, columns=ErrorReport.ERROR_COLUMNS):
    """Max/min error ratios across a sweep of nu at otherwise equal settings."""
    if not reports:
        raise ValueError("empty report list")
    m0 = reports[0].metadata
    for r in reports[1:]:
        m = r.metadata
        if (m.level, m.mu, m.dt, m.scheme, m.pair_tag) != (
            m0.level, m0.mu, m0.dt, m0.scheme, m0.pair_tag,
        ):
            raise ValueError("reports differ in more than nu")
    ratios = {}
    flagged = []
    for c in columns:
        vals = [getattr(r, c) for r in reports]
        ratios[c] = max(vals) / min(vals) if min(vals) > 0 else float("inf")
        if ratios[c] > spread_threshold:
            flagged.append(c)
    return {"ratios": ratios, "flagged": flagged, "nu_values": [r.metadata.nu for r in reports]}
