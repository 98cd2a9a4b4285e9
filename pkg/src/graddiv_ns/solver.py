"""Saddle-point linear solves and the per-step nonlinear iteration.

Linear systems are solved by sparse direct LU (scipy splu, fill-reducing
ordering); Dirichlet velocity dofs are eliminated symmetrically and the
pressure is gauged by pinning one dof to zero during the solve, followed
by an exact shift to the zero-mean representative.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg, splu

from . import assembly
from .spaces import FEFunction, enforce_zero_mean, interpolate


class SolverError(RuntimeError):
    pass


class NonlinearSolveError(SolverError):
    def __init__(self, message, last_increment):
        super().__init__(message)
        self.last_increment = last_increment


@dataclass
class LinearSystem:
    """Assembled saddle-point problem for one mixed pair."""

    mixed: object
    a_vv: sp.csr_matrix
    b_pv: sp.csr_matrix
    rhs_v: np.ndarray
    rhs_p: np.ndarray
    dirichlet_dofs: np.ndarray
    dirichlet_vals: np.ndarray
    gauge_dof: int = 0


@dataclass
class NonlinearConfig:
    method: str = "picard"  # or "newton"
    tol: float = 1e-10
    max_iter: int = 50
    damping: float = 1.0

    def __post_init__(self):
        if self.method not in ("picard", "newton"):
            raise ValueError(f"unknown nonlinear method {self.method!r}")
        if self.tol <= 0 or self.max_iter < 1 or not 0 < self.damping <= 1:
            raise ValueError("invalid nonlinear configuration")


@dataclass(frozen=True)
class InfSupEstimate:
    beta_h: float
    level: int
    pair_tag: str


def _solve_constrained(matrix, rhs, cons_idx, cons_val, residual_tol=1e-10):
    """Solve with constrained dofs eliminated symmetrically.

    Returns the full solution vector with the constraints substituted and
    verifies the residual of the unreduced system on the free rows.
    """
    n = matrix.shape[0]
    mask = np.ones(n, dtype=bool)
    mask[cons_idx] = False
    free = np.flatnonzero(mask)

    csr = matrix.tocsr()
    rows = csr[free]
    rhs_f = rhs[free] - rows[:, cons_idx] @ cons_val
    a_ff = rows[:, free].tocsc()
    try:
        lu = splu(a_ff)
    except RuntimeError as exc:
        raise SolverError(
            f"singular factorization: n={n}, constrained={len(cons_idx)}, "
            f"free={len(free)} ({exc})"
        ) from exc
    x = np.empty(n)
    x[cons_idx] = cons_val
    x[free] = lu.solve(rhs_f)

    res = rhs_f - a_ff @ x[free]
    scale = max(float(np.linalg.norm(rhs_f)), 1e-300)
    rel = float(np.linalg.norm(res)) / scale
    if rel > residual_tol and np.linalg.norm(res) > residual_tol:
        raise SolverError(f"linear solve residual {rel:.3e} exceeds {residual_tol:.0e}")
    return x


def _saddle_matrix(a_vv, b_pv):
    return sp.bmat([[a_vv, -b_pv.T], [b_pv, None]], format="csr")


def solve_saddle(system):
    """Solve the saddle system; velocity honors the Dirichlet data exactly
    and the returned pressure is the zero-mean representative."""
    vel = system.mixed.velocity
    pres = system.mixed.pressure
    n_u = vel.n_dofs
    matrix = _saddle_matrix(system.a_vv, system.b_pv)
    rhs = np.concatenate([system.rhs_v, system.rhs_p])
    cons_idx = np.concatenate([system.dirichlet_dofs, [n_u + system.gauge_dof]])
    cons_val = np.concatenate([system.dirichlet_vals, [0.0]])
    try:
        x = _solve_constrained(matrix, rhs, cons_idx, cons_val)
    except SolverError as exc:
        raise SolverError(
            f"saddle solve failed (velocity block {n_u}, pressure block "
            f"{pres.n_dofs}, pinned pressure dof {system.gauge_dof}): {exc}"
        ) from exc
    u = FEFunction(vel, x[:n_u])
    p = enforce_zero_mean(FEFunction(pres, x[n_u:]))
    return u, p


@dataclass
class ImplicitStepSystem:
    """One implicit time-step equation, linearized around an iterate.

    The velocity block is base_vv + conv_weight * N(u_iterate); base_vv
    already contains the mass, viscous, and grad-div contributions with
    their scheme weights.
    """

    mixed: object
    base_vv: sp.csr_matrix
    b_pv: sp.csr_matrix
    conv_weight: float
    rhs_v: np.ndarray
    rhs_p: np.ndarray
    dirichlet_dofs: np.ndarray
    dirichlet_vals: np.ndarray
    conv_ctx: object = None
    gauge_dof: int = 0


def solve_nonlinear(step, u_init, cfg):
    """Fixed-point solve of an implicit step equation.

    u_init is the initial iterate (coefficient vector).  Returns
    (u, p, iterations); raises NonlinearSolveError when max_iter is
    exhausted, carrying the last relative increment.
    """
    vel = step.mixed.velocity
    newton = cfg.method == "newton"
    u_cur = np.asarray(u_init, dtype=float).copy()
    last_inc = np.inf
    for iteration in range(1, cfg.max_iter + 1):
        w = FEFunction(vel, u_cur)
        conv = assembly.assemble_convection(w, vel, newton=False, ctx=step.conv_ctx)
        rhs_v = step.rhs_v
        if newton:
            extra = assembly.assemble_convection_derivative(w, vel, ctx=step.conv_ctx)
            rhs_v = rhs_v + step.conv_weight * (extra @ u_cur)
            conv = conv + extra
        system = LinearSystem(
            mixed=step.mixed,
            a_vv=step.base_vv + step.conv_weight * conv,
            b_pv=step.b_pv,
            rhs_v=rhs_v,
            rhs_p=step.rhs_p,
            dirichlet_dofs=step.dirichlet_dofs,
            dirichlet_vals=step.dirichlet_vals,
            gauge_dof=step.gauge_dof,
        )
        u_new, p_new = solve_saddle(system)
        u_next = u_cur + cfg.damping * (u_new.coeffs - u_cur)
        inc = np.linalg.norm(u_next - u_cur)
        scale = np.linalg.norm(u_next)
        u_cur = u_next
        last_inc = inc / max(scale, 1e-300) if inc > 0.0 else 0.0
        if inc <= cfg.tol * scale + 1e-300:
            return FEFunction(vel, u_cur), p_new, iteration
    raise NonlinearSolveError(
        f"no convergence after {cfg.max_iter} iterations "
        f"(last relative increment {last_inc:.3e})",
        last_increment=last_inc,
    )


def stokes_projection(exact, t, mixed, nu, rhs_degree=8):
    """Discrete Stokes solve whose right-hand side is manufactured from the
    exact solution; approximates u with nu-uniform constants.

    Returns (s_h, l_h); l_h is the discrete multiplier, zero-mean.
    """
    vel = mixed.velocity
    stiff = assembly.assemble_stiffness(vel)
    div = assembly.assemble_divergence(vel, mixed.pressure)

    def momentum_source(x, y):
        f = np.asarray(exact.f(x, y, t, nu), dtype=float)
        dtu = np.asarray(exact.dt_u(x, y, t), dtype=float)
        u = np.asarray(exact.u(x, y, t), dtype=float)
        gu = np.asarray(exact.grad_u(x, y, t), dtype=float)
        conv = np.einsum("...b,...ab->...a", u, gu)
        conv += 0.5 * (gu[..., 0, 0] + gu[..., 1, 1])[..., None] * u
        return f - dtu - conv

    rhs_v = assembly.assemble_load(vel, momentum_source, degree=rhs_degree)
    rhs_v += assembly.assemble_div_load(
        vel, lambda x, y: exact.p(x, y, t), degree=rhs_degree
    )
    g = interpolate(vel, lambda x, y: exact.u(x, y, t))
    bdofs = vel.boundary_dofs
    system = LinearSystem(
        mixed=mixed,
        a_vv=nu * stiff,
        b_pv=div,
        rhs_v=rhs_v,
        rhs_p=np.zeros(mixed.pressure.n_dofs),
        dirichlet_dofs=bdofs,
        dirichlet_vals=g.coeffs[bdofs],
    )
    return solve_saddle(system)


def discrete_leray_project(v, mixed):
    """L2-orthogonal projection onto the discretely divergence-free subspace."""
    vel = mixed.velocity
    if v.space is not vel:
        raise ValueError("input must live on the velocity space of the pair")
    mass = assembly.assemble_mass(vel)
    div = assembly.assemble_divergence(vel, mixed.pressure)
    bdofs = vel.boundary_dofs
    system = LinearSystem(
        mixed=mixed,
        a_vv=mass,
        b_pv=div,
        rhs_v=mass @ v.coeffs,
        rhs_p=np.zeros(mixed.pressure.n_dofs),
        dirichlet_dofs=bdofs,
        dirichlet_vals=np.zeros(bdofs.shape[0]),
    )
    u, _ = solve_saddle(system)
    return u


def estimate_inf_sup(mixed, tol=1e-10, max_iter=200, block=3):
    """Inf-sup constant of the pair from the pressure Schur complement
    generalized eigenproblem B K^{-1} B^T q = lambda M_p q.

    K is the H1-seminorm Gram matrix on the zero-trace velocity space;
    beta_h is the square root of the smallest nonzero eigenvalue.  The
    eigensolve is block inverse iteration with Rayleigh-Ritz extraction
    (the two smallest nonzero eigenvalues of these pairs are clustered,
    which defeats single-vector iteration) and the constant-pressure mode
    deflated in the M_p inner product each sweep; convergence is declared
    when the smallest Ritz value changes by less than `tol` relatively.
    """
    vel = mixed.velocity
    pres = mixed.pressure
    stiff = assembly.assemble_stiffness(vel).tocsr()
    div = assembly.assemble_divergence(vel, pres).tocsr()
    mass_p = assembly.assemble_mass(pres).tocsr()

    mask = np.ones(vel.n_dofs, dtype=bool)
    mask[vel.boundary_dofs] = False
    free = np.flatnonzero(mask)
    k_ff = stiff[free][:, free].tocsc()
    b_f = div[:, free].tocsr()
    lu = splu(k_ff)

    n_p = pres.n_dofs
    ones = np.ones(n_p)
    m_ones = mass_p @ ones
    ones_weight = float(ones @ m_ones)

    def deflate(q):
        return q - (float(m_ones @ q) / ones_weight) * ones

    def schur(q):
        return b_f @ lu.solve(b_f.T @ q)

    op = LinearOperator((n_p, n_p), matvec=schur)

    # deterministic start block with components in all pressure modes
    block = min(block, n_p - 1)
    basis = np.column_stack(
        [deflate(np.sin((k + 1.0) * (1.0 + np.arange(n_p)))) for k in range(block)]
    )
    basis, _ = np.linalg.qr(basis)

    lam_prev = None
    for _ in range(max_iter):
        new = np.empty_like(basis)
        for j in range(block):
            rhs = deflate(mass_p @ basis[:, j])
            x, info = cg(op, rhs, rtol=1e-12, atol=0.0, maxiter=20 * n_p)
            if info != 0:
                raise SolverError(
                    f"inner CG for the inf-sup eigensolve stalled (info={info})"
                )
            new[:, j] = deflate(x)
        basis, _ = np.linalg.qr(new)
        h_s = basis.T @ np.column_stack([schur(basis[:, j]) for j in range(block)])
        h_m = basis.T @ (mass_p @ basis)
        import scipy.linalg

        ritz, vecs = scipy.linalg.eigh(0.5 * (h_s + h_s.T), h_m)
        lam = float(ritz[0])
        basis = basis @ vecs
        if lam_prev is not None and abs(lam - lam_prev) <= tol * abs(lam):
            return InfSupEstimate(
                beta_h=float(np.sqrt(lam)),
                level=vel.mesh.level,
                pair_tag=mixed.pair_tag,
            )
        lam_prev = lam
    raise SolverError(f"inf-sup inverse iteration did not settle in {max_iter} iterations")
