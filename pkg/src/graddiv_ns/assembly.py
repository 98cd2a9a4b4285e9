"""Assembly of the sparse operators and load vectors of the discrete scheme.

Assembled operators are scipy CSR matrices (row offsets / column indices /
values), immutable by convention once returned.  Scalars like nu, mu, or
the time-step size are never baked in; system matrices are formed as
scalar combinations at solve time so one assembly serves whole parameter
sweeps.

Cell contributions are accumulated in deterministic cell order (single
COO -> CSR conversion), which keeps outputs bit-reproducible.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .elements import eval_basis, quadrature_rule


def default_assembly_degree(family):
    # 3k - 1 integrates the cell integrand of b(w,v,z) + b(w,z,v) exactly,
    # which makes discrete skew-symmetry hold to round-off.
    return max(5, 3 * family.polynomial_degree - 1)


@dataclass(frozen=True, eq=False)
class CellContext:
    """Per-(mesh, family, rule) tables reused across assemblies."""

    space: object
    rule: object
    vals: np.ndarray  # (nq, nd) reference basis values
    phys_grads: np.ndarray  # (nc, nq, nd, 2) physical gradients
    detj: np.ndarray  # (nc,)
    points_x: np.ndarray  # (nc, nq)
    points_y: np.ndarray  # (nc, nq)

    @property
    def vol(self):
        # quadrature weight times Jacobian, shape (nc, nq)
        return self.detj[:, None] * self.rule.weights[None, :]


def cell_context(space, degree=None, rule=None):
    mesh = space.mesh
    if rule is None:
        rule = quadrature_rule(degree or default_assembly_degree(space.family))
    vals, grads_ref = eval_basis(space.family, rule.points)

    p = mesh.vertices[mesh.cells]  # (nc, 3, 2)
    jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # (nc, 2, 2)
    detj = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    inv_jt = np.empty_like(jac)
    inv_jt[:, 0, 0] = jac[:, 1, 1]
    inv_jt[:, 0, 1] = -jac[:, 1, 0]
    inv_jt[:, 1, 0] = -jac[:, 0, 1]
    inv_jt[:, 1, 1] = jac[:, 0, 0]
    inv_jt /= detj[:, None, None]

    phys_grads = np.einsum("cde,qie->cqid", inv_jt, grads_ref)
    # physical coordinates of the quadrature points, x = v0 + J @ (l1, l2)
    ref_xy = rule.points[:, 1:]  # (nq, 2)
    xy = p[:, None, 0, :] + np.einsum("cde,qe->cqd", jac, ref_xy)
    return CellContext(
        space=space,
        rule=rule,
        vals=vals,
        phys_grads=phys_grads,
        detj=detj,
        points_x=xy[..., 0],
        points_y=xy[..., 1],
    )


def _scatter(local, row_dofs, col_dofs, shape):
    nc, ni, nj = local.shape
    rows = np.broadcast_to(row_dofs[:, :, None], (nc, ni, nj)).ravel()
    cols = np.broadcast_to(col_dofs[:, None, :], (nc, ni, nj)).ravel()
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=shape).tocsr()
    mat.sort_indices()
    return mat


def _scalar_mass(ctx):
    local = np.einsum("cq,qi,qj->cij", ctx.vol, ctx.vals, ctx.vals)
    n = ctx.space.n_scalar
    return _scatter(local, ctx.space.cell_dofs, ctx.space.cell_dofs, (n, n))


def _scalar_stiffness(ctx):
    local = np.einsum("cq,cqid,cqjd->cij", ctx.vol, ctx.phys_grads, ctx.phys_grads)
    n = ctx.space.n_scalar
    return _scatter(local, ctx.space.cell_dofs, ctx.space.cell_dofs, (n, n))


def assemble_mass(space, ctx=None):
    """Mass matrix; block-diagonal over components for vector spaces."""
    ctx = ctx or cell_context(space)
    m = _scalar_mass(ctx)
    if space.components == 1:
        return m
    return sp.block_diag([m] * space.components, format="csr")


def assemble_stiffness(space, ctx=None):
    """Gradient-gradient matrix, (grad v : grad w)."""
    ctx = ctx or cell_context(space)
    k = _scalar_stiffness(ctx)
    if space.components == 1:
        return k
    return sp.block_diag([k] * space.components, format="csr")


def assemble_divergence(vel, pres, vel_ctx=None, pres_ctx=None):
    """Pressure-divergence coupling B with (B c_v)_q = (q_h, div v_h).

    The operator mapping pressure to the momentum equation acts as -B^T.
    """
    if vel.mesh is not pres.mesh:
        raise ValueError("velocity and pressure spaces live on different meshes")
    vel_ctx = vel_ctx or cell_context(vel)
    pres_ctx = pres_ctx or cell_context(pres, rule=vel_ctx.rule)
    blocks = []
    for d in range(2):
        local = np.einsum(
            "cq,qi,cqj->cij", vel_ctx.vol, pres_ctx.vals, vel_ctx.phys_grads[..., d]
        )
        blocks.append(
            _scatter(
                local,
                pres_ctx.space.cell_dofs,
                vel_ctx.space.cell_dofs,
                (pres.n_scalar, vel.n_scalar),
            )
        )
    return sp.hstack(blocks, format="csr")


def assemble_graddiv(vel, ctx=None):
    """(div v, div w) matrix on a vector space, without any mu factor."""
    ctx = ctx or cell_context(vel)
    n = vel.n_scalar
    blocks = [[None, None], [None, None]]
    for a in range(2):
        for b in range(a, 2):
            local = np.einsum(
                "cq,cqi,cqj->cij", ctx.vol, ctx.phys_grads[..., a], ctx.phys_grads[..., b]
            )
            blocks[a][b] = _scatter(local, vel.cell_dofs, vel.cell_dofs, (n, n))
            if b > a:
                blocks[b][a] = blocks[a][b].T.tocsr()
    return sp.bmat(blocks, format="csr")


def _function_at_quad(ctx, coeffs_scalar):
    return np.einsum("ci,qi->cq", coeffs_scalar[ctx.space.cell_dofs], ctx.vals)


def _gradient_at_quad(ctx, coeffs_scalar):
    return np.einsum("ci,cqid->cqd", coeffs_scalar[ctx.space.cell_dofs], ctx.phys_grads)


def _convecting_field_data(w, vel, ctx):
    if w.space.mesh is not vel.mesh:
        raise ValueError("convecting field lives on a different mesh")
    w_ctx = ctx if w.space is vel else cell_context(w.space, rule=ctx.rule)
    ns = w.space.n_scalar
    w1 = _function_at_quad(w_ctx, w.coeffs[:ns])
    w2 = _function_at_quad(w_ctx, w.coeffs[ns:])
    g1 = _gradient_at_quad(w_ctx, w.coeffs[:ns])
    g2 = _gradient_at_quad(w_ctx, w.coeffs[ns:])
    return w1, w2, g1, g2


def assemble_convection(w, vel, newton=False, ctx=None):
    """Linearized convection N(w) with c_z^T N(w) c_v = b(w, v_h, z_h).

    b uses the skew-symmetrized form (w . grad)v + (div w) v / 2.  With
    newton=True the derivative part b(v_h, w, z_h) is added, giving the
    full Newton linearization of b(u, u, .) at w.
    """
    ctx = ctx or cell_context(vel)
    w1, w2, g1, g2 = _convecting_field_data(w, vel, ctx)
    div_w = g1[..., 0] + g2[..., 1]
    n = vel.n_scalar
    dofs = vel.cell_dofs

    transported = (
        w1[..., None] * ctx.phys_grads[..., 0]
        + w2[..., None] * ctx.phys_grads[..., 1]
        + 0.5 * div_w[..., None] * ctx.vals[None, :, :]
    )
    local = np.einsum("cq,qi,cqj->cij", ctx.vol, ctx.vals, transported)
    nc_block = _scatter(local, dofs, dofs, (n, n))
    op = sp.block_diag([nc_block, nc_block], format="csr")
    if newton:
        op = op + assemble_convection_derivative(w, vel, ctx=ctx)
    return op


def assemble_convection_derivative(w, vel, ctx=None):
    """The transposed linearization b(v_h, w, z_h), used by Newton's method."""
    ctx = ctx or cell_context(vel)
    w1, w2, g1, g2 = _convecting_field_data(w, vel, ctx)
    n = vel.n_scalar
    dofs = vel.cell_dofs
    grads_w = ((g1[..., 0], g1[..., 1]), (g2[..., 0], g2[..., 1]))
    w_comp = (w1, w2)
    blocks = [[None, None], [None, None]]
    for a in range(2):
        for b in range(2):
            trial = (
                grads_w[a][b][..., None] * ctx.vals[None, :, :]
                + 0.5 * w_comp[a][..., None] * ctx.phys_grads[..., b]
            )
            local = np.einsum("cq,qi,cqj->cij", ctx.vol, ctx.vals, trial)
            blocks[a][b] = _scatter(local, dofs, dofs, (n, n))
    return sp.bmat(blocks, format="csr")


def assemble_scalar_load(space, q, degree=8, ctx=None):
    """Entries integral of q * phi_i for a scalar space."""
    ctx = ctx or cell_context(space, degree=degree)
    qv = np.asarray(q(ctx.points_x, ctx.points_y), dtype=float)
    local = np.einsum("cq,cq,qi->ci", ctx.vol, qv, ctx.vals)
    rhs = np.zeros(space.n_scalar)
    np.add.at(rhs, space.cell_dofs, local)
    return rhs


def assemble_load(vel, f, degree=None, ctx=None):
    """Entries integral of f . phi_i for a vector space.

    f(x, y) must return values of shape x.shape + (2,).
    """
    ctx = ctx or cell_context(vel, degree=degree)
    fv = np.asarray(f(ctx.points_x, ctx.points_y), dtype=float)
    rhs = np.zeros(vel.n_dofs)
    n = vel.n_scalar
    for d in range(2):
        local = np.einsum("cq,cq,qi->ci", ctx.vol, fv[..., d], ctx.vals)
        np.add.at(rhs, vel.cell_dofs + d * n, local)
    return rhs


def assemble_div_load(vel, q, degree=None, ctx=None):
    """Entries integral of q * div(phi_i), the (p, div v) coupling."""
    ctx = ctx or cell_context(vel, degree=degree)
    qv = np.asarray(q(ctx.points_x, ctx.points_y), dtype=float)
    rhs = np.zeros(vel.n_dofs)
    n = vel.n_scalar
    for d in range(2):
        local = np.einsum("cq,cq,cqi->ci", ctx.vol, qv, ctx.phys_grads[..., d])
        np.add.at(rhs, vel.cell_dofs + d * n, local)
    return rhs


def integrate_basis(space, ctx=None):
    """Vector of integrals of the scalar basis functions."""
    ctx = ctx or cell_context(space)
    local = np.einsum("cq,qi->ci", ctx.vol, ctx.vals)
    out = np.zeros(space.n_scalar)
    np.add.at(out, space.cell_dofs, local)
    return out


def dump_operator(op, stream):
    """Matrix-market coordinate dump for debugging."""
    import scipy.io

    scipy.io.mmwrite(stream, op)
