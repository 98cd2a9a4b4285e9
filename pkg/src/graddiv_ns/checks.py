"""Fast self-contained invariant checks behind `graddiv-ns check`.

Each check returns (name, passed, detail).  The suite is deliberately
cheap (seconds): coarse meshes only, no transient runs.
"""

import math

import numpy as np

from . import assembly
from .elements import P1, P2, eval_basis, quadrature_rule
from .mesh import mesh_stats, unit_square_mesh
from .solver import estimate_inf_sup
from .spaces import FEFunction, build_space, taylor_hood


def _check_mesh():
    ok, detail = True, []
    for level in (0, 1, 3):
        mesh = unit_square_mesh(level)
        stats = mesh_stats(mesh)
        if stats["cell_count"] != 2 * 4**level or abs(stats["total_area"] - 1.0) > 1e-12:
            ok = False
            detail.append(f"level {level}: bad counts/area {stats}")
        if abs(stats["h_max"] - math.sqrt(2.0) / 2**level) > 1e-14:
            ok = False
            detail.append(f"level {level}: h_max {stats['h_max']}")
    return "mesh geometry", ok, "; ".join(detail) or "levels 0/1/3"


def _check_quadrature():
    worst = 0.0
    for min_degree in range(1, 11):
        rule = quadrature_rule(min_degree)
        for p in range(rule.exact_degree + 1):
            for q in range(rule.exact_degree + 1 - p):
                exact = math.factorial(p) * math.factorial(q) / math.factorial(p + q + 2)
                val = float(
                    (rule.weights * rule.points[:, 1] ** p * rule.points[:, 2] ** q).sum()
                )
                worst = max(worst, abs(val - exact))
    return "quadrature exactness", worst <= 1e-13, f"worst moment error {worst:.2e}"


def _check_partition_of_unity():
    rng = np.random.default_rng(7)
    pts = rng.dirichlet((1.0, 1.0, 1.0), size=20)
    worst = 0.0
    for family in (P1, P2):
        vals, _ = eval_basis(family, pts)
        worst = max(worst, float(np.abs(vals.sum(axis=1) - 1.0).max()))
    return "partition of unity", worst <= 1e-13, f"max deviation {worst:.2e}"


def _check_skew_symmetry():
    mesh = unit_square_mesh(3)
    mixed = taylor_hood(mesh)
    vel = mixed.velocity
    rng = np.random.default_rng(11)
    mask = np.ones(vel.n_dofs)
    mask[vel.boundary_dofs] = 0.0
    w = FEFunction(vel, rng.standard_normal(vel.n_dofs))
    op = assembly.assemble_convection(w, vel)
    worst = 0.0
    for _ in range(10):
        v = rng.standard_normal(vel.n_dofs) * mask
        scale = float(v @ v) + 1e-300
        worst = max(worst, abs(float(v @ (op @ v))) / scale)
    return "convection skew-symmetry", worst <= 1e-12, f"max |b(w,v,v)|/|v|^2 = {worst:.2e}"


def _check_inf_sup():
    betas = [estimate_inf_sup(taylor_hood(unit_square_mesh(level))).beta_h
             for level in (2, 3)]
    rel = abs(betas[0] - betas[1]) / betas[1]
    ok = betas[0] > 0 and betas[1] > 0 and rel <= 0.05
    return "inf-sup stability", ok, f"beta = {betas[0]:.4f}/{betas[1]:.4f}, variation {rel:.3f}"


def _check_p1_mass():
    mesh = unit_square_mesh(0)
    space = build_space(mesh, P1)
    m = assembly.assemble_mass(space).toarray()
    area = 0.5
    local = area / 12.0 * (np.ones((3, 3)) + np.eye(3))
    expected = np.zeros((4, 4))
    for tri in mesh.cells:
        expected[np.ix_(tri, tri)] += local
    worst = float(np.abs(m - expected).max())
    return "P1 cell mass oracle", worst <= 1e-15, f"max deviation {worst:.2e}"


CHECKS = (
    _check_mesh,
    _check_quadrature,
    _check_partition_of_unity,
    _check_p1_mass,
    _check_skew_symmetry,
    _check_inf_sup,
)


def run_checks():
    return [check() for check in CHECKS]
