"""Global finite element spaces, mixed pairs, and nodal interpolation.

Global scalar dof numbering is deterministic: mesh vertices first (mesh
order), then edge midpoints (sorted edge key order, P2 only), then cell
bubbles (cell order, P1+bubble only).  Vector spaces store one dof block
per component: all x-dofs first, then all y-dofs, so vector dof i of
component c is `i + c * n_scalar`.
"""

from dataclasses import dataclass, field

import numpy as np

from .elements import P1, P1Bubble, P2, local_node_barycentric


@dataclass(frozen=True, eq=False)
class FESpace:
    mesh: object
    family: object
    components: int
    cell_dofs: np.ndarray = field(repr=False)  # (nc, ndof_local) scalar dof indices
    node_coords: np.ndarray = field(repr=False)  # (n_scalar, 2)
    boundary_scalar_dofs: np.ndarray = field(repr=False)  # sorted
    n_scalar: int

    @property
    def n_dofs(self):
        return self.components * self.n_scalar

    @property
    def dof_coords(self):
        """Nodal coordinates per global dof (components share the node)."""
        return np.tile(self.node_coords, (self.components, 1))

    @property
    def boundary_dofs(self):
        """Sorted global dof indices whose nodal point lies on the boundary."""
        blocks = [
            self.boundary_scalar_dofs + c * self.n_scalar
            for c in range(self.components)
        ]
        return np.concatenate(blocks)

    def component_slice(self, c):
        return slice(c * self.n_scalar, (c + 1) * self.n_scalar)


@dataclass(frozen=True, eq=False)
class MixedSpace:
    velocity: FESpace
    pressure: FESpace
    pair_tag: str


@dataclass(eq=False)
class FEFunction:
    space: FESpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.n_dofs,):
            raise ValueError(
                f"coefficient vector has length {self.coeffs.shape}, "
                f"space has {self.space.n_dofs} dofs"
            )

    def copy(self):
        return FEFunction(self.space, self.coeffs.copy())


def _edge_index(mesh):
    """Map sorted vertex pair -> edge rank, in sorted-key order."""
    pairs = set()
    for a, b, c in mesh.cells:
        pairs.add((min(a, b), max(a, b)))
        pairs.add((min(b, c), max(b, c)))
        pairs.add((min(c, a), max(c, a)))
    return {pair: i for i, pair in enumerate(sorted(pairs))}


def build_space(mesh, family, components=1):
    if components not in (1, 2):
        raise ValueError("components must be 1 or 2")
    nv = mesh.n_vertices
    cells = mesh.cells
    on_boundary = mesh.boundary_vertex_mask()

    if family.tag == "P1":
        cell_dofs = cells.copy()
        node_coords = mesh.vertices.copy()
        bmask = on_boundary.copy()
    elif family.tag == "P2":
        edges = _edge_index(mesh)
        cell_dofs = np.empty((mesh.n_cells, 6), dtype=int)
        cell_dofs[:, :3] = cells
        for c, (a, b, d) in enumerate(cells):
            # local edge k is opposite local vertex k
            cell_dofs[c, 3] = nv + edges[(min(b, d), max(b, d))]
            cell_dofs[c, 4] = nv + edges[(min(d, a), max(d, a))]
            cell_dofs[c, 5] = nv + edges[(min(a, b), max(a, b))]
        mid_coords = np.empty((len(edges), 2))
        for (a, b), i in edges.items():
            mid_coords[i] = 0.5 * (mesh.vertices[a] + mesh.vertices[b])
        node_coords = np.vstack([mesh.vertices, mid_coords])
        bmask = np.zeros(nv + len(edges), dtype=bool)
        bmask[:nv] = on_boundary
        boundary_pairs = {
            (min(a, b), max(a, b)) for a, b, _ in mesh.boundary_edges
        }
        for pair in boundary_pairs:
            bmask[nv + edges[pair]] = True
    elif family.tag == "P1Bubble":
        cell_dofs = np.empty((mesh.n_cells, 4), dtype=int)
        cell_dofs[:, :3] = cells
        cell_dofs[:, 3] = nv + np.arange(mesh.n_cells)
        centroids = mesh.vertices[cells].mean(axis=1)
        node_coords = np.vstack([mesh.vertices, centroids])
        bmask = np.zeros(nv + mesh.n_cells, dtype=bool)
        bmask[:nv] = on_boundary  # bubbles are never boundary dofs
    else:
        raise ValueError(f"unknown element family {family.tag!r}")

    return FESpace(
        mesh=mesh,
        family=family,
        components=components,
        cell_dofs=cell_dofs,
        node_coords=node_coords,
        boundary_scalar_dofs=np.flatnonzero(bmask),
        n_scalar=node_coords.shape[0],
    )


def taylor_hood(mesh):
    """P2 vector velocity with P1 pressure on the same mesh."""
    return MixedSpace(
        velocity=build_space(mesh, P2, components=2),
        pressure=build_space(mesh, P1, components=1),
        pair_tag="TaylorHood21",
    )


def mini(mesh):
    """(P1 + cell bubble) vector velocity with P1 pressure."""
    return MixedSpace(
        velocity=build_space(mesh, P1Bubble, components=2),
        pressure=build_space(mesh, P1, components=1),
        pair_tag="Mini11",
    )


def mixed_pair(mesh, pair_tag):
    if pair_tag in ("TaylorHood21", "taylor_hood"):
        return taylor_hood(mesh)
    if pair_tag in ("Mini11", "mini"):
        return mini(mesh)
    raise ValueError(f"unknown mixed pair {pair_tag!r}")


def _lagrange_node_count(space):
    # bubble dofs sit at the end of the scalar numbering and are not nodal
    if space.family.tag == "P1Bubble":
        return space.mesh.n_vertices
    return space.n_scalar


def interpolate(space, g):
    """Lagrange interpolant: nodal dofs get g, bubble coefficients get 0.

    `g` must be vectorized over point arrays: g(x, y) -> (n,) for scalar
    spaces and (n, 2) for vector spaces.
    """
    n_lag = _lagrange_node_count(space)
    x, y = space.node_coords[:n_lag, 0], space.node_coords[:n_lag, 1]
    vals = np.asarray(g(x, y), dtype=float)
    coeffs = np.zeros(space.n_dofs)
    if space.components == 1:
        if vals.shape != (n_lag,):
            raise ValueError("scalar interpoland must return shape (n,)")
        coeffs[:n_lag] = vals
    else:
        if vals.shape != (n_lag, 2):
            raise ValueError("vector interpoland must return shape (n, 2)")
        coeffs[:n_lag] = vals[:, 0]
        coeffs[space.n_scalar : space.n_scalar + n_lag] = vals[:, 1]
    return FEFunction(space, coeffs)


def function_mean(f):
    """Integral of a scalar FEFunction over the unit-square domain."""
    from .assembly import integrate_basis

    return float(integrate_basis(f.space) @ f.coeffs)


def enforce_zero_mean(p_h):
    """Shift a scalar FEFunction by a constant so its domain integral is 0."""
    if p_h.space.components != 1:
        raise ValueError("enforce_zero_mean expects a scalar function")
    mean = function_mean(p_h)  # |Omega| = 1
    coeffs = p_h.coeffs.copy()
    coeffs[: _lagrange_node_count(p_h.space)] -= mean
    return FEFunction(p_h.space, coeffs)


def l2_project_pressure(space, q, rhs_degree=8):
    """L^2 projection of a pointwise function q onto a scalar space."""
    from scipy.sparse.linalg import spsolve

    from .assembly import assemble_mass, assemble_scalar_load

    if space.components != 1:
        raise ValueError("l2_project_pressure expects a scalar space")
    mass = assemble_mass(space)
    rhs = assemble_scalar_load(space, q, degree=rhs_degree)
    return FEFunction(space, spsolve(mass.tocsc(), rhs))
