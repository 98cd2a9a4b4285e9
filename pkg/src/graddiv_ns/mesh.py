"""Structured conforming triangulations of the unit square.

The level-0 mesh consists of two triangles obtained by cutting (0,1)^2
along the diagonal from (0,0) to (1,1); level L is produced by L uniform
(red) refinements.  Vertices of the level-L mesh live on the dyadic
lattice {0, 1, ..., 2^L} / 2^L, and integer lattice coordinates are kept
alongside the float coordinates so that vertex deduplication and
boundary detection are exact.
"""

from dataclasses import dataclass, field

import numpy as np

SIDE_TAGS = ("bottom", "right", "top", "left")


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation of (0,1)^2; immutable after construction.

    cells are counter-clockwise vertex index triples; boundary_edges is an
    (nbe, 3) int array of (v0, v1, side) with side indexing SIDE_TAGS.
    """

    vertices: np.ndarray  # (nv, 2) float
    cells: np.ndarray  # (nc, 3) int
    boundary_edges: np.ndarray  # (nbe, 3) int
    level: int
    h_max: float
    h_min: float
    lattice: np.ndarray = field(repr=False, default=None)  # (nv, 2) int, res 2**level

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_cells(self):
        return self.cells.shape[0]

    def boundary_vertex_mask(self):
        """True for vertices on any of the four sides."""
        res = 2 ** self.level
        on = (self.lattice == 0) | (self.lattice == res)
        return on[:, 0] | on[:, 1]

    def vertex_side_tags(self):
        """List of side-tag sets per vertex; corners carry two tags."""
        res = 2 ** self.level
        tags = [set() for _ in range(self.n_vertices)]
        for i, (ix, iy) in enumerate(self.lattice):
            if iy == 0:
                tags[i].add("bottom")
            if iy == res:
                tags[i].add("top")
            if ix == 0:
                tags[i].add("left")
            if ix == res:
                tags[i].add("right")
        return tags


def _signed_areas(vertices, cells):
    p = vertices[cells]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def _cell_diameters(vertices, cells):
    p = vertices[cells]
    e = np.stack(
        [p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1
    )
    return np.sqrt((e**2).sum(axis=2)).max(axis=1)


def _boundary_edges_from_cells(cells, lattice, level):
    from collections import defaultdict

    count = defaultdict(int)
    rep = {}
    for tri in cells:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            count[key] += 1
            rep[key] = (a, b)
    res = 2 ** level
    edges = []
    for key, n in count.items():
        if n != 1:
            continue
        a, b = rep[key]
        pa, pb = lattice[a], lattice[b]
        if pa[1] == 0 and pb[1] == 0:
            side = 0  # bottom
        elif pa[0] == res and pb[0] == res:
            side = 1  # right
        elif pa[1] == res and pb[1] == res:
            side = 2  # top
        elif pa[0] == 0 and pb[0] == 0:
            side = 3  # left
        else:  # pragma: no cover - would mean a hole in the mesh
            raise AssertionError("boundary edge not on any side of the square")
        edges.append((a, b, side))
    edges.sort()
    return np.array(edges, dtype=int).reshape(-1, 3)


def _build(lattice, cells, level):
    res = 2 ** level
    vertices = lattice.astype(float) / res
    areas = _signed_areas(vertices, cells)
    if np.any(areas <= 0.0):
        raise AssertionError("cell orientation flipped during construction")
    diam = _cell_diameters(vertices, cells)
    return Mesh(
        vertices=vertices,
        cells=cells,
        boundary_edges=_boundary_edges_from_cells(cells, lattice, level),
        level=level,
        h_max=float(diam.max()),
        h_min=float(diam.min()),
        lattice=lattice,
    )


def _level0():
    lattice = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=int)
    cells = np.array([[0, 1, 2], [0, 2, 3]], dtype=int)
    return _build(lattice, cells, 0)


def refine_uniform(mesh):
    """Split every triangle into four congruent children via edge midpoints."""
    old = mesh.lattice * 2  # parent vertices on the doubled lattice
    index = {tuple(p): i for i, p in enumerate(old)}
    points = [tuple(p) for p in old]

    def midpoint(a, b):
        key = tuple((old[a] + old[b]) // 2)  # parent coords are even, exact
        i = index.get(key)
        if i is None:
            i = len(points)
            index[key] = i
            points.append(key)
        return i

    new_cells = np.empty((4 * mesh.n_cells, 3), dtype=int)
    for c, (a, b, d) in enumerate(mesh.cells):
        mab = midpoint(a, b)
        mbd = midpoint(b, d)
        mda = midpoint(d, a)
        new_cells[4 * c + 0] = (a, mab, mda)
        new_cells[4 * c + 1] = (mab, b, mbd)
        new_cells[4 * c + 2] = (mda, mbd, d)
        new_cells[4 * c + 3] = (mab, mbd, mda)
    lattice = np.array(points, dtype=int)
    return _build(lattice, new_cells, mesh.level + 1)


def unit_square_mesh(level):
    """Level-`level` uniform refinement of the two-triangle unit square mesh."""
    if level < 0:
        raise ValueError("refinement level must be nonnegative")
    mesh = _level0()
    for _ in range(int(level)):
        mesh = refine_uniform(mesh)
    return mesh


def mesh_stats(mesh):
    areas = _signed_areas(mesh.vertices, mesh.cells)
    return {
        "h_max": mesh.h_max,
        "h_min": mesh.h_min,
        "total_area": float(areas.sum()),
        "cell_count": mesh.n_cells,
        "vertex_count": mesh.n_vertices,
    }


def dump_mesh(mesh, stream):
    """Plain-text dump: header line, vertex lines `x y`, cell lines `i j k`."""
    stream.write(f"vertices {mesh.n_vertices} cells {mesh.n_cells}\n")
    for x, y in mesh.vertices:
        stream.write(f"{x:.17g} {y:.17g}\n")
    for i, j, k in mesh.cells:
        stream.write(f"{i} {j} {k}\n")
