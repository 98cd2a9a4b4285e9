"""Reference-triangle shape functions and quadrature rules.

Conventions used throughout the package:

* The reference triangle K_hat has vertices (0,0), (1,0), (0,1).
* Barycentric coordinates are ordered (l0, l1, l2) with l0 = 1 - x - y,
  l1 = x, l2 = y, so vertex i is where l_i = 1.
* Local edge k is the edge opposite vertex k, i.e. it connects vertices
  (k+1) % 3 and (k+2) % 3.
* Local dof order: vertices 0..2 first, then (P2) edge midpoints 3..5 in
  the edge order above, or (P1+bubble) the cell bubble as dof 3.
"""

from dataclasses import dataclass

import numpy as np

# gradients of the barycentric coordinates in reference (x, y) coordinates
_BARY_GRADS = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


@dataclass(frozen=True)
class ElementFamily:
    """One of the three supported scalar element families."""

    tag: str
    dofs_per_cell: int
    polynomial_degree: int


P1 = ElementFamily("P1", 3, 1)
P2 = ElementFamily("P2", 6, 2)
P1Bubble = ElementFamily("P1Bubble", 4, 3)

_FAMILIES = {f.tag: f for f in (P1, P2, P1Bubble)}


def family_by_tag(tag):
    try:
        return _FAMILIES[tag]
    except KeyError:
        raise ValueError(f"unknown element family {tag!r}") from None


def _check_barycentric(points):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != 3:
        raise ValueError("barycentric points must have three coordinates")
    if np.any(points < -1e-12):
        raise ValueError("barycentric coordinates must be nonnegative")
    if np.any(np.abs(points.sum(axis=1) - 1.0) > 1e-12):
        raise ValueError("barycentric coordinates must sum to 1")
    return points


def eval_basis(family, points):
    """Evaluate all shape functions of `family` at barycentric `points`.

    Returns (values, gradients) with shapes (npts, ndof) and
    (npts, ndof, 2); gradients are taken in reference coordinates.
    """
    lam = _check_barycentric(points)
    npts = lam.shape[0]
    l0, l1, l2 = lam[:, 0], lam[:, 1], lam[:, 2]
    g0, g1, g2 = _BARY_GRADS

    if family.tag == "P1":
        values = lam.copy()
        grads = np.broadcast_to(_BARY_GRADS, (npts, 3, 2)).copy()
    elif family.tag == "P2":
        values = np.empty((npts, 6))
        grads = np.empty((npts, 6, 2))
        ls = (l0, l1, l2)
        gs = (g0, g1, g2)
        for i in range(3):
            values[:, i] = ls[i] * (2.0 * ls[i] - 1.0)
            grads[:, i, :] = (4.0 * ls[i] - 1.0)[:, None] * gs[i]
        for k in range(3):
            a, b = (k + 1) % 3, (k + 2) % 3
            values[:, 3 + k] = 4.0 * ls[a] * ls[b]
            grads[:, 3 + k, :] = 4.0 * (ls[a][:, None] * gs[b] + ls[b][:, None] * gs[a])
    elif family.tag == "P1Bubble":
        values = np.empty((npts, 4))
        grads = np.empty((npts, 4, 2))
        values[:, :3] = lam
        grads[:, :3, :] = np.broadcast_to(_BARY_GRADS, (npts, 3, 2))
        values[:, 3] = 27.0 * l0 * l1 * l2
        grads[:, 3, :] = 27.0 * (
            (l1 * l2)[:, None] * g0 + (l0 * l2)[:, None] * g1 + (l0 * l1)[:, None] * g2
        )
    else:
        raise ValueError(f"unknown element family {family.tag!r}")
    return values, grads


def local_node_barycentric(family):
    """Barycentric coordinates of the nodal points, in local dof order."""
    verts = np.eye(3)
    if family.tag == "P1":
        return verts
    if family.tag == "P2":
        mids = np.array([[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])
        return np.vstack([verts, mids])
    if family.tag == "P1Bubble":
        return np.vstack([verts, np.full((1, 3), 1.0 / 3.0)])
    raise ValueError(f"unknown element family {family.tag!r}")


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Symmetric quadrature rule on the reference triangle.

    Weights are normalized so that they sum to the reference area 1/2.
    """

    points: np.ndarray  # (n, 3) barycentric
    weights: np.ndarray  # (n,)
    exact_degree: int


# Orbit tables, refined by Newton iteration on the symmetric moment
# equations to ~50 significant digits (far below the 1e-13 exactness
# tolerance used in the audits).  'c' is the centroid, ('a3', w, a) the
# 3-point orbit of (1-2a, a, a), ('ab6', w, a, b) the 6-point orbit of
# (1-a-b, a, b); w already carries the sum-to-1/2 normalization.
_RULE_TABLES = {
    1: [("c", 0.5)],
    2: [("a3", 1.0 / 6.0, 1.0 / 6.0)],
    4: [
        ("a3", 0.11169079483900573, 0.44594849091596489),
        ("a3", 0.054975871827660934, 0.091576213509770743),
    ],
    5: None,  # built from closed forms below
    8: [
        ("c", 0.072157803838893584),
        ("a3", 0.047545817133642312, 0.45929258829272316),
        ("a3", 0.051608685267359125, 0.17056930775176021),
        ("a3", 0.01622924881159904, 0.050547228317030975),
        ("ab6", 0.013615157087217497, 0.26311282963463811, 0.0083947774099576053),
    ],
    10: [
        ("c", 0.04540899519137679),
        ("a3", 0.018362978878233352, 0.48557763338365738),
        ("a3", 0.022660529717763967, 0.10948157548503705),
        ("ab6", 0.036378958422710054, 0.14170721941487995, 0.30793983876412095),
        ("ab6", 0.014163621265528742, 0.025003534762686386, 0.24667256063990269),
        ("ab6", 0.0047108334818664117, 0.0095408154002994576, 0.066803251012200266),
    ],
}


def _degree5_orbits():
    # classical 7-point rule; coefficients have closed forms in sqrt(15)
    s15 = np.sqrt(15.0)
    return [
        ("c", 9.0 / 80.0),
        ("a3", (155.0 - s15) / 2400.0, (6.0 - s15) / 21.0),
        ("a3", (155.0 + s15) / 2400.0, (6.0 + s15) / 21.0),
    ]


def _expand_orbits(orbits):
    pts, wts = [], []
    for orbit in orbits:
        kind = orbit[0]
        if kind == "c":
            pts.append([1.0 / 3.0] * 3)
            wts.append(orbit[1])
        elif kind == "a3":
            _, w, a = orbit
            c = 1.0 - 2.0 * a
            for perm in ((c, a, a), (a, c, a), (a, a, c)):
                pts.append(perm)
                wts.append(w)
        elif kind == "ab6":
            _, w, a, b = orbit
            c = 1.0 - a - b
            for perm in ((c, a, b), (c, b, a), (a, c, b), (b, c, a), (a, b, c), (b, a, c)):
                pts.append(perm)
                wts.append(w)
        else:  # pragma: no cover - table typo guard
            raise ValueError(kind)
    return np.array(pts), np.array(wts)


def quadrature_rule(min_degree):
    """Return a fixed symmetric rule with exact_degree >= min_degree."""
    if not 1 <= min_degree <= 10:
        raise ValueError(f"min_degree must be in [1, 10], got {min_degree}")
    for degree in (1, 2, 4, 5, 8, 10):
        if degree >= min_degree:
            break
    if degree == 5:
        orbits = _degree5_orbits()
    else:
        orbits = _RULE_TABLES[degree]
    points, weights = _expand_orbits(orbits)
    return QuadratureRule(points=points, weights=weights, exact_degree=degree)
