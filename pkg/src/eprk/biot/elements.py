"""Lagrange elements P1-P3 on triangles and symmetric quadrature rules."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import TriMesh

__all__ = ["QuadratureRule", "triangle_quadrature", "shape_functions", "ScalarSpace"]


@dataclass(frozen=True)
class QuadratureRule:
    """Points (reference coordinates) and weights normalized to sum 1."""

    points: np.ndarray  # (nq, 2)
    weights: np.ndarray  # (nq,)
    degree: int


def _perm3(a, b, c):
    vals = {(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)}
    return sorted(vals)


def triangle_quadrature(degree):
    """Symmetric rule on the reference triangle, exact to ``degree``.

    Barycentric point sets after Dunavant; weights sum to one so that
    integrals are ``area * sum(w_q f(x_q))``.
    """
    if degree <= 2:
        bary = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
        w = np.full(3, 1.0 / 3.0)
        deg = 2
    elif degree <= 4:
        b1, w1 = 0.445948490915965, 0.223381589678011
        b2, w2 = 0.091576213509771, 0.109951743655322
        bary = np.array(
            [
                [1 - 2 * b1, b1, b1],
                [b1, 1 - 2 * b1, b1],
                [b1, b1, 1 - 2 * b1],
                [1 - 2 * b2, b2, b2],
                [b2, 1 - 2 * b2, b2],
                [b2, b2, 1 - 2 * b2],
            ]
        )
        w = np.array([w1, w1, w1, w2, w2, w2])
        deg = 4
    elif degree <= 6:
        b1, w1 = 0.249286745170910, 0.116786275726379
        b2, w2 = 0.063089014491502, 0.050844906370207
        g1, g2, w3 = 0.310352451033785, 0.053145049844816, 0.082851075618374
        bary = [
            [1 - 2 * b1, b1, b1],
            [b1, 1 - 2 * b1, b1],
            [b1, b1, 1 - 2 * b1],
            [1 - 2 * b2, b2, b2],
            [b2, 1 - 2 * b2, b2],
            [b2, b2, 1 - 2 * b2],
        ]
        bary += _perm3(g1, g2, 1 - g1 - g2)
        bary = np.array(bary)
        w = np.array([w1] * 3 + [w2] * 3 + [w3] * 6)
        deg = 6
    else:
        raise ValueError(f"no quadrature rule of degree {degree} available")
    points = bary[:, 1:]  # reference coordinates (x, y) = (lambda_1, lambda_2)
    return QuadratureRule(points, w, deg)


def _bary(points):
    x, y = points[:, 0], points[:, 1]
    return np.stack([1.0 - x - y, x, y]), np.array(
        [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]
    )


def shape_functions(degree, points):
    """Values and reference gradients of the local Lagrange basis.

    Returns ``vals`` of shape (n_local, nq) and ``grads`` of shape
    (n_local, nq, 2). Local dof ordering: vertices, then edge dofs in
    local-edge order (two per edge for P3, ordered towards the second
    edge vertex), then the interior dof for P3.
    """
    lam, dlam = _bary(np.atleast_2d(points))
    l0, l1, l2 = lam
    nq = lam.shape[1]

    def grad(coefs):
        # gradient of a polynomial given as d/dlambda_i coefficients per point
        g = np.zeros((nq, 2))
        for i in range(3):
            g += np.outer(coefs[i], dlam[i])
        return g

    if degree == 1:
        vals = np.stack([l0, l1, l2])
        grads = np.array([np.tile(dlam[i], (nq, 1)) for i in range(3)])
        return vals, grads

    if degree == 2:
        vals, grads = [], []
        for i in range(3):
            li = lam[i]
            vals.append(li * (2 * li - 1))
            coefs = [np.zeros(nq) for _ in range(3)]
            coefs[i] = 4 * li - 1
            grads.append(grad(coefs))
        for p, q in ((1, 2), (2, 0), (0, 1)):
            vals.append(4 * lam[p] * lam[q])
            coefs = [np.zeros(nq) for _ in range(3)]
            coefs[p] = 4 * lam[q]
            coefs[q] = 4 * lam[p]
            grads.append(grad(coefs))
        return np.stack(vals), np.array(grads)

    if degree == 3:
        vals, grads = [], []
        for i in range(3):
            li = lam[i]
            vals.append(0.5 * li * (3 * li - 1) * (3 * li - 2))
            coefs = [np.zeros(nq) for _ in range(3)]
            coefs[i] = 0.5 * (27 * li**2 - 18 * li + 2)
            grads.append(grad(coefs))
        for p, q in ((1, 2), (2, 0), (0, 1)):
            lp, lq = lam[p], lam[q]
            # node at 2/3 towards p, then node at 2/3 towards q
            for near, other in ((p, q), (q, p)):
                ln, lo = lam[near], lam[other]
                vals.append(4.5 * ln * lo * (3 * ln - 1))
                coefs = [np.zeros(nq) for _ in range(3)]
                coefs[near] = 4.5 * lo * (6 * ln - 1)
                coefs[other] = 4.5 * ln * (3 * ln - 1)
                grads.append(grad(coefs))
        vals.append(27 * l0 * l1 * l2)
        coefs = [27 * l1 * l2, 27 * l0 * l2, 27 * l0 * l1]
        grads.append(grad(coefs))
        return np.stack(vals), np.array(grads)

    raise ValueError(f"unsupported polynomial degree {degree}")


class ScalarSpace:
    """Scalar Lagrange space of degree 1, 2, or 3 on a triangulation.

    Holds the cell-to-dof map, dof coordinates (for nodal
    interpolation), and the boundary-dof mask for homogeneous Dirichlet
    elimination.
    """

    def __init__(self, mesh: TriMesh, degree: int):
        if degree not in (1, 2, 3):
            raise ValueError(f"unsupported degree {degree}")
        self.mesh = mesh
        self.degree = degree
        nv, ne, nt = mesh.n_vertices, mesh.n_edges, mesh.n_triangles
        tris = mesh.triangles
        local_edges = ((1, 2), (2, 0), (0, 1))

        if degree == 1:
            self.n_dofs = nv
            self.cell_dofs = tris.copy()
            self.dof_coords = mesh.vertices.copy()
            self.boundary = mesh.boundary_vertices.copy()
            return

        if degree == 2:
            self.n_dofs = nv + ne
            cell_dofs = np.empty((nt, 6), dtype=int)
            cell_dofs[:, :3] = tris
            cell_dofs[:, 3:] = nv + mesh.tri_edges
            self.cell_dofs = cell_dofs
            mid = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
            self.dof_coords = np.vstack([mesh.vertices, mid])
            boundary = np.zeros(self.n_dofs, dtype=bool)
            boundary[:nv] = mesh.boundary_vertices
            boundary[nv:] = mesh.boundary_edges
            self.boundary = boundary
            return

        # degree == 3: two dofs per edge (ordered along the sorted edge) and
        # one interior dof per triangle
        self.n_dofs = nv + 2 * ne + nt
        cell_dofs = np.empty((nt, 10), dtype=int)
        cell_dofs[:, :3] = tris
        for le, (p, q) in enumerate(local_edges):
            eid = mesh.tri_edges[:, le]
            gp, gq = tris[:, p], tris[:, q]
            forward = mesh.edges[eid, 0] == gp  # local direction matches storage
            near_p = np.where(forward, nv + 2 * eid, nv + 2 * eid + 1)
            near_q = np.where(forward, nv + 2 * eid + 1, nv + 2 * eid)
            cell_dofs[:, 3 + 2 * le] = near_p
            cell_dofs[:, 3 + 2 * le + 1] = near_q
        cell_dofs[:, 9] = nv + 2 * ne + np.arange(nt)
        self.cell_dofs = cell_dofs

        va = mesh.vertices[mesh.edges[:, 0]]
        vb = mesh.vertices[mesh.edges[:, 1]]
        third1 = va + (vb - va) / 3.0
        third2 = va + 2.0 * (vb - va) / 3.0
        edge_coords = np.empty((2 * ne, 2))
        edge_coords[0::2] = third1
        edge_coords[1::2] = third2
        centroids = mesh.cell_vertices().mean(axis=1)
        self.dof_coords = np.vstack([mesh.vertices, edge_coords, centroids])
        boundary = np.zeros(self.n_dofs, dtype=bool)
        boundary[:nv] = mesh.boundary_vertices
        edge_b = np.repeat(mesh.boundary_edges, 2)
        boundary[nv : nv + 2 * ne] = edge_b
        self.boundary = boundary

    def interpolate(self, fn):
        """Nodal interpolation of a callable ``fn(x, y)``."""
        return np.asarray(fn(self.dof_coords[:, 0], self.dof_coords[:, 1]), dtype=float)
