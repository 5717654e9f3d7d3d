"""Structured triangular meshes of the unit square."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["TriMesh", "build_mesh"]

# local edge e is opposite local vertex e
_LOCAL_EDGES = np.array([[1, 2], [2, 0], [0, 1]])


@dataclass
class TriMesh:
    """Conforming triangulation with vertex/edge/cell connectivity.

    ``edges`` stores each edge once as a sorted vertex pair;
    ``tri_edges[t, e]`` is the global edge id of local edge ``e`` of
    triangle ``t``. Boundary classification is incidence based (an
    edge is boundary when it belongs to exactly one triangle), which
    correctly keeps interior diagonals with two boundary endpoints out
    of the boundary set.
    """

    vertices: np.ndarray  # (nv, 2)
    triangles: np.ndarray  # (nt, 3) vertex ids, counter-clockwise
    edges: np.ndarray  # (ne, 2) sorted vertex ids
    tri_edges: np.ndarray  # (nt, 3)
    boundary_edges: np.ndarray  # bool (ne,)
    boundary_vertices: np.ndarray  # bool (nv,)

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    @property
    def n_edges(self):
        return self.edges.shape[0]

    def cell_vertices(self):
        return self.vertices[self.triangles]  # (nt, 3, 2)


def build_mesh(n_cells_per_side):
    """Right-diagonal triangulation of (0, 1)^2 with ``2 n**2`` triangles.

    Each of the ``n x n`` squares is split along the diagonal from its
    lower-left to its upper-right corner; both triangles are oriented
    counter-clockwise.
    """
    n = int(n_cells_per_side)
    if n < 2:
        raise ValueError(f"need at least 2 cells per side, got {n}")
    coords = np.linspace(0.0, 1.0, n + 1)
    xg, yg = np.meshgrid(coords, coords, indexing="xy")
    vertices = np.column_stack([xg.ravel(), yg.ravel()])

    ix, iy = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    v00 = (iy * (n + 1) + ix).ravel()
    v10 = v00 + 1
    v01 = v00 + (n + 1)
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.vstack([lower, upper])

    pair_list = triangles[:, _LOCAL_EDGES].reshape(-1, 2)
    pair_list = np.sort(pair_list, axis=1)
    edges, inverse, counts = np.unique(
        pair_list, axis=0, return_inverse=True, return_counts=True
    )
    tri_edges = inverse.reshape(-1, 3)
    boundary_edges = counts == 1
    boundary_vertices = np.zeros(vertices.shape[0], dtype=bool)
    boundary_vertices[edges[boundary_edges].ravel()] = True

    return TriMesh(vertices, triangles, edges, tri_edges, boundary_edges, boundary_vertices)
