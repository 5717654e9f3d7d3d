"""Taylor-Hood assembly of the poroelastic operator blocks.

Displacement uses a vector Lagrange space of degree ``d``, pressure the
scalar space of degree ``d - 1`` (supported pairs: (2, 1) and (3, 2)),
both with homogeneous Dirichlet conditions on the whole boundary.
Displacement dofs are blocked as [all x-components; all y-components].
All element integrals use one symmetric quadrature rule per degree
pair, exact to twice the displacement degree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..operators import MatrixOperator
from ..system import CoupledSystem, ExactSolution
from .elements import ScalarSpace, shape_functions, triangle_quadrature
from .manufactured import BiotParameters, ManufacturedProblem, manufactured_problem
from .mesh import TriMesh, build_mesh

__all__ = [
    "BiotDiscretization",
    "assemble_biot",
    "error_norms",
    "build_biot_system",
]

SUPPORTED_PAIRS = ((2, 1), (3, 2))


def _geometry(mesh: TriMesh):
    cv = mesh.cell_vertices()  # (nt, 3, 2)
    jac = np.stack([cv[:, 1] - cv[:, 0], cv[:, 2] - cv[:, 0]], axis=2)  # (nt,2,2)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    if np.any(det <= 0):
        raise ValueError("triangulation contains non-counter-clockwise cells")
    inv = np.empty_like(jac)
    inv[:, 0, 0] = jac[:, 1, 1]
    inv[:, 0, 1] = -jac[:, 0, 1]
    inv[:, 1, 0] = -jac[:, 1, 0]
    inv[:, 1, 1] = jac[:, 0, 0]
    inv /= det[:, None, None]
    inv_t = inv.transpose(0, 2, 1)
    areas = 0.5 * det
    return jac, inv_t, areas


def _physical_grads(space: ScalarSpace, rule, inv_t):
    _, ref_grads = shape_functions(space.degree, rule.points)
    # grads[t, i, q, :] = invJ^T @ ref_grads[i, q, :]
    return np.einsum("tab,iqb->tiqa", inv_t, ref_grads)


def _scatter(nt_data, rows, cols, shape):
    mat = sp.coo_matrix(
        (nt_data.ravel(), (rows.ravel(), cols.ravel())), shape=shape
    )
    return mat.tocsr()


def _pair_indices(dofs_row, dofs_col):
    rows = np.repeat(dofs_row, dofs_col.shape[1], axis=1)
    cols = np.tile(dofs_col, (1, dofs_row.shape[1]))
    return rows, cols


@dataclass
class BiotDiscretization:
    """Assembled matrices and dof metadata, before and after elimination."""

    mesh: TriMesh
    params: BiotParameters
    degree_u: int
    degree_p: int
    space_u: ScalarSpace
    space_p: ScalarSpace
    stiffness_full: sp.csr_matrix  # elasticity, vector layout
    diffusion_full: sp.csr_matrix
    storage_full: sp.csr_matrix
    coupling_full: sp.csr_matrix  # (n_p, 2 n_u_scalar)
    gram_V_full: sp.csr_matrix  # vector H1-seminorm
    gram_H_full: sp.csr_matrix  # pressure L2 mass
    keep_u: np.ndarray  # bool, vector layout
    keep_p: np.ndarray

    @property
    def n_u(self):
        return int(np.sum(self.keep_u))

    @property
    def n_p(self):
        return int(np.sum(self.keep_p))

    def restrict_u(self, full_vec):
        return np.asarray(full_vec)[self.keep_u]

    def restrict_p(self, full_vec):
        return np.asarray(full_vec)[self.keep_p]

    def interpolate_displacement(self, profile):
        """Interior dof vector of a vector field ``profile(x, y) -> (2, ...)``."""
        x, y = self.space_u.dof_coords[:, 0], self.space_u.dof_coords[:, 1]
        comps = np.asarray(profile(x, y), dtype=float)
        return self.restrict_u(np.concatenate([comps[0], comps[1]]))

    def interpolate_pressure(self, profile):
        return self.restrict_p(self.space_p.interpolate(profile))

    def assemble_vector_load(self, profile):
        """Interior load vector of a vector density ``profile(x, y) -> (2, ...)``."""
        return self.restrict_u(self._vector_load_full(profile))

    def assemble_scalar_load(self, profile):
        return self.restrict_p(self._scalar_load_full(profile))

    # internals reused by loads and tests -------------------------------
    def _quad_data(self):
        rule = triangle_quadrature(2 * self.degree_u)
        jac, inv_t, areas = _geometry(self.mesh)
        points = self.mesh.cell_vertices()[:, 0, None, :] + np.einsum(
            "tab,qb->tqa", jac, rule.points
        )
        return rule, inv_t, areas, points

    def _vector_load_full(self, profile):
        rule, _, areas, points = self._quad_data()
        vals, _ = shape_functions(self.degree_u, rule.points)
        density = np.asarray(profile(points[..., 0], points[..., 1]))  # (2, nt, nq)
        n_scalar = self.space_u.n_dofs
        out = np.zeros(2 * n_scalar)
        for comp in range(2):
            loc = np.einsum("t,tq,iq,q->ti", areas, density[comp], vals, rule.weights)
            np.add.at(out, comp * n_scalar + self.space_u.cell_dofs, loc)
        return out

    def _scalar_load_full(self, profile):
        rule, _, areas, points = self._quad_data()
        vals, _ = shape_functions(self.degree_p, rule.points)
        density = np.asarray(profile(points[..., 0], points[..., 1]))  # (nt, nq)
        out = np.zeros(self.space_p.n_dofs)
        loc = np.einsum("t,tq,iq,q->ti", areas, density, vals, rule.weights)
        np.add.at(out, self.space_p.cell_dofs, loc)
        return out


def assemble_biot(mesh, params=None, degree_u=2, degree_p=1):
    """Assemble the poroelastic operator blocks on a triangulation.

    Returns a :class:`BiotDiscretization` holding the full matrices, the
    interior-dof masks for the homogeneous Dirichlet conditions, and
    interpolation/load helpers. Use :func:`build_biot_system` to attach
    manufactured loads and obtain a ready-to-step coupled system.
    """
    params = params if params is not None else BiotParameters()
    if (degree_u, degree_p) not in SUPPORTED_PAIRS:
        raise ValueError(
            f"unsupported degree pair ({degree_u}, {degree_p}); "
            f"supported: {SUPPORTED_PAIRS}"
        )
    space_u = ScalarSpace(mesh, degree_u)
    space_p = ScalarSpace(mesh, degree_p)
    rule = triangle_quadrature(2 * degree_u)
    _, inv_t, areas = _geometry(mesh)
    w = rule.weights

    gu = _physical_grads(space_u, rule, inv_t)  # (nt, nlu, nq, 2)
    gp = _physical_grads(space_p, rule, inv_t)
    uvals, _ = shape_functions(degree_u, rule.points)
    pvals, _ = shape_functions(degree_p, rule.points)

    gux, guy = gu[..., 0], gu[..., 1]
    lam, mu, alpha = params.lam, params.mu, params.alpha

    def blk(test, trial):
        return np.einsum("t,tiq,tjq,q->tij", areas, test, trial, w)

    axx = (2 * mu + lam) * blk(gux, gux) + mu * blk(guy, guy)
    ayy = (2 * mu + lam) * blk(guy, guy) + mu * blk(gux, gux)
    axy = mu * blk(guy, gux) + lam * blk(gux, guy)

    n_su = space_u.n_dofs
    n_p = space_p.n_dofs
    du = space_u.cell_dofs
    dp = space_p.cell_dofs
    ru, cu = _pair_indices(du, du)

    def vec_block(loc, roff, coff):
        return sp.coo_matrix(
            (loc.ravel(), ((ru + roff).ravel(), (cu + coff).ravel())),
            shape=(2 * n_su, 2 * n_su),
        )

    stiffness = (
        vec_block(axx, 0, 0)
        + vec_block(axy, 0, n_su)
        + vec_block(axy.transpose(0, 2, 1), n_su, 0)
        + vec_block(ayy, n_su, n_su)
    ).tocsr()

    scalar_stiff_u = blk(gux, gux) + blk(guy, guy)
    gram_v = (vec_block(scalar_stiff_u, 0, 0) + vec_block(scalar_stiff_u, n_su, n_su)).tocsr()

    rp, cp = _pair_indices(dp, dp)
    diff_loc = params.kappa_over_nu * (blk(gp[..., 0], gp[..., 0]) + blk(gp[..., 1], gp[..., 1]))
    diffusion = _scatter(diff_loc, rp, cp, (n_p, n_p))

    mass_ref = np.einsum("iq,jq,q->ij", pvals, pvals, w)
    mass_loc = areas[:, None, None] * mass_ref[None]
    storage = _scatter(mass_loc / params.biot_modulus, rp, cp, (n_p, n_p))
    gram_h = _scatter(mass_loc, rp, cp, (n_p, n_p))

    rpu, cpu = _pair_indices(dp, du)
    dx_loc = alpha * np.einsum("t,iq,tjq,q->tij", areas, pvals, gux, w)
    dy_loc = alpha * np.einsum("t,iq,tjq,q->tij", areas, pvals, guy, w)
    coupling = (
        sp.coo_matrix((dx_loc.ravel(), (rpu.ravel(), cpu.ravel())), shape=(n_p, 2 * n_su))
        + sp.coo_matrix(
            (dy_loc.ravel(), (rpu.ravel(), (cpu + n_su).ravel())), shape=(n_p, 2 * n_su)
        )
    ).tocsr()

    keep_u = np.tile(~space_u.boundary, 2)
    keep_p = ~space_p.boundary
    return BiotDiscretization(
        mesh=mesh,
        params=params,
        degree_u=degree_u,
        degree_p=degree_p,
        space_u=space_u,
        space_p=space_p,
        stiffness_full=stiffness,
        diffusion_full=diffusion,
        storage_full=storage,
        coupling_full=coupling,
        gram_V_full=gram_v,
        gram_H_full=gram_h,
        keep_u=keep_u,
        keep_p=keep_p,
    )


def build_biot_system(disc, problem=None):
    """Couple the assembled blocks with manufactured loads and exact data.

    The manufactured fields separate as a spatial profile times a
    decaying exponential, so the load vectors are assembled once and
    rescaled per evaluation time.
    """
    problem = problem if problem is not None else manufactured_problem(disc.params)
    ku, kp = disc.keep_u, disc.keep_p

    a_int = disc.stiffness_full[ku][:, ku]
    b_int = disc.diffusion_full[kp][:, kp]
    c_int = disc.storage_full[kp][:, kp]
    d_int = disc.coupling_full[kp][:, ku]
    gram_v = disc.gram_V_full[ku][:, ku]
    gram_h = disc.gram_H_full[kp][:, kp]

    mech0 = disc.assemble_vector_load(problem.mech_load_profile)
    flow0 = disc.assemble_scalar_load(problem.flow_load_profile)
    u_interp0 = disc.interpolate_displacement(problem.displacement_profile)
    p_interp0 = disc.interpolate_pressure(problem.pressure_profile)
    decay = problem.decay_rate

    exact = ExactSolution(
        displacement=lambda t: np.exp(-decay * t) * u_interp0,
        pressure=lambda t: np.exp(-decay * t) * p_interp0,
    )
    sys = CoupledSystem(
        A_op=MatrixOperator(a_int, "elasticity"),
        B_op=MatrixOperator(b_int, "diffusion"),
        C_op=MatrixOperator(c_int, "storage"),
        coupling=d_int,
        forcing_mech=lambda t: np.exp(-decay * t) * mech0,
        forcing_flow=lambda t: np.exp(-decay * t) * flow0,
        u0=u_interp0.copy(),
        p0=p_interp0.copy(),
        norm_gram_V=gram_v,
        norm_gram_Q=b_int,
        norm_gram_H=gram_h,
        exact=exact,
        meta={"discretization": disc, "problem": problem},
    )
    return sys


def error_norms(sys, u_h, p_h, t, exact=None):
    """Errors against the exact-solution interpolant in the report norms.

    Displacement in the norm of ``norm_gram_V`` (H1 seminorm for the
    poroelastic backend), pressure in the norm of ``norm_gram_H``
    (L2 mass). The spatial interpolation floor is documented with the
    benchmark results rather than subtracted.
    """
    from ..system import gram_norm

    exact = exact if exact is not None else sys.exact
    err_u = gram_norm(sys.norm_gram_V, np.asarray(u_h) - exact.displacement(t))
    err_p = gram_norm(sys.norm_gram_H, np.asarray(p_h) - exact.pressure(t))
    return err_u, err_p
