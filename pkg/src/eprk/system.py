"""The coupled elliptic-parabolic system and its spectral quantities.

A :class:`CoupledSystem` bundles the four operator blocks (mechanics
stiffness, pressure diffusion, storage mass, displacement-to-pressure
coupling), the time-dependent load vectors, consistent initial data,
and the Gram matrices used for error reporting. Stage vectors are plain
ndarrays of shape ``(s, n)`` holding one row per Runge-Kutta stage.

The module also provides the Schur-complement application, the discrete
coupling strength (top eigenvalue of the Schur complement against the
storage mass, computed by power iteration), the coupling seminorm used
by the undrained-split stopping test, and a seeded dense surrogate
generator with a manufactured exact solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla

from .operators import MatrixOperator, NotSPDError, as_dense, is_sparse

__all__ = [
    "CoupledSystem",
    "ExactSolution",
    "SpectralConvergenceError",
    "schur_apply",
    "coupling_strength",
    "coupling_eigenvalues_dense",
    "coupling_seminorm",
    "weighted_stage_norm",
    "gram_norm",
    "make_dense_surrogate",
]

DENSE_SCHUR_LIMIT = 200


class SpectralConvergenceError(RuntimeError):
    """Power iteration failed to converge; carries the last iterate."""

    def __init__(self, message, last_estimate):
        super().__init__(message)
        self.last_estimate = last_estimate


@dataclass
class ExactSolution:
    """Closed-form solution evaluators on the discrete dof layout."""

    displacement: Callable[[float], np.ndarray]
    pressure: Callable[[float], np.ndarray]


@dataclass
class CoupledSystem:
    """Discrete elliptic-parabolic system with factorization caching.

    ``coupling`` maps displacement vectors to pressure duals (shape
    ``(n_p, n_u)``); ``forcing_mech`` / ``forcing_flow`` return load
    vectors at a given time. The Gram matrices define the norms used
    for error reporting: ``norm_gram_V`` for displacement,
    ``norm_gram_Q`` for the pressure energy space, ``norm_gram_H`` for
    the pressure pivot space.
    """

    A_op: MatrixOperator
    B_op: MatrixOperator
    C_op: MatrixOperator
    coupling: np.ndarray  # or scipy sparse, shape (n_p, n_u)
    forcing_mech: Callable[[float], np.ndarray]
    forcing_flow: Callable[[float], np.ndarray]
    u0: np.ndarray
    p0: np.ndarray
    norm_gram_V: Optional[np.ndarray] = None
    norm_gram_Q: Optional[np.ndarray] = None
    norm_gram_H: Optional[np.ndarray] = None
    exact: Optional[ExactSolution] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.norm_gram_V is None:
            self.norm_gram_V = self.A_op.mat
        if self.norm_gram_Q is None:
            self.norm_gram_Q = self.B_op.mat
        if self.norm_gram_H is None:
            self.norm_gram_H = self.C_op.mat

    @property
    def n_u(self):
        return self.A_op.n

    @property
    def n_p(self):
        return self.C_op.n

    def coupling_transpose_apply(self, q):
        return self.coupling.T @ q

    def consistency_residual(self):
        """Scaled residual of the elliptic equation at the initial data."""
        r = self.A_op.apply(self.u0) - self.coupling.T @ self.p0 - self.forcing_mech(0.0)
        scale = max(1.0, float(np.linalg.norm(self.forcing_mech(0.0))))
        return float(np.linalg.norm(r)) / scale

    def dense_schur_complement(self):
        """Explicit Schur complement; dense backend / diagnostics only."""
        if self.n_p > DENSE_SCHUR_LIMIT:
            raise ValueError(
                f"dense Schur complement blocked for n_p = {self.n_p} > "
                f"{DENSE_SCHUR_LIMIT}"
            )
        d = as_dense(self.coupling)
        return d @ np.linalg.solve(as_dense(self.A_op.mat), d.T)


def schur_apply(sys, q):
    """Apply the pressure-space Schur complement, one mechanics solve."""
    rhs = sys.coupling.T @ np.asarray(q, dtype=float)
    return sys.coupling @ sys.A_op.solve(rhs)


def coupling_strength(sys, tol=1e-10, max_iter=1000):
    """Top eigenvalue of the Schur complement against the storage mass.

    Power iteration in the storage inner product; each step costs one
    mechanics solve and one storage solve. This discrete value is the
    quantity the contraction rates of the iterative splittings depend
    on, and a lower bound for the continuous coupling strength.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    n_p = sys.n_p
    rng = np.random.default_rng(20240501)
    v = rng.standard_normal(n_p)
    v /= np.sqrt(v @ sys.C_op.apply(v))
    estimate = 0.0
    for _ in range(max_iter):
        mv = schur_apply(sys, v)
        new = float(v @ mv)  # Rayleigh quotient; v is storage-normalized
        if new <= 1e-300:
            return 0.0
        w = sys.C_op.solve(mv)
        w /= np.sqrt(w @ sys.C_op.apply(w))
        if abs(new - estimate) <= tol * max(new, 1e-300):
            return new
        estimate, v = new, w
    raise SpectralConvergenceError(
        f"coupling-strength power iteration did not reach rel. tol {tol} in "
        f"{max_iter} iterations",
        estimate,
    )


def coupling_eigenvalues_dense(sys):
    """All eigenvalues of the (Schur complement, storage) pencil (oracle)."""
    m = sys.dense_schur_complement()
    c = as_dense(sys.C_op.mat)
    return sla.eigh(m, c, eigvals_only=True)


def coupling_seminorm(sys, V, weights):
    """Weighted stage seminorm ``sqrt(sum_l w_l <C^-1 D V_l, D V_l>)``.

    Vanishes exactly on the kernel of the coupling block; used as the
    stopping functional of the undrained-split iteration.
    """
    V = np.atleast_2d(V)
    total = 0.0
    for w, row in zip(np.asarray(weights, dtype=float), V):
        dv = sys.coupling @ row
        total += w * float(dv @ sys.C_op.solve(dv))
    return float(np.sqrt(max(total, 0.0)))


def gram_norm(gram, v):
    """Norm induced by an SPD Gram matrix."""
    v = np.asarray(v)
    return float(np.sqrt(max(v @ (gram @ v), 0.0)))


def weighted_stage_norm(gram, V, weights):
    """``sqrt(sum_l w_l * V_l @ gram @ V_l)`` for a stage vector ``V``.

    With unit weights this is the plain stage-product norm.
    """
    weights = np.asarray(weights, dtype=float)
    if np.any(weights <= 0.0):
        raise ValueError("stage weights must be strictly positive")
    V = np.atleast_2d(V)
    total = sum(w * row @ (gram @ row) for w, row in zip(weights, V))
    return float(np.sqrt(max(total, 0.0)))


def _random_spd(rng, n, low=1.0, high=10.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eigs = rng.uniform(low, high, size=n)
    return (q * eigs) @ q.T


def make_dense_surrogate(n_u, n_p, target_coupling, seed):
    """Seeded random dense system with prescribed coupling strength.

    The operator blocks are well-conditioned SPD matrices (eigenvalues
    in [1, 10]); the coupling block is rescaled so that the top
    eigenvalue of the (Schur, storage) pencil matches
    ``target_coupling`` (the pencil eigenvalue scales exactly with the
    square of the rescaling factor). Load vectors are manufactured so
    that the smooth fields

        ``u(t) = cos(t) * u_vec``,
        ``p(t) = exp(-t) * p_vec + sin(2 t) * p_vec2``

    solve the system exactly; initial data are set consistently. The
    evaluators ride along in ``sys.exact``.
    """
    if target_coupling < 0:
        raise ValueError("target coupling strength must be non-negative")
    rng = np.random.default_rng(seed)
    a_mat = _random_spd(rng, n_u)
    b_mat = _random_spd(rng, n_p)
    c_mat = _random_spd(rng, n_p)
    d_mat = rng.standard_normal((n_p, n_u))

    if target_coupling == 0.0:
        d_mat = np.zeros((n_p, n_u))
    else:
        schur = d_mat @ np.linalg.solve(a_mat, d_mat.T)
        top = sla.eigh(schur, c_mat, eigvals_only=True)[-1]
        d_mat *= np.sqrt(target_coupling / top)

    u_vec = rng.standard_normal(n_u)
    u_vec /= np.linalg.norm(u_vec)
    p_vec = rng.standard_normal(n_p)
    p_vec /= np.linalg.norm(p_vec)
    p_vec2 = rng.standard_normal(n_p)
    p_vec2 /= np.linalg.norm(p_vec2)

    def u_exact(t):
        return np.cos(t) * u_vec

    def p_exact(t):
        return np.exp(-t) * p_vec + np.sin(2.0 * t) * p_vec2

    def u_dot(t):
        return -np.sin(t) * u_vec

    def p_dot(t):
        return -np.exp(-t) * p_vec + 2.0 * np.cos(2.0 * t) * p_vec2

    def forcing_mech(t):
        return a_mat @ u_exact(t) - d_mat.T @ p_exact(t)

    def forcing_flow(t):
        return d_mat @ u_dot(t) + c_mat @ p_dot(t) + b_mat @ p_exact(t)

    return CoupledSystem(
        A_op=MatrixOperator(a_mat, "mechanics"),
        B_op=MatrixOperator(b_mat, "diffusion"),
        C_op=MatrixOperator(c_mat, "storage"),
        coupling=d_mat,
        forcing_mech=forcing_mech,
        forcing_flow=forcing_flow,
        u0=u_exact(0.0),
        p0=p_exact(0.0),
        norm_gram_V=a_mat,
        norm_gram_Q=b_mat,
        norm_gram_H=np.eye(n_p),
        exact=ExactSolution(displacement=u_exact, pressure=p_exact),
    )
