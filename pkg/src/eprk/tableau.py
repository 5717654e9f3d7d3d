"""Implicit Runge-Kutta tableaux (Radau IIA family) and stability machinery.

Provides the Butcher tableau container, the Radau IIA collocation
constructor for 1 to 3 stages, the scalar stability function R(z), the
matrix-valued generating symbol of the one-step recursion, and the
algebraic-stability test matrix used by the iterative splittings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ButcherTableau",
    "PoleError",
    "radau_iia",
    "tableau_from_key",
    "stability_function",
    "generating_symbol",
    "generating_symbol_residuals",
    "algebraic_stability_matrix",
]

_COND_TOL = 1e-13


class PoleError(ArithmeticError):
    """Raised when a resolvent-type formula is evaluated at a pole."""


@dataclass(frozen=True)
class ButcherTableau:
    """An s-stage implicit Runge-Kutta method with derived metadata.

    Attributes
    ----------
    s : int
        Stage count.
    A : ndarray, shape (s, s)
        Runge-Kutta coefficient matrix. Must be invertible for the
        schemes implemented here.
    b : ndarray, shape (s,)
        Quadrature weights.
    c : ndarray, shape (s,)
        Nodes; for consistent methods ``c = A @ ones``.
    classical_order, stage_order : int
        Order of the grid values and of the internal stages.
    r_infinity : float
        Limit of the stability function, ``1 - b @ inv(A) @ ones``.
        L-stable methods have ``r_infinity == 0``.
    stiffly_accurate : bool
        True when the last row of ``A`` equals ``b``.
    """

    s: int
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    classical_order: int
    stage_order: int
    r_infinity: float = field(init=False)
    stiffly_accurate: bool = field(init=False)

    def __post_init__(self):
        A = np.ascontiguousarray(np.asarray(self.A, dtype=float))
        b = np.ascontiguousarray(np.asarray(self.b, dtype=float))
        c = np.ascontiguousarray(np.asarray(self.c, dtype=float))
        for arr, name in ((A, "A"), (b, "b"), (c, "c")):
            object.__setattr__(self, name, arr)
            arr.setflags(write=False)
        r_inf = float(1.0 - b @ np.linalg.solve(A, np.ones(self.s)))
        object.__setattr__(self, "r_infinity", r_inf)
        object.__setattr__(
            self, "stiffly_accurate", bool(np.allclose(A[-1], b, atol=1e-13))
        )

    @classmethod
    def from_coeffs(cls, A, b, classical_order, stage_order):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        c = A @ np.ones(A.shape[0])
        return cls(A.shape[0], A, b, c, classical_order, stage_order)

    def a_inverse(self):
        return np.linalg.inv(self.A)

    def validate(self, tol=_COND_TOL):
        """Check the structural invariants; raise ValueError on failure.

        Verifies node consistency, invertibility of ``A``, positivity of
        the weights, ``|r_infinity| < 1``, the quadrature order
        conditions up to the classical order, and the stage-order
        conditions.
        """
        s = self.s
        if not np.allclose(self.c, self.A @ np.ones(s), atol=tol):
            raise ValueError("nodes inconsistent with coefficient row sums")
        if abs(np.linalg.det(self.A)) < 1e-14:
            raise ValueError("coefficient matrix is singular")
        if abs(self.r_infinity) >= 1.0:
            raise ValueError(
                f"limit amplification {self.r_infinity} not strictly inside "
                "the unit disc"
            )
        if np.any(self.b <= 0.0):
            raise ValueError("weights must be strictly positive")
        for j in range(1, self.classical_order + 1):
            lhs = float(self.b @ self.c ** (j - 1))
            if abs(lhs - 1.0 / j) > tol:
                raise ValueError(f"order condition for moment {j} violated: {lhs}")
        for m in range(1, self.stage_order + 1):
            lhs = self.A @ self.c ** (m - 1)
            if np.max(np.abs(lhs - self.c**m / m)) > tol:
                raise ValueError(f"stage-order condition for moment {m} violated")
        return self


def _radau_nodes(s):
    # Right-Radau nodes in closed form, evaluated in double precision.
    if s == 1:
        return np.array([1.0])
    if s == 2:
        return np.array([1.0 / 3.0, 1.0])
    if s == 3:
        root6 = np.sqrt(6.0)
        return np.array([(4.0 - root6) / 10.0, (4.0 + root6) / 10.0, 1.0])
    raise ValueError(f"unsupported stage count {s}; expected 1, 2, or 3")


def radau_iia(s):
    """Construct the s-stage Radau IIA tableau by collocation.

    Solves the collocation conditions ``sum_j A[l, j] c_j**(m-1) =
    c_l**m / m`` at the right-Radau nodes, which yields a stiffly
    accurate, L-stable method of classical order ``2s - 1`` and stage
    order ``s``. The result is validated against the order conditions
    rather than trusted from transcription.

    Parameters
    ----------
    s : int
        Stage count, one of {1, 2, 3}.
    """
    c = _radau_nodes(s)
    vander = np.vander(c, N=s, increasing=True)  # vander[j, m] = c_j**m
    moments = np.column_stack([c**m / m for m in range(1, s + 1)])
    A = np.linalg.solve(vander.T, moments.T).T
    b = A[-1].copy()  # collocation at c_s = 1 reproduces the quadrature row
    tab = ButcherTableau(s, A, b, c, classical_order=2 * s - 1, stage_order=s)
    return tab.validate()


def tableau_from_key(key):
    """Resolve a CLI/config key like ``radau-iia-2`` to a tableau."""
    key = key.strip().lower()
    if key.startswith("radau-iia-"):
        try:
            return radau_iia(int(key.rsplit("-", 1)[1]))
        except ValueError:
            pass
    raise ValueError(f"unknown tableau key {key!r}; expected radau-iia-1|2|3")


def stability_function(tab, z):
    """Evaluate ``R(z) = 1 + z * b @ inv(I - z A) @ ones``.

    Raises
    ------
    PoleError
        If ``I - z A`` is singular at the requested point.
    """
    z = complex(z)
    mat = np.eye(tab.s) - z * tab.A
    try:
        x = np.linalg.solve(mat, np.ones(tab.s))
    except np.linalg.LinAlgError:
        raise PoleError(f"stability function has a pole at z = {z}") from None
    if not np.all(np.isfinite(x)) or np.linalg.cond(mat) > 1e15:
        raise PoleError(f"stability function has a pole at z = {z}")
    value = 1.0 + z * (tab.b @ x)
    return complex(value)


def generating_symbol(tab, zeta):
    """Matrix symbol of the one-step recursion at a point of the unit disc.

    For ``zeta != 1`` this is the inverse of ``A + zeta/(1 - zeta) *
    ones @ b.T``; it is always evaluated through the pole-free
    rational representation

        ``inv(A) - zeta * inv(A) @ ones @ b.T @ inv(A) / (1 - r_inf*zeta)``

    which stays finite on the closed unit disc whenever the limit
    amplification satisfies ``|r_inf| < 1``.

    Returns a complex (s, s) matrix.
    """
    zeta = complex(zeta)
    if abs(zeta) > 1.0 + 1e-12:
        raise ValueError(f"symbol only defined on the closed unit disc, got {zeta}")
    a_inv = tab.a_inverse()
    col = a_inv @ np.ones(tab.s)
    row = tab.b @ a_inv
    denom = 1.0 - tab.r_infinity * zeta
    return a_inv - (zeta / denom) * np.outer(col, row)


def generating_symbol_residuals(tab, zeta):
    """Residuals of the two defining identities of the symbol.

    Both identities are checked in pole-cleared form so that they are
    meaningful on the whole closed unit disc (including ``zeta = 1``):

    * ``((1 - zeta) A + zeta ones b.T) S(zeta) = (1 - zeta) I``
    * ``S(zeta) ones (1 - r_inf zeta) = inv(A) ones (1 - zeta)``

    Returns the two max-norm residuals.
    """
    zeta = complex(zeta)
    sym = generating_symbol(tab, zeta)
    ones = np.ones(tab.s)
    lhs = ((1.0 - zeta) * tab.A + zeta * np.outer(ones, tab.b)) @ sym
    r1 = np.max(np.abs(lhs - (1.0 - zeta) * np.eye(tab.s)))
    a_inv_ones = tab.a_inverse() @ ones
    r2 = np.max(
        np.abs(sym @ ones * (1.0 - tab.r_infinity * zeta) - a_inv_ones * (1.0 - zeta))
    )
    return float(r1), float(r2)


def algebraic_stability_matrix(tab):
    """Return ``diag(b) A + A.T diag(b) - b b.T``.

    Positive semidefiniteness of this matrix (with positive weights) is
    the algebraic-stability property required by the iterative
    splitting schemes; it holds for the Radau IIA family.
    """
    db = np.diag(tab.b)
    return db @ tab.A + tab.A.T @ db - np.outer(tab.b, tab.b)
