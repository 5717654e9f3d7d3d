"""Delay extrapolation: coefficients, symbol, and the weak-coupling bound.

The semi-explicit schemes replace the pressure in the elliptic equation
by a backward Lagrange extrapolation through the k preceding time
levels. This module holds the integer extrapolation coefficients, the
associated polynomial symbol on the unit disc, and the admissibility
bound on the coupling strength.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DelayScheme",
    "delay_coefficients",
    "delay_symbol",
    "delay_symbol_series",
    "weak_coupling_bound",
    "min_real_part_scan",
]

MAX_ORDER = 10  # beyond this the admissible coupling 1/(2**k - 1) is useless


def _binomial_row(k):
    # Pascal recurrence in exact integer arithmetic: row[d] = C(k, d+1).
    row = [k]
    for d in range(1, k):
        row.append(row[-1] * (k - d) // (d + 1))
    return row


def delay_coefficients(k):
    """Extrapolation coefficients ``(-1)**(d-1) * C(k, d)`` for d = 1..k.

    Exact integers; the alternating signs make the extrapolation
    reproduce polynomials of degree k - 1.
    """
    if not 1 <= k <= MAX_ORDER:
        raise ValueError(f"delay order must be in [1, {MAX_ORDER}], got {k}")
    signs = [(-1) ** (d - 1) for d in range(1, k + 1)]
    return np.array([s * c for s, c in zip(signs, _binomial_row(k))], dtype=np.int64)


@dataclass(frozen=True)
class DelayScheme:
    """Order-k extrapolation stencil over the k previous time levels."""

    k: int
    coeffs: np.ndarray = field(init=False)

    def __post_init__(self):
        coeffs = delay_coefficients(self.k)
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def order(self):
        return self.k


def delay_symbol(scheme, zeta):
    """Symbol of the extrapolation stencil, in closed form ``1 - (1 - zeta)**k``.

    The closed form is numerically stabler near ``zeta = 1`` than the
    alternating power sum; both representations agree to rounding.
    """
    k = scheme.k if isinstance(scheme, DelayScheme) else int(scheme)
    return 1.0 - (1.0 - complex(zeta)) ** k


def delay_symbol_series(scheme, zeta):
    """Alternating power-sum representation ``sum_d c_d zeta**d`` (verification)."""
    coeffs = scheme.coeffs if isinstance(scheme, DelayScheme) else delay_coefficients(scheme)
    zeta = complex(zeta)
    return complex(sum(c * zeta**d for d, c in enumerate(coeffs, start=1)))


def weak_coupling_bound(k):
    """Admissible coupling strength ``1 / (2**k - 1)`` for order-k delays."""
    if k < 1:
        raise ValueError(f"delay order must be >= 1, got {k}")
    return 1.0 / (2.0**k - 1.0)


def min_real_part_scan(mu, k, n_samples):
    """Scan ``Re(1 + mu * delta_k(zeta))`` over the unit circle.

    Parameters
    ----------
    mu : float
        Coupling weight, >= 0.
    k : int
        Delay order.
    n_samples : int
        Number of uniformly spaced angles in [0, 2*pi); must be >= 8.
        Even counts place a sample exactly at the analytic minimizer
        ``theta = pi``, where the minimum equals ``1 - mu*(2**k - 1)``.

    Returns
    -------
    (min_value, argmin_theta)
    """
    if mu < 0:
        raise ValueError("coupling weight must be non-negative")
    if n_samples < 8:
        raise ValueError("need at least 8 samples")
    theta = 2.0 * np.pi * np.arange(n_samples) / n_samples
    zeta = np.exp(1j * theta)
    values = 1.0 + mu * (1.0 - (1.0 - zeta) ** k).real
    i = int(np.argmin(values))
    return float(values[i]), float(theta[i])
