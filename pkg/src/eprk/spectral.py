"""Executable spectral diagnostics for the decoupling schemes.

Numerical counterparts of the frequency-domain stability machinery:
unit-circle sweeps of the stage transfer matrix acting on the stacked
pressure generating function, eigenvalue-sector checks of the
Runge-Kutta generating symbol, the closed-form contraction rates of
the iterative splittings, and log-log slope estimation for convergence
reports. Everything here runs on the dense backend; matrices are
formed explicitly and guarded against accidental large-scale use.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .delay import DelayScheme, delay_symbol
from .system import DENSE_SCHUR_LIMIT
from .tableau import generating_symbol

__all__ = [
    "SpectralProbe",
    "ConvergenceReport",
    "assemble_pressure_symbol",
    "assemble_pressure_rhs_symbol",
    "transfer_sweep",
    "contraction_rate_fixed_stress",
    "contraction_rate_undrained",
    "estimate_rate",
]


@dataclass
class SpectralProbe:
    """Per-angle records of a unit-circle sweep.

    ``theta_grid`` covers [0, 2*pi); the remaining arrays are aligned
    with it: smallest singular value of the pressure transfer matrix,
    minimum real part over the eigenvalues of the generating symbol,
    and ``Re(1 + mu * delay_symbol)`` at the probe's coupling weight.
    """

    theta_grid: np.ndarray
    sigma_min: np.ndarray
    symbol_min_real_eig: np.ndarray
    re_one_plus_mu_delta: np.ndarray
    mu: float

    def summary(self):
        return {
            "min_sigma_min": float(np.min(self.sigma_min)),
            "argmin_theta": float(self.theta_grid[int(np.argmin(self.sigma_min))]),
            "min_re_eig": float(np.min(self.symbol_min_real_eig)),
            "min_re_one_plus_mu_delta": float(np.min(self.re_one_plus_mu_delta)),
        }


@dataclass
class ConvergenceReport:
    """Error-versus-step-size table with fitted slopes.

    ``rows`` holds dicts with keys backend, scheme, tableau, delay_order,
    tau, err_u, err_p; ``slopes`` maps (scheme, tableau) to a dict with
    the fitted slope and maximum fit deviation per error column.
    """

    backend: str
    taus: list
    rows: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)

    def validate_taus(self):
        taus = np.asarray(self.taus, dtype=float)
        if len(taus) >= 2:
            if np.any(np.diff(taus) >= 0):
                raise ValueError("step sizes must be strictly decreasing")
            ratios = taus[1:] / taus[:-1]
            if np.max(np.abs(ratios - 0.5)) > 1e-12:
                raise ValueError("step sizes must be geometric with ratio 1/2")
        return self

    def errors_for(self, scheme, tableau_key):
        sel = [r for r in self.rows if r["scheme"] == scheme and r["tableau"] == tableau_key]
        sel.sort(key=lambda r: -r["tau"])
        return (
            np.array([r["tau"] for r in sel]),
            np.array([r["err_u"] for r in sel]),
            np.array([r["err_p"] for r in sel]),
        )


def _dense_blocks(sys):
    from .operators import as_dense

    if sys.n_p > DENSE_SCHUR_LIMIT:
        raise ValueError(
            f"spectral diagnostics are restricted to dense systems with "
            f"n_p <= {DENSE_SCHUR_LIMIT}, got {sys.n_p}"
        )
    b = as_dense(sys.B_op.mat)
    c = as_dense(sys.C_op.mat)
    schur = sys.dense_schur_complement()
    return b, c, schur


def assemble_pressure_symbol(sys, tab, delay, tau, zeta):
    """Frequency-domain matrix acting on the stacked pressure stages.

    At a point ``zeta`` of the closed unit disc this is

        ``kron(I_s, B) + kron(S(zeta)/tau, C + delta_k(zeta) * Schur)``

    where ``S`` is the Runge-Kutta generating symbol and ``delta_k`` the
    delay symbol. Uniform invertibility of this matrix over the unit
    circle is the stability mechanism of the semi-explicit scheme.
    Dense backend only.
    """
    b, c, schur = _dense_blocks(sys)
    sym = generating_symbol(tab, zeta)
    inner = c + delay_symbol(delay, zeta) * schur
    return np.kron(np.eye(tab.s), b) + np.kron(sym / tau, inner)


def assemble_pressure_rhs_symbol(
    sys, tab, delay, tau, zeta, flow_stages, mech_stages, history=None
):
    """Frequency-domain right-hand side matching the pressure transfer matrix.

    Parameters
    ----------
    flow_stages, mech_stages : ndarray, shape (N, s, n)
        Stage load vectors of the first N steps (zero afterwards).
    history : sequence of (s, n_p) arrays, optional
        Pressure stage vectors of steps ``1-k .. 0`` (oldest first).
        Omitted entries count as zero.

    Notes
    -----
    Includes the data term, the eliminated mechanics loads, the delay
    initial-value polynomial, and the initial-data term weighted by the
    resolvent factor of the update recursion. With vanishing initial
    data and history only the first two terms contribute.
    """
    from .operators import as_dense

    zeta = complex(zeta)
    s, n_p = tab.s, sys.n_p
    sym = generating_symbol(tab, zeta)
    d = as_dense(sys.coupling)
    a = as_dense(sys.A_op.mat)
    da_inv = np.linalg.solve(a.T, d.T).T  # D @ inv(A)
    schur = da_inv @ d.T

    n_steps = flow_stages.shape[0]
    powers = zeta ** np.arange(1, n_steps + 1)
    g_hat = np.tensordot(powers, flow_stages, axes=(0, 0))  # (s, n_p)
    f_hat = np.tensordot(powers, mech_stages, axes=(0, 0))  # (s, n_u)

    rhs = g_hat.astype(complex)
    rhs -= (sym / tau) @ (f_hat @ da_inv.T)

    coeffs = delay.coeffs
    k = delay.k
    hist = list(history) if history is not None else []
    # pad missing oldest entries with zeros; hist[-1] is step 0
    while len(hist) < k:
        hist.insert(0, np.zeros((s, n_p)))
    phi = np.zeros((s, n_p), dtype=complex)
    for dd in range(1, k + 1):
        for n in range(1, dd + 1):
            # stage vector of step n - dd, an initial value (index <= 0)
            phi += float(coeffs[dd - 1]) * zeta**n * hist[k - 1 + n - dd]
    rhs -= (sym / tau) @ (phi @ schur.T)

    a_inv_ones = np.linalg.solve(tab.A, np.ones(s))
    carry = d @ sys.u0 + as_dense(sys.C_op.mat) @ sys.p0
    factor = zeta / (1.0 - tab.r_infinity * zeta)
    rhs += np.outer(a_inv_ones, carry) * (factor / tau)
    return rhs


def transfer_sweep(sys, tab, delay, tau, n_samples=720, refine_near_pi=4):
    """Sweep the pressure transfer matrix over the unit circle.

    Records the smallest singular value per angle together with the
    eigenvalue sector of the generating symbol and the delay
    positivity margin at the system's coupling weight. The grid is a
    uniform ``n_samples`` partition of [0, 2*pi) with extra samples at
    ``refine_near_pi`` times the base density in a window around
    ``theta = pi``, where the invertibility margin degenerates as the
    coupling approaches the admissible bound.
    """
    from .system import coupling_strength

    base = 2.0 * np.pi * np.arange(n_samples) / n_samples
    if refine_near_pi > 1:
        width = 2.0 * np.pi / 16.0
        fine = np.pi + np.linspace(-width, width, int(refine_near_pi * n_samples / 8))
        theta = np.unique(np.concatenate([base, fine]))
    else:
        theta = base
    mu = coupling_strength(sys, 1e-10)

    sig = np.empty(theta.shape)
    min_re = np.empty(theta.shape)
    delta_margin = np.empty(theta.shape)
    for i, th in enumerate(theta):
        zeta = np.exp(1j * th)
        mat = assemble_pressure_symbol(sys, tab, delay, tau, zeta)
        sig[i] = np.linalg.svd(mat, compute_uv=False)[-1]
        eigs = np.linalg.eigvals(generating_symbol(tab, zeta))
        min_re[i] = eigs.real.min()
        delta_margin[i] = 1.0 + mu * delay_symbol(delay, zeta).real
    return SpectralProbe(theta, sig, min_re, delta_margin, mu)


def contraction_rate_fixed_stress(coupling, stabilization):
    """Worst-case rate ``max(L, w - L) / (1 + L)`` of the fixed-stress loop.

    The maximum of ``|L - mu|`` over ``mu in [0, w]`` is attained at an
    endpoint, so the interval evaluation is exact. The optimal weight
    ``L = w/2`` gives ``w / (2 + w)``.
    """
    if coupling < 0 or stabilization < 0:
        raise ValueError("coupling strength and stabilization must be >= 0")
    return max(stabilization, coupling - stabilization) / (1.0 + stabilization)


def contraction_rate_undrained(coupling, stabilization):
    """Worst-case rate ``w * max(L, 1 - L) / (1 + L w)`` of the undrained loop.

    Below one for every ``L >= 1/2``; for smaller weights only under
    ``w < 1 / (1 - 2L)``. The optimal weight ``L = 1/2`` again gives
    ``w / (2 + w)``.
    """
    if coupling < 0 or stabilization < 0:
        raise ValueError("coupling strength and stabilization must be >= 0")
    return (
        coupling
        * max(stabilization, 1.0 - stabilization)
        / (1.0 + stabilization * coupling)
    )


def estimate_rate(rows):
    """Least-squares slope of ``log(error)`` against ``log(tau)``.

    Parameters
    ----------
    rows : iterable of (tau, error)
        Non-positive errors are excluded with a warning; at least three
        usable rows are required.

    Returns
    -------
    (slope, residual)
        ``residual`` is the maximum absolute deviation of ``log(error)``
        from the fitted line.
    """
    taus, errs = [], []
    for tau, err in rows:
        if err <= 0.0 or not np.isfinite(err):
            warnings.warn(f"excluding non-positive error {err!r} at tau={tau!r}")
            continue
        taus.append(float(tau))
        errs.append(float(err))
    if len(taus) < 3:
        raise ValueError(f"need >= 3 usable rows for a slope fit, got {len(taus)}")
    x = np.log(np.asarray(taus))
    y = np.log(np.asarray(errs))
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.max(np.abs(y - (slope * x + intercept))))
    return float(slope), residual
