"""Time-stepping schemes for the coupled elliptic-parabolic system.

Four schemes share one stepping interface:

* ``monolithic``      -- fully implicit Runge-Kutta on the coupled system;
* ``semi_explicit``   -- the elliptic equation sees extrapolated pressure
  stages from the k preceding steps, decoupling the two solves;
* ``fixed_stress``    -- per-step inner iteration stabilizing the flow
  equation with a weighted storage increment;
* ``undrained_split`` -- per-step inner iteration stabilizing the
  mechanics equation with the coupling seminorm operator.

Stage vectors are ndarrays of shape ``(s, n)``. All stage-coupled
matrices are assembled and factorized once per (system, tableau, step
size, stabilization) and reused across steps and inner iterations; a
single run is sequential, but independent runs may share the immutable
:class:`~eprk.system.CoupledSystem`.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .delay import DelayScheme
from .system import CoupledSystem, coupling_seminorm, gram_norm, weighted_stage_norm
from .tableau import ButcherTableau

__all__ = [
    "SchemeConfig",
    "TrajectoryState",
    "RunResult",
    "IterationDivergenceError",
    "step_monolithic",
    "step_semi_explicit",
    "step_fixed_stress",
    "step_undrained",
    "run",
    "recommended_tol",
    "make_stepper",
]

SCHEME_KINDS = ("monolithic", "semi_explicit", "fixed_stress", "undrained_split")
HISTORY_POLICIES = ("exact_solution", "bootstrap_monolithic")


class IterationDivergenceError(RuntimeError):
    """Inner iteration exhausted max_iter; carries the norm history."""

    def __init__(self, message, norm_history):
        super().__init__(message)
        self.norm_history = list(norm_history)


@dataclass
class SchemeConfig:
    """Which scheme to run and its scheme-specific knobs.

    ``delay`` is required for the semi-explicit scheme and must be
    absent otherwise; ``stabilization`` (the damping weight of the
    inner iteration) and ``tol`` apply only to the iterative schemes.
    """

    scheme_kind: str
    tableau: ButcherTableau
    delay: Optional[DelayScheme] = None
    stabilization: float = 0.0
    tol: Optional[float] = None
    max_iter: int = 200
    history_init: str = "bootstrap_monolithic"

    def validate(self):
        if self.scheme_kind not in SCHEME_KINDS:
            raise ValueError(f"unknown scheme kind {self.scheme_kind!r}")
        if self.scheme_kind == "semi_explicit":
            if self.delay is None:
                raise ValueError("semi_explicit requires a delay scheme")
            if self.history_init not in HISTORY_POLICIES:
                raise ValueError(f"unknown history policy {self.history_init!r}")
        elif self.delay is not None:
            raise ValueError(f"{self.scheme_kind} does not take a delay scheme")
        if self.scheme_kind in ("fixed_stress", "undrained_split"):
            if self.stabilization < 0:
                raise ValueError("stabilization weight must be >= 0")
            if self.tol is None or self.tol <= 0:
                raise ValueError("iterative schemes require a positive tol")
        return self


@dataclass
class TrajectoryState:
    """Mutable per-run state: grid values, history ring, iteration log."""

    n: int
    t: float
    u: np.ndarray
    p: np.ndarray
    pressure_stage_history: deque = field(default_factory=lambda: deque(maxlen=1))
    iteration_log: list = field(default_factory=list)  # (iteration, norm) of last step

    @classmethod
    def initial(cls, sys, history_len=1):
        return cls(
            n=0,
            t=0.0,
            u=sys.u0.copy(),
            p=sys.p0.copy(),
            pressure_stage_history=deque(maxlen=max(history_len, 1)),
        )


@dataclass
class RunResult:
    """Trajectory-level output of :func:`run`."""

    times: np.ndarray
    errors_u: Optional[np.ndarray]
    errors_p: Optional[np.ndarray]
    max_error_u: Optional[float]
    max_error_p: Optional[float]
    iterations_per_step: list
    iteration_norms: list
    final_u: np.ndarray
    final_p: np.ndarray
    trajectory_u: Optional[np.ndarray] = None
    trajectory_p: Optional[np.ndarray] = None

    @property
    def average_iterations(self):
        if not self.iterations_per_step:
            return 0.0
        return float(np.mean(self.iterations_per_step))

    def telemetry_rows(self):
        """Rows ``(step, time, iteration, theta_norm)`` for CSV export."""
        rows = []
        for n, (t, norms) in enumerate(zip(self.times[1:], self.iteration_norms), 1):
            for i, val in enumerate(norms, 1):
                rows.append((n, float(t), i, float(val)))
        return rows


def _kron(stage_mat, op_mat):
    """Kronecker product of a small stage matrix with an operator block."""
    if sp.issparse(op_mat):
        return sp.kron(sp.csr_matrix(stage_mat), op_mat, format="csr")
    return np.kron(stage_mat, op_mat)


def _factorize(mat):
    if sp.issparse(mat):
        lu = spla.splu(mat.tocsc())
        return lu.solve
    lu, piv = sla.lu_factor(mat)
    return lambda b: sla.lu_solve((lu, piv), b)


def _stage_times(t_prev, tab, tau):
    return t_prev + tab.c * tau


def _stage_loads(forcing, times):
    return np.array([forcing(t) for t in times])


def _apply_stagewise(op_apply, V):
    return np.array([op_apply(row) for row in V])


def _stage_combine(stage_mat, W):
    """Apply ``stage_mat`` across the stage index of ``W`` (s, n)."""
    return stage_mat @ W


def _grid_update(tab, state_val, stages):
    """New grid value from stage values (last stage if stiffly accurate)."""
    if tab.stiffly_accurate:
        return stages[-1].copy()
    a_inv = tab.a_inverse()
    return tab.r_infinity * state_val + (tab.b @ a_inv) @ stages


class _FlowSolver:
    """Factorized stage-coupled flow matrix.

    Solves ``(scale / tau) * kron(inv(A_rk), C) + kron(I, B)`` applied to
    the stacked pressure stages; built once per run and reused.
    """

    def __init__(self, sys, tab, tau, scale=1.0):
        self.s = tab.s
        self.n_p = sys.n_p
        a_inv = tab.a_inverse()
        mat = _kron(a_inv * (scale / tau), sys.C_op.mat) + _kron(
            np.eye(tab.s), sys.B_op.mat
        )
        self._solve = _factorize(mat)

    def solve(self, rhs_stages):
        flat = self._solve(np.asarray(rhs_stages).reshape(self.s * self.n_p))
        return flat.reshape(self.s, self.n_p)


class MonolithicStepper:
    """Fully implicit step: one coupled solve for all stages of both fields."""

    def __init__(self, sys, tab, tau):
        self.sys = sys
        self.tab = tab
        self.tau = tau
        s, n_u, n_p = tab.s, sys.n_u, sys.n_p
        a_inv = tab.a_inverse()
        eye = np.eye(s)
        d = sys.coupling
        blocks = [
            [_kron(eye, sys.A_op.mat), -_kron(eye, d.T)],
            [
                _kron(a_inv / tau, d),
                _kron(a_inv / tau, sys.C_op.mat) + _kron(eye, sys.B_op.mat),
            ],
        ]
        if any(sp.issparse(blk) for row in blocks for blk in row):
            mat = sp.bmat(
                [[sp.csr_matrix(blk) for blk in row] for row in blocks], format="csc"
            )
        else:
            mat = np.block(blocks)
        self._solve = _factorize(mat)
        self._a_inv_ones = a_inv @ np.ones(s)
        self._sizes = (s * n_u, s * n_p)

    def step(self, state):
        sys, tab, tau = self.sys, self.tab, self.tau
        times = _stage_times(state.t, tab, tau)
        F = _stage_loads(sys.forcing_mech, times)
        G = _stage_loads(sys.forcing_flow, times)
        carry = sys.coupling @ state.u + sys.C_op.apply(state.p)
        rhs_flow = G + np.outer(self._a_inv_ones / tau, carry)
        rhs = np.concatenate([F.ravel(), rhs_flow.ravel()])
        sol = self._solve(rhs)
        nu, npp = self._sizes
        U = sol[:nu].reshape(tab.s, sys.n_u)
        P = sol[nu : nu + npp].reshape(tab.s, sys.n_p)
        new = TrajectoryState(
            n=state.n + 1,
            t=state.t + tau,
            u=_grid_update(tab, state.u, U),
            p=_grid_update(tab, state.p, P),
            pressure_stage_history=state.pressure_stage_history,
        )
        new.pressure_stage_history.append(P)
        return new


class SemiExplicitStepper:
    """Decoupled step: mechanics with extrapolated pressure, then flow.

    Requires ``delay.k`` pressure stage vectors from preceding steps in
    the state's history ring.
    """

    def __init__(self, sys, tab, delay, tau):
        self.sys = sys
        self.tab = tab
        self.delay = delay
        self.tau = tau
        self.flow = _FlowSolver(sys, tab, tau)
        self._a_inv = tab.a_inverse()

    def step(self, state):
        sys, tab, tau = self.sys, self.tab, self.tau
        k = self.delay.k
        hist = state.pressure_stage_history
        if len(hist) < k:
            raise ValueError(
                f"semi-explicit step needs {k} pressure stage vectors in the "
                f"history, found {len(hist)}"
            )
        coeffs = self.delay.coeffs
        extrapolated = sum(
            float(coeffs[d - 1]) * hist[-d] for d in range(1, k + 1)
        )
        times = _stage_times(state.t, tab, tau)
        F = _stage_loads(sys.forcing_mech, times)
        rhs_mech = F + _apply_stagewise(lambda q: sys.coupling.T @ q, extrapolated)
        U = np.array([sys.A_op.solve(row) for row in rhs_mech])

        G = _stage_loads(sys.forcing_flow, times)
        du = _stage_combine(self._a_inv / tau, U - state.u[None, :])
        rhs_flow = (
            G
            - _apply_stagewise(lambda v: sys.coupling @ v, du)
            + _stage_combine(
                self._a_inv / tau, np.tile(sys.C_op.apply(state.p), (tab.s, 1))
            )
        )
        P = self.flow.solve(rhs_flow)
        new = TrajectoryState(
            n=state.n + 1,
            t=state.t + tau,
            u=_grid_update(tab, state.u, U),
            p=_grid_update(tab, state.p, P),
            pressure_stage_history=state.pressure_stage_history,
        )
        new.pressure_stage_history.append(P)
        return new


class FixedStressStepper:
    """Inner iteration: stabilized flow solve, then stagewise mechanics.

    Stops when the weighted storage norm of the pressure increment
    drops below ``tol``; raises :class:`IterationDivergenceError` with
    the recorded norms if ``max_iter`` is exhausted.
    """

    def __init__(self, sys, tab, tau, stabilization, tol, max_iter):
        self.sys = sys
        self.tab = tab
        self.tau = tau
        self.stabilization = float(stabilization)
        self.tol = float(tol)
        self.max_iter = int(max_iter)
        self.flow = _FlowSolver(sys, tab, tau, scale=1.0 + self.stabilization)
        self._a_inv = tab.a_inverse()

    def step(self, state):
        sys, tab, tau = self.sys, self.tab, self.tau
        L = self.stabilization
        s = tab.s
        times = _stage_times(state.t, tab, tau)
        F = _stage_loads(sys.forcing_mech, times)
        G = _stage_loads(sys.forcing_flow, times)
        c_prev = np.tile(sys.C_op.apply(state.p), (s, 1))
        U = np.tile(state.u, (s, 1))
        P = np.tile(state.p, (s, 1))
        norms = []
        for _ in range(self.max_iter):
            du = _stage_combine(self._a_inv / tau, U - state.u[None, :])
            stab = sys.C_op.mat @ (P - state.p[None, :]).T  # (n_p, s)
            rhs_flow = (
                G
                - _apply_stagewise(lambda v: sys.coupling @ v, du)
                + _stage_combine(self._a_inv / tau, (1.0 + L) * c_prev + L * stab.T)
            )
            P_new = self.flow.solve(rhs_flow)
            rhs_mech = F + _apply_stagewise(lambda q: sys.coupling.T @ q, P_new)
            U = np.array([sys.A_op.solve(row) for row in rhs_mech])
            diff = weighted_stage_norm(sys.C_op.mat, P_new - P, tab.b)
            norms.append(diff)
            P = P_new
            if diff <= self.tol:
                break
        else:
            raise IterationDivergenceError(
                f"fixed-stress iteration at t = {state.t + tau:g} did not reach "
                f"tol = {self.tol:g} within {self.max_iter} iterations "
                f"(last increment {norms[-1]:.3e})",
                norms,
            )
        new = TrajectoryState(
            n=state.n + 1,
            t=state.t + tau,
            u=_grid_update(tab, state.u, U),
            p=_grid_update(tab, state.p, P),
            pressure_stage_history=state.pressure_stage_history,
            iteration_log=list(enumerate(norms, start=1)),
        )
        new.pressure_stage_history.append(P)
        return new


class UndrainedStepper:
    """Inner iteration: stabilized mechanics solve, then stage-coupled flow.

    The mechanics stabilization applies the coupling seminorm operator
    without ever forming it: each stage solves the augmented saddle
    system ``[[A, L D^T], [D, -C]]`` whose elimination reproduces
    ``A + L D^T C^-1 D``.
    """

    def __init__(self, sys, tab, tau, stabilization, tol, max_iter):
        self.sys = sys
        self.tab = tab
        self.tau = tau
        self.stabilization = float(stabilization)
        self.tol = float(tol)
        self.max_iter = int(max_iter)
        self.flow = _FlowSolver(sys, tab, tau)
        self._a_inv = tab.a_inverse()
        L = self.stabilization
        d = sys.coupling
        blocks = [[sys.A_op.mat, L * d.T], [d, -(sys.C_op.mat)]]
        if any(sp.issparse(blk) for row in blocks for blk in row):
            mat = sp.bmat(
                [[sp.csr_matrix(blk) for blk in row] for row in blocks], format="csc"
            )
        else:
            mat = np.block(
                [[np.asarray(blocks[0][0]), np.asarray(blocks[0][1])],
                 [np.asarray(blocks[1][0]), np.asarray(blocks[1][1])]]
            )
        self._mech_solve = _factorize(mat)

    def _solve_mechanics(self, rhs):
        full = self._mech_solve(np.concatenate([rhs, np.zeros(self.sys.n_p)]))
        return full[: self.sys.n_u]

    def step(self, state):
        sys, tab, tau = self.sys, self.tab, self.tau
        L = self.stabilization
        s = tab.s
        times = _stage_times(state.t, tab, tau)
        F = _stage_loads(sys.forcing_mech, times)
        G = _stage_loads(sys.forcing_flow, times)
        c_prev = np.tile(sys.C_op.apply(state.p), (s, 1))
        U = np.tile(state.u, (s, 1))
        P = np.tile(state.p, (s, 1))
        norms = []
        for _ in range(self.max_iter):
            U_new = np.empty_like(U)
            for ell in range(s):
                rhs = F[ell] + sys.coupling.T @ P[ell]
                if L != 0.0:
                    z = sys.C_op.solve(sys.coupling @ U[ell])
                    rhs = rhs + L * (sys.coupling.T @ z)
                U_new[ell] = self._solve_mechanics(rhs)
            du = _stage_combine(self._a_inv / tau, U_new - state.u[None, :])
            rhs_flow = (
                G
                - _apply_stagewise(lambda v: sys.coupling @ v, du)
                + _stage_combine(self._a_inv / tau, c_prev)
            )
            P = self.flow.solve(rhs_flow)
            diff = coupling_seminorm(sys, U_new - U, tab.b)
            norms.append(diff)
            U = U_new
            if diff <= self.tol:
                break
        else:
            raise IterationDivergenceError(
                f"undrained-split iteration at t = {state.t + tau:g} did not "
                f"reach tol = {self.tol:g} within {self.max_iter} iterations "
                f"(last increment {norms[-1]:.3e})",
                norms,
            )
        new = TrajectoryState(
            n=state.n + 1,
            t=state.t + tau,
            u=_grid_update(tab, state.u, U),
            p=_grid_update(tab, state.p, P),
            pressure_stage_history=state.pressure_stage_history,
            iteration_log=list(enumerate(norms, start=1)),
        )
        new.pressure_stage_history.append(P)
        return new


def step_monolithic(sys, tab, tau, state):
    """One fully implicit step (builds a transient factorization)."""
    return MonolithicStepper(sys, tab, tau).step(state)


def step_semi_explicit(sys, tab, delay, tau, state):
    """One semi-explicit step; the state must carry k history entries."""
    return SemiExplicitStepper(sys, tab, delay, tau).step(state)


def step_fixed_stress(sys, tab, tau, stabilization, tol, max_iter, state):
    """One fixed-stress step iterated to the stopping tolerance."""
    return FixedStressStepper(sys, tab, tau, stabilization, tol, max_iter).step(state)


def step_undrained(sys, tab, tau, stabilization, tol, max_iter, state):
    """One undrained-split step iterated to the stopping tolerance."""
    return UndrainedStepper(sys, tab, tau, stabilization, tol, max_iter).step(state)


def recommended_tol(tab, delay, tau):
    """Stopping tolerance ``tau**(k + 3/2)`` balancing both error sources.

    ``k`` is the tableau's classical order; the delay scheme is accepted
    for interface symmetry (the standard pairing uses ``k = 2s - 1``
    delays, which leaves the exponent unchanged).
    """
    if not 0.0 < tau < 1.0:
        raise ValueError("step size must lie in (0, 1)")
    return float(tau ** (tab.classical_order + 1.5))


def make_stepper(sys, cfg, tau):
    """Instantiate the cached-factorization stepper for a scheme config."""
    cfg.validate()
    tab = cfg.tableau
    if cfg.scheme_kind == "monolithic":
        return MonolithicStepper(sys, tab, tau)
    if cfg.scheme_kind == "semi_explicit":
        return SemiExplicitStepper(sys, tab, cfg.delay, tau)
    if cfg.scheme_kind == "fixed_stress":
        return FixedStressStepper(sys, tab, tau, cfg.stabilization, cfg.tol, cfg.max_iter)
    return UndrainedStepper(sys, tab, tau, cfg.stabilization, cfg.tol, cfg.max_iter)


def _exact_history(sys, tab, delay, tau, exact):
    """Stage pressure vectors for steps 0, -1, ..., 1-k from exact data."""
    entries = []
    for m in range(1 - delay.k, 1):
        times = (m - 1) * tau + tab.c * tau
        entries.append(np.array([exact.pressure(t) for t in times]))
    return entries


def run(sys, cfg, tau, T, exact=None, store_trajectory=False, initial_history=None):
    """March a scheme from t = 0 to t = T and collect errors and telemetry.

    Parameters
    ----------
    sys : CoupledSystem
    cfg : SchemeConfig
    tau : float
        Step size; ``T / tau`` must be integral to 1e-9.
    exact : ExactSolution, optional
        When given, per-step errors are recorded in the displacement
        norm (``norm_gram_V``) and the pressure pivot norm
        (``norm_gram_H``), together with their maxima over the run.
    store_trajectory : bool
        Keep all grid values (memory scales with the run length).
    initial_history : sequence of (s, n_p) arrays, optional
        Explicit pressure stage history for the semi-explicit scheme
        (oldest first); overrides ``cfg.history_init``.

    Returns
    -------
    RunResult
    """
    cfg.validate()
    n_steps_f = T / tau
    n_steps = int(round(n_steps_f))
    if abs(n_steps_f - n_steps) > 1e-9 or n_steps < 1:
        raise ValueError(f"final time {T} is not an integral multiple of tau = {tau}")
    tab = cfg.tableau

    history_len = cfg.delay.k if cfg.scheme_kind == "semi_explicit" else 1
    state = TrajectoryState.initial(sys, history_len)

    bootstrap_steps = 0
    stepper = make_stepper(sys, cfg, tau)
    if cfg.scheme_kind == "semi_explicit":
        if initial_history is not None:
            if len(initial_history) != cfg.delay.k:
                raise ValueError(
                    f"initial history must hold {cfg.delay.k} stage vectors"
                )
            for entry in initial_history:
                state.pressure_stage_history.append(np.asarray(entry, dtype=float))
        elif cfg.history_init == "exact_solution":
            if exact is None:
                raise ValueError(
                    "history_init='exact_solution' requires an exact solution"
                )
            for entry in _exact_history(sys, tab, cfg.delay, tau, exact):
                state.pressure_stage_history.append(entry)
        else:  # bootstrap_monolithic: warm up with fully implicit steps
            bootstrap_steps = min(cfg.delay.k, n_steps)
            bootstrap = MonolithicStepper(sys, tab, tau)

    times = np.arange(n_steps + 1) * tau
    errors_u = np.zeros(n_steps + 1) if exact is not None else None
    errors_p = np.zeros(n_steps + 1) if exact is not None else None
    traj_u = [state.u.copy()] if store_trajectory else None
    traj_p = [state.p.copy()] if store_trajectory else None
    iterations_per_step = []
    iteration_norms = []

    for n in range(1, n_steps + 1):
        active = bootstrap if n <= bootstrap_steps else stepper
        state = active.step(state)
        if exact is not None:
            errors_u[n] = gram_norm(sys.norm_gram_V, state.u - exact.displacement(state.t))
            errors_p[n] = gram_norm(sys.norm_gram_H, state.p - exact.pressure(state.t))
        if store_trajectory:
            traj_u.append(state.u.copy())
            traj_p.append(state.p.copy())
        if state.iteration_log:
            iterations_per_step.append(state.iteration_log[-1][0])
            iteration_norms.append([norm for _, norm in state.iteration_log])

    return RunResult(
        times=times,
        errors_u=errors_u,
        errors_p=errors_p,
        max_error_u=float(np.max(errors_u)) if exact is not None else None,
        max_error_p=float(np.max(errors_p)) if exact is not None else None,
        iterations_per_step=iterations_per_step,
        iteration_norms=iteration_norms,
        final_u=state.u,
        final_p=state.p,
        trajectory_u=np.array(traj_u) if store_trajectory else None,
        trajectory_p=np.array(traj_p) if store_trajectory else None,
    )
