"""Manufactured exact solution for the quasi-static poroelastic benchmark.

The exact fields on the unit square are separable: a fixed sine bubble
in space times a decaying exponential in time,

    ``u(t, x, y) = -exp(-a t) [sin(pi x) sin(pi y); sin(pi x) sin(pi y)]``
    ``p(t, x, y) =  exp(-a t)  sin(pi x) sin(pi y)``

with decay rate ``a = 2 pi^2 (kappa/nu) / (alpha + 1/M)``. The load
terms are derived in closed form by differentiating these fields; a
finite-difference residual check is provided for validation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["BiotParameters", "ManufacturedProblem", "manufactured_problem"]


@dataclass(frozen=True)
class BiotParameters:
    """Nondimensional material parameters of the poroelastic model."""

    lam: float = 1.0  # first Lame coefficient
    mu: float = 0.5  # shear modulus
    kappa_over_nu: float = 0.1  # permeability over fluid viscosity
    biot_modulus: float = 1.0
    alpha: float = 0.1  # Biot-Willis coupling coefficient

    def __post_init__(self):
        if self.mu <= 0 or self.kappa_over_nu <= 0 or self.biot_modulus <= 0:
            raise ValueError("mu, kappa/nu and the Biot modulus must be positive")
        if self.lam < 0 or self.alpha < 0:
            raise ValueError("lambda and alpha must be non-negative")

    @classmethod
    def from_mapping(cls, mapping):
        keys = {
            "lambda": "lam",
            "lam": "lam",
            "mu": "mu",
            "kappa": "kappa_over_nu",
            "kappa_over_nu": "kappa_over_nu",
            "M": "biot_modulus",
            "biot_modulus": "biot_modulus",
            "alpha": "alpha",
        }
        kwargs = {}
        for key, value in mapping.items():
            if key not in keys:
                raise ValueError(f"unknown material parameter {key!r}")
            kwargs[keys[key]] = float(value)
        return cls(**kwargs)


def _sines(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return (
        np.sin(np.pi * x) * np.sin(np.pi * y),
        np.cos(np.pi * x) * np.sin(np.pi * y),
        np.sin(np.pi * x) * np.cos(np.pi * y),
        np.cos(np.pi * x) * np.cos(np.pi * y),
    )


@dataclass(frozen=True)
class ManufacturedProblem:
    """Exact fields, decay rate, and closed-form load terms."""

    params: BiotParameters
    decay_rate: float

    # -- time/space separation ------------------------------------------
    def time_factor(self, t):
        return float(np.exp(-self.decay_rate * t))

    def displacement_profile(self, x, y):
        ss = _sines(x, y)[0]
        return np.stack([-ss, -ss])

    def pressure_profile(self, x, y):
        return _sines(x, y)[0]

    def mech_load_profile(self, x, y):
        p = self.params
        ss, cs, sc, cc = _sines(x, y)
        pi = np.pi
        bulk = pi**2 * ((3 * p.mu + p.lam) * ss - (p.mu + p.lam) * cc)
        fx = -bulk + p.alpha * pi * cs
        fy = -bulk + p.alpha * pi * sc
        return np.stack([fx, fy])

    def flow_load_profile(self, x, y):
        p = self.params
        a = self.decay_rate
        ss, cs, sc, _ = _sines(x, y)
        pi = np.pi
        div_part = a * p.alpha * pi * (cs + sc)
        storage_part = (2 * pi**2 * p.kappa_over_nu - a / p.biot_modulus) * ss
        return div_part + storage_part

    # -- full space-time evaluators --------------------------------------
    def displacement(self, t, x, y):
        return self.time_factor(t) * self.displacement_profile(x, y)

    def pressure(self, t, x, y):
        return self.time_factor(t) * self.pressure_profile(x, y)

    def mech_load(self, t, x, y):
        return self.time_factor(t) * self.mech_load_profile(x, y)

    def flow_load(self, t, x, y):
        return self.time_factor(t) * self.flow_load_profile(x, y)

    # -- validation -------------------------------------------------------
    def residual_fd(self, t, x, y, h=1e-6):
        """Pointwise PDE residuals via central differences of the fields.

        Returns ``(res_mech_x, res_mech_y, res_flow)``. Accuracy is
        limited by the second-difference rounding floor, so agreement
        with zero is expected at the 1e-6 relative level for the
        default step.
        """
        p = self.params

        def u(tt, xx, yy):
            return self.displacement(tt, xx, yy)

        def pr(tt, xx, yy):
            return self.pressure(tt, xx, yy)

        def dx(f, comp=None):
            a = f(t, x + h, y)
            b = f(t, x - h, y)
            a = a[comp] if comp is not None else a
            b = b[comp] if comp is not None else b
            return (a - b) / (2 * h)

        def dy(f, comp=None):
            a = f(t, x, y + h)
            b = f(t, x, y - h)
            a = a[comp] if comp is not None else a
            b = b[comp] if comp is not None else b
            return (a - b) / (2 * h)

        def dxx(f, comp=None):
            a, m, b = f(t, x + h, y), f(t, x, y), f(t, x - h, y)
            if comp is not None:
                a, m, b = a[comp], m[comp], b[comp]
            return (a - 2 * m + b) / h**2

        def dyy(f, comp=None):
            a, m, b = f(t, x, y + h), f(t, x, y), f(t, x, y - h)
            if comp is not None:
                a, m, b = a[comp], m[comp], b[comp]
            return (a - 2 * m + b) / h**2

        def dxy(f, comp=None):
            pp = f(t, x + h, y + h)
            pm = f(t, x + h, y - h)
            mp = f(t, x - h, y + h)
            mm = f(t, x - h, y - h)
            if comp is not None:
                pp, pm, mp, mm = pp[comp], pm[comp], mp[comp], mm[comp]
            return (pp - pm - mp + mm) / (4 * h**2)

        # -div(sigma(u)) components with sigma = 2 mu eps(u) + lam div(u) I
        div_sigma_x = (
            p.mu * (2 * dxx(u, 0) + dyy(u, 0) + dxy(u, 1))
            + p.lam * (dxx(u, 0) + dxy(u, 1))
        )
        div_sigma_y = (
            p.mu * (dxx(u, 1) + dxy(u, 0) + 2 * dyy(u, 1))
            + p.lam * (dxy(u, 0) + dyy(u, 1))
        )
        res_mech_x = -div_sigma_x + p.alpha * dx(pr) - self.mech_load(t, x, y)[0]
        res_mech_y = -div_sigma_y + p.alpha * dy(pr) - self.mech_load(t, x, y)[1]

        def storage(tt):
            du = self.displacement(tt, x + h, y)[0] - self.displacement(tt, x - h, y)[0]
            dv = self.displacement(tt, x, y + h)[1] - self.displacement(tt, x, y - h)[1]
            div_u = (du + dv) / (2 * h)
            return p.alpha * div_u + pr(tt, x, y) / p.biot_modulus

        dt_storage = (storage(t + h) - storage(t - h)) / (2 * h)
        res_flow = (
            dt_storage
            - p.kappa_over_nu * (dxx(pr) + dyy(pr))
            - self.flow_load(t, x, y)
        )
        return res_mech_x, res_mech_y, res_flow


def manufactured_problem(params=None):
    """Build the manufactured benchmark problem for given parameters."""
    params = params if params is not None else BiotParameters()
    decay = (
        2.0
        * np.pi**2
        * params.kappa_over_nu
        / (params.alpha + 1.0 / params.biot_modulus)
    )
    return ManufacturedProblem(params=params, decay_rate=float(decay))
