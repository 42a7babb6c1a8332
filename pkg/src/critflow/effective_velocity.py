"""Pressure law, the potential field v and the effective velocity v1.

With ``nu = lambda + 2 mu`` the field ``v = grad lap^{-1} (P(rho) - P(rho_bar))``
satisfies ``A v = nu grad P(rho)``, so writing ``u = v1 + v / nu`` removes the
pressure gradient from the momentum equation for v1.  On the torus the
inverse Laplacian acts on the mean-free part; every identity below involves
grad or lap of v and is unaffected by that choice.

The density is the primary unknown; ``a = 1/rho - 1`` and every factor
``1 + a`` is derived from it.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import VacuumApproach
from .spectral_core import (Field, ViscosityParams, advect, divergence, gradient,
                            lame_operator, longitudinal_projection, multiply)


@dataclass(frozen=True)
class PressureLaw:
    """gamma-law ``P(rho) = K rho^gamma``; gamma = 1 is the isothermal case."""

    K: float = 1.0
    gamma: float = 1.0
    rho_bar: float = 1.0

    def __post_init__(self):
        if not self.K > 0:
            raise ValueError("K must be positive")
        if not self.gamma >= 1:
            raise ValueError("gamma must be >= 1")
        if not self.rho_bar > 0:
            raise ValueError("rho_bar must be positive")

    @property
    def isothermal(self) -> bool:
        return self.gamma == 1.0

    def P(self, rho):
        rho = np.asarray(rho, dtype=float)
        return self.K * rho if self.isothermal else self.K * rho**self.gamma

    def dP(self, rho):
        rho = np.asarray(rho, dtype=float)
        if self.isothermal:
            return np.full_like(rho, self.K)
        return self.K * self.gamma * rho ** (self.gamma - 1)

    def potential(self, rho):
        """Energy density ``rho * int_{rho_bar}^{rho} (P(s) - P(rho_bar)) / s^2 ds``."""
        rho = np.asarray(rho, dtype=float)
        rb, K, g = self.rho_bar, self.K, self.gamma
        if self.isothermal:
            return K * (rho * np.log(rho / rb) - rho + rb)
        Pb = K * rb**g
        prim = K * (rho ** (g - 1) - rb ** (g - 1)) / (g - 1) + Pb * (1.0 / rho - 1.0 / rb)
        return rho * prim


def _check_density(rho: Field) -> None:
    low = float(rho.data.min())
    if not np.isfinite(low) or low <= 0:
        raise VacuumApproach(f"inf(rho) = {low:.6g} is not positive")


@dataclass(frozen=True, eq=False)
class FluidState:
    """Density, velocity and the derived fields a, v, v1 (computed lazily)."""

    rho: Field
    u: Field
    visc: ViscosityParams = ViscosityParams()
    law: PressureLaw = PressureLaw()

    def __post_init__(self):
        if not self.rho.is_scalar:
            raise ValueError("rho must be a scalar field")
        if self.u.ncomp != self.u.grid.dim:
            raise ValueError("u must be a vector field")
        self.rho._check(self.u)
        _check_density(self.rho)

    @property
    def grid(self):
        return self.rho.grid

    @cached_property
    def a(self) -> Field:
        return Field(self.grid, 1.0 / self.rho.data - 1.0)

    @cached_property
    def v(self) -> Field:
        return compute_v(self)

    @cached_property
    def v1(self) -> Field:
        return to_effective(self)

    @classmethod
    def from_effective(cls, rho: Field, v1: Field, visc: ViscosityParams = ViscosityParams(),
                       law: PressureLaw = PressureLaw()) -> "FluidState":
        return cls(rho, from_effective(v1, rho, visc, law), visc, law)


def pressure(state: FluidState) -> Field:
    _check_density(state.rho)
    return Field(state.grid, state.law.P(state.rho.data))


def dpressure(state: FluidState) -> Field:
    _check_density(state.rho)
    return Field(state.grid, state.law.dP(state.rho.data))


def _v_from_rho(rho: Field, law: PressureLaw) -> Field:
    g = rho.grid
    _check_density(rho)
    dp = Field(g, law.P(rho.data) - law.P(law.rho_bar))
    phi_hat = g.inv_k2 * dp.hat[0]
    return Field.from_spectral(g, np.stack([1j * kj * phi_hat for kj in g.k]))


def compute_v(state: FluidState) -> Field:
    """``v = grad lap^{-1}`` of the mean-free part of ``P(rho) - P(rho_bar)``."""
    return _v_from_rho(state.rho, state.law)


def to_effective(state: FluidState) -> Field:
    return state.u - state.v / state.visc.nu


def from_effective(v1: Field, rho: Field, visc: ViscosityParams = ViscosityParams(),
                   law: PressureLaw = PressureLaw()) -> Field:
    return v1 + _v_from_rho(rho, law) / visc.nu


def _grad_inv_lap(g: Field) -> Field:
    grid = g.grid
    phi_hat = grid.inv_k2 * g.hat[0]
    return Field.from_spectral(grid, np.stack([1j * kj * phi_hat for kj in grid.k]))


def dt_v_source(state: FluidState, dealias: bool = True) -> Field:
    """``d v / dt = -grad lap^{-1}(P'(rho) div(rho u))`` along the mass equation."""
    if state.law.isothermal:
        return -state.law.K * longitudinal_projection(multiply(state.rho, state.u, dealias))
    flux_div = divergence(multiply(state.rho, state.u, dealias))
    return -_grad_inv_lap(multiply(dpressure(state), flux_div, dealias))


def momentum_terms(state: FluidState, form: str = "original", f: Field | None = None,
                   dv_dt: Field | None = None, include_pressure: bool = True,
                   dealias: bool = True) -> dict[str, Field]:
    """Named right-hand-side terms of the momentum equation.

    ``original``: du/dt = -u.grad u + (1+a) A u - grad g(a) + f, with
    ``grad g(a) = rho^{-1} grad P(rho)``.

    ``effective``: dv1/dt = f - u.grad u + (1+a) A v1 - dv/dt / nu.  The only
    pressure-dependent term is ``"pressure_source"``; ``dv_dt`` may be
    supplied by the caller, otherwise it follows from the mass equation.
    ``include_pressure=False`` drops that term (for term isolation).
    """
    g = state.grid
    inv_rho = Field(g, 1.0 / state.rho.data)
    terms = {"convection": -advect(state.u, state.u, dealias)}
    if form == "original":
        terms["viscous"] = multiply(inv_rho, lame_operator(state.u, state.visc), dealias)
        if include_pressure:
            terms["pressure"] = -multiply(inv_rho, gradient(pressure(state)), dealias)
    elif form == "effective":
        terms["viscous"] = multiply(inv_rho, lame_operator(state.v1, state.visc), dealias)
        if include_pressure:
            src = dt_v_source(state, dealias) if dv_dt is None else dv_dt
            terms["pressure_source"] = -src / state.visc.nu
    else:
        raise ValueError(f"unknown formulation {form!r}")
    terms["forcing"] = f if f is not None else Field.zeros(g, g.dim)
    return terms


def momentum_residual(state: FluidState, form: str = "original", f: Field | None = None,
                      dv_dt: Field | None = None, dealias: bool = True) -> Field:
    """Sum of :func:`momentum_terms` for the chosen formulation."""
    terms = momentum_terms(state, form, f, dv_dt, dealias=dealias)
    out = Field.zeros(state.grid, state.grid.dim)
    for t in terms.values():
        out = out + t
    return out


def du_dt(state: FluidState, form: str = "original", f: Field | None = None,
          dealias: bool = True) -> Field:
    """Velocity tendency; the effective form adds back ``dv/dt / nu``."""
    if form == "original":
        return momentum_residual(state, "original", f, dealias=dealias)
    src = dt_v_source(state, dealias)
    return momentum_residual(state, "effective", f, dv_dt=src, dealias=dealias) + src / state.visc.nu
