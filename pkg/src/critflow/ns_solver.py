"""Nonlinear compressible Navier-Stokes solver in the effective variables.

The unknowns are the density rho and the effective velocity
``v1 = u - v / nu``.  One step of the coupled system

    rho_t = -div(rho u)
    v1_t  = (1 + a) A v1 - u.grad u + grad lap^{-1}(P'(rho) div(rho u)) / nu + f

uses the IMEX-SSP3(4,3,3) pair: ``b_eff A v1`` (``b_eff`` the spatial mean of
``1/rho`` at the start of the step) is implicit, the rest explicit.  The mass
equation is in divergence form, so the mean density is conserved to
round-off.  With ``u = v1 + v / nu`` the density relaxes at the slow rate
``P'/nu`` and no acoustic CFL restriction arises.

Monitors evaluate the bootstrap hypotheses H1-H8 of the local existence
argument, the side conditions on (T, eta), the continuation criterion and
the energy inequality on the computed trajectory.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field, replace
from typing import Any

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .effective_velocity import FluidState, PressureLaw
from .errors import CflViolation, CritflowError, NonFinite, VacuumApproach, ValidationError
from .linear_solvers import (EXPLICIT_A, EXPLICIT_C, IMEX_B, IMPLICIT_A, ImexLame, LinearProblem,
                             _u_grad_w_hat, solve_lame_heat, step_count)
from .littlewood_paley import (DEFAULT_ALPHA, BesovParams, DyadicFilterBank, block_norms,
                               build_filter_bank, sum_space_from_levels, weighted_sum)
from .reports import write_csv
from .rng import SplitMix64, random_field
from .spectral_core import Field, TimeSeries, ViscosityParams, as_time_function, lame_hat

log = logging.getLogger(__name__)

# ------------------------------------------------------------------ config


def index_gates(N: int, p: float, p1: float, isothermal: bool = False) -> list[tuple[str, bool, str]]:
    """Index conditions as ``(label, holds, kind)``.

    ``kind`` is ``"existence"`` (hard), ``"uniqueness"`` or ``"warning"``.
    The isothermal law drops the upper bound on p and ``2N/p - 1 > 0``.
    """
    ip, ip1 = 1.0 / p, 1.0 / p1
    gates = [
        ("1 ≤ p₁ ≤ p", 1 <= p1 <= p, "existence"),
        ("1/p₁ ≤ 1/N + 1/p", ip1 <= 1.0 / N + ip + 1e-15, "existence"),
        ("1/p + 1/p₁ > 1/N", ip + ip1 > 1.0 / N, "existence"),
        ("2/N ≤ 1/p + 1/p₁", 2.0 / N <= ip + ip1 + 1e-15, "uniqueness"),
    ]
    if not isothermal:
        gates.append(("p ≤ 2N", p <= 2 * N, "warning"))
        gates.append(("2N/p − 1 > 0", 2 * N * ip - 1 > 0, "warning"))
    return gates


def validate_indices(N: int, p: float, p1: float, isothermal: bool = False) -> list[str]:
    """Raise ValidationError on violated existence gates; return the other violations."""
    gates = index_gates(N, p, p1, isothermal)
    hard = [label for label, ok, kind in gates if not ok and kind == "existence"]
    if hard:
        raise ValidationError(hard)
    soft = [label for label, ok, kind in gates if not ok]
    for label in soft:
        log.warning("index gate violated: %s", label)
    return soft


@dataclass(frozen=True, eq=False)
class SolverConfig:
    """Initial data, physical parameters, discretisation and monitor constants."""

    rho0: Field
    u0: Field
    visc: ViscosityParams = ViscosityParams()
    law: PressureLaw = PressureLaw()
    T: float = 0.5
    dt: float = 1e-3
    p: float = 2.0
    p1: float = 2.0
    n_smooth: int | None = None
    f: Any = None
    save_every: int = 10
    vacuum_floor: float = 0.1
    alpha: float = DEFAULT_ALPHA
    cfl: float = 0.5
    C: float = 1.0
    C_prime: float = 1.0
    C1: float = 1.0
    c: float = 0.01
    kappa: float = 0.1
    eta: float = 0.1
    a_bound: float | None = None
    seed: int = 0

    def __post_init__(self):
        if not self.rho0.is_scalar or self.u0.ncomp != self.u0.grid.dim:
            raise ValueError("rho0 must be scalar and u0 a vector field")
        self.rho0._check(self.u0)
        step_count(self.T, self.dt)
        if self.save_every < 1:
            raise ValueError("save_every must be >= 1")
        object.__setattr__(self, "warnings",
                           validate_indices(self.grid.dim, self.p, self.p1, self.law.isothermal))

    @property
    def grid(self):
        return self.rho0.grid

    @property
    def a0(self) -> Field:
        return Field(self.grid, 1.0 / self.rho0.data - 1.0)

    def with_(self, **kw) -> "SolverConfig":
        return replace(self, **kw)


def equilibrium_config(grid, **kw) -> SolverConfig:
    return SolverConfig(Field.constant(grid, 1.0), Field.zeros(grid, grid.dim), **kw)


def small_data(grid, a_norm: float = 0.01, u_norm: float = 0.01, seed: int = 0,
               p: float = 2.0, p1: float = 2.0, bank: DyadicFilterBank | None = None,
               kmax: float = 8.0) -> tuple[Field, Field]:
    """Seeded smooth (rho0, u0) with ``||a0||_{B^{N/p}_{p,1}}`` and
    ``||u0||_{B^{N/p1-1}_{p1,1}}`` equal to the requested sizes."""
    bank = bank or build_filter_bank(grid)
    N = grid.dim
    rng = SplitMix64(seed)
    a = random_field(grid, rng, kmax=kmax, mean_free=True)
    u = random_field(grid, rng, ncomp=N, kmax=kmax, mean_free=True)
    na = _besov(a, N / p, p, bank)
    nu_ = _besov(u, N / p1 - 1, p1, bank)
    a = a * (a_norm / na) if na > 0 else a
    u = u * (u_norm / nu_) if nu_ > 0 else u
    return Field(grid, 1.0 / (1.0 + a.data)), u


# ------------------------------------------------------------------ helpers

def _besov(f: Field, s: float, p: float, bank: DyadicFilterBank, r: float = 1.0) -> float:
    blocks = f.grid.ifft(bank.symbols[:, None] * f.hat[None])
    return weighted_sum(bank.levels, block_norms(blocks, p, f.grid), s, r)


def _levels(f: Field, p: float, bank: DyadicFilterBank) -> np.ndarray:
    return block_norms(f.grid.ifft(bank.symbols[:, None] * f.hat[None]), p, f.grid)


def _sum_space(levels, nA, nB, sA, pA, sB, pB) -> float:
    return sum_space_from_levels(levels, nA, nB, BesovParams(sA, pA, 1), BesovParams(sB, pB, 1))


def _jacobian(u: Field) -> Field:
    """Gradient matrix flattened to N*N components (wrapped as a loose array)."""
    g = u.grid
    return np.stack([1j * kj * u.hat[c] for c in range(u.ncomp) for kj in g.k])


def _jac_levels(u: Field, p: float, bank: DyadicFilterBank) -> np.ndarray:
    g = u.grid
    J = _jacobian(u)
    return block_norms(g.ifft(bank.symbols[:, None] * J[None]), p, g)


def smooth_data(a0: Field, u0: Field, f, n: int, bank: DyadicFilterBank):
    """``(S_n a0, S_n u0, S_n f)``; ``f`` may be None, a Field, a series or a callable."""
    sym = bank.low_symbol(n)
    sm = lambda h: Field.from_spectral(h.grid, h.hat * sym)  # noqa: E731
    fs = None
    if isinstance(f, Field):
        fs = sm(f)
    elif isinstance(f, TimeSeries):
        fs = f.map(sm)
    elif f is not None:
        fn = as_time_function(f)
        fs = lambda t: sm(fn(t))  # noqa: E731
    return sm(a0), sm(u0), fs


def choose_m(a0: Field, c: float, visc: ViscosityParams, bank: DyadicFilterBank,
             p: float = 2.0) -> int:
    """Smallest m in [-1, L_max + 1] with
    ``2 nu_bar sum_{l >= m} 2^{lN/p} ||Delta_l a0||_p <= c nu_``."""
    N = a0.grid.dim
    levels = bank.levels
    w = 2.0 ** (levels * N / p) * _levels(a0, p, bank)
    tails = np.concatenate([np.cumsum(w[::-1])[::-1], [0.0]])  # tails[i] = sum over levels >= i - 1
    bound = c * visc.nu_under
    for i, tail in enumerate(tails):
        if 2 * visc.nu_bar * tail <= bound:
            return i - 1
    return bank.L_max + 1


def linear_reference(config: SolverConfig, bank: DyadicFilterBank | None = None) -> TimeSeries:
    """``u_L`` solving ``u_t - A u = f`` from ``u0 - v(rho0)/nu``, at the run's snapshot times."""
    st = FluidState(config.rho0, config.u0, config.visc, config.law)
    prob = LinearProblem(st.v1, config.visc, config.T, config.dt, config.f)
    return solve_lame_heat(prob, save_every=config.save_every)


# --------------------------------------------------------------- stepping

class EffectiveStepper:
    """IMEX stepping of (rho, v1) in Fourier space."""

    def __init__(self, config: SolverConfig):
        self.cfg = config
        self.grid = g = config.grid
        self.visc = config.visc
        self.law = config.law
        self.imex = ImexLame(g, config.visc)
        self.mask = g.dealias_mask
        self.ffn = as_time_function(config.f)
        self.ik = [1j * kj for kj in g.k]

    def v_hat(self, rho_d: np.ndarray) -> np.ndarray:
        g = self.grid
        dp = g.fft(self.law.P(rho_d) - self.law.P(self.law.rho_bar))
        phi = g.inv_k2 * dp * self.mask
        return np.stack([ik * phi for ik in self.ik])

    def u_hat(self, rho_hat: np.ndarray, v1_hat: np.ndarray) -> np.ndarray:
        rho_d = self.grid.ifft(rho_hat[0])
        return v1_hat + self.v_hat(rho_d) / self.visc.nu

    def tendencies(self, rho_hat, v1_hat, t, b_eff):
        g, mask, nu = self.grid, self.mask, self.visc.nu
        rho_d = g.ifft(rho_hat[0] * mask)
        u_hat = v1_hat + self.v_hat(rho_d) / nu
        u_d = g.ifft(u_hat * mask)
        flux = g.fft(rho_d * u_d) * mask
        div_flux = sum(ik * flux[j] for j, ik in enumerate(self.ik))
        drho = -div_flux[None]

        out = -_u_grad_w_hat(u_d, u_hat, g)
        coef = g.ifft(g.fft(1.0 / rho_d - b_eff) * mask)
        Av1 = g.ifft(lame_hat(v1_hat, g, self.visc.mu, self.visc.lam) * mask)
        out += g.fft(coef * Av1) * mask
        src = g.fft(self.law.dP(rho_d) * g.ifft(div_flux)) * mask
        phi = g.inv_k2 * src
        out += np.stack([ik * phi for ik in self.ik]) / nu
        if self.ffn is not None:
            out += self.ffn(t).hat
        return drho, out

    def check(self, rho_hat, v1_hat, t, h):
        g, cfg = self.grid, self.cfg
        rho_d = g.ifft(rho_hat[0])
        if not (np.all(np.isfinite(rho_d)) and np.all(np.isfinite(v1_hat))):
            raise NonFinite(f"non-finite state at t = {t:.6g}")
        low = float(rho_d.min())
        if low < cfg.vacuum_floor * self.law.rho_bar:
            raise VacuumApproach(f"inf(rho) = {low:.6g} < floor {cfg.vacuum_floor * self.law.rho_bar:.6g} "
                                 f"at t = {t:.6g}")
        u_d = g.ifft(self.u_hat(rho_hat, v1_hat))
        c = h * float(np.sqrt((u_d**2).sum(axis=0)).max()) * g.kmax_axis
        if c > cfg.cfl:
            raise CflViolation(f"CFL number {c:.3g} > {cfg.cfl} at t = {t:.6g}")
        inv = 1.0 / rho_d
        spread = float(np.abs(inv - inv.mean()).max())
        dn = h * spread * max(self.visc.mu, self.visc.nu) * g.kmax_axis**2
        if dn > 2.5:
            raise CflViolation(f"explicit diffusion number {dn:.3g} > 2.5 at t = {t:.6g}")

    def step(self, rho_hat, v1_hat, t, h):
        self.check(rho_hat, v1_hat, t, h)
        b_eff = float(np.mean(1.0 / self.grid.ifft(rho_hat[0])))
        R, Nv, Lv = [], [], []
        for i in range(4):
            r = rho_hat.copy()
            rhs = v1_hat.copy()
            for j in range(i):
                if EXPLICIT_A[i, j]:
                    r = r + h * EXPLICIT_A[i, j] * R[j]
                    rhs = rhs + h * EXPLICIT_A[i, j] * Nv[j]
                if IMPLICIT_A[i, j]:
                    rhs = rhs + h * IMPLICIT_A[i, j] * Lv[j]
            Vi = self.imex.solve(rhs, h * IMPLICIT_A[i, i] * b_eff)
            Lv.append(self.imex.lame(Vi, b_eff))
            dr, dv = self.tendencies(r, Vi, t + EXPLICIT_C[i] * h, b_eff)
            R.append(dr)
            Nv.append(dv)
        rho_new, v1_new = rho_hat.copy(), v1_hat.copy()
        for i in range(4):
            if IMEX_B[i]:
                rho_new = rho_new + h * IMEX_B[i] * R[i]
                v1_new = v1_new + h * IMEX_B[i] * (Nv[i] + Lv[i])
        return rho_new, v1_new


def step(state: FluidState, dt: float, config: SolverConfig, t: float = 0.0) -> FluidState:
    """Advance a FluidState by one IMEX step."""
    cfg = config if config.visc == state.visc and config.law == state.law else \
        config.with_(visc=state.visc, law=state.law)
    st = EffectiveStepper(cfg)
    rho_hat, v1_hat = st.step(state.rho.hat.copy(), state.v1.hat.copy(), t, dt)
    g = state.grid
    rho = Field.from_spectral(g, rho_hat)
    u = Field.from_spectral(g, st.u_hat(rho_hat, v1_hat))
    return FluidState(rho, u, state.visc, state.law)


# -------------------------------------------------------------------- run

@dataclass(eq=False)
class NSRun:
    """Snapshot history of a nonlinear run with norms and monitors."""

    config: SolverConfig
    times: np.ndarray
    rho: TimeSeries
    u: TimeSeries
    v1: TimeSeries
    norms: dict = dc_field(default_factory=dict)
    monitor: "HypothesisMonitor | None" = None
    error: CritflowError | None = None
    steps: int = 0

    @property
    def completed(self) -> bool:
        return self.error is None

    @property
    def a(self) -> TimeSeries:
        return self.rho.map(lambda r: Field(r.grid, 1.0 / r.data - 1.0))

    @property
    def mass(self) -> np.ndarray:
        return np.array([float(r.data.mean()) * r.grid.volume for r in self.rho.fields])

    def norms_csv(self, path_or_buf) -> None:
        keys = ["a", "u", "v1", "mass"]
        rows = [[t] + [self.norms[k][i] for k in keys] for i, t in enumerate(self.times)]
        write_csv(path_or_buf, ["t"] + keys, rows)


def _snapshot_norms(rho: Field, u: Field, v1: Field, cfg: SolverConfig, bank) -> tuple:
    N, p, p1 = cfg.grid.dim, cfg.p, cfg.p1
    a = Field(rho.grid, 1.0 / rho.data - 1.0)
    na = _besov(a, N / p, p, bank)
    lv = bank.levels
    nu_ = _sum_space(lv, _levels(u, p1, bank), _levels(u, p, bank), N / p1 - 1, p1, N / p + 1, p)
    nv = _besov(v1, N / p1 - 1, p1, bank)
    return na, nu_, nv


def run(config: SolverConfig, bank: DyadicFilterBank | None = None, monitor: bool = True,
        raise_errors: bool = True) -> NSRun:
    """Integrate to ``config.T``; snapshots every ``save_every`` steps and at the end.

    With ``raise_errors=False`` a solver error stops the run and is stored in
    ``NSRun.error`` (the history up to the last good step is kept).
    """
    g = config.grid
    bank = bank or build_filter_bank(g, config.alpha)
    if config.n_smooth is not None:
        a0, u0, f = smooth_data(config.a0, config.u0, config.f, config.n_smooth, bank)
        config = config.with_(rho0=Field(g, 1.0 / (1.0 + a0.data)), u0=u0, f=f, n_smooth=None)
    stepper = EffectiveStepper(config)
    n, h = step_count(config.T, config.dt)
    st0 = FluidState(config.rho0, config.u0, config.visc, config.law)
    rho_hat, v1_hat = config.rho0.hat.copy(), st0.v1.hat.copy()
    times, rhos, us, v1s = [0.0], [config.rho0], [config.u0], [st0.v1]
    err = None
    done = 0
    for i in range(n):
        try:
            rho_hat, v1_hat = stepper.step(rho_hat, v1_hat, i * h, h)
            if i == n - 1:
                stepper.check(rho_hat, v1_hat, (i + 1) * h, 0.0)
        except CritflowError as exc:
            if raise_errors:
                raise
            err = exc
            log.warning("run stopped: %s", exc)
            break
        done = i + 1
        if (i + 1) % config.save_every == 0 or i == n - 1:
            times.append((i + 1) * h)
            rhos.append(Field.from_spectral(g, rho_hat))
            v1s.append(Field.from_spectral(g, v1_hat))
            us.append(Field.from_spectral(g, stepper.u_hat(rho_hat, v1_hat)))
    t = np.array(times)
    out = NSRun(config, t, TimeSeries(t, rhos), TimeSeries(t, us), TimeSeries(t, v1s), error=err, steps=done)
    vals = np.array([_snapshot_norms(r, u, v, config, bank) for r, u, v in zip(rhos, us, v1s)])
    out.norms = {"a": vals[:, 0], "u": vals[:, 1], "v1": vals[:, 2], "mass": out.mass}
    if monitor:
        out.monitor = monitor_hypotheses(out, config, bank)
    return out


# ---------------------------------------------------------------- monitor

HYPOTHESES = ("H1", "H2", "H3", "H4", "H5", "H6", "H7", "H8")
SIDE_CONDITIONS = ("exp-smallness", "linear-smallness", "effective-bound", "tail-smallness", "low-drift")


@dataclass(eq=False)
class HypothesisMonitor:
    """Live values and thresholds of H1-H8 along a run.

    ``values[i, j]`` is hypothesis j measured on [0, times[i]]; it holds when
    ``values <= thresholds``.  ``side`` maps each side condition on (T, eta)
    to ``(lhs, rhs, holds)``; these are reported, not gated.
    """

    times: np.ndarray
    m: int
    c: float
    eta: float
    b_under: float
    b_bar: float
    A0: float
    U0: float
    U0_tilde: float
    values: np.ndarray
    thresholds: np.ndarray
    accumulators: dict
    inf_b: np.ndarray
    mass: np.ndarray
    density_floor: np.ndarray
    side: dict
    extra: dict = dc_field(default_factory=dict)

    @property
    def flags(self) -> np.ndarray:
        return self.values <= self.thresholds[None, :] * (1 + 1e-12)

    @property
    def all_green(self) -> bool:
        return bool(self.flags.all())

    def green_at(self, i: int) -> dict[str, bool]:
        return {h: bool(f) for h, f in zip(HYPOTHESES, self.flags[i])}

    def failing(self) -> list[str]:
        return [h for h, ok in zip(HYPOTHESES, self.flags.all(axis=0)) if not ok]

    @property
    def persistent(self) -> bool:
        """True when every hypothesis green at t = 0 stays green for all t."""
        start = self.flags[0]
        return bool(np.all(self.flags[:, start]))

    def to_csv(self, path_or_buf) -> None:
        header = ["t"]
        for h in HYPOTHESES:
            header += [f"{h}_value", f"{h}_threshold"]
        header += ["V", "W", "Z_m", "U", "inf_1_plus_a", "mass"]
        rows = []
        for i, t in enumerate(self.times):
            row = [t]
            for j in range(len(HYPOTHESES)):
                row += [self.values[i, j], self.thresholds[j]]
            row += [self.accumulators[k][i] for k in ("V", "W", "Z_m", "U")]
            row += [self.inf_b[i], self.mass[i]]
            rows.append(row)
        write_csv(path_or_buf, header, rows)


def _series_levels(series: TimeSeries, p: float, bank) -> np.ndarray:
    return np.array([_levels(f, p, bank) for f in series.fields])


def _running_max(hist: np.ndarray) -> np.ndarray:
    return np.maximum.accumulate(hist, axis=0)


def _running_int(hist: np.ndarray, t: np.ndarray) -> np.ndarray:
    return cumulative_trapezoid(hist, t, axis=0, initial=0.0)


def monitor_hypotheses(history: NSRun, config: SolverConfig | None = None,
                       bank: DyadicFilterBank | None = None) -> HypothesisMonitor:
    """Evaluate H1-H8, the side conditions and the accumulators on a run."""
    cfg = config or history.config
    g = cfg.grid
    bank = bank or build_filter_bank(g, cfg.alpha)
    N, p, p1 = g.dim, cfg.p, cfg.p1
    C, Cp, C1, c, kappa, eta = cfg.C, cfg.C_prime, cfg.C1, cfg.c, cfg.kappa, cfg.eta
    t = history.times
    T = float(t[-1])
    lv = bank.levels

    a_ser = history.a
    a0 = a_ser.fields[0]
    b_under = 1.0 + float(a0.data.min())
    b_bar = 1.0 + float(a0.data.max())
    visc = cfg.visc.with_b_under(b_under)
    nu_, nu_bar, nu = visc.nu_under, visc.nu_bar, visc.nu
    m = choose_m(a0, c, visc, bank, p)

    # data functionals
    a0_crit = _besov(a0, N / p, p, bank)
    A0 = 1.0 + 2.0 * a0_crit
    f_fn = as_time_function(cfg.f)
    if f_fn is not None:
        f_ser = TimeSeries(t, [f_fn(s) for s in t])
        f_hist = _series_levels(f_ser, p1, bank)
        f_l1 = np.trapezoid(f_hist, t, axis=0) if len(t) > 1 else np.zeros(len(lv))
        f_b = np.array([weighted_sum(lv, row, N / p - 1, 1) for row in _series_levels(f_ser, p, bank)])
        f_norm = float(np.trapezoid(f_b, t)) if len(t) > 1 else 0.0
    else:
        f_l1 = np.zeros(len(lv))
        f_norm = 0.0
    U0 = _besov(history.u.fields[0], N / p - 1, p, bank) + _besov(a0, N / p + 1, p, bank) + f_norm
    U0t = 2 * C * U0 + 4 * C * nu_bar * A0

    # a-based hypotheses
    a_hist = _series_levels(a_ser, p, bank)
    a_inf = np.array([weighted_sum(lv, row, N / p, 1) for row in _running_max(a_hist)])
    sm = bank.low_symbol(m)
    tail_hist = np.array([_levels(Field.from_spectral(g, f.hat * (1 - sm)), p, bank) for f in a_ser.fields])
    H1 = np.array([weighted_sum(lv, row, N / p, 1) for row in _running_max(tail_hist)])
    H2 = C * nu_bar**2 * t * a_inf**2
    one_plus = np.array([(float(f.data.min()) + 1, float(f.data.max()) + 1) for f in a_ser.fields])
    inf_b = np.minimum.accumulate(one_plus[:, 0])
    sup_b = np.maximum.accumulate(one_plus[:, 1])
    H3 = np.maximum(0.5 * b_under / inf_b, sup_b / (2 * b_bar))
    H4 = a_inf

    # linear reference and fluctuation fields
    if T > 0:
        uL = linear_reference(cfg.with_(T=T) if abs(T - cfg.T) > 1e-12 else cfg)
    else:  # run stopped before its first step
        uL = TimeSeries(t, [FluidState(cfg.rho0, cfg.u0, cfg.visc, cfg.law).v1])
    if len(uL) != len(t) or not np.allclose(uL.times, t):
        uL = TimeSeries(t, [uL.at(s) for s in t])
    states = [FluidState(r, u, cfg.visc, cfg.law) for r, u in zip(history.rho.fields, history.u.fields)]
    vt = TimeSeries(t, [s.v for s in states])
    v1t = TimeSeries(t, [u - l - s.v / nu for u, l, s in zip(history.u.fields, uL.fields, states)])

    uL_hist = _series_levels(uL, p1, bank)
    H5 = np.array([_sum_space(lv, row, row, N / p1 + 1, p1, N / p1 + 3, p1)
                   for row in _running_int(uL_hist, t)])
    v1_hist1 = _series_levels(v1t, p1, bank)
    v1_histp = _series_levels(v1t, p, bank) if p != p1 else v1_hist1
    H6 = np.array([_sum_space(lv, mx, mxp, N / p1 - 1, p1, N / p1 + 1, p1)
                   + nu_ * _sum_space(lv, it, itp, N / p1 + 1, p1, N / p1 + 2, p1)
                   for mx, mxp, it, itp in zip(_running_max(v1_hist1), _running_max(v1_histp),
                                               _running_int(v1_hist1, t), _running_int(v1_histp, t))])
    v_hist1 = _series_levels(vt, p1, bank)
    H7 = np.array([weighted_sum(lv, row, N / p1 + 1, 1) for row in _running_max(v_hist1)])
    v_histp = _series_levels(vt, p, bank) if p != p1 else v_hist1
    H7_p = np.array([weighted_sum(lv, row, N / p + 1, 1) for row in _running_max(v_histp)])
    gu_hist = np.array([_jac_levels(u, p1, bank) for u in history.u.fields])
    gu_l1 = np.array([weighted_sum(lv, row, N / p1, 1) for row in _running_int(gu_hist, t)])
    gu_inf = np.array([weighted_sum(lv, row, N / p1, 1) for row in _running_max(gu_hist)])
    H8 = np.minimum(gu_l1, gu_inf)

    values = np.column_stack([H1, H2, H3, H4, H5, H6, H7, H8])
    thresholds = np.array([c * nu_ / nu_bar, 4.0**-m * nu_, 1.0, A0, eta, U0t * eta, Cp * A0,
                           (U0t / nu_ + 1) * eta])

    # accumulators
    gv1 = np.array([_jac_levels(f, p1, bank) for f in v1t.fields])
    gv1p = np.array([_jac_levels(f, p, bank) for f in v1t.fields]) if p != p1 else gv1
    dV = [_sum_space(lv, x, y, N / p1, p1, N / p + 1, p) for x, y in zip(gv1, gv1p)]
    dW = [weighted_sum(lv, row, N / p1, 1) / nu_ for row in np.array([_jac_levels(f, p1, bank)
                                                                      for f in vt.fields])]
    a_crit_t = np.array([weighted_sum(lv, row, N / p, 1) for row in a_hist])
    dU = [float(np.sqrt((g.ifft(_jacobian(u))**2).sum(axis=0)).max()) for u in history.u.fields]
    uL_grad = np.array([_jac_levels(f, p1, bank) for f in uL.fields])
    dUL = [_sum_space(lv, row, row, N / p1 + 1, p1, N / p1 + 3, p1) for row in uL_grad]
    cum = lambda y: cumulative_trapezoid(np.asarray(y, float), t, initial=0.0)  # noqa: E731
    acc = {"V": cum(dV), "W": cum(dW), "Z_m": 4.0**m * nu_bar**2 / nu_ * cum(a_crit_t**2),
           "U": cum(dU), "U_L": cum(dUL)}

    # inf(1 + S_m a) >= b_under / 4 whenever H1 and H3 hold
    density_floor = np.array([1.0 + float(g.ifft(f.hat[0] * sm).min()) for f in a_ser.fields])

    # side conditions on (T, eta), evaluated at the final time
    u0_lv = _levels(history.u.fields[0], p1, bank)
    a0_lv = _levels(a0, p, bank)
    sat = -np.expm1(-kappa * nu_ * 4.0**lv * T)
    lin = float(np.sum(2.0 ** (lv * (N / p1 - 1)) * sat * (u0_lv + f_l1))
                + np.sum(2.0 ** (lv * (N / p + 1)) * sat * a0_lv))
    growth = C * (1 + U0t / nu_) * eta
    side = {
        "exp-smallness": (growth + Cp * A0 * T / nu_, float(np.log(2.0))),
        "linear-smallness": (lin, kappa * eta * nu_),
        "effective-bound": (2 * C * (nu_bar * A0 + U0) * eta + C1 * T * A0 * (1 + A0) + np.sqrt(T) * A0 * U0,
                            C * nu_bar * eta),
        "tail-smallness": (C / np.log(2.0) * (1 + a0_crit) * (1 + U0t / nu_) * eta, c * nu_ / (2 * nu_bar)),
        "low-drift": (C * 2.0**m * np.sqrt(T) * a0_crit * np.sqrt(eta * (U0 + U0t * eta) * (1 + U0t / nu_)),
                      b_under / 8),
    }
    side = {k: (float(l), float(r), bool(l < r)) for k, (l, r) in side.items()}
    return HypothesisMonitor(t, m, c, eta, b_under, b_bar, A0, U0, U0t, values, thresholds, acc,
                             one_plus[:, 0], history.mass, density_floor, side,
                             extra={"H7_p": H7_p, "u_L": uL, "v1_tilde": v1t, "nu_under": nu_,
                                    "nu_bar": nu_bar})


# ----------------------------------------------------------- continuation

@dataclass
class ContinuationVerdict:
    """The two continuation criteria evaluated on a run."""

    a_norm: float
    a_bound: float
    inf_one_plus_a: float
    sup_one_plus_a: float
    criteria: dict
    continuable: bool
    cited: list
    degenerate: bool = False


def continuation_monitor(run_: NSRun, a_bound: float | None = None, lower: float = 0.0) -> ContinuationVerdict:
    """Criterion 1: ``||a||_{L~inf_T(B^{N/p}_{p,1})} < a_bound`` (default: the config value,
    else A0 = 1 + 2||a0||).  Criterion 2: ``1 + a`` stays above ``lower`` and the density
    stays above the vacuum floor (no vacuum or non-finite abort)."""
    cfg = run_.config
    g = cfg.grid
    bank = build_filter_bank(g, cfg.alpha)
    N, p = g.dim, cfg.p
    a_ser = run_.a
    a0 = a_ser.fields[0]
    if a_bound is None:
        a_bound = cfg.a_bound if cfg.a_bound is not None else 1.0 + 2.0 * _besov(a0, N / p, p, bank)
    hist = _series_levels(a_ser, p, bank)
    a_norm = weighted_sum(bank.levels, hist.max(axis=0), N / p, 1)
    lo = min(float(f.data.min()) for f in a_ser.fields) + 1.0
    hi = max(float(f.data.max()) for f in a_ser.fields) + 1.0
    aborted = isinstance(run_.error, (VacuumApproach, NonFinite))
    crit = {
        "a-bounded": bool(a_norm < a_bound),
        "density-bounded": bool(lo > lower and hi < 1.0 / (cfg.vacuum_floor * cfg.law.rho_bar) and not aborted),
    }
    cited = [k for k, ok in crit.items() if not ok]
    return ContinuationVerdict(float(a_norm), float(a_bound), lo, hi, crit, not cited, cited,
                               degenerate=a_bound <= 0)


# ----------------------------------------------------------------- energy

@dataclass
class EnergyReport:
    """Energy diagnostics per snapshot.

    ``kinetic``/``potential``/``total`` form the physical budget (p1 = 2);
    ``lhs``/``rhs`` are the two sides of the L^{p1} inequality with the
    dissipation and pressure-work integrals accumulated in time.
    """

    times: np.ndarray
    p1: float
    kinetic: np.ndarray
    potential: np.ndarray
    total: np.ndarray
    dissipation: np.ndarray
    lhs: np.ndarray
    rhs: float
    lambda_condition: bool
    terms: dict

    @property
    def max_increase(self) -> float:
        """Largest step-to-step increase of the total energy relative to its initial value."""
        if len(self.total) < 2 or self.total[0] <= 0:
            return 0.0
        return float(np.max(np.diff(self.total)) / self.total[0])

    def nonincreasing(self, rtol: float = 1e-6) -> bool:
        return self.max_increase <= rtol

    @property
    def budget_residual(self) -> np.ndarray:
        """``total(t) + int_0^t dissipation - total(0)``, relative to total(0)."""
        if self.total[0] <= 0:
            return np.zeros_like(self.total)
        return (self.total + self.dissipation - self.total[0]) / self.total[0]

    def holds(self, rtol: float = 1e-6) -> bool:
        return bool(np.all(self.lhs <= self.rhs * (1 + rtol) + 1e-300))


def energy_diagnostic(run_: NSRun, p1: float = 2.0) -> EnergyReport:
    cfg = run_.config
    g = cfg.grid
    N = g.dim
    mu, lam = cfg.visc.mu, cfg.visc.lam
    law = cfg.law
    vol = g.volume
    integ = lambda x: float(np.mean(x)) * vol  # noqa: E731
    Pb = float(law.P(law.rho_bar))
    kin, pot, diss, pk, dterms, work = [], [], [], [], [], []
    for rho, u in zip(run_.rho.fields, run_.u.fields):
        r = rho.data[0]
        ud = u.data
        J = g.ifft(_jacobian(u)).reshape(N, N, *g.shape)  # J[c, j] = d_j u_c
        div = sum(J[j, j] for j in range(N))
        grad2 = (J**2).sum(axis=(0, 1))
        mag2 = (ud**2).sum(axis=0)
        mag = np.sqrt(mag2)
        kin.append(integ(0.5 * r * mag2))
        pot.append(integ(law.potential(r)))
        diss.append(integ(mu * grad2 + (lam + mu) * div**2))
        pk.append(integ(r * mag**p1) / p1)
        with np.errstate(divide="ignore", invalid="ignore"):
            w2 = np.where(mag > 0, mag ** (p1 - 2), 0.0) if p1 != 2 else np.ones_like(mag)
            w4 = np.where(mag > 0, mag ** (p1 - 4), 0.0)
        grad_mag2 = np.stack([2 * (ud * J[:, j]).sum(axis=0) for j in range(N)])  # d_j |u|^2
        udotgrad = (ud * grad_mag2).sum(axis=0)
        uuJ = sum(ud[i] * ud[k] * J[k, i] for i in range(N) for k in range(N))
        d = mu * integ(w2 * grad2)
        if p1 != 2:
            d += (p1 - 2) / 4 * mu * integ(w4 * (grad_mag2**2).sum(axis=0))
            d += lam * (p1 - 2) / 2 * integ(div * udotgrad * w4)
        d += lam * integ(div**2 * w2)
        pw = integ((law.P(r) - Pb) * (div * w2 + ((p1 - 2) * uuJ * w4 if p1 != 2 else 0.0)))
        dterms.append(d)
        work.append(pw)
    t = run_.times
    cum = lambda y: cumulative_trapezoid(np.asarray(y), t, initial=0.0)  # noqa: E731
    kin, pot = np.array(kin), np.array(pot)
    r0, u0 = run_.rho.fields[0].data[0], run_.u.fields[0].data
    rhs = integ(r0 * np.sqrt((u0**2).sum(axis=0)) ** p1)
    lhs = np.array(pk) + cum(dterms) - cum(work)
    lam_ok = lam <= 4 * mu / (N**2 * (p1 - 1)) if p1 > 1 else True
    if not lam_ok:
        log.info("lambda <= 4 mu / (N^2 (p1 - 1)) fails for p1 = %g", p1)
    return EnergyReport(t, p1, kin, pot, kin + pot, cum(diss), lhs, rhs, bool(lam_ok),
                        {"p1_kinetic": np.array(pk), "dissipation_p1": cum(dterms), "pressure_work": cum(work)})


# ------------------------------------------------------------------ probe

@dataclass
class ProbeReport:
    """Difference of two runs whose data differ by ``delta``."""

    delta: float
    times: np.ndarray
    da: np.ndarray
    dv1: np.ndarray
    divergence: np.ndarray
    growth: np.ndarray
    C_fit: float

    def to_csv(self, path_or_buf) -> None:
        rows = [(t, a, v, d, gr) for t, a, v, d, gr in zip(self.times, self.da, self.dv1,
                                                             self.divergence, self.growth)]
        write_csv(path_or_buf, ["t", "da", "dv1", "divergence", "growth"], rows)


def perturbation_direction(config: SolverConfig, bank: DyadicFilterBank) -> tuple[Field, Field]:
    """Seeded unit directions for a and u in ``B^{N/p-1}_{p,1}``."""
    g = config.grid
    N, p = g.dim, config.p
    rng = SplitMix64(config.seed ^ 0x5EED)
    da = random_field(g, rng, kmax=8.0, mean_free=True)
    du = random_field(g, rng, ncomp=N, kmax=8.0, mean_free=True)
    return da / _besov(da, N / p - 1, p, bank), du / _besov(du, N / p - 1, p, bank)


def twin_run_probe(config: SolverConfig, delta: float, bank: DyadicFilterBank | None = None) -> ProbeReport:
    g = config.grid
    bank = bank or build_filter_bank(g, config.alpha)
    N, p, p1 = g.dim, config.p, config.p1
    base = run(config, bank, monitor=False)
    if delta == 0:
        other = run(config, bank, monitor=False)
    else:
        da, du = perturbation_direction(config, bank)
        a0 = config.a0 + da * delta
        other = run(config.with_(rho0=Field(g, 1.0 / (1.0 + a0.data)), u0=config.u0 + du * delta),
                    bank, monitor=False)
    t = base.times
    dA = np.array([_besov(x - y, N / p - 1, p, bank) for x, y in zip(base.a.fields, other.a.fields)])
    dV = np.array([_besov(x - y, N / p1 - 1, p1, bank) for x, y in zip(base.v1.fields, other.v1.fields)])
    div = dA + dV
    if div[0] > 0:
        growth = div / div[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            rates = np.where(t > 0, np.log(np.maximum(growth, 1e-300)) / t, 0.0)
        C_fit = float(max(0.0, np.max(rates[1:]))) if len(t) > 1 else 0.0
    else:
        growth = np.zeros_like(div)
        C_fit = 0.0
    return ProbeReport(float(delta), t, dA, dV, div, growth, C_fit)


def self_convergence(config: SolverConfig, dts=(0.01, 0.005, 0.0025),
                     bank: DyadicFilterBank | None = None) -> dict:
    """Observed order from three step sizes (halving), on the final a and u."""
    bank = bank or build_filter_bank(config.grid, config.alpha)
    finals = []
    for dt in dts:
        r = run(config.with_(dt=dt, save_every=10**9), bank, monitor=False)
        a, u = r.a.final, r.u.final
        finals.append(np.concatenate([a.data.ravel(), u.data.ravel()]))
    e1 = float(np.linalg.norm(finals[0] - finals[1]))
    e2 = float(np.linalg.norm(finals[1] - finals[2]))
    ratio = dts[0] / dts[1]
    order = float(np.log(e1 / e2) / np.log(ratio)) if e2 > 0 and e1 > 0 else np.inf
    return {"dts": tuple(dts), "differences": (e1, e2), "order": order}
