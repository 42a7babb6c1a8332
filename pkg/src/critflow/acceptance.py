"""Acceptance criteria as runnable checks, shared by the test suite and the CLI.

Each ``criterion_*`` function returns a :class:`CriterionResult` with the
measured quantities, the gates applied to them and the pass/fail verdict.
All randomness comes from a seeded SplitMix64 stream.
"""

from __future__ import annotations

import functools
import time
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from .effective_velocity import FluidState, PressureLaw, du_dt, pressure
from .linear_solvers import (LinearProblem, solve_lame_heat, solve_mass_equation, solve_transport,
                             verify_lame_heat_estimate, verify_mass_estimates)
from .littlewood_paley import (BesovParams, all_blocks, build_filter_bank, verify_bernstein,
                               verify_norm_equivalence)
from .ns_solver import (SolverConfig, continuation_monitor, energy_diagnostic, equilibrium_config, run,
                        self_convergence, small_data, twin_run_probe)
from .paradiff import (paraproduct, remainder, transport_commutators, lame_commutators,
                       verify_lame_commutator, verify_self_commutator, verify_transport_commutator)
from .rng import SplitMix64, random_field
from .spectral_core import (Field, Grid, TimeSeries, ViscosityParams, gradient, lame_hat, lame_operator,
                            laplacian, multiply)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool = True
    metrics: dict = dc_field(default_factory=dict)
    gates: list = dc_field(default_factory=list)  # (description, ok)
    seconds: float = 0.0
    constants: list = dc_field(default_factory=list)  # (inequality id, C, grid sizes)

    def gate(self, description: str, ok) -> bool:
        ok = bool(ok)
        self.gates.append((description, ok))
        self.passed = self.passed and ok
        return ok

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        failed = [d for d, ok in self.gates if not ok]
        tail = f" failed: {'; '.join(failed)}" if failed else ""
        shown = ", ".join(f"{k}={_short(v)}" for k, v in self.metrics.items())
        return f"[{status}] {self.number:2d} {self.name} ({self.seconds:.1f}s): {shown}{tail}"


def _short(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.3g}"
    if isinstance(v, (tuple, list)):
        return "(" + ", ".join(_short(x) for x in v) + ")"
    return str(v)


def _timed(fn: Callable[..., CriterionResult]) -> Callable[..., CriterionResult]:
    @functools.wraps(fn)
    def wrapper(*args, **kw):
        t0 = time.perf_counter()
        res = fn(*args, **kw)
        res.seconds = time.perf_counter() - t0
        return res
    return wrapper


def _fields(grid: Grid, rng: SplitMix64, count: int, ncomp: int = 1, **kw) -> list[Field]:
    return [random_field(grid, rng, ncomp=ncomp, **kw) for _ in range(count)]


# -------------------------------------------------------------- criterion 1

@_timed
def criterion_reconstruction(seed: int = 1, samples: int = 100, n: int = 64) -> CriterionResult:
    """Littlewood-Paley reconstruction and quasi-orthogonality on random fields."""
    res = CriterionResult(1, "reconstruction")
    g = Grid(2, n)
    bank = build_filter_bank(g)
    rng = SplitMix64(seed)
    worst = 0.0
    for u in _fields(g, rng, samples, slope=1.0):
        rec = all_blocks(u, bank).sum(axis=0)
        worst = max(worst, float(np.abs(rec - u.data).max() / np.abs(u.data).max()))
    S = bank.symbols
    ortho = 0.0
    probe = _fields(g, rng, 5, slope=0.0)
    for i in range(len(S)):
        for j in range(i + 2, len(S)):
            ortho = max(ortho, float(np.abs(S[i] * S[j]).max()))
            for u in probe:
                ortho = max(ortho, float(np.abs(g.ifft(S[i] * S[j] * u.hat)).max()))
    res.metrics.update(recon_err=worst, ortho_err=ortho, samples=samples)
    res.gate("reconstruction error < 1e-10", worst < 1e-10)
    res.gate("quasi-orthogonality < 1e-12", ortho < 1e-12)
    return res


# -------------------------------------------------------------- criterion 2

@_timed
def criterion_bernstein(seed: int = 2, samples: int = 20, sizes=(64, 256)) -> CriterionResult:
    """Per-level Bernstein ratios and the norm-equivalence constant across grids."""
    res = CriterionResult(2, "bernstein-equivalence")
    consts = []
    lo_hi = [np.inf, -np.inf]
    ok_all = True
    for n in sizes:
        g = Grid(2, n)
        bank = build_filter_bank(g)
        rng = SplitMix64(seed)
        fields = _fields(g, rng, samples, slope=1.5, mean_free=True)
        for u in fields:
            rep = verify_bernstein(u, bank)
            r = rep.ratios[np.isfinite(rep.ratios)]
            lo_hi = [min(lo_hi[0], r.min()), max(lo_hi[1], r.max())]
            ok_all = ok_all and rep.within(0.01)
        C = verify_norm_equivalence(fields, BesovParams(1.0, 2.0, 1.0), bank).params["C"]
        consts.append(C)
        res.constants.append(("norm-equivalence", C, n))
    alpha = build_filter_bank(Grid(2, sizes[0])).alpha
    res.metrics.update(ratio_min=lo_hi[0], ratio_max=lo_hi[1], band=(1 / alpha, 2 * alpha),
                       C=tuple(consts))
    res.gate("Bernstein ratios within [1/alpha, 2 alpha] up to 1%", ok_all)
    change = max(consts) / min(consts)
    res.metrics["C_change"] = change
    res.gate("norm-equivalence constant changes < 2x across grids", change < 2.0)
    return res


# -------------------------------------------------------------- criterion 3

@_timed
def criterion_bony(seed: int = 3, samples: int = 50, n: int = 64) -> CriterionResult:
    """Bony identity T_u v + T_v u + R(u, v) = uv for the dealiased product."""
    res = CriterionResult(3, "bony-identity")
    g = Grid(2, n)
    bank = build_filter_bank(g)
    rng = SplitMix64(seed)
    worst = 0.0
    for _ in range(samples):
        u, v = random_field(g, rng, slope=1.0), random_field(g, rng, slope=1.0)
        err = paraproduct(u, v, bank) + paraproduct(v, u, bank) + remainder(u, v, bank) - multiply(u, v)
        worst = max(worst, float(np.abs(err.data).max()))
    res.metrics.update(bony_err=worst, samples=samples)
    res.gate("Bony identity error < 1e-10", worst < 1e-10)
    return res


# -------------------------------------------------------------- criterion 4

def _commutator_constants(n: int, seed: int, samples: int) -> dict[str, float]:
    g = Grid(2, n)
    bank = build_filter_bank(g)
    rng = SplitMix64(seed)
    pairs_t = [(random_field(g, rng, ncomp=2), random_field(g, rng)) for _ in range(samples)]
    vs = [random_field(g, rng, ncomp=2) for _ in range(samples)]
    pairs_l = [(random_field(g, rng), random_field(g, rng, ncomp=2)) for _ in range(samples)]
    return {
        "transport-commutator": verify_transport_commutator(pairs_t, bank).constant,
        "self-transport-commutator": verify_self_commutator(vs, bank).constant,
        "coefficient-commutator": verify_lame_commutator(pairs_l, bank).constant,
    }


@_timed
def criterion_commutators(seed: int = 4, samples: int = 50, sizes=(64, 256)) -> CriterionResult:
    """Constant-coefficient commutators vanish; measured constants are grid-uniform."""
    res = CriterionResult(4, "commutators")
    g = Grid(2, sizes[0])
    bank = build_filter_bank(g)
    rng = SplitMix64(seed + 1000)
    a = random_field(g, rng)
    w = random_field(g, rng, ncomp=2)
    v_const = Field.constant(g, [0.7, -1.3], ncomp=2)
    a_const = Field.constant(g, 2.5)
    vanish = max(
        float(np.abs(transport_commutators(v_const, a, bank)).max()),
        float(np.abs(transport_commutators(v_const, v_const, bank)).max()),
        max(float(np.abs(lame_commutators(a_const, w, k, bank)).max()) for k in range(2)),
    )
    res.metrics["const_coeff_max"] = vanish
    res.gate("constant-coefficient commutators < 1e-12", vanish < 1e-12)
    per = {n: _commutator_constants(n, seed, samples) for n in sizes}
    for name in per[sizes[0]]:
        cs = [per[n][name] for n in sizes]
        ratio = max(cs) / min(cs)
        res.metrics[f"{name}"] = tuple(cs)
        for n, c in zip(sizes, cs):
            res.constants.append((name, c, n))
        res.gate(f"{name} constant stable within 2x across grids", ratio < 2.0)
    return res


# -------------------------------------------------------------- criterion 5

def _rk4_lame(u0: Field, visc: ViscosityParams, f: Callable[[float], Field] | None,
              T: float, h: float) -> Field:
    """Classical RK4 on the spectral Lame heat system (explicit oracle)."""
    g = u0.grid
    n = int(round(T / h))

    def rhs(y, t):
        out = lame_hat(y, g, visc.mu, visc.lam)
        return out + f(t).hat if f is not None else out

    y = u0.hat.copy()
    for i in range(n):
        t = i * h
        k1 = rhs(y, t)
        k2 = rhs(y + 0.5 * h * k1, t + 0.5 * h)
        k3 = rhs(y + 0.5 * h * k2, t + 0.5 * h)
        k4 = rhs(y + h * k3, t + h)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return Field.from_spectral(g, y)


@_timed
def criterion_lame_heat(seed: int = 5) -> CriterionResult:
    """Exact modal decay, the saturating level estimate and an RK4 oracle."""
    res = CriterionResult(5, "lame-heat")
    visc = ViscosityParams(mu=1.0, lam=0.5)
    g = Grid(2, 32)
    T, k = 0.5, 3.0
    x, y = g.coords
    modes = {
        "transverse": (Field(g, np.stack([np.zeros(g.shape), np.sin(k * x)])), visc.mu),
        "longitudinal": (Field(g, np.stack([np.sin(k * x), np.zeros(g.shape)])), visc.nu),
    }
    decay_err = 0.0
    for u0, rate in modes.values():
        sol = solve_lame_heat(LinearProblem(u0, visc, T, 0.05))
        for t, u in zip(sol.times, sol.fields):
            decay_err = max(decay_err, float(np.abs(u.data - np.exp(-rate * k * k * t) * u0.data).max()))
    res.metrics["decay_err"] = decay_err
    res.gate("single-mode decay error < 1e-10", decay_err < 1e-10)

    rng = SplitMix64(seed)
    g64 = Grid(2, 64)
    bank = build_filter_bank(g64)
    u0 = random_field(g64, rng, ncomp=2, slope=2.0)
    F = random_field(g64, rng, ncomp=2, slope=3.0)
    prob = LinearProblem(u0, visc, 0.2, 0.002, lambda t: F * np.cos(3 * t))
    sol = solve_lame_heat(prob)
    rep = verify_lame_heat_estimate(prob, sol, bank)
    kappa = rep.params["kappa_fit"]
    res.metrics["kappa_fit"] = kappa
    res.constants.append(("lame-heat-kappa", kappa, 64))
    res.gate("saturating inequality holds at fitted kappa", rep.holds(1 + 1e-9))
    res.gate("fitted kappa in [0.05, 20]", 0.05 <= kappa <= 20)

    u0s = random_field(g, rng, ncomp=2, kmax=4.0)
    Fs = random_field(g, rng, ncomp=2, kmax=4.0)
    ffn = lambda t: Fs * np.sin(2 * t)  # noqa: E731
    Ts = 0.3
    sol = solve_lame_heat(LinearProblem(u0s, visc, Ts, 1e-3, ffn)).final
    oracle = _rk4_lame(u0s, visc, ffn, Ts, 2.5e-4)
    err = float(np.abs(sol.data - oracle.data).max() / np.abs(oracle.data).max())
    res.metrics["oracle_err"] = err
    res.gate("matches fine-step RK4 oracle to 1e-6", err < 1e-6)
    return res


# -------------------------------------------------------------- criterion 6

def _translate(a0: Field, c, t: float) -> Field:
    g = a0.grid
    phase = np.exp(-1j * t * sum(cj * kj for cj, kj in zip(c, g.k_true)))
    return Field.from_spectral(g, a0.hat * phase)


@_timed
def criterion_transport(seed: int = 6) -> CriterionResult:
    """Translation by a constant velocity, C stability under dt halving, linear drift."""
    res = CriterionResult(6, "transport-mass")
    g = Grid(2, 64)
    bank = build_filter_bank(g)
    rng = SplitMix64(seed)
    a0 = random_field(g, rng, kmax=6.0)
    c = (0.5, 0.25)
    v = Field.constant(g, list(c), ncomp=2)
    sol = solve_transport(a0, v, None, 0.5, 1e-3, save_every=100)
    trans = max(float(np.abs(f.data - _translate(a0, c, t).data).max()) for t, f in zip(sol.times, sol.fields))
    trans /= float(np.abs(a0.data).max())
    res.metrics["translation_err"] = trans
    res.gate("constant-velocity translation error < 1e-8", trans < 1e-8)

    x, _ = g.coords
    delta = 0.5
    vt = lambda t: Field(g, np.stack([delta * np.sin(t) * np.sin(x), np.zeros(g.shape)]))  # noqa: E731
    am = random_field(g, rng, kmax=6.0) * 0.1
    Cs = []
    for dt in (0.01, 0.005):
        ser = solve_mass_equation(am, vt, 1.0, dt, save_every=int(round(0.05 / dt)))
        reps = verify_mass_estimates(ser, vt, bank, m=2)
        Cs.append(reps["growth"].params["C"])
    rel = abs(Cs[0] - Cs[1]) / max(Cs)
    res.metrics["growth_C"] = tuple(Cs)
    res.constants.append(("mass-growth", Cs[1], 64))
    res.gate("growth constant stable under dt halving (5%)", rel <= 0.05)

    vs = Field(g, np.stack([delta * np.sin(x), np.zeros(g.shape)]))
    Ts = (0.01, 0.02, 0.04)
    ser = solve_mass_equation(am, vs, Ts[-1], 1e-3, save_every=10)
    drift = verify_mass_estimates(ser, vs, bank, m=2)["drift"].params["lhs_by_time"]
    vals = np.array([drift[int(np.argmin(np.abs(ser.times - T)))] for T in Ts])
    slope = float(np.polyfit(np.log(Ts), np.log(vals), 1)[0])
    res.metrics["drift_slope"] = slope
    res.gate("low-frequency drift vanishes linearly (slope 1 +- 0.15)", abs(slope - 1.0) <= 0.15)
    return res


# -------------------------------------------------------------- criterion 7

@_timed
def criterion_decoupling(seed: int = 7, samples: int = 50, n: int = 64) -> CriterionResult:
    """lap v = grad P, A v = nu grad P and agreement of the two momentum forms."""
    res = CriterionResult(7, "decoupling")
    g = Grid(2, n)
    rng = SplitMix64(seed)
    visc = ViscosityParams(mu=1.0, lam=0.5)
    e1 = e2 = e3 = 0.0
    for i in range(samples):
        law = PressureLaw(K=1.0 + 0.5 * (i % 3), gamma=1.0 if i % 2 == 0 else 1.4)
        r = random_field(g, rng, mean_free=True)
        rho = 1.0 + (0.2 + 0.5 * rng.uniform(1)[0]) * r / r.sup()
        u = random_field(g, rng, ncomp=2) * 0.5
        st = FluidState(rho, u, visc, law)
        gp = gradient(pressure(st))
        scale = gp.sup()
        e1 = max(e1, (laplacian(st.v) - gp).sup() / scale)
        e2 = max(e2, (lame_operator(st.v, visc) - gp * visc.nu).sup() / scale)
        a, b = du_dt(st, "original"), du_dt(st, "effective")
        e3 = max(e3, (a - b).sup() / a.sup())
    res.metrics.update(lap_v=e1, lame_v=e2, du_dt=e3, samples=samples)
    res.gate("|lap v - grad P| / |grad P| < 1e-10", e1 < 1e-10)
    res.gate("|A v - nu grad P| / |grad P| < 1e-10", e2 < 1e-10)
    res.gate("du/dt agreement between formulations < 1e-9", e3 < 1e-9)
    return res


# -------------------------------------------------------------- criterion 8

def acceptance_config(gamma: float = 1.4, n: int = 64, seed: int = 11, dt: float = 1e-3,
                      T: float = 0.5, **kw) -> SolverConfig:
    """Small-data configuration: ||a0||_{B^1_{2,1}} = ||u0||_{B^0_{2,1}} = 0.01."""
    g = Grid(2, n)
    rho0, u0 = small_data(g, 0.01, 0.01, seed=seed)
    return SolverConfig(rho0, u0, law=PressureLaw(K=1.0, gamma=gamma), T=T, dt=dt, seed=seed, **kw)


@_timed
def criterion_nonlinear(seed: int = 11, gammas=(1.0, 1.4)) -> CriterionResult:
    """Small-data run: completion, mass, fixed point, convergence, monitors, continuation."""
    res = CriterionResult(8, "nonlinear-run")
    g = Grid(2, 64)
    eq = run(equilibrium_config(g, T=0.1, dt=0.01))
    fixed = max(max(float(np.abs(r.data - 1.0).max()), float(np.abs(u.data).max()))
                for r, u in zip(eq.rho.fields, eq.u.fields))
    res.metrics["equilibrium_drift"] = fixed
    res.gate("equilibrium fixed point to 1e-12", fixed < 1e-12)
    for gamma in gammas:
        cfg = acceptance_config(gamma, seed=seed)
        out = run(cfg, raise_errors=False)
        tag = f"gamma={gamma:g}"
        res.gate(f"{tag}: run completes", out.completed)
        mass = float(np.abs(out.mass - out.mass[0]).max() / out.mass[0])
        res.metrics[f"mass_{gamma:g}"] = mass
        res.gate(f"{tag}: mass conserved to 1e-8", mass < 1e-8)
        mon = out.monitor
        res.metrics[f"H_margin_{gamma:g}"] = float((mon.values / mon.thresholds).max())
        res.gate(f"{tag}: H1-H8 green throughout (failing: {mon.failing()})", mon.all_green)
        res.gate(f"{tag}: density floor 1 + S_m a >= b_/4", np.all(mon.density_floor >= mon.b_under / 4))
        verdict = continuation_monitor(out)
        res.gate(f"{tag}: continuable", verdict.continuable)
        conv = self_convergence(cfg)
        res.metrics[f"order_{gamma:g}"] = conv["order"]
        res.gate(f"{tag}: observed order >= 0.9", conv["order"] >= 0.9)
    return res


# -------------------------------------------------------------- criterion 9

@_timed
def criterion_probe(seed: int = 11, deltas=(1e-3, 1e-4, 1e-5), dt: float = 5e-3) -> CriterionResult:
    """Twin-run divergence scales linearly in the data perturbation."""
    res = CriterionResult(9, "continuous-dependence")
    cfg = acceptance_config(1.4, seed=seed, dt=dt)
    divs = [twin_run_probe(cfg, d).divergence[-1] for d in deltas]
    slope = float(np.polyfit(np.log(deltas), np.log(divs), 1)[0])
    res.metrics.update(slope=slope, divergence=tuple(divs))
    res.gate("log-log slope 1.0 +- 0.15", abs(slope - 1.0) <= 0.15)
    return res


# ------------------------------------------------------------- criterion 10

@_timed
def criterion_energy(seed: int = 11) -> CriterionResult:
    """Kinetic-plus-potential energy is non-increasing on the isothermal run."""
    res = CriterionResult(10, "energy")
    cfg = acceptance_config(1.0, seed=seed, save_every=5)
    out = run(cfg, monitor=False)
    rep = energy_diagnostic(out, p1=2.0)
    res.metrics.update(max_increase=rep.max_increase, budget_residual=float(np.abs(rep.budget_residual).max()),
                       E0=float(rep.total[0]), ET=float(rep.total[-1]))
    res.gate("energy non-increasing within 1e-6 relative", rep.nonincreasing(1e-6))
    res.gate("L^2 energy inequality holds", rep.holds(1e-6))
    return res


CRITERIA = {
    "reconstruction": criterion_reconstruction,
    "bernstein": criterion_bernstein,
    "bony": criterion_bony,
    "commutators": criterion_commutators,
    "lame-heat": criterion_lame_heat,
    "transport": criterion_transport,
    "decoupling": criterion_decoupling,
    "nonlinear": criterion_nonlinear,
    "probe": criterion_probe,
    "energy": criterion_energy,
}


def run_criteria(names=None, seed: int | None = None) -> list[CriterionResult]:
    names = list(CRITERIA) if names in (None, "all") else ([names] if isinstance(names, str) else list(names))
    out = []
    for name in names:
        if name not in CRITERIA:
            raise KeyError(f"unknown suite {name!r}; choose from {sorted(CRITERIA)} or 'all'")
        fn = CRITERIA[name]
        out.append(fn() if seed is None else fn(seed=seed))
    return out
