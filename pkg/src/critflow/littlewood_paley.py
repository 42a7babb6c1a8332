"""Dyadic partition of unity, Besov and Chemin-Lerner norms, and verifiers.

The low-pass symbol is a smooth radial step

    chi(xi) = 1 - s((|xi| - 1/alpha) / (alpha - 1/alpha)),

equal to 1 on ``|xi| <= 1/alpha`` and 0 beyond ``alpha``, with ``s`` the
standard C-infinity transition built from ``exp(-1/t)``.  The annulus
symbols are differences ``phi_l(xi) = chi(2^{-l-1} xi) - chi(2^{-l} xi)``,
so that ``chi + sum_{l<L} phi_l = chi(2^{-L} xi)`` telescopes exactly.  The
top level ``L_max`` is chosen so that ``chi(2^{-L_max-1} xi) = 1`` on the
whole lattice, which makes reconstruction exact to round-off.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import EmptySeries, GridTooSmall, IndexConstraintViolated
from .reports import EstimateReport, write_csv
from .spectral_core import Field, Grid, TimeSeries, lp_norm_array

DEFAULT_ALPHA = 8.0 / 7.0


def smooth_step(t) -> np.ndarray:
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)

    def f(x):
        out = np.zeros_like(x)
        pos = x > 0
        out[pos] = np.exp(-1.0 / x[pos])
        return out

    a, b = f(t), f(1.0 - t)
    return a / (a + b)


def chi_symbol(xi_mag, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    return 1.0 - smooth_step((np.asarray(xi_mag, dtype=float) - 1.0 / alpha)
                             / (alpha - 1.0 / alpha))


@dataclass(frozen=True, eq=False)
class DyadicFilterBank:
    """Sampled symbols of Delta_{-1}, ..., Delta_{L_max} on a grid lattice."""

    grid: Grid
    alpha: float
    L_max: int
    symbols: np.ndarray  # (L_max + 2,) + spectral_shape, row i <-> level i - 1

    @property
    def levels(self) -> np.ndarray:
        return np.arange(-1, self.L_max + 1)

    @property
    def chi_hat(self) -> np.ndarray:
        return self.symbols[0]

    def phi_hat(self, l: int) -> np.ndarray:
        if not 0 <= l <= self.L_max:
            raise IndexError(f"level {l} outside 0..{self.L_max}")
        return self.symbols[l + 1]

    def symbol(self, l: int) -> np.ndarray:
        """Symbol of Delta_l for any integer l (zero outside the bank)."""
        if l < -1 or l > self.L_max:
            return np.zeros(self.grid.spectral_shape)
        return self.symbols[l + 1]

    @cached_property
    def _cumulative(self) -> np.ndarray:
        return np.cumsum(self.symbols, axis=0)

    def low_symbol(self, l: int) -> np.ndarray:
        """Symbol of S_l = sum_{k <= l-1} Delta_k."""
        if l <= -1:
            return np.zeros(self.grid.spectral_shape)
        return self._cumulative[min(l, self.L_max + 1)]


def build_filter_bank(grid: Grid, alpha: float = DEFAULT_ALPHA) -> DyadicFilterBank:
    if not alpha > 1:
        raise ValueError(f"alpha must exceed 1, got {alpha}")
    kmag = grid.kmag_true
    kmax = float(kmag.max())
    L_max = int(np.floor(np.log2(kmax * alpha)))
    while 2.0**L_max / alpha >= kmax:
        L_max -= 1
    while 2.0 ** (L_max + 1) / alpha < kmax:
        L_max += 1
    if L_max < 1:
        raise GridTooSmall(f"grid with |k|max = {kmax:g} hosts only L_max = {L_max} at alpha = {alpha}")
    lows = [chi_symbol(kmag * 2.0**-j, alpha) for j in range(L_max + 2)]
    syms = [lows[0]] + [lows[l + 1] - lows[l] for l in range(L_max + 1)]
    return DyadicFilterBank(grid, float(alpha), L_max, np.stack(syms))


# ------------------------------------------------------------------ blocks

def dyadic_block(u: Field, l: int, bank: DyadicFilterBank) -> Field:
    return Field.from_spectral(u.grid, u.hat * bank.symbol(l))


def low_pass(u: Field, l: int, bank: DyadicFilterBank) -> Field:
    return Field.from_spectral(u.grid, u.hat * bank.low_symbol(l))


def all_blocks(u: Field, bank: DyadicFilterBank) -> np.ndarray:
    """Physical samples of every block, shape ``(L_max+2, ncomp) + grid.shape``."""
    hats = bank.symbols[:, None] * u.hat[None]
    return u.grid.ifft(hats)


def all_low_passes(u: Field, bank: DyadicFilterBank) -> np.ndarray:
    """S_q u for q = -1..L_max (row q + 1), physical samples."""
    cum = np.concatenate([np.zeros((1,) + bank.grid.spectral_shape), bank._cumulative[:-1]])
    return u.grid.ifft(cum[:, None] * u.hat[None])


def level_norms(u: Field, p: float, bank: DyadicFilterBank) -> np.ndarray:
    """||Delta_l u||_{L^p} for l = -1..L_max (Euclidean magnitude for vectors)."""
    return block_norms(all_blocks(u, bank), p, u.grid)


def block_norms(blocks: np.ndarray, p: float, grid: Grid) -> np.ndarray:
    mag = np.sqrt((blocks**2).sum(axis=1))
    axes = tuple(range(1, mag.ndim))
    return lp_norm_array(mag, p, grid.volume, axes)


# ------------------------------------------------------------ Besov norms

@dataclass(frozen=True)
class BesovParams:
    s: float
    p: float = 2.0
    r: float = 1.0

    def __post_init__(self):
        if not self.p >= 1 or not self.r >= 1:
            raise ValueError(f"Besov exponents need p >= 1 and r >= 1 (p={self.p}, r={self.r})")

    def label(self) -> str:
        return f"B^{self.s:g}_{{{self.p:g},{self.r:g}}}"


def weighted_sum(levels: np.ndarray, norms: np.ndarray, s: float, r: float) -> float:
    w = 2.0 ** (np.asarray(levels, dtype=float) * s) * np.asarray(norms)
    if np.isinf(r):
        return float(w.max()) if w.size else 0.0
    if r == 1:
        return float(w.sum())
    return float((w**r).sum() ** (1.0 / r))


@dataclass(frozen=True, eq=False)
class BesovReport:
    levels: np.ndarray
    level_norms: np.ndarray
    params: BesovParams

    @property
    def weighted(self) -> np.ndarray:
        return 2.0 ** (self.levels * self.params.s) * self.level_norms

    @property
    def total(self) -> float:
        return weighted_sum(self.levels, self.level_norms, self.params.s, self.params.r)

    def __float__(self):
        return self.total

    def to_csv(self, path_or_buf=None):
        rows = [(int(l), n, w) for l, n, w in zip(self.levels, self.level_norms, self.weighted)]
        rows.append(("total", "", self.total))
        if path_or_buf is None:
            buf = io.StringIO()
            write_csv(buf, ["level", "lp_norm", "weighted"], rows)
            return buf.getvalue()
        write_csv(path_or_buf, ["level", "lp_norm", "weighted"], rows)


def besov_norm(u: Field, params: BesovParams, bank: DyadicFilterBank) -> BesovReport:
    return BesovReport(bank.levels, level_norms(u, params.p, bank), params)


def besov(u: Field, s: float, p: float, r: float, bank: DyadicFilterBank) -> float:
    """Shorthand for ``besov_norm(...).total``."""
    return besov_norm(u, BesovParams(s, p, r), bank).total


def time_norm(values: np.ndarray, times: np.ndarray, rho: float) -> np.ndarray:
    """L^rho in time along axis 0 by the trapezoid rule (max for rho = inf)."""
    values = np.asarray(values, dtype=float)
    if np.isinf(rho):
        return values.max(axis=0)
    if len(times) < 2:
        return np.zeros(values.shape[1:])
    integral = np.trapezoid(values**rho, times, axis=0)
    return integral ** (1.0 / rho)


def series_level_norms(series: TimeSeries, p: float, bank: DyadicFilterBank) -> np.ndarray:
    """Array (n_times, L_max+2) of per-level L^p norms."""
    return np.array([level_norms(f, p, bank) for f in series.fields])


def chemin_lerner_norm(series: TimeSeries, rho: float, params: BesovParams,
                       bank: DyadicFilterBank, level_history: np.ndarray | None = None) -> BesovReport:
    """Time norm inside the level sum; ``level_history`` may supply precomputed norms."""
    if series is None or len(series) == 0:
        raise EmptySeries("Chemin-Lerner norm of an empty series")
    if not rho >= 1:
        raise ValueError("time exponent must be >= 1")
    hist = series_level_norms(series, params.p, bank) if level_history is None else level_history
    return BesovReport(bank.levels, time_norm(hist, series.times, rho), params)


def lebesgue_besov_norm(series: TimeSeries, rho: float, params: BesovParams,
                        bank: DyadicFilterBank) -> float:
    """L^rho_T(B^s_{p,r}): Besov norm inside, time norm outside."""
    if len(series) == 0:
        raise EmptySeries("empty series")
    vals = np.array([besov_norm(f, params, bank).total for f in series.fields])
    return float(time_norm(vals, series.times, rho))


def sum_space_norm(u: Field, paramsA: BesovParams, paramsB: BesovParams,
                   bank: DyadicFilterBank) -> float:
    """Upper bound for the norm of ``u`` in ``B_A + B_B``.

    Each dyadic block is assigned whole to the space in which its weighted
    contribution is smaller.  The result never exceeds either single-space
    norm and is within a factor of two of the infimum over block-wise splits
    when both summation indices equal 1.
    """
    blocks = all_blocks(u, bank)
    levels = bank.levels
    nA = block_norms(blocks, paramsA.p, u.grid)
    nB = block_norms(blocks, paramsB.p, u.grid) if paramsB.p != paramsA.p else nA
    return sum_space_from_levels(levels, nA, nB, paramsA, paramsB)


def sum_space_from_levels(levels, nA, nB, paramsA: BesovParams, paramsB: BesovParams) -> float:
    wA = 2.0 ** (levels * paramsA.s) * nA
    wB = 2.0 ** (levels * paramsB.s) * nB
    toA = wA <= wB
    greedy = (weighted_sum(levels[toA], nA[toA], paramsA.s, paramsA.r)
              + weighted_sum(levels[~toA], nB[~toA], paramsB.s, paramsB.r))
    normA = weighted_sum(levels, nA, paramsA.s, paramsA.r)
    normB = weighted_sum(levels, nB, paramsB.s, paramsB.r)
    return float(min(greedy, normA, normB))


# -------------------------------------------------------------- verifiers

@dataclass(frozen=True, eq=False)
class BernsteinReport:
    levels: np.ndarray
    ratios: np.ndarray
    lower: float
    upper: float

    def within(self, rel_tol: float = 0.01) -> bool:
        r = self.ratios[np.isfinite(self.ratios)]
        return bool(np.all(r >= self.lower * (1 - rel_tol)) and np.all(r <= self.upper * (1 + rel_tol)))


def verify_bernstein(u: Field, bank: DyadicFilterBank, p: float = 2.0,
                     rel_floor: float = 1e-12) -> BernsteinReport:
    """Ratios ||grad Delta_l u||_p / (2^l ||Delta_l u||_p) for l >= 0.

    Levels whose block is negligible (below ``rel_floor`` times the largest
    block) are reported as NaN.
    """
    from .spectral_core import gradient

    if not u.is_scalar:
        raise ValueError("verify_bernstein expects a scalar field")
    blocks = all_blocks(u, bank)[1:]
    ratios = np.full(bank.L_max + 1, np.nan)
    norms = block_norms(blocks, p, u.grid)
    big = norms.max() if norms.size else 0.0
    for l in range(bank.L_max + 1):
        if norms[l] <= rel_floor * big or norms[l] == 0:
            continue
        g = gradient(Field(u.grid, blocks[l]))
        ratios[l] = lp_norm_array(np.sqrt((g.data**2).sum(axis=0)), p, u.grid.volume) / (2.0**l * norms[l])
    return BernsteinReport(np.arange(bank.L_max + 1), ratios, 1.0 / bank.alpha, 2.0 * bank.alpha)


def verify_norm_equivalence(fields: Sequence[Field], params: BesovParams,
                            bank: DyadicFilterBank) -> EstimateReport:
    """Measured constant of C^-1 ||u||_{B^s} <= ||grad u||_{B^{s-1}} <= C ||u||_{B^s}.

    Intended for mean-free fields.  ``lhs`` holds ||grad u||_{B^{s-1}},
    ``rhs`` holds ||u||_{B^s}; the reported constant is max(ratio, 1/ratio).
    """
    from .spectral_core import gradient

    lower = BesovParams(params.s - 1, params.p, params.r)
    lhs, rhs = [], []
    for f in fields:
        lhs.append(besov_norm(gradient(f), lower, bank).total)
        rhs.append(besov_norm(f, params, bank).total)
    lhs, rhs = np.array(lhs), np.array(rhs)
    rep = EstimateReport("norm-equivalence", lhs, rhs, params={"s": params.s, "p": params.p, "r": params.r})
    r = rep.ratios
    rep.params["C"] = float(np.max(np.maximum(r, 1.0 / r))) if r.size else 1.0
    return rep


def verify_embedding(fields: Sequence[Field], paramsA: BesovParams, paramsB: BesovParams,
                     bank: DyadicFilterBank) -> EstimateReport:
    """Ratios ||u||_B / ||u||_A for B^s_{p1,r1} -> B^{s - N(1/p1 - 1/p2)}_{p2,r2}."""
    N = bank.grid.dim
    if not paramsA.p <= paramsB.p:
        raise IndexConstraintViolated("embedding", "p1 <= p2")
    if not paramsA.r <= paramsB.r:
        raise IndexConstraintViolated("embedding", "r1 <= r2")
    expected = paramsA.s - N * (1.0 / paramsA.p - 1.0 / paramsB.p)
    if paramsB.s > expected + 1e-12:
        raise IndexConstraintViolated("embedding", "s2 <= s1 - N(1/p1 - 1/p2)")
    lhs = np.array([besov_norm(f, paramsB, bank).total for f in fields])
    rhs = np.array([besov_norm(f, paramsA, bank).total for f in fields])
    return EstimateReport("embedding", lhs, rhs,
                          params={"s1": paramsA.s, "p1": paramsA.p, "r1": paramsA.r,
                                  "s2": paramsB.s, "p2": paramsB.p, "r2": paramsB.r})


def log_interpolation_sides(hist: np.ndarray, times: np.ndarray, levels: np.ndarray,
                            s: float, eps: float, rho: float) -> tuple[float, float]:
    """LHS and RHS (constant 1, natural log) of the logarithmic interpolation bound.

    ``hist`` holds per-level L^p norms with shape (n_times, n_levels).
    """
    tn = time_norm(hist, times, rho)
    lhs = weighted_sum(levels, tn, s, 1.0)
    low = weighted_sum(levels, tn, s, np.inf)
    high = weighted_sum(levels, tn, s + eps, np.inf)
    if low == 0:
        return lhs, 0.0
    rhs = (1.0 + eps) / eps * low * (1.0 + np.log(high / low))
    return lhs, rhs


def verify_log_interpolation(series_list: Sequence[TimeSeries], bank: DyadicFilterBank,
                             s: float = 0.0, p: float = 2.0, eps: float = 0.5,
                             rho: float = 1.0) -> EstimateReport:
    """LHS/RHS of the B_{p,1} versus B_{p,inf} logarithmic interpolation bound."""
    if p == np.inf:
        raise ValueError("the interpolation bound is stated for p < inf")
    lhs, rhs = [], []
    for series in series_list:
        if len(series) == 0:
            raise EmptySeries("empty series")
        hist = series_level_norms(series, p, bank)
        l, r = log_interpolation_sides(hist, series.times, bank.levels, s, eps, rho)
        lhs.append(l)
        rhs.append(r)
    return EstimateReport("log-interpolation", lhs, rhs, params={"s": s, "p": p, "eps": eps, "rho": rho})
