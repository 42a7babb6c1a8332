"""Bony decomposition, the two appendix commutators and product-law checks.

Every physical-space product is dealiased with the 2/3 rule: both factors
are truncated to the retained band before multiplying and the product is
truncated again.  Because the truncation is linear, the Bony identity
``T_u v + T_v u + R(u, v) = uv`` holds to round-off for the dealiased
product.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import IndexConstraintViolated
from .littlewood_paley import DyadicFilterBank, block_norms, weighted_sum
from .reports import EstimateReport, safe_ratio
from .spectral_core import Field, Grid, lp_norm, lp_norm_array, multiply

__all__ = [
    "EstimateReport", "paraproduct", "remainder", "transport_commutator",
    "transport_commutators", "lame_commutator", "lame_commutators",
    "verify_transport_commutator", "verify_self_commutator", "verify_lame_commutator",
    "verify_product_laws", "check_law_constraints", "PRODUCT_LAWS",
]


def _dealiased_physical(grid: Grid, hat: np.ndarray) -> np.ndarray:
    return grid.ifft(hat * grid.dealias_mask)


def _truncate(grid: Grid, data: np.ndarray) -> np.ndarray:
    """Project physical samples (any leading axes) onto the dealiased band."""
    return grid.ifft(grid.fft(data) * grid.dealias_mask)


def _low_pass_stack(f: Field, bank: DyadicFilterBank, shift: int) -> np.ndarray:
    """Dealiased S_{q+shift} f for q = -1..L_max, shape (L+2, ncomp) + grid.shape."""
    g = f.grid
    cum = np.cumsum(bank.symbols, axis=0)
    rows = []
    for q in bank.levels:
        l = q + shift
        if l <= -1:
            rows.append(np.zeros(g.spectral_shape))
        else:
            rows.append(cum[min(l, bank.L_max + 1)])
    syms = np.stack(rows)
    return _dealiased_physical(g, syms[:, None] * f.hat[None])


def _block_stack(f: Field, bank: DyadicFilterBank) -> np.ndarray:
    return _dealiased_physical(f.grid, bank.symbols[:, None] * f.hat[None])


def paraproduct(u: Field, v: Field, bank: DyadicFilterBank) -> Field:
    """T_u v = sum_q S_{q-1} u * Delta_q v."""
    u._check(v)
    lows = _low_pass_stack(u, bank, -1)
    blocks = _block_stack(v, bank)
    prod = (lows * blocks).sum(axis=0)
    return Field(u.grid, _truncate(u.grid, prod))


def remainder(u: Field, v: Field, bank: DyadicFilterBank) -> Field:
    """R(u, v) = sum_q Delta_q u (Delta_{q-1} v + Delta_q v + Delta_{q+1} v)."""
    u._check(v)
    bu = _block_stack(u, bank)
    bv = _block_stack(v, bank)
    near = bv.copy()
    near[1:] += bv[:-1]
    near[:-1] += bv[1:]
    prod = (bu * near).sum(axis=0)
    return Field(u.grid, _truncate(u.grid, prod))


# ------------------------------------------------------------- commutators

def transport_commutators(v: Field, a: Field, bank: DyadicFilterBank) -> np.ndarray:
    """[v.grad, Delta_q] a for every level q = -1..L_max.

    Returns physical samples of shape ``(L+2, a.ncomp) + grid.shape``.
    """
    g = v.grid
    if v.ncomp != g.dim:
        raise ValueError("the advecting field must be a vector")
    vd = _dealiased_physical(g, v.hat)
    out = np.empty((len(bank.levels), a.ncomp) + g.shape)
    mask = g.dealias_mask
    for c in range(a.ncomp):
        ahat = a.hat[c]
        grad_hat = np.stack([1j * kj * ahat for kj in g.k])        # (N, spec)
        # v . grad(Delta_q a), all q at once
        gb = g.ifft(bank.symbols[:, None] * grad_hat[None] * mask)  # (L+2, N) + shape
        first = (vd[None] * gb).sum(axis=1)
        first_hat = g.fft(first) * mask
        # Delta_q (v . grad a)
        full = (vd * g.ifft(grad_hat * mask)).sum(axis=0)
        full_hat = g.fft(full) * mask
        out[:, c] = g.ifft(first_hat - bank.symbols * full_hat[None])
    return out


def transport_commutator(v: Field, a: Field, q: int, bank: DyadicFilterBank) -> Field:
    """v.grad(Delta_q a) - Delta_q(v.grad a) (componentwise for vector a)."""
    if q < -1 or q > bank.L_max:
        return Field.zeros(v.grid, a.ncomp)
    return Field(v.grid, transport_commutators(v, a, bank)[q + 1])


def lame_commutators(a: Field, w: Field, k: int, bank: DyadicFilterBank) -> np.ndarray:
    """R_q = Delta_q(a d_k w) - d_k(a Delta_q w) for every level, componentwise in w."""
    g = a.grid
    if not a.is_scalar:
        raise ValueError("the coefficient must be scalar")
    if not 0 <= k < g.dim:
        raise ValueError(f"axis {k} outside 0..{g.dim - 1}")
    mask = g.dealias_mask
    ad = _dealiased_physical(g, a.hat)[0]
    kk = g.k[k]
    dkw_hat = 1j * kk * w.hat
    prod_hat = g.fft(ad * g.ifft(dkw_hat * mask)) * mask            # (ncomp, spec)
    first_hat = bank.symbols[:, None] * prod_hat[None]
    bw = g.ifft(bank.symbols[:, None] * w.hat[None] * mask)          # (L+2, ncomp) + shape
    second_hat = 1j * kk * (g.fft(ad * bw) * mask)
    return g.ifft(first_hat - second_hat)


def lame_commutator(a: Field, w: Field, k: int, q: int, bank: DyadicFilterBank) -> Field:
    if q < -1 or q > bank.L_max:
        return Field.zeros(a.grid, w.ncomp)
    return Field(a.grid, lame_commutators(a, w, k, bank)[q + 1])


# ---------------------------------------------------------------- verifiers

def _grad_matrix_mag(v: Field) -> np.ndarray:
    """Pointwise Frobenius norm of the Jacobian of v."""
    from .spectral_core import gradient
    tot = np.zeros(v.grid.shape)
    for c in range(v.ncomp):
        tot += (gradient(v.component(c)).data ** 2).sum(axis=0)
    return np.sqrt(tot)


def _grad_field(v: Field) -> Field:
    """Jacobian of v stacked as a field with N*ncomp rows (for Besov norms)."""
    g = v.grid
    hats = [1j * kj * v.hat[c] for c in range(v.ncomp) for kj in g.k]
    return _MultiField(g, g.ifft(np.stack(hats)))


class _MultiField:
    """Minimal stand-in for tensor-valued samples (Besov norms only)."""

    def __init__(self, grid: Grid, data: np.ndarray):
        self.grid = grid
        self.data = data
        self.hat = grid.fft(data)
        self.ncomp = data.shape[0]


def _besov_any(f, s: float, p: float, r: float, bank: DyadicFilterBank) -> float:
    blocks = f.grid.ifft(bank.symbols[:, None] * f.hat[None])
    return weighted_sum(bank.levels, block_norms(blocks, p, f.grid), s, r)


def _lp_any(f, p: float) -> float:
    mag = np.sqrt((f.data**2).sum(axis=0))
    return float(lp_norm_array(mag, p, f.grid.volume))


def verify_transport_commutator(pairs: Sequence[tuple[Field, Field]], bank: DyadicFilterBank,
                                sigma: float = 0.5, p: float = 2.0, p1: float = 2.0,
                                limit: bool = False) -> EstimateReport:
    """Measured constant of the transport commutator bound.

    Regular case: per sample, ``lhs = sum_q 2^{q sigma} ||[v.grad, Delta_q] a||_{p1}``
    (the bound with an l^1-normalised c_q summed over q) against
    ``||grad v||_{B^{N/p}_{p,1}} ||a||_{B^sigma_{p1,1}}``.

    ``limit=True`` selects the endpoint form with ``sup_q 2^{-qN/p}`` on the
    left and ``||a||_{B^{-N/p}_{p,inf}}`` on the right.
    """
    N = bank.grid.dim
    if not 1 <= p1 <= p:
        raise IndexConstraintViolated("transport-commutator", "1 <= p1 <= p")
    lo = -min(N / p, N / p1)
    if not limit and not (lo < sigma <= N / p + 1):
        raise IndexConstraintViolated("transport-commutator", "-min(N/p, N/p1) < sigma <= N/p + 1")
    lhs, rhs, best_c, best = [], [], None, -1.0
    for v, a in pairs:
        comm = transport_commutators(v, a, bank)
        norms = block_norms(comm, p1, v.grid)
        gv = _grad_field(v)
        if limit:
            w = 2.0 ** (-bank.levels * N / p) * norms
            left = float(w.max())
            right = _besov_any(gv, N / p, p, 1, bank) * _besov_any(a, -N / p, p, np.inf, bank)
        else:
            w = 2.0 ** (bank.levels * sigma) * norms
            left = float(w.sum())
            right = _besov_any(gv, N / p, p, 1, bank) * _besov_any(a, sigma, p1, 1, bank)
        lhs.append(left)
        rhs.append(right)
        ratio = safe_ratio(left, right)
        if ratio > best:
            best, best_c = float(ratio), w
    name = "transport-commutator-endpoint" if limit else "transport-commutator"
    return EstimateReport(name, lhs, rhs, c_q=best_c,
                          params={"sigma": -N / p if limit else sigma, "p": p, "p1": p1})


def verify_self_commutator(fields: Sequence[Field], bank: DyadicFilterBank, sigma: float = 1.0,
                           p: float = 2.0, p1: float = 2.0) -> EstimateReport:
    """Commutator of v.grad with Delta_q acting on v itself (sigma > 0).

    Right side: ``||grad v||_inf ||v||_{B^sigma_{p1,1}} + ||grad v||_{p2} ||grad v||_{B^{sigma-1}_{p1,1}}``
    with ``1/p2 = 1/p1 - 1/p``; the left side is measured in L^p.
    """
    if not sigma > 0:
        raise IndexConstraintViolated("self-transport-commutator", "sigma > 0")
    if not 1 <= p1 <= p:
        raise IndexConstraintViolated("self-transport-commutator", "1 <= p1 <= p")
    inv_p2 = 1.0 / p1 - 1.0 / p
    p2 = np.inf if inv_p2 == 0 else 1.0 / inv_p2
    lhs, rhs, best_c, best = [], [], None, -1.0
    for v in fields:
        comm = transport_commutators(v, v, bank)
        w = 2.0 ** (bank.levels * sigma) * block_norms(comm, p, v.grid)
        gv = _grad_field(v)
        gmag = _grad_matrix_mag(v)
        right = (float(gmag.max()) * _besov_any(v, sigma, p1, 1, bank)
                 + float(lp_norm_array(gmag, p2, v.grid.volume)) * _besov_any(gv, sigma - 1, p1, 1, bank))
        lhs.append(float(w.sum()))
        rhs.append(right)
        ratio = safe_ratio(lhs[-1], right)
        if ratio > best:
            best, best_c = float(ratio), w
    return EstimateReport("self-transport-commutator", lhs, rhs, c_q=best_c, params={"sigma": sigma, "p": p, "p1": p1, "p2": p2})


def verify_lame_commutator(pairs: Sequence[tuple[Field, Field]], bank: DyadicFilterBank,
                           sigma: float = 0.5, gain: float = 1.0, p: float = 2.0,
                           p1: float = 2.0, limit: bool = False) -> EstimateReport:
    """Measured constant of the variable-coefficient commutator bound.

    ``gain`` is the extra regularity exponent put on the coefficient
    (``a`` in ``B^{N/p + gain}_{p,1}``), restricted to ``(1 - N/p, 1]``.  The
    left side is maximised over the derivative axis k.
    """
    N = bank.grid.dim
    if not 1 <= p1 <= p:
        raise IndexConstraintViolated("coefficient-commutator", "1 <= p1 <= p")
    if not (1 - N / p < gain <= 1):
        raise IndexConstraintViolated("coefficient-commutator", "1 - N/p < alpha <= 1")
    if not limit and not (-N / p < sigma <= gain + N / p):
        raise IndexConstraintViolated("coefficient-commutator", "-N/p < sigma <= alpha + N/p")
    lhs, rhs, best_c, best = [], [], None, -1.0
    for a, w in pairs:
        left, wbest = 0.0, None
        for k in range(N):
            norms = block_norms(lame_commutators(a, w, k, bank), p1, a.grid)
            if limit:
                wq = 2.0 ** (-bank.levels * N / p) * norms
                val = float(wq.max())
            else:
                wq = 2.0 ** (bank.levels * sigma) * norms
                val = float(wq.sum())
            if val >= left:
                left, wbest = val, wq
        if limit:
            right = _besov_any(a, N / p + gain, p, 1, bank) * _besov_any(w, -N / p + 1 - gain, p1, np.inf, bank)
        else:
            right = _besov_any(a, N / p + gain, p, 1, bank) * _besov_any(w, sigma + 1 - gain, p1, 1, bank)
        lhs.append(left)
        rhs.append(right)
        ratio = safe_ratio(left, right)
        if ratio > best:
            best, best_c = float(ratio), wbest
    name = "coefficient-commutator-endpoint" if limit else "coefficient-commutator"
    return EstimateReport(name, lhs, rhs, c_q=best_c,
                          params={"sigma": -N / p if limit else sigma, "alpha": gain, "p": p, "p1": p1})


# -------------------------------------------------------------- product laws

PRODUCT_LAWS = ("tame", "holder", "dual", "multiplier", "mixed")


def _inv(x: float) -> float:
    return 0.0 if np.isinf(x) else 1.0 / x


def check_law_constraints(law: str, N: int, **prm) -> None:
    """Raise IndexConstraintViolated naming the first failed hypothesis."""
    tol = 1e-12
    if law not in PRODUCT_LAWS:
        raise ValueError(f"unknown product law {law!r}; choose from {PRODUCT_LAWS}")
    for key in ("p", "p1", "p2", "r", "lam1", "lam2"):
        if key in prm and not prm[key] >= 1:
            raise IndexConstraintViolated(law, f"{key} in [1, inf]")
    if law == "tame":
        return
    if law in ("holder", "dual"):
        p, p1, p2 = prm["p"], prm["p1"], prm["p2"]
        l1, l2 = prm["lam1"], prm["lam2"]
        s1, s2 = prm["s1"], prm["s2"]
        ip, ip1, ip2, il1, il2 = map(_inv, (p, p1, p2, l1, l2))
        if not ip <= ip1 + ip2 + tol:
            raise IndexConstraintViolated(law, "1/p <= 1/p1 + 1/p2")
        if not p1 <= l2:
            raise IndexConstraintViolated(law, "p1 <= lambda2")
        if not p2 <= l1:
            raise IndexConstraintViolated(law, "p2 <= lambda1")
        if not ip <= ip1 + il1 + tol:
            raise IndexConstraintViolated(law, "1/p <= 1/p1 + 1/lambda1")
        if not ip <= ip2 + il2 + tol:
            raise IndexConstraintViolated(law, "1/p <= 1/p2 + 1/lambda2")
        if law == "holder":
            if not s1 + s2 + N * min(0.0, 1 - ip1 - ip2) > 0:
                raise IndexConstraintViolated(law, "s1 + s2 + N inf(0, 1 - 1/p1 - 1/p2) > 0")
            if not s1 + N * il2 <= N * ip1 + tol:
                raise IndexConstraintViolated(law, "s1 + N/lambda2 <= N/p1")
            if not s2 + N * il1 <= N * ip2 + tol:
                raise IndexConstraintViolated(law, "s2 + N/lambda1 <= N/p2")
        else:
            if abs(s1 + s2) > tol:
                raise IndexConstraintViolated(law, "s1 + s2 = 0")
            if not (N * il1 - N * ip2 < s1 <= N * ip1 - N * il2 + tol):
                raise IndexConstraintViolated(law, "s1 in (N/lambda1 - N/p2, N/p1 - N/lambda2]")
            if not ip1 + ip2 <= 1 + tol:
                raise IndexConstraintViolated(law, "1/p1 + 1/p2 <= 1")
        return
    if law == "multiplier":
        s, p = prm["s"], prm["p"]
        if not abs(s) < N * _inv(p):
            raise IndexConstraintViolated(law, "|s| < N/p")
        return
    # mixed
    s, p, p1 = prm["s"], prm["p"], prm["p1"]
    if not 1 <= p <= p1:
        raise IndexConstraintViolated(law, "1 <= p <= p1")
    ip, ip1 = _inv(p), _inv(p1)
    lo = -N * ip1 if ip + ip1 <= 1 else -N * ip1 + N * (ip + ip1 - 1)
    if not lo < s < N * ip1:
        label = ("s in (-N/p1, N/p1)" if ip + ip1 <= 1
                 else "s in (-N/p1 + N(1/p + 1/p1 - 1), N/p1)")
        raise IndexConstraintViolated(law, label)


def verify_product_laws(pairs: Sequence[tuple[Field, Field]], law: str, bank: DyadicFilterBank,
                        **prm) -> EstimateReport:
    """LHS/RHS of one product law over an ensemble of (u, v) pairs.

    Parameters by law (all exponents may be ``np.inf``):

    * ``"tame"``: ||uv||_{B^s_{p,r}} against ||u||_inf ||v||_B + ||v||_inf ||u||_B; s, p, r.
    * ``"holder"``: general Holder-type law; s1, s2, p, p1, p2, r, lam1, lam2.
    * ``"dual"``: the s1 + s2 = 0 endpoint into B_{p,inf}; s1, s2, p, p1, p2, lam1, lam2.
    * ``"multiplier"``: B^{N/p}_{p,inf} cap L^inf acting on B^s_{p,r}, |s| < N/p; s, p, r.
    * ``"mixed"``: B^{N/p1}_{p1,inf} cap L^inf acting on B^s_{p,r}, p <= p1; s, p, p1, r.

    Intersection norms ``X cap Y`` are evaluated as ``||.||_X + ||.||_Y``.
    """
    N = bank.grid.dim
    check_law_constraints(law, N, **prm)
    B = lambda f, s, p, r: _besov_any(f, s, p, r, bank)  # noqa: E731
    lhs, rhs = [], []
    for u, v in pairs:
        uv = multiply(u, v)
        if law == "tame":
            s, p, r = prm["s"], prm.get("p", 2.0), prm.get("r", 1.0)
            left = B(uv, s, p, r)
            right = lp_norm(u, np.inf) * B(v, s, p, r) + lp_norm(v, np.inf) * B(u, s, p, r)
        elif law in ("holder", "dual"):
            p, p1, p2 = prm["p"], prm["p1"], prm["p2"]
            s1, s2 = prm["s1"], prm["s2"]
            shift = N * (_inv(p1) + _inv(p2) - _inv(p))
            if law == "holder":
                r = prm.get("r", 1.0)
                eq1 = abs(s1 + N * _inv(prm["lam2"]) - N * _inv(p1)) < 1e-12
                eq2 = abs(s2 + N * _inv(prm["lam1"]) - N * _inv(p2)) < 1e-12
                if eq1 and eq2:
                    r = 1.0
                left = B(uv, s1 + s2 - shift, p, r)
                nu = B(u, s1, p1, 1.0 if eq1 else r)
                nv = B(v, s2, p2, np.inf) + (lp_norm(v, np.inf) if eq2 else 0.0)
            else:
                left = B(uv, -shift, p, np.inf)
                nu = B(u, s1, p1, 1.0)
                nv = B(v, s2, p2, np.inf)
            right = nu * nv
        elif law == "multiplier":
            s, p, r = prm["s"], prm["p"], prm.get("r", 1.0)
            left = B(uv, s, p, r)
            right = B(u, s, p, r) * (B(v, N * _inv(p), p, np.inf) + lp_norm(v, np.inf))
        else:
            s, p, p1, r = prm["s"], prm["p"], prm["p1"], prm.get("r", 1.0)
            left = B(uv, s, p, r)
            right = B(u, s, p, r) * (B(v, N * _inv(p1), p1, np.inf) + lp_norm(v, np.inf))
        lhs.append(left)
        rhs.append(right)
    return EstimateReport(law, lhs, rhs, params=dict(prm))
