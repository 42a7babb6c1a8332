"""Periodic grids, fields, Fourier multipliers and the Lame operator.

Conventions
-----------
* Spectral coefficients are true Fourier-series coefficients: ``rfftn`` with
  ``norm="forward"``, so a constant field c has zero-mode coefficient c.
* Wavenumbers are physical, ``k_j = 2*pi*m_j / a_j``; with the default period
  ``a_j = 2*pi`` they are the integer lattice.
* Derivative symbols use wavenumbers whose Nyquist component is set to zero.
  Nyquist planes are treated as unresolved; ``div(grad f) == lap f`` and
  ``lap(inv_lap g) == g - mean g`` then hold to round-off on every field.
* Products are dealiased with the 2/3 rule when requested.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import EmptySeries, GridError, SymbolSingularity

TWO_PI = 2.0 * np.pi

SNAPSHOT_MAGIC = b"CRITFLOW"
SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on the box prod_i [0, a_i)."""

    dim: int = 2
    n: int = 64
    period: tuple | float = TWO_PI

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise GridError(f"dim must be 2 or 3, got {self.dim}")
        n = int(self.n)
        if n < 8 or n & (n - 1):
            raise GridError(f"points_per_axis must be a power of two >= 8, got {self.n}")
        per = self.period
        if np.isscalar(per):
            per = (float(per),) * self.dim
        per = tuple(float(a) for a in per)
        if len(per) == 1:
            per = per * self.dim
        if len(per) != self.dim or min(per) <= 0:
            raise GridError(f"period must hold {self.dim} positive lengths, got {self.period}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "period", per)

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def spectral_shape(self) -> tuple:
        return (self.n,) * (self.dim - 1) + (self.n // 2 + 1,)

    @property
    def axes(self) -> tuple:
        return tuple(range(-self.dim, 0))

    @property
    def volume(self) -> float:
        return float(np.prod(self.period))

    @cached_property
    def coords(self) -> tuple:
        """Meshgrid of sample positions, ``indexing='ij'``."""
        lines = [np.arange(self.n) * (a / self.n) for a in self.period]
        return tuple(np.meshgrid(*lines, indexing="ij"))

    @cached_property
    def mode_index(self) -> tuple:
        """Integer mode numbers per axis, broadcastable to ``spectral_shape``."""
        out = []
        for j in range(self.dim):
            if j < self.dim - 1:
                m = np.fft.fftfreq(self.n, d=1.0 / self.n)
            else:
                m = np.fft.rfftfreq(self.n, d=1.0 / self.n)
            shp = [1] * self.dim
            shp[j] = m.size
            out.append(m.reshape(shp))
        return tuple(out)

    @cached_property
    def k_true(self) -> tuple:
        return tuple(TWO_PI / a * m for a, m in zip(self.period, self.mode_index))

    @cached_property
    def k(self) -> tuple:
        """Derivative wavenumbers (Nyquist component zeroed)."""
        out = []
        for a, m in zip(self.period, self.mode_index):
            kk = TWO_PI / a * m
            out.append(np.where(np.abs(m) == self.n // 2, 0.0, kk))
        return tuple(out)

    @cached_property
    def k2(self) -> np.ndarray:
        return np.broadcast_to(sum(kj**2 for kj in self.k), self.spectral_shape).copy()

    @cached_property
    def kmag_true(self) -> np.ndarray:
        return np.sqrt(np.broadcast_to(sum(kj**2 for kj in self.k_true), self.spectral_shape))

    @cached_property
    def kmax(self) -> float:
        return float(self.kmag_true.max())

    @cached_property
    def kmax_axis(self) -> float:
        return max(TWO_PI / a * (self.n // 2) for a in self.period)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        keep = np.ones(self.spectral_shape, dtype=bool)
        for m in self.mode_index:
            keep = keep & (np.abs(m) < self.n / 3.0)
        return keep

    @cached_property
    def inv_k2(self) -> np.ndarray:
        """-1/|k|^2 with the null modes (k = 0 after Nyquist zeroing) set to 0."""
        out = np.zeros(self.spectral_shape)
        nz = self.k2 > 0
        out[nz] = -1.0 / self.k2[nz]
        return out

    def fft(self, data: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(data, axes=self.axes, norm="forward")

    def ifft(self, hat: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(hat, s=self.shape, axes=self.axes, norm="forward")


@dataclass(frozen=True)
class ViscosityParams:
    """Constant viscosities and the derived symbols of the Lame system."""

    mu: float = 1.0
    lam: float = 0.0
    b_under: float = 1.0

    def __post_init__(self):
        if not self.mu > 0 or not self.lam + 2 * self.mu > 0:
            raise ValueError(f"ellipticity requires mu > 0 and lambda + 2 mu > 0 "
                             f"(mu={self.mu}, lambda={self.lam})")
        if not self.b_under > 0:
            raise ValueError("b_under must be positive")

    @property
    def nu(self) -> float:
        return self.lam + 2 * self.mu

    @property
    def nu_min(self) -> float:
        return min(self.mu, self.lam + 2 * self.mu)

    @property
    def nu_bar(self) -> float:
        return self.mu + abs(self.lam + self.mu)

    @property
    def nu_under(self) -> float:
        return self.b_under * self.nu_min

    def with_b_under(self, b_under: float) -> "ViscosityParams":
        return ViscosityParams(self.mu, self.lam, b_under)


@dataclass(frozen=True, eq=False)
class Field:
    """Real scalar or vector samples on a grid.

    ``data`` has shape ``(ncomp,) + grid.shape`` and is read-only; the spectral
    coefficients are computed on first access and cached.
    """

    grid: Grid
    data: np.ndarray = dc_field(repr=False)

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.shape == self.grid.shape:
            arr = arr[None]
        if arr.ndim != self.grid.dim + 1 or arr.shape[1:] != self.grid.shape:
            raise GridError(f"data shape {arr.shape} does not match grid {self.grid.shape}")
        if arr.shape[0] not in (1, self.grid.dim):
            raise GridError(f"a field has 1 or {self.grid.dim} components, got {arr.shape[0]}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_spectral(cls, grid: Grid, hat: np.ndarray) -> "Field":
        hat = np.asarray(hat)
        if hat.shape == grid.spectral_shape:
            hat = hat[None]
        return cls(grid, grid.ifft(hat))

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable) -> "Field":
        vals = fn(*grid.coords)
        if isinstance(vals, (tuple, list)):
            vals = np.stack([np.broadcast_to(v, grid.shape) for v in vals])
        return cls(grid, np.broadcast_to(vals, vals.shape if np.ndim(vals) > grid.dim else grid.shape))

    @classmethod
    def zeros(cls, grid: Grid, ncomp: int = 1) -> "Field":
        return cls(grid, np.zeros((ncomp,) + grid.shape))

    @classmethod
    def constant(cls, grid: Grid, value, ncomp: int = 1) -> "Field":
        vals = np.broadcast_to(np.asarray(value, dtype=float).reshape(-1, *([1] * grid.dim)),
                               (ncomp,) + grid.shape)
        return cls(grid, vals)

    @classmethod
    def stack(cls, parts: Sequence["Field"]) -> "Field":
        return cls(parts[0].grid, np.concatenate([p.data for p in parts]))

    @cached_property
    def hat(self) -> np.ndarray:
        h = self.grid.fft(self.data)
        h.setflags(write=False)
        return h

    @property
    def ncomp(self) -> int:
        return self.data.shape[0]

    @property
    def is_scalar(self) -> bool:
        return self.ncomp == 1

    @property
    def values(self) -> np.ndarray:
        """Scalar fields as a plain ``grid.shape`` array; vectors unchanged."""
        return self.data[0] if self.is_scalar else self.data

    def component(self, i: int) -> "Field":
        return Field(self.grid, self.data[i:i + 1])

    def mean(self) -> np.ndarray:
        return self.data.mean(axis=tuple(range(1, self.grid.dim + 1)))

    def sup(self) -> float:
        return float(pointwise_norm(self).max())

    def _check(self, other: "Field"):
        if other.grid != self.grid:
            raise GridError("fields live on different grids")

    def __add__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.data + other.data)
        return Field(self.grid, self.data + other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.data - other.data)
        return Field(self.grid, self.data - other)

    def __rsub__(self, other):
        return Field(self.grid, other - self.data)

    def __mul__(self, c):
        if isinstance(c, Field):
            return multiply(self, c, dealias=False)
        return Field(self.grid, self.data * c)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return Field(self.grid, self.data / c)

    def __neg__(self):
        return Field(self.grid, -self.data)


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Fields sampled at increasing times (uniform spacing not required)."""

    times: np.ndarray
    fields: tuple

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "fields", tuple(self.fields))
        if len(t) == 0:
            raise EmptySeries("time series holds no snapshots")
        if len(t) != len(self.fields):
            raise ValueError("times and fields differ in length")
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")

    def __len__(self):
        return len(self.fields)

    def __getitem__(self, i):
        return self.fields[i]

    @property
    def grid(self) -> Grid:
        return self.fields[0].grid

    @property
    def final(self) -> Field:
        return self.fields[-1]

    def at(self, t: float) -> Field:
        """Linear interpolation in time (constant extrapolation)."""
        ts = self.times
        if t <= ts[0]:
            return self.fields[0]
        if t >= ts[-1]:
            return self.fields[-1]
        i = int(np.searchsorted(ts, t)) - 1
        w = (t - ts[i]) / (ts[i + 1] - ts[i])
        if w == 0.0:
            return self.fields[i]
        return Field(self.grid, (1 - w) * self.fields[i].data + w * self.fields[i + 1].data)

    def map(self, fn) -> "TimeSeries":
        return TimeSeries(self.times, [fn(f) for f in self.fields])


def as_time_function(obj) -> Callable[[float], Field] | None:
    """Accept None, a Field (frozen in time), a TimeSeries or a callable."""
    if obj is None:
        return None
    if isinstance(obj, Field):
        return lambda t: obj
    if isinstance(obj, TimeSeries):
        return obj.at
    if callable(obj):
        return obj
    raise TypeError(f"cannot interpret {type(obj).__name__} as a time-dependent field")


# ---------------------------------------------------------------- transforms

def transform(obj, direction: str = "forward", grid: Grid | None = None):
    """Forward: Field -> coefficient array.  Inverse: coefficients -> Field."""
    if direction == "forward":
        if not isinstance(obj, Field):
            raise TypeError("forward transform expects a Field")
        return obj.hat
    if direction == "inverse":
        if grid is None:
            raise TypeError("inverse transform needs the grid")
        return Field.from_spectral(grid, obj)
    raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")


def apply_multiplier(field: Field, symbol) -> Field:
    """Multiply every Fourier coefficient by ``symbol(k)``.

    ``symbol`` is either an array broadcastable to the spectral shape or a
    callable receiving the tuple of (true) wavenumber arrays.
    """
    grid = field.grid
    if callable(symbol):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            sym = symbol(grid.k_true)
    else:
        sym = symbol
    sym = np.broadcast_to(np.asarray(sym), grid.spectral_shape)
    bad = ~np.isfinite(sym)
    if bad.any():
        where = tuple(int(i[0]) for i in np.nonzero(bad))
        raise SymbolSingularity(f"symbol not finite at lattice index {where}")
    return Field.from_spectral(grid, field.hat * sym)


def gradient(f: Field) -> Field:
    if not f.is_scalar:
        raise GridError("gradient expects a scalar field")
    g = f.grid
    hat = f.hat[0]
    return Field.from_spectral(g, np.stack([1j * kj * hat for kj in g.k]))


def divergence(u: Field) -> Field:
    g = u.grid
    if u.ncomp != g.dim:
        raise GridError("divergence expects a vector field")
    return Field.from_spectral(g, sum(1j * kj * u.hat[j] for j, kj in enumerate(g.k)))


def laplacian(f: Field) -> Field:
    return Field.from_spectral(f.grid, -f.grid.k2 * f.hat)


def lame_hat(hat: np.ndarray, grid: Grid, mu: float, lam: float) -> np.ndarray:
    """Spectral Lame operator mu*Lap + (lam+mu)*grad div on vector coefficients."""
    kdot = sum(kj * hat[j] for j, kj in enumerate(grid.k))
    return np.stack([-mu * grid.k2 * hat[j] - (lam + mu) * kj * kdot
                     for j, kj in enumerate(grid.k)])


def lame_operator(u: Field, visc: ViscosityParams) -> Field:
    if u.ncomp != u.grid.dim:
        raise GridError("the Lame operator acts on vector fields")
    return Field.from_spectral(u.grid, lame_hat(u.hat, u.grid, visc.mu, visc.lam))


def inv_laplacian_mean_free(g: Field) -> Field:
    """h with lap h = g - mean(g) and mean(h) = 0."""
    return Field.from_spectral(g.grid, g.grid.inv_k2 * g.hat)


def longitudinal_projection(u: Field) -> Field:
    """Curl-free part grad lap^{-1} div u (mean excluded)."""
    g = u.grid
    kdot = sum(kj * u.hat[j] for j, kj in enumerate(g.k))
    return Field.from_spectral(g, np.stack([-g.inv_k2 * kj * kdot for kj in g.k]))


# ------------------------------------------------------------------ products

def dealias(f: Field) -> Field:
    return Field.from_spectral(f.grid, f.hat * f.grid.dealias_mask)


def multiply(f: Field, g: Field, dealias: bool = True) -> Field:
    """Pointwise product; a scalar factor broadcasts over vector components."""
    f._check(g)
    if not (f.is_scalar or g.is_scalar or f.ncomp == g.ncomp):
        raise GridError("component counts do not broadcast")
    if dealias:
        mask = f.grid.dealias_mask
        fd = f.grid.ifft(f.hat * mask)
        gd = g.grid.ifft(g.hat * mask)
        prod = f.grid.fft(fd * gd) * mask
        return Field.from_spectral(f.grid, prod)
    return Field(f.grid, f.data * g.data)


def dot(u: Field, v: Field, dealias: bool = True) -> Field:
    return Field(u.grid, multiply(u, v, dealias).data.sum(axis=0, keepdims=True))


def advect(v: Field, a: Field, dealias: bool = True) -> Field:
    """v . grad a, componentwise when a is a vector field."""
    g = v.grid
    if v.ncomp != g.dim:
        raise GridError("the advecting field must be a vector")
    out = np.zeros(a.data.shape)
    for c in range(a.ncomp):
        grad_c = gradient(a.component(c))
        out[c] = dot(v, grad_c, dealias).data[0]
    return Field(g, out)


def pointwise_norm(f: Field) -> np.ndarray:
    if f.is_scalar:
        return np.abs(f.data[0])
    return np.sqrt((f.data**2).sum(axis=0))


def lp_norm(f: Field, p: float) -> float:
    """(vol * mean |f|^p)^(1/p) by the rectangle rule; grid max for p = inf."""
    mag = pointwise_norm(f)
    return lp_norm_array(mag, p, f.grid.volume)


def lp_norm_array(mag: np.ndarray, p: float, volume: float, axes=None) -> np.ndarray:
    """L^p norms of nonnegative magnitudes, reducing over the trailing ``axes``."""
    if axes is None:
        axes = tuple(range(mag.ndim))
    if np.isinf(p):
        return np.max(mag, axis=axes)
    if p == 2:
        return np.sqrt(volume * np.mean(mag * mag, axis=axes))
    if p == 1:
        return volume * np.mean(mag, axis=axes)
    return (volume * np.mean(mag**p, axis=axes)) ** (1.0 / p)


# ------------------------------------------------------------- snapshot I/O

def save_field(field: Field, path) -> None:
    """Binary snapshot: 16-byte header, geometry, then row-major doubles.

    Layout (little endian): ``b"CRITFLOW"``, uint32 version, uint32 zero,
    int64 dim, int64 points_per_axis, int64 components, dim float64 periods,
    then ``components * n**dim`` float64 samples in C order.
    """
    g = field.grid
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC + struct.pack("<II", SNAPSHOT_VERSION, 0))
        fh.write(struct.pack("<qqq", g.dim, g.n, field.ncomp))
        fh.write(struct.pack(f"<{g.dim}d", *g.period))
        fh.write(np.ascontiguousarray(field.data, dtype="<f8").tobytes())


def load_field(path) -> Field:
    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) != 16 or head[:8] != SNAPSHOT_MAGIC:
            raise ValueError(f"{path}: not a critflow field snapshot")
        version, _ = struct.unpack("<II", head[8:])
        if version != SNAPSHOT_VERSION:
            raise ValueError(f"{path}: unsupported snapshot version {version}")
        dim, n, ncomp = struct.unpack("<qqq", fh.read(24))
        period = struct.unpack(f"<{dim}d", fh.read(8 * dim))
        count = ncomp * n**dim
        raw = np.frombuffer(fh.read(8 * count), dtype="<f8")
        if raw.size != count:
            raise ValueError(f"{path}: truncated snapshot")
    grid = Grid(dim=int(dim), n=int(n), period=period)
    return Field(grid, raw.reshape((ncomp,) + grid.shape).astype(np.float64))
