"""Reproducible random streams and random smooth fields.

All ensembles in the package draw from :class:`SplitMix64`, a counter-based
generator (Steele, Lea & Flood's SplitMix64 finalizer applied to
``seed + i * 0x9E3779B97F4A7C15``).  The construction is simple enough to be
reimplemented bit-for-bit in any language, so a recorded 64-bit seed fully
determines every ensemble.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Counter-based SplitMix64 stream.

    The i-th output (i = 1, 2, ...) is ``mix(seed + i * golden)`` modulo 2**64,
    which is exactly the sequence produced by the classic stateful
    implementation.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._counter = 0

    def uint64(self, n: int) -> np.ndarray:
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        with np.errstate(over="ignore"):
            return _mix(np.uint64(self.seed) + idx * _GOLDEN)

    def uniform(self, n: int) -> np.ndarray:
        """Doubles in [0, 1) built from the top 53 bits."""
        return (self.uint64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal(self, n: int) -> np.ndarray:
        """Standard normal deviates by the Box-Muller transform."""
        m = (n + 1) // 2
        u1 = 1.0 - self.uniform(m)  # (0, 1]
        u2 = self.uniform(m)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
        return z[:n]

    def spawn(self) -> "SplitMix64":
        """Independent child stream seeded from the next output."""
        return SplitMix64(int(self.uint64(1)[0]))


def random_field(grid, rng: SplitMix64, ncomp: int = 1, slope: float = 4.0,
                 kmax: float | None = None, kmin: float = 0.0,
                 mean_free: bool = False):
    """Random real field with spectrum ``(1 + |k|^2)^(-slope/2)``.

    Content is restricted to the dealiased band (no Nyquist modes), so every
    spectral identity of the package holds exactly on the result.
    """
    from .spectral_core import Field

    shape = (ncomp,) + grid.spectral_shape
    size = int(np.prod(shape))
    coeffs = (rng.normal(size) + 1j * rng.normal(size)).reshape(shape)
    kmag = grid.kmag_true
    amp = (1.0 + kmag**2) ** (-slope / 2.0)
    mask = grid.dealias_mask.copy()
    if kmax is not None:
        mask &= kmag <= kmax
    mask &= kmag >= kmin
    if mean_free:
        mask &= kmag > 0
    hat = coeffs * (amp * mask)
    return Field.from_spectral(grid, hat)
