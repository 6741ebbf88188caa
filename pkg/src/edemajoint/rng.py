"""Portable seeded random streams.

All randomness goes through :class:`Rng`, which draws raw 64-bit words from
the Philox-4x64 counter-based generator and derives every variate from them
with fixed formulas.  numpy's own distribution samplers are avoided on
purpose because their algorithms are allowed to change between releases;
the raw Philox stream is not.
"""

import math

import numpy as np

_TWO_POW_53 = float(2**53)
_MASK64 = (1 << 64) - 1


class Rng:
    """Deterministic random stream keyed by ``(seed, stream)``.

    Distinct ``stream`` values give statistically independent sequences for
    the same seed, which is how per-example generators are derived.
    """

    def __init__(self, seed, stream=0):
        self.seed = int(seed)
        self.stream = int(stream)
        key = (self.seed & _MASK64) | ((self.stream & _MASK64) << 64)
        self._bitgen = np.random.Philox(key=key)

    def spawn(self, stream):
        """Child stream sharing this seed."""
        return Rng(self.seed, stream)

    def raw(self, n):
        return self._bitgen.random_raw(n).astype(np.uint64)

    def uniform(self, size=None):
        """Doubles in [0, 1) with 53 random bits each."""
        n = 1 if size is None else int(np.prod(size))
        u = (self.raw(n) >> np.uint64(11)).astype(np.float64) / _TWO_POW_53
        return float(u[0]) if size is None else u.reshape(size)

    def normal(self, size=None):
        """Standard normals via the Box-Muller transform."""
        n = 1 if size is None else int(np.prod(size))
        m = (n + 1) // 2
        u1 = 1.0 - self.uniform(m)  # (0, 1]
        u2 = self.uniform(m)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2 * math.pi * u2), r * np.sin(2 * math.pi * u2)])[:n]
        return float(z[0]) if size is None else z.reshape(size)

    def integer(self, n):
        """Uniform integer in [0, n) by rejection (no modulo bias)."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = int(self.raw(1)[0])
            if x < limit:
                return x % n

    def choice(self, n, weights=None):
        """Index in [0, n), uniform or proportional to ``weights``."""
        if weights is None:
            return self.integer(n)
        cdf = np.cumsum(np.asarray(weights, dtype=np.float64))
        u = self.uniform() * cdf[-1]
        return min(int(np.searchsorted(cdf, u, side="right")), n - 1)

    def permutation(self, n):
        """Fisher-Yates shuffle of ``range(n)``."""
        perm = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.integer(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return np.asarray(perm, dtype=np.int64)
