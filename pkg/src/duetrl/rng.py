"""Counter-based random streams built on the splitmix64 mixer.

Every stream is an array of independent 64-bit substream states advanced in
lockstep, so draws for substream i depend only on substream i's state.  This
makes batched simulation bit-identical to stepping the same instances one at
a time, which the vectorized-equivalence tests rely on.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U53 = np.float64(1.0 / (1 << 53))


def mix64(x: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer, elementwise on uint64 arrays."""
    z = x.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= _MIX1
    z ^= z >> np.uint64(27)
    z *= _MIX2
    z ^= z >> np.uint64(31)
    return z


def derive_seed(base_seed: int, index: int) -> int:
    """Child seed for substream `index` of `base_seed`.

    child = mix64(base + GOLDEN * (index + 1)); documented so external tools
    can reproduce per-instance and per-seed streams.
    """
    v = np.asarray([base_seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    v = v + _GOLDEN * np.asarray([index + 1], dtype=np.uint64)
    return int(mix64(v)[0])


class RngStream:
    """A batch of splitmix64 substreams advanced in lockstep.

    `state` has shape (n,).  All draw methods return arrays with leading
    dimension n and advance every substream by the same number of counter
    increments, so substreams never interact.
    """

    def __init__(self, seeds):
        arr = np.atleast_1d(np.asarray(seeds, dtype=np.uint64)).copy()
        if arr.ndim != 1:
            raise ValueError("seeds must be a scalar or 1-D")
        self.state = arr

    @classmethod
    def from_base(cls, base_seed: int, n: int) -> "RngStream":
        return cls([derive_seed(base_seed, i) for i in range(n)])

    @property
    def n(self) -> int:
        return self.state.shape[0]

    def copy(self) -> "RngStream":
        return RngStream(self.state)

    def u64(self) -> np.ndarray:
        self.state += _GOLDEN
        return mix64(self.state)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        """One float64 per substream, uniform on [lo, hi)."""
        u = (self.u64() >> np.uint64(11)).astype(np.float64) * _U53
        return lo + (hi - lo) * u

    def uniforms(self, k: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        """(n, k) uniforms; column j is the j-th draw of every substream."""
        cols = [self.uniform(lo, hi) for _ in range(k)]
        return np.stack(cols, axis=1)

    def normal(self) -> np.ndarray:
        """One standard normal per substream (Box-Muller, cosine branch)."""
        # u1 in (0, 1] so the log is finite.
        u1 = ((self.u64() >> np.uint64(11)).astype(np.float64) + 1.0) * _U53
        u2 = (self.u64() >> np.uint64(11)).astype(np.float64) * _U53
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)

    def normals(self, k: int) -> np.ndarray:
        cols = [self.normal() for _ in range(k)]
        return np.stack(cols, axis=1)
