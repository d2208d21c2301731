"""Sensor coverage geometry, sensing functions, noise channels and random
sensor networks.

A sensor at grid cell h sees the target bits inside the closed Euclidean ball
of radius c around h (|S_0|=1, |S_1|=5, |S_2|=13 cells).  The visible bits
form a footprint pattern, indexed with the lexicographically sorted offset
list as bit order, first offset most significant.  A sensing function maps
each pattern to a letter of a finite output alphabet; a noise channel then
corrupts the letter.  Sensor outputs are represented as alphabet indices
throughout (for the identity and count alphabets the index equals the value).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .mrf import GridIndex, TargetField


class CoverageError(ValueError):
    pass


class PatternSizeError(ValueError):
    pass


@lru_cache(maxsize=16)
def coverage_offsets(c: int) -> tuple[tuple[int, int], ...]:
    """Lattice offsets (dr, dc) with dr^2 + dc^2 <= c^2, sorted lexicographically."""
    if c < 0:
        raise CoverageError(f"range must be >= 0, got c={c}")
    offs = [
        (dr, dc)
        for dr in range(-c, c + 1)
        for dc in range(-c, c + 1)
        if dr * dr + dc * dc <= c * c
    ]
    return tuple(sorted(offs))


def footprint_size(c: int) -> int:
    return len(coverage_offsets(c))


def coverage(c: int, h: GridIndex, k: int) -> list[GridIndex]:
    """Cells seen by a sensor at h, in offset order; wraps on the torus."""
    if k < 2 * c + 1:
        raise CoverageError(f"k={k} too small for range c={c}; coverage cells would coincide")
    r, col = h
    return [((r + dr) % k, (col + dc) % k) for dr, dc in coverage_offsets(c)]


@dataclass(frozen=True)
class SensingFunction:
    """Total map from footprint patterns to an ordered finite alphabet.

    table[w] is the alphabet index produced by pattern w; alphabet holds the
    output values in index order.
    """

    kind: str
    c: int
    table: np.ndarray
    alphabet: tuple

    def __post_init__(self):
        tbl = np.array(self.table, dtype=np.int64)
        if tbl.shape != (1 << footprint_size(self.c),):
            raise ValueError(
                f"lookup table must have 2**|S_c| = {1 << footprint_size(self.c)} entries"
            )
        if np.any(tbl < 0) or np.any(tbl >= len(self.alphabet)):
            raise ValueError("table entries must index the alphabet")
        tbl.setflags(write=False)
        object.__setattr__(self, "table", tbl)

    @property
    def n_outputs(self) -> int:
        return len(self.alphabet)

    @classmethod
    def identity(cls) -> "SensingFunction":
        """Pass the single visible bit through; only well typed for c=0."""
        return cls("identity", 0, np.array([0, 1]), (0, 1))

    @classmethod
    def count(cls, c: int) -> "SensingFunction":
        m = footprint_size(c)
        pats = np.arange(1 << m)
        ones = np.array([bin(w).count("1") for w in pats])
        return cls("count", c, ones, tuple(range(m + 1)))

    @classmethod
    def weighted_sum(cls, weights, c: int) -> "SensingFunction":
        """Weighted sum of visible bits, one weight per coverage offset."""
        wts = np.asarray(weights, dtype=float)
        m = footprint_size(c)
        if wts.shape != (m,):
            raise ValueError(f"need {m} weights for range c={c}, got {wts.shape}")
        pats = np.arange(1 << m)
        bits = (pats[:, None] >> np.arange(m - 1, -1, -1)[None, :]) & 1
        sums = bits @ wts
        alphabet = np.unique(sums)
        table = np.searchsorted(alphabet, sums)
        return cls("weighted_sum", c, table, tuple(float(a) for a in alphabet))

    @classmethod
    def lookup(cls, values, c: int) -> "SensingFunction":
        """Arbitrary map given as one output value per pattern index."""
        vals = list(values)
        if len(vals) != 1 << footprint_size(c):
            raise ValueError("lookup needs one value per footprint pattern")
        alphabet = tuple(sorted(set(vals)))
        pos = {v: i for i, v in enumerate(alphabet)}
        return cls("lookup", c, np.array([pos[v] for v in vals]), alphabet)

    @classmethod
    def center_bit(cls, c: int) -> "SensingFunction":
        """Report only the bit at the sensor's own cell."""
        offs = coverage_offsets(c)
        m = len(offs)
        pos = offs.index((0, 0))
        pats = np.arange(1 << m)
        bit = (pats >> (m - 1 - pos)) & 1
        return cls("center_bit", c, bit, (0, 1))


def sense(psi: SensingFunction, pattern) -> object:
    """Evaluate psi on a bit pattern (sequence of 0/1 in offset order)."""
    bits = np.asarray(pattern, dtype=np.int64)
    m = footprint_size(psi.c)
    if bits.shape != (m,):
        raise PatternSizeError(f"pattern must have |S_c| = {m} bits, got {bits.shape}")
    idx = int(bits @ (1 << np.arange(m - 1, -1, -1)))
    return psi.alphabet[psi.table[idx]]


@dataclass(frozen=True)
class NoiseChannel:
    """Row-stochastic matrix P(y|x) over alphabet indices."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2:
            raise ValueError("channel matrix must be 2-dimensional")
        if np.any(m < 0):
            raise ValueError("channel entries must be nonnegative")
        if np.any(np.abs(m.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("each channel row must sum to 1")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def n_inputs(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.matrix.shape[1]

    @classmethod
    def bsc(cls, q: float) -> "NoiseChannel":
        """Binary output flipped with probability q."""
        return cls(np.array([[1.0 - q, q], [q, 1.0 - q]]))

    @classmethod
    def symmetric(cls, m: int, q: float) -> "NoiseChannel":
        """m-ary symmetric noise: keep the letter w.p. 1-q, else uniform error.

        Coincides with bsc(q) at m=2.
        """
        if m < 2:
            raise ValueError("symmetric channel needs at least 2 letters")
        mat = np.full((m, m), q / (m - 1))
        np.fill_diagonal(mat, 1.0 - q)
        return cls(mat)

    @classmethod
    def noiseless(cls, m: int) -> "NoiseChannel":
        return cls(np.eye(m))


@dataclass(frozen=True)
class SensorNetwork:
    """n sensors with range c, placements on the k x k torus, shared sensing
    function and noise channel."""

    k: int
    c: int
    placements: np.ndarray
    psi: SensingFunction
    channel: NoiseChannel

    def __post_init__(self):
        pl = np.array(self.placements, dtype=np.int64).reshape(-1, 2)
        if pl.size and (np.any(pl < 0) or np.any(pl >= self.k)):
            raise ValueError("placements must lie on the grid")
        if self.psi.c != self.c:
            raise ValueError("sensing function range does not match network range")
        if self.channel.n_inputs != self.psi.n_outputs:
            raise ValueError("channel input alphabet does not match sensing function output")
        pl.setflags(write=False)
        object.__setattr__(self, "placements", pl)

    @property
    def n(self) -> int:
        return self.placements.shape[0]


def generate_network(
    k: int, n: int, c: int, psi: SensingFunction, channel: NoiseChannel, seed
) -> SensorNetwork:
    """n placements drawn i.i.d. uniform over the k*k cells."""
    if k < 2 * c + 1:
        raise CoverageError(f"k={k} too small for range c={c}")
    rng = np.random.default_rng(seed)
    cells = rng.integers(0, k * k, size=n)
    placements = np.stack([cells // k, cells % k], axis=1)
    return SensorNetwork(k=k, c=c, placements=placements, psi=psi, channel=channel)


def footprint_pattern_grid(grid: np.ndarray, c: int) -> np.ndarray:
    """Footprint pattern index at every position; works on (..., k, k) stacks."""
    offs = coverage_offsets(c)
    m = len(offs)
    out = np.zeros(grid.shape, dtype=np.int64)
    for i, (dr, dc) in enumerate(offs):
        out += np.roll(np.roll(grid, -dr, axis=-2), -dc, axis=-1).astype(np.int64) << (m - 1 - i)
    return out


def ideal_output(network: SensorNetwork, fld: TargetField) -> np.ndarray:
    """Noise-free sensor outputs as alphabet indices, one per sensor."""
    if fld.k != network.k:
        raise ValueError(f"field side {fld.k} does not match network side {network.k}")
    pat = footprint_pattern_grid(fld.grid, network.c)
    rows, cols = network.placements[:, 0], network.placements[:, 1]
    return network.psi.table[pat[rows, cols]]


def noisy_output(x: np.ndarray, channel: NoiseChannel, seed) -> np.ndarray:
    """One independent channel draw per sensor; deterministic given seed."""
    x = np.asarray(x, dtype=np.int64)
    if x.size and (np.any(x < 0) or np.any(x >= channel.n_inputs)):
        raise ValueError("sensor outputs must index the channel input alphabet")
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(channel.matrix, axis=1)
    u = rng.random(x.shape)
    return np.minimum(
        (u[:, None] > cdf[x]).sum(axis=1), channel.n_outputs - 1
    ).astype(np.int64)
