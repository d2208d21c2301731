"""Binary target fields on a k x k torus and their pairwise-MRF Gibbs law.

The field distribution factorizes over single sites and adjacent pairs with
circular boundary conditions.  Every site together with its four neighbors
(N, E, S, W) forms a quintuplet; the 32 possible quintuplet values index all
per-field statistics used downstream.

Quintuplet bit order is fixed as (N, E, S, W, center), most significant bit
first: index = 16*N + 8*E + 4*S + 2*W + center.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

GridIndex = tuple[int, int]

N_QUINT = 32


class InvalidGridError(ValueError):
    pass


class EnumerationTooLargeError(ValueError):
    """Raised when an exhaustive 2**(k*k) enumeration is requested for k > 4."""


def neighbors(h: GridIndex, k: int) -> tuple[GridIndex, GridIndex, GridIndex, GridIndex]:
    """Four torus neighbors of h in the order N, E, S, W."""
    if k < 3:
        raise InvalidGridError(f"grid side must be >= 3, got k={k}")
    r, c = h
    return ((r - 1) % k, c), (r, (c + 1) % k), ((r + 1) % k, c), (r, (c - 1) % k)


@dataclass(frozen=True)
class MRFModel:
    """Node prior P_F over {0,1} and edge conditional P(a|b).

    p_edge[a, b] is the probability of value a at a site given value b at an
    adjacent site; each column (fixed b) sums to 1.  Entries may be zero only
    for degenerate limit models; the capacity theory assumes positivity.
    """

    p_node: np.ndarray
    p_edge: np.ndarray

    def __post_init__(self):
        pn = np.array(self.p_node, dtype=float)
        pe = np.array(self.p_edge, dtype=float)
        if pn.shape != (2,) or pe.shape != (2, 2):
            raise ValueError("p_node must be a 2-vector and p_edge a 2x2 matrix")
        if np.any(pn < 0) or np.any(pe < 0):
            raise ValueError("probabilities must be nonnegative")
        if abs(pn.sum() - 1.0) > 1e-12:
            raise ValueError("p_node must sum to 1")
        if np.any(np.abs(pe.sum(axis=0) - 1.0) > 1e-12):
            raise ValueError("each p_edge column (fixed conditioning value) must sum to 1")
        pn.setflags(write=False)
        pe.setflags(write=False)
        object.__setattr__(self, "p_node", pn)
        object.__setattr__(self, "p_edge", pe)

    @classmethod
    def from_p(cls, p: float) -> "MRFModel":
        """The one-parameter family P_F=[p, 1-p], P(a|b) = p if a==b else 1-p."""
        if not 0.0 < p < 1.0:
            raise ValueError(f"p must be in (0, 1), got {p}")
        return cls(np.array([p, 1.0 - p]), np.array([[p, 1.0 - p], [1.0 - p, p]]))

    @property
    def strictly_positive(self) -> bool:
        return bool(np.all(self.p_node > 0) and np.all(self.p_edge > 0))


@dataclass(frozen=True)
class TargetField:
    """A k x k binary grid; the message the sensor network encodes."""

    grid: np.ndarray

    def __post_init__(self):
        g = np.array(self.grid, dtype=np.uint8)  # own copy; callers keep write access
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise InvalidGridError(f"field must be square, got shape {g.shape}")
        if g.shape[0] < 3:
            raise InvalidGridError(f"grid side must be >= 3, got k={g.shape[0]}")
        if np.any(g > 1):
            raise ValueError("field entries must be 0 or 1")
        g.setflags(write=False)
        object.__setattr__(self, "grid", g)

    @property
    def k(self) -> int:
        return self.grid.shape[0]

    @classmethod
    def zeros(cls, k: int) -> "TargetField":
        return cls(np.zeros((k, k), dtype=np.uint8))

    @classmethod
    def ones(cls, k: int) -> "TargetField":
        return cls(np.ones((k, k), dtype=np.uint8))

    @classmethod
    def from_index(cls, index: int, k: int) -> "TargetField":
        """Field from its canonical index (raster-order bits, cell (0,0) most
        significant)."""
        bits = (index >> np.arange(k * k - 1, -1, -1)) & 1
        return cls(bits.astype(np.uint8).reshape(k, k))

    @property
    def index(self) -> int:
        bits = self.grid.ravel().astype(object)
        return int(sum(b << s for b, s in zip(bits, range(self.k * self.k - 1, -1, -1))))

    def shifted(self, dr: int, dc: int) -> "TargetField":
        return TargetField(np.roll(np.roll(self.grid, dr, axis=0), dc, axis=1))

    def complement(self) -> "TargetField":
        return TargetField(1 - self.grid)


def quintuplet(fld: TargetField, h: GridIndex) -> int:
    """Pattern index in [0, 32) of the quintuplet centered at h."""
    g = fld.grid
    (rn, cn), (re, ce), (rs, cs), (rw, cw) = neighbors(h, fld.k)
    r, c = h
    return int(16 * g[rn, cn] + 8 * g[re, ce] + 4 * g[rs, cs] + 2 * g[rw, cw] + g[r, c])


def quintuplet_grid(grid: np.ndarray) -> np.ndarray:
    """Quintuplet index at every position; works on (..., k, k) stacks."""
    n = np.roll(grid, 1, axis=-2)
    e = np.roll(grid, -1, axis=-1)
    s = np.roll(grid, -1, axis=-2)
    w = np.roll(grid, 1, axis=-1)
    return (16 * n + 8 * e + 4 * s + 2 * w + grid).astype(np.int64)


def quintuplet_counts(fld: TargetField) -> np.ndarray:
    """Exact 32-bin histogram of quintuplet indices over all k*k positions."""
    return np.bincount(quintuplet_grid(fld.grid).ravel(), minlength=N_QUINT)


def field_type(fld: TargetField):
    """Normalized quintuplet histogram of the field (a 32-dim type vector)."""
    from .types import TypeVector, quintuplet_space

    return TypeVector(quintuplet_space(), counts=quintuplet_counts(fld))


def compute_W(model: MRFModel) -> float:
    """Normalizer of the single-site clique factor: the quintuplet weights
    P_F(center) * prod_r P(center | neighbor_r) summed over all 32 values."""
    return float(quintuplet_weights(model).sum())


def quintuplet_weights(model: MRFModel) -> np.ndarray:
    """Unnormalized weight P_F(t5) * prod_{r=1..4} P(t5|t_r) for each of the
    32 quintuplets, in the fixed (N,E,S,W,center) bit order."""
    t = np.arange(N_QUINT)
    nb = np.stack([(t >> 4) & 1, (t >> 3) & 1, (t >> 2) & 1, (t >> 1) & 1])
    center = t & 1
    w = model.p_node[center].astype(float)
    for r in range(4):
        w = w * model.p_edge[center, nb[r]]
    return w


def log2_quintuplet_weights(model: MRFModel) -> np.ndarray:
    """log2 of quintuplet_weights / W; -inf entries are legitimate for
    degenerate models."""
    w = quintuplet_weights(model)
    with np.errstate(divide="ignore"):
        return np.log2(w) - np.log2(w.sum())


def log_prob_unnorm(fld: TargetField, model: MRFModel) -> float:
    """log2 of the Gibbs product over all sites, without the 1/Z factor.

    Computed in the factorized per-site form; it equals the type form
    k^2 * sum_t phi_t * log2((1/W) P_F(t5) prod_r P(t5|t_r)) up to rounding.
    """
    lw = log2_quintuplet_weights(model)
    q = quintuplet_grid(fld.grid)
    return float(lw[q].sum())


def _all_field_grids(k: int) -> np.ndarray:
    """All 2**(k*k) fields as a (2**(k*k), k, k) bit array, canonically ordered."""
    if k > 4:
        raise EnumerationTooLargeError(f"2**(k*k) enumeration needs k <= 4, got k={k}")
    n = k * k
    idx = np.arange(1 << n, dtype=np.uint32)
    bits = (idx[:, None] >> np.arange(n - 1, -1, -1)[None, :]) & 1
    return bits.astype(np.uint8).reshape(-1, k, k)


def _log_probs_unnorm_all(model: MRFModel, k: int) -> np.ndarray:
    grids = _all_field_grids(k)
    lw = log2_quintuplet_weights(model)
    q = quintuplet_grid(grids)
    return lw[q].reshape(q.shape[0], -1).sum(axis=1)


def _logsumexp2(a: np.ndarray) -> float:
    m = np.max(a)
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log2(np.sum(np.exp2(a - m))))


def partition_Z(model: MRFModel, k: int) -> float:
    """Exact normalization constant by exhaustive enumeration (k <= 4)."""
    return float(2.0 ** _logsumexp2(_log_probs_unnorm_all(model, k)))


def exact_distribution(model: MRFModel, k: int) -> np.ndarray:
    """Probability of every field, indexed canonically (k <= 4)."""
    lp = _log_probs_unnorm_all(model, k)
    return np.exp2(lp - _logsumexp2(lp))


@lru_cache(maxsize=8)
def _site_conditional_table(p_node_t: tuple, p_edge_t: tuple) -> np.ndarray:
    """P(site=1 | 4 neighbor bits) for each neighbor code 8N+4E+2S+W.

    The conditional keeps every Gibbs factor containing the site: its own
    group P_F(b) prod_v P(b|f_v) and the factor P(f_v|b) from each neighbor's
    group.
    """
    pn = np.asarray(p_node_t)
    pe = np.asarray(p_edge_t).reshape(2, 2)
    table = np.empty(16)
    for code in range(16):
        nb = [(code >> 3) & 1, (code >> 2) & 1, (code >> 1) & 1, code & 1]
        w = [pn[b] * np.prod([pe[b, v] * pe[v, b] for v in nb]) for b in (0, 1)]
        tot = w[0] + w[1]
        if tot <= 0:
            raise ValueError("degenerate model: site conditional has zero mass")
        table[code] = w[1] / tot
    return table


def gibbs_sample_batch(
    model: MRFModel,
    k: int,
    burn_in_sweeps: int,
    seed,
    n_chains: int,
    scan: str = "raster",
) -> np.ndarray:
    """Final states of n_chains independent single-site Gibbs chains.

    Returns a (n_chains, k, k) uint8 array.  Deterministic given
    (seed, burn_in_sweeps, n_chains, scan).
    """
    if k < 3:
        raise InvalidGridError(f"grid side must be >= 3, got k={k}")
    if burn_in_sweeps < 1:
        raise ValueError("burn_in_sweeps must be >= 1")
    if scan not in ("raster", "random"):
        raise ValueError(f"unknown scan order {scan!r}")
    rng = np.random.default_rng(seed)
    table = _site_conditional_table(tuple(model.p_node), tuple(model.p_edge.ravel()))
    g = rng.integers(0, 2, size=(n_chains, k, k), dtype=np.uint8)
    sites = [(r, c) for r in range(k) for c in range(k)]
    for _ in range(burn_in_sweeps):
        if scan == "random":
            order = rng.permutation(len(sites))
        else:
            order = range(len(sites))
        for i in order:
            r, c = sites[i]
            code = (
                8 * g[:, (r - 1) % k, c]
                + 4 * g[:, r, (c + 1) % k]
                + 2 * g[:, (r + 1) % k, c]
                + g[:, r, (c - 1) % k]
            )
            g[:, r, c] = rng.random(n_chains) < table[code]
    return g


def gibbs_sample(model: MRFModel, k: int, burn_in_sweeps: int, seed, scan: str = "raster") -> TargetField:
    """One field drawn by raster-order (or random-scan) Gibbs sweeps."""
    g = gibbs_sample_batch(model, k, burn_in_sweeps, seed, n_chains=1, scan=scan)
    return TargetField(g[0])
