"""Method-of-types machinery: field types, sensor types, joint types, their
marginalization maps, induced output distributions, entropy and divergence.

Types constructed from actual fields carry exact integer counts, so marginal
identities hold exactly; free points of the optimization polytope carry only
float probabilities and are flagged as not realizable.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import mrf
from .mrf import TargetField
from .sensing import (
    NoiseChannel,
    SensingFunction,
    coverage_offsets,
    footprint_pattern_grid,
    footprint_size,
)


class InconsistentTypesError(ValueError):
    pass


class UndefinedConditionalError(ValueError):
    pass


class WrongDirectionError(ValueError):
    """Raised when a type marginalization is requested in the impossible direction."""


@dataclass(frozen=True)
class PatternSpace:
    """Index space of patterns with a designated center bit per index."""

    kind: str
    c: int
    size: int
    center: np.ndarray

    def __post_init__(self):
        cb = np.asarray(self.center, dtype=np.int64)
        cb.setflags(write=False)
        object.__setattr__(self, "center", cb)


@lru_cache(maxsize=None)
def quintuplet_space() -> PatternSpace:
    t = np.arange(mrf.N_QUINT)
    return PatternSpace("quintuplet", 1, mrf.N_QUINT, t & 1)


@lru_cache(maxsize=None)
def coverage_space(c: int) -> PatternSpace:
    offs = coverage_offsets(c)
    m = len(offs)
    pos = offs.index((0, 0))
    w = np.arange(1 << m)
    return PatternSpace("coverage", c, 1 << m, (w >> (m - 1 - pos)) & 1)


@lru_cache(maxsize=None)
def center_space() -> PatternSpace:
    return PatternSpace("bit", 0, 2, np.array([0, 1]))


@lru_cache(maxsize=None)
def _restriction_to_quintuplet(c: int) -> np.ndarray:
    """Map each range-c footprint pattern to the quintuplet it restricts to."""
    if c < 1:
        raise WrongDirectionError("only ranges c >= 1 cover the full quintuplet")
    offs = coverage_offsets(c)
    m = len(offs)
    w = np.arange(1 << m)

    def bit(off):
        return (w >> (m - 1 - offs.index(off))) & 1

    return (
        16 * bit((-1, 0)) + 8 * bit((0, 1)) + 4 * bit((1, 0)) + 2 * bit((0, -1)) + bit((0, 0))
    )


class TypeVector:
    """Distribution over a pattern space, optionally with exact counts."""

    __slots__ = ("space", "counts", "total", "probs", "realizable")

    def __init__(self, space: PatternSpace, counts=None, probs=None, realizable=None):
        self.space = space
        if counts is not None:
            cts = np.asarray(counts, dtype=np.int64)
            if cts.shape != (space.size,):
                raise ValueError(f"expected {space.size} count bins, got {cts.shape}")
            self.counts = cts
            self.total = int(cts.sum())
            self.probs = cts / self.total
        else:
            pv = np.asarray(probs, dtype=float)
            if pv.shape != (space.size,):
                raise ValueError(f"expected {space.size} probabilities, got {pv.shape}")
            if abs(pv.sum() - 1.0) > 1e-9 or np.any(pv < -1e-15):
                raise ValueError("probs must be a distribution")
            self.counts = None
            self.total = None
            self.probs = np.maximum(pv, 0.0)
        self.realizable = (counts is not None) if realizable is None else realizable


class JointType:
    """Joint distribution over pattern pairs, optionally with exact counts."""

    __slots__ = ("space", "counts", "total", "probs", "realizable")

    def __init__(self, space: PatternSpace, counts=None, probs=None, realizable=None):
        self.space = space
        n = space.size
        if counts is not None:
            cts = np.asarray(counts, dtype=np.int64)
            if cts.shape != (n, n):
                raise ValueError(f"expected {n}x{n} count matrix, got {cts.shape}")
            self.counts = cts
            self.total = int(cts.sum())
            self.probs = cts / self.total
        else:
            pv = np.asarray(probs, dtype=float)
            if pv.shape != (n, n):
                raise ValueError(f"expected {n}x{n} probabilities, got {pv.shape}")
            if abs(pv.sum() - 1.0) > 1e-9 or np.any(pv < -1e-15):
                raise ValueError("probs must be a joint distribution")
            self.counts = None
            self.total = None
            self.probs = np.maximum(pv, 0.0)
        self.realizable = (counts is not None) if realizable is None else realizable

    def row_marginal(self) -> TypeVector:
        if self.counts is not None:
            return TypeVector(self.space, counts=self.counts.sum(axis=1))
        return TypeVector(self.space, probs=self.probs.sum(axis=1), realizable=self.realizable)

    def col_marginal(self) -> TypeVector:
        if self.counts is not None:
            return TypeVector(self.space, counts=self.counts.sum(axis=0))
        return TypeVector(self.space, probs=self.probs.sum(axis=0), realizable=self.realizable)


def _pattern_indices(fld: TargetField, c: int) -> np.ndarray:
    if fld.k < 2 * c + 1:
        raise ValueError(f"k={fld.k} too small for range c={c}")
    return footprint_pattern_grid(fld.grid, c).ravel()


def sensor_type(fld: TargetField, c: int) -> TypeVector:
    """Normalized histogram of range-c footprint patterns over all positions."""
    counts = np.bincount(_pattern_indices(fld, c), minlength=1 << footprint_size(c))
    return TypeVector(coverage_space(c), counts=counts)


def joint_sensor_type(f_i: TargetField, f_j: TargetField, c: int) -> JointType:
    """Pairwise footprint-pattern histogram of two fields on the same grid."""
    if f_i.k != f_j.k:
        raise ValueError(f"field sides differ: {f_i.k} vs {f_j.k}")
    n = 1 << footprint_size(c)
    wi = _pattern_indices(f_i, c)
    wj = _pattern_indices(f_j, c)
    counts = np.bincount(wi * n + wj, minlength=n * n).reshape(n, n)
    return JointType(coverage_space(c), counts=counts)


def joint_field_type(f_i: TargetField, f_j: TargetField) -> JointType:
    """Pairwise quintuplet histogram of two fields (the c=0 theorem's variable)."""
    if f_i.k != f_j.k:
        raise ValueError(f"field sides differ: {f_i.k} vs {f_j.k}")
    qi = mrf.quintuplet_grid(f_i.grid).ravel()
    qj = mrf.quintuplet_grid(f_j.grid).ravel()
    n = mrf.N_QUINT
    counts = np.bincount(qi * n + qj, minlength=n * n).reshape(n, n)
    return JointType(quintuplet_space(), counts=counts)


def lambda_marginals(joint: JointType) -> tuple[TypeVector, TypeVector]:
    """Row and column marginals (the two single-field types)."""
    return joint.row_marginal(), joint.col_marginal()


def center_pair(joint: JointType) -> JointType:
    """Marginalize each pattern to its center bit; a 2x2 joint type."""
    cb = joint.space.center
    if joint.counts is not None:
        out = np.zeros((2, 2), dtype=np.int64)
        np.add.at(out, (cb[:, None], cb[None, :]), joint.counts)
        return JointType(center_space(), counts=out)
    out = np.zeros((2, 2))
    np.add.at(out, (cb[:, None], cb[None, :]), joint.probs)
    return JointType(center_space(), probs=out, realizable=joint.realizable)


def distortion(joint: JointType) -> float:
    """Off-diagonal center mass; equals the normalized Hamming distance of the
    underlying field pair when the joint type is realizable."""
    cp = center_pair(joint)
    return float(cp.probs[0, 1] + cp.probs[1, 0])


def gamma_to_phi(gamma: TypeVector, c: int) -> TypeVector:
    """Field type obtained by restricting range-c footprints (c >= 1) to the
    center-plus-neighbors quintuplet; for c=1 this is a pure re-indexing."""
    if c < 1:
        raise WrongDirectionError("for c=0 the field type determines gamma, not vice versa")
    if gamma.space.kind != "coverage" or gamma.space.c != c:
        raise ValueError("gamma must live on the range-c coverage space")
    restrict = _restriction_to_quintuplet(c)
    if gamma.counts is not None:
        counts = np.bincount(restrict, weights=gamma.counts, minlength=mrf.N_QUINT)
        return TypeVector(quintuplet_space(), counts=counts.astype(np.int64))
    probs = np.bincount(restrict, weights=gamma.probs, minlength=mrf.N_QUINT)
    return TypeVector(quintuplet_space(), probs=probs, realizable=gamma.realizable)


def phi_to_gamma(phi: TypeVector) -> TypeVector:
    """Range-0 sensor type (center-bit marginal) of a field type."""
    cb = phi.space.center
    if phi.counts is not None:
        counts = np.array([phi.counts[cb == 0].sum(), phi.counts[cb == 1].sum()])
        return TypeVector(coverage_space(0), counts=counts)
    probs = np.array([phi.probs[cb == 0].sum(), phi.probs[cb == 1].sum()])
    return TypeVector(coverage_space(0), probs=probs, realizable=phi.realizable)


def _probs_of(x) -> np.ndarray:
    if isinstance(x, (TypeVector, JointType)):
        return x.probs
    return np.asarray(x, dtype=float)


def output_dist(gamma, psi: SensingFunction) -> np.ndarray:
    """Single-sensor ideal output law P(x) = sum of gamma over patterns with
    psi(pattern) = x."""
    g = _probs_of(gamma)
    if g.shape != psi.table.shape:
        raise ValueError("gamma does not match the sensing function's pattern space")
    return np.bincount(psi.table, weights=g, minlength=psi.n_outputs)


def joint_output_dist(lam, psi: SensingFunction) -> np.ndarray:
    """Joint law of the two sensors' ideal outputs under a joint pattern type."""
    L = _probs_of(lam)
    nx = psi.n_outputs
    out = np.zeros((nx, nx))
    np.add.at(out, (psi.table[:, None], psi.table[None, :]), L)
    return out


def cond_output_dist(lam, psi: SensingFunction, x=None) -> np.ndarray:
    """Conditional output law P(x_j | x_i) induced by a joint pattern type.

    Rows with zero marginal mass are undefined and returned as NaN; asking for
    such a row explicitly (via x) raises UndefinedConditionalError.
    """
    J = joint_output_dist(lam, psi)
    marg = J.sum(axis=1)
    cond = np.full_like(J, np.nan)
    pos = marg > 0
    cond[pos] = J[pos] / marg[pos, None]
    if x is not None:
        if not pos[x]:
            raise UndefinedConditionalError(f"conditioning value {x} has zero probability")
        return cond[x]
    return cond


def pxy(gamma, psi: SensingFunction, channel: NoiseChannel) -> np.ndarray:
    """Joint law of a sensor's ideal output and its own noisy reading."""
    g = output_dist(gamma, psi)
    if channel.n_inputs != psi.n_outputs:
        raise ValueError("channel inputs do not match sensing outputs")
    return g[:, None] * channel.matrix


def qxy(gamma, lam, psi: SensingFunction, channel: NoiseChannel) -> np.ndarray:
    """Joint law of one field's ideal output and the noisy reading generated
    by the other field, under a joint pattern type."""
    J = joint_output_dist(lam, psi)
    g = output_dist(gamma, psi)
    if np.max(np.abs(J.sum(axis=1) - g)) > 1e-9:
        raise InconsistentTypesError("joint type row marginal does not match gamma")
    return J @ channel.matrix


def entropy(dist) -> float:
    """Shannon entropy in bits; 0 log 0 = 0."""
    p = _probs_of(dist).ravel()
    nz = p > 0
    return float(-np.sum(p[nz] * np.log2(p[nz])))


def kl(p, q) -> float:
    """Kullback-Leibler divergence in bits; +inf when p puts mass where q has none."""
    pv = _probs_of(p).ravel()
    qv = _probs_of(q).ravel()
    if pv.shape != qv.shape:
        raise ValueError("distributions must have equal support size")
    nz = pv > 0
    if np.any(qv[nz] <= 0):
        return float("inf")
    return float(np.sum(pv[nz] * np.log2(pv[nz] / qv[nz])))


def _row_bincounts(codes: np.ndarray, nbins: int) -> np.ndarray:
    """Per-row histogram of integer codes; codes has shape (rows, positions)."""
    rows = codes.shape[0]
    out = np.zeros((rows, nbins), dtype=np.int64)
    np.add.at(out, (np.arange(rows)[:, None], codes), 1)
    return out


def alpha_count(phi: TypeVector, k: int) -> int:
    """Number of k x k fields with field type phi, by exhaustive enumeration."""
    target = _exact_counts(phi, k * k)
    grids = mrf._all_field_grids(k)
    q = mrf.quintuplet_grid(grids).reshape(grids.shape[0], -1)
    counts = _row_bincounts(q, mrf.N_QUINT)
    return int(np.sum(np.all(counts == target[None, :], axis=1)))


def beta_count(f_i: TargetField, lam: JointType, c: int) -> int:
    """Number of fields f_j whose joint type with f_i equals lam (k <= 4)."""
    k = f_i.k
    target = _exact_joint_counts(lam, k * k)
    grids = mrf._all_field_grids(k)
    n = lam.space.size
    if lam.space.kind == "coverage":
        wi = _pattern_indices(f_i, c)
        wj = footprint_pattern_grid(grids, c).reshape(grids.shape[0], -1)
    else:
        wi = mrf.quintuplet_grid(f_i.grid).ravel()
        wj = mrf.quintuplet_grid(grids).reshape(grids.shape[0], -1)
    pair = wi[None, :] * n + wj
    counts = _row_bincounts(pair, n * n)
    return int(np.sum(np.all(counts == target.ravel()[None, :], axis=1)))


def _exact_counts(tv: TypeVector, total: int) -> np.ndarray:
    if tv.counts is not None:
        if tv.total != total:
            raise ValueError(f"type normalizer {tv.total} does not match k^2={total}")
        return tv.counts
    scaled = tv.probs * total
    counts = np.rint(scaled).astype(np.int64)
    if np.max(np.abs(scaled - counts)) > 1e-9 or counts.sum() != total:
        raise ValueError("type probabilities are not integer multiples of 1/k^2")
    return counts


def _exact_joint_counts(jt: JointType, total: int) -> np.ndarray:
    if jt.counts is not None:
        if jt.total != total:
            raise ValueError(f"type normalizer {jt.total} does not match k^2={total}")
        return jt.counts
    scaled = jt.probs * total
    counts = np.rint(scaled).astype(np.int64)
    if np.max(np.abs(scaled - counts)) > 1e-9 or counts.sum() != total:
        raise ValueError("joint type probabilities are not integer multiples of 1/k^2")
    return counts
