"""Capacity lower bounds C_LB(D) for random sensor networks over pairwise
MRFs, via constrained fractional optimization over relaxed type polytopes.

Two bound variants are evaluated, one for range-1 sensors (the optimization
variable is a 32x32 joint type of footprint patterns) and one for range-0
sensors (the variable is a 32x32 joint field type whose center-pair marginal
drives the sensors).  Both share one program form: rows of the variable are
pinned to the typical field type, a half-space keeps the center distortion at
least D, the numerator is the divergence between the matched and mismatched
output laws, the denominator an entropy bracket.  Range c >= 2 is not
optimized (the footprint alphabet has 2^13 patterns); simulation still
supports it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import optim, types
from .mrf import MRFModel, N_QUINT
from .mrf import quintuplet_weights, _log_probs_unnorm_all, _logsumexp2
from .sensing import NoiseChannel, SensingFunction
from .types import TypeVector, JointType, quintuplet_space, coverage_space


class InfeasibleError(ValueError):
    pass


def typical_field_type(model: MRFModel) -> TypeVector:
    """The quintuplet distribution proportional to P_F(t5) prod_r P(t5|t_r);
    the field-type law concentrates here as the grid grows.  Realizability as
    an actual field type is not asserted."""
    w = quintuplet_weights(model)
    return TypeVector(quintuplet_space(), probs=w / w.sum(), realizable=False)


def type_prob_bound(phi, model: MRFModel, k: int) -> float:
    """2^(k^2 (-D(phi||phi~) - H(phi))) where phi~ is the typical type.

    This is the single-field probability bound with the 1/Z factor dropped;
    field_bound_report checks it against exact probabilities at k <= 4.
    """
    phi_p = types._probs_of(phi)
    phi_t = typical_field_type(model).probs
    exponent = -types.kl(phi_p, phi_t) - types.entropy(phi_p)
    return float(2.0 ** (k * k * exponent))


@dataclass(frozen=True)
class FieldBoundReport:
    k: int
    log2_Z: float
    violations: int
    total: int
    worst_ratio: float


def field_bound_report(model: MRFModel, k: int) -> FieldBoundReport:
    """Compare the dropped-Z probability bound with exact field probabilities.

    The bound holds per field iff Z >= 1; small grids routinely have Z < 1,
    so violations are reported, not asserted away.
    """
    lp = _log_probs_unnorm_all(model, k)
    log_z = _logsumexp2(lp)
    exact = np.exp2(lp - log_z)
    bound = np.exp2(lp)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, exact / bound, np.where(exact > 0, np.inf, 1.0))
    viol = int(np.sum(exact > bound * (1 + 1e-9)))
    return FieldBoundReport(
        k=k,
        log2_Z=float(log_z),
        violations=viol,
        total=exact.size,
        worst_ratio=float(np.max(ratio)),
    )


# ---------------------------------------------------------------------------
# entropy brackets of the two bound denominators
# ---------------------------------------------------------------------------


def _sum_xlogy(p: np.ndarray, q: np.ndarray) -> float:
    """sum p * log2 q with 0 * log 0 = 0; -inf when p > 0 meets q = 0."""
    nz = p > 0
    if np.any(q[nz] <= 0):
        return float("-inf")
    return float(np.sum(p[nz] * np.log2(q[nz])))


def denom_c0(mu, phi_star) -> float:
    """Denominator of the range-0 bound: H(mu) + sum_t phi_j(t) log2 phi*(t),
    phi_j the column marginal of mu (cross-entropy form)."""
    mu_p = types._probs_of(mu)
    ps = types._probs_of(phi_star)
    return types.entropy(mu_p) + _sum_xlogy(mu_p.sum(axis=0), ps)


def denom_c0_direct(mu, phi_star) -> float:
    """Same quantity via the defining expression H(mu) - D(phi_j||phi*) - H(phi_j)."""
    mu_p = types._probs_of(mu)
    phi_j = mu_p.sum(axis=0)
    return types.entropy(mu_p) - types.kl(phi_j, phi_star) - types.entropy(phi_j)


def denom_c1(lam, gamma_i, phi_star, phi_j) -> float:
    """Denominator of the range-1 bound:
    H(lam) - H(gamma_i) + H(phi*) + sum_t phi_j(t) log2 phi*(t)."""
    lam_p = types._probs_of(lam)
    ps = types._probs_of(phi_star)
    return (
        types.entropy(lam_p)
        - types.entropy(gamma_i)
        + types.entropy(ps)
        + _sum_xlogy(types._probs_of(phi_j), ps)
    )


def denom_c1_direct(lam, gamma_i, phi_star, phi_j) -> float:
    """Same quantity via H(lam) - H(gamma_i) + H(phi*) - D(phi_j||phi*) - H(phi_j)."""
    pj = types._probs_of(phi_j)
    return (
        types.entropy(lam)
        - types.entropy(gamma_i)
        + types.entropy(phi_star)
        - types.kl(pj, phi_star)
        - types.entropy(pj)
    )


# ---------------------------------------------------------------------------
# pairwise error exponent
# ---------------------------------------------------------------------------


def pairwise_exponent(rho: float, lam, gamma_i, psi: SensingFunction, channel: NoiseChannel) -> float:
    """Chernoff-style exponent of the pairwise error contribution.

    E(0, lam) = 0 and dE/drho at 0 equals kl(pxy, qxy).
    """
    J = types.joint_output_dist(lam, psi)
    g = types.output_dist(gamma_i, psi)
    if np.max(np.abs(J.sum(axis=1) - g)) > 1e-9:
        raise types.InconsistentTypesError("joint type row marginal does not match gamma")
    return _exponent_from_joint(rho, J, g, channel.matrix)


def _exponent_from_joint(rho: float, J: np.ndarray, g: np.ndarray, ch: np.ndarray) -> float:
    s = 1.0 / (1.0 + rho)
    chs = ch ** s
    inner = J @ chs                       # (x_i, y)
    pos = g > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = (
            g[pos, None] ** (1.0 - rho)
            * chs[pos, :]
            * np.power(inner[pos, :], rho)
        )
    total = float(np.sum(terms))
    return -float(np.log2(total))


# ---------------------------------------------------------------------------
# the shared ratio program
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OptimizerOptions:
    theta_tol: float = 1e-9
    inner_tol: float = 1e-7
    eps_dist: float = 0.0
    restarts: int = 16
    max_iters: int = 60
    inner_iters: int = 4000
    seed: int = 0

    def __post_init__(self):
        if self.theta_tol <= 0 or self.inner_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.eps_dist < 0:
            raise ValueError("eps_dist must be >= 0")


@dataclass(frozen=True)
class CapacityQuery:
    model: MRFModel
    c: int
    psi: SensingFunction
    channel: NoiseChannel
    D: float
    options: OptimizerOptions = field(default_factory=OptimizerOptions)


@dataclass(frozen=True)
class CapacityResult:
    """Outcome of one bound evaluation.

    value is in target positions per sensor; infinity with unconstrained=True
    means no feasible point had a positive denominator, so this distortion
    imposes no rate constraint.
    """

    value: float
    witness: JointType
    phi_j: TypeVector
    gamma_i: TypeVector
    certificate: float
    gap: float
    iterations: int
    witness_distortion: float
    unconstrained: bool


_QUINT_CENTER_MASK = None


def _center_mask() -> np.ndarray:
    global _QUINT_CENTER_MASK
    if _QUINT_CENTER_MASK is None:
        t = np.arange(N_QUINT)
        _QUINT_CENTER_MASK = ((t[:, None] & 1) != (t[None, :] & 1)).astype(float)
    return _QUINT_CENTER_MASK


def _c1_pattern_of_quint() -> np.ndarray:
    """Bijection from quintuplet index to the range-1 footprint pattern index."""
    restrict = types._restriction_to_quintuplet(1)
    perm = np.empty(N_QUINT, dtype=np.int64)
    perm[restrict] = np.arange(N_QUINT)
    return perm


def _build_program(model: MRFModel, c: int, psi: SensingFunction, channel: NoiseChannel, D: float, eps_dist: float) -> optim.RatioProgram:
    if not model.strictly_positive:
        raise InfeasibleError("capacity bounds require a strictly positive model")
    if not 0.0 <= D < 1.0:
        raise InfeasibleError(f"distortion must lie in [0, 1), got D={D}")
    if psi.c != c:
        raise ValueError(f"sensing function has range {psi.c}, expected {c}")
    if channel.n_inputs != psi.n_outputs:
        raise ValueError("channel input alphabet does not match sensing function output")
    ps = typical_field_type(model).probs
    t = np.arange(N_QUINT)
    if c == 0:
        xmap = psi.table[t & 1]
    elif c == 1:
        xmap = psi.table[_c1_pattern_of_quint()]
    else:
        raise InfeasibleError(f"bound optimization supports c in {{0, 1}}, got c={c}")
    return optim.RatioProgram(
        rows=ps,
        xmap=np.asarray(xmap, dtype=np.int64),
        channel=channel.matrix,
        dmin=D + eps_dist,
        mask=_center_mask(),
    )


def _package_result(res: optim.DinkelbachResult, prog: optim.RatioProgram, c: int) -> CapacityResult:
    ps = TypeVector(quintuplet_space(), probs=prog.rows, realizable=False)
    if c == 1:
        perm = _c1_pattern_of_quint()
        lam_cov = np.zeros_like(res.witness)
        lam_cov[perm[:, None], perm[None, :]] = res.witness
        witness = JointType(coverage_space(1), probs=lam_cov / lam_cov.sum(), realizable=False)
        gamma_i = TypeVector(coverage_space(1), probs=_permute(ps.probs, perm), realizable=False)
    else:
        witness = JointType(quintuplet_space(), probs=res.witness / res.witness.sum(), realizable=False)
        gamma_i = types.phi_to_gamma(ps)
    phi_j = TypeVector(
        quintuplet_space(), probs=res.witness.sum(axis=0) / res.witness.sum(), realizable=False
    )
    return CapacityResult(
        value=res.value,
        witness=witness,
        phi_j=phi_j,
        gamma_i=gamma_i,
        certificate=res.certificate,
        gap=res.gap,
        iterations=res.iterations,
        witness_distortion=prog.distortion(res.witness),
        unconstrained=res.unconstrained,
    )


def _permute(v: np.ndarray, perm: np.ndarray) -> np.ndarray:
    """out[perm[t]] = v[t]: re-index a quintuplet vector to pattern indices."""
    out = np.empty_like(v)
    out[perm] = v
    return out


def clb_c0(model: MRFModel, psi: SensingFunction, channel: NoiseChannel, D: float, opts: OptimizerOptions | None = None) -> CapacityResult:
    """Capacity lower bound for range-0 sensors at distortion D.

    Minimizes kl(pxy, qxy) / denom_c0 over joint field types mu with row
    marginal pinned to the typical type and center distortion >= D + eps.
    """
    opts = opts or OptimizerOptions()
    prog = _build_program(model, 0, psi, channel, D, opts.eps_dist)
    res = optim.dinkelbach(
        prog,
        inner_tol=opts.inner_tol,
        theta_tol=opts.theta_tol,
        restarts=opts.restarts,
        max_iters=opts.max_iters,
        inner_iters=opts.inner_iters,
        seed=opts.seed,
    )
    return _package_result(res, prog, 0)


def clb_c1(model: MRFModel, psi: SensingFunction, channel: NoiseChannel, D: float, opts: OptimizerOptions | None = None) -> CapacityResult:
    """Capacity lower bound for range-1 sensors at distortion D.

    The outer minimization over sensor types collapses: for c=1 the sensor
    type and the field type are the same object, so the row marginal is the
    typical type itself.
    """
    opts = opts or OptimizerOptions()
    prog = _build_program(model, 1, psi, channel, D, opts.eps_dist)
    res = optim.dinkelbach(
        prog,
        inner_tol=opts.inner_tol,
        theta_tol=opts.theta_tol,
        restarts=opts.restarts,
        max_iters=opts.max_iters,
        inner_iters=opts.inner_iters,
        seed=opts.seed,
    )
    return _package_result(res, prog, 1)


def clb(query: CapacityQuery) -> CapacityResult:
    if query.c == 0:
        return clb_c0(query.model, query.psi, query.channel, query.D, query.options)
    return clb_c1(query.model, query.psi, query.channel, query.D, query.options)


def oracle_local_search(
    query: CapacityQuery,
    samples: int,
    seed: int,
    descent_steps: int = 150,
    refine_steps: int = 4000,
    refine_top: int = 1024,
    chunk: int = 25000,
) -> float:
    """Independent upper bound on the ratio minimum by randomized search.

    Draws feasible points (Dirichlet rows repaired to the distortion
    half-space), runs vectorized coordinate-perturbation descent from each,
    then keeps descending the best candidates.  Never evaluates the
    Dinkelbach path; deterministic given seed.
    """
    prog = _build_program(query.model, query.c, query.psi, query.channel, query.D, query.options.eps_dist)
    rng = np.random.default_rng(seed)
    pool_M = []
    pool_r = []
    n_chunks = max(1, -(-samples // chunk))
    for start in range(0, samples, chunk):
        B = min(chunk, samples - start)
        M = optim.sample_feasible_batch(prog, B, rng)
        beam = optim.LocalSearchBeam(M, prog)
        for s in range(descent_steps):
            beam.step(rng, temp=1.0 - 0.7 * s / max(descent_steps, 1))
        keep = min(max(1, refine_top // n_chunks), B)
        sel = np.argsort(beam.r)[:keep]
        pool_M.append(beam.M[sel])
        pool_r.append(beam.r[sel])
    beam = optim.LocalSearchBeam(np.concatenate(pool_M, axis=0), prog)
    for s in range(refine_steps):
        beam.step(rng, temp=max(0.02, 1.0 - s / max(refine_steps, 1)))
    best_idx = int(np.argmin(beam.r))
    # recompute the winner from scratch to purge incremental rounding drift
    _, num, den, _ = prog.objective(beam.M[best_idx], 0.0)
    if den <= 0:
        return float("inf")
    return num / den


# ---------------------------------------------------------------------------
# reliability exponent
# ---------------------------------------------------------------------------


def reliability_exponent(
    R: float,
    D: float,
    model: MRFModel,
    psi: SensingFunction,
    channel: NoiseChannel,
    c: int,
    rho_grid=None,
    opts: OptimizerOptions | None = None,
    n_starts: int = 8,
    iters: int = 400,
    seed: int = 0,
) -> float:
    """min over the relaxed polytope of max over the rho grid of
    E(rho) - rho R (entropy bracket with the 1/(1+rho) field terms).

    The inner maximization uses a fixed rho grid (documented approximation);
    the outer minimization is local search with multiple starts, so the
    returned value is an upper estimate of the exact minimum.
    """
    opts = opts or OptimizerOptions()
    prog = _build_program(model, c, psi, channel, D, opts.eps_dist)
    grid = np.linspace(0.0, 1.0, 101) if rho_grid is None else np.asarray(rho_grid, float)
    rng = np.random.default_rng(seed)
    h_star = types.entropy(prog.rows)

    def objective(M):
        J = prog.push_joint(M)
        h_m = types.entropy(M)
        cross = _sum_xlogy(M.sum(axis=0), prog.rows)
        best = -np.inf
        best_rho = 0.0
        for rho in grid:
            e = _exponent_from_joint(rho, J, prog.P_gamma, prog.channel)
            s = 1.0 / (1.0 + rho)
            bracket = h_m - h_star + s * (h_star + cross)
            val = e - rho * R * bracket
            if val > best:
                best, best_rho = val, rho
        return best, best_rho

    def subgradient(M, rho):
        # gradient of the active term
        s = 1.0 / (1.0 + rho)
        chs = prog.channel ** s
        J = prog.push_joint(M)
        inner = np.maximum(J @ chs, optim._FLOOR)
        g = prog.P_gamma
        pos = g > 0
        terms = g[pos, None] ** (1.0 - rho) * chs[pos, :] * inner[pos, :] ** rho
        T = max(float(np.sum(terms)), optim._FLOOR)
        dT_dJ = np.zeros_like(J)
        dT_dJ[pos, :] = (
            g[pos, None] ** (1.0 - rho)
            * rho
            * ((chs[pos, :] * inner[pos, :] ** (rho - 1.0)) @ chs.T)
        )
        dE_dJ = -dT_dJ / (T * optim.LN2)
        gE = dE_dJ[prog.xmap[:, None], prog.xmap[None, :]]
        Ms = np.maximum(M, optim._FLOOR)
        d_bracket = -(np.log2(Ms) + 1.0 / optim.LN2) + s * prog.log_rows[None, :]
        return gE - rho * R * d_bracket

    best_val = np.inf
    starts = [prog.feasible_start()]
    for _ in range(max(0, n_starts - 1)):
        starts.append(optim.sample_feasible_batch(prog, 1, rng)[0])
    for M in starts:
        val, rho_a = objective(M)
        eta = 1.0
        for _ in range(iters):
            G = subgradient(M, rho_a)
            improved = False
            e = eta
            for _ in range(25):
                W = optim._mirror_step(prog, M, G, e)
                v2, r2 = objective(W)
                if np.isfinite(v2) and v2 < val:
                    improved = True
                    break
                e *= 0.5
            if not improved:
                break
            M, val, rho_a = W, v2, r2
            eta = min(2.0 * e, 1e6)
        best_val = min(best_val, val)
    return float(best_val)
