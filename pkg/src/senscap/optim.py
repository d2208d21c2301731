"""Constrained fractional optimization over joint-type polytopes.

The feasible set is a product of scaled row simplexes (row t of the variable
sums to a fixed marginal, here the typical field type) intersected with one
linear half-space (minimum mass on center-differing pattern pairs).  The
objective is a ratio: a divergence numerator, convex in the variable, over an
entropy-plus-linear denominator, concave in the variable.  Dinkelbach's
scheme reduces the ratio to a sequence of convex subproblems
min numerator - theta * denominator, each solved by entropic mirror descent
with a Frank-Wolfe duality gap as stopping certificate; the linear
minimization over the polytope is a fractional knapsack and is solved
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LN2 = np.log(2.0)
_FLOOR = 1e-300


def _xlog2x(a: np.ndarray) -> np.ndarray:
    return np.where(a > 0, a * np.log2(np.maximum(a, _FLOOR)), 0.0)


@dataclass
class RatioProgram:
    """One instance of the capacity ratio program on a fixed pattern space.

    rows        fixed row marginal (strictly positive distribution)
    xmap        pattern index -> output letter index under the sensing map
    channel     row-stochastic noise matrix over output letters
    dmin        required mass on center-differing pattern pairs
    mask        indicator of center-differing pairs
    """

    rows: np.ndarray
    xmap: np.ndarray
    channel: np.ndarray
    dmin: float
    mask: np.ndarray

    def __post_init__(self):
        n = self.rows.size
        nx = self.channel.shape[0]
        self.n = n
        self.P_gamma = np.zeros(nx)
        np.add.at(self.P_gamma, self.xmap, self.rows)
        self.P = self.P_gamma[:, None] * self.channel
        self.logP = np.where(self.P > 0, np.log2(np.maximum(self.P, _FLOOR)), 0.0)
        self.S = self.channel[self.xmap, :]
        with np.errstate(divide="ignore"):
            self.log_rows = np.log2(self.rows)
        self.maskb = self.mask.astype(bool)

    # objective pieces -----------------------------------------------------

    def push_joint(self, M: np.ndarray) -> np.ndarray:
        nx = self.channel.shape[0]
        J = np.zeros((nx, nx))
        np.add.at(J, (self.xmap[:, None], self.xmap[None, :]), M)
        return J

    def numerator(self, M: np.ndarray):
        """KL(P || Q(M)) in bits, plus the induced output joint Q."""
        Q = self.push_joint(M) @ self.channel
        pos = self.P > 0
        if np.any(Q[pos] <= 0):
            return float("inf"), Q
        val = float(np.sum(self.P[pos] * (self.logP[pos] - np.log2(Q[pos]))))
        return max(val, 0.0), Q

    def denominator(self, M: np.ndarray) -> float:
        """H(M) + sum_u colmarg(u) log2 rows(u), in bits."""
        return float(-_xlog2x(M).sum() + M.sum(axis=0) @ self.log_rows)

    def objective(self, M: np.ndarray, theta: float):
        num, Q = self.numerator(M)
        den = self.denominator(M)
        return num - theta * den, num, den, Q

    def gradient(self, M: np.ndarray, theta: float, Q: np.ndarray) -> np.ndarray:
        ratio = np.where(self.P > 0, self.P / np.maximum(Q, _FLOOR), 0.0)
        T = ratio @ self.channel.T                     # (x_i, x_j) sums over y
        g_num = -T[self.xmap[:, None], self.xmap[None, :]] / LN2
        Ms = np.maximum(M, _FLOOR)
        g_den = -(np.log2(Ms) + 1.0 / LN2) + self.log_rows[None, :]
        return g_num - theta * g_den

    # feasibility ----------------------------------------------------------

    def distortion(self, M: np.ndarray) -> float:
        return float(np.sum(M[self.maskb]))

    def tilt_to_distortion(self, M: np.ndarray) -> np.ndarray:
        """Bregman (KL) projection onto the distortion half-space: multiply
        center-differing cells by e^s and renormalize rows, s >= 0 minimal."""
        if self.distortion(M) >= self.dmin - 1e-14:
            return M

        def apply(s):
            W = M * np.where(self.maskb, np.exp(s), 1.0)
            return W * (self.rows / W.sum(axis=1))[:, None]

        hi = 1.0
        for _ in range(200):
            W = apply(hi)
            if self.distortion(W) >= self.dmin:
                break
            hi *= 2.0
        else:
            raise InfeasibleRegionError(f"distortion {self.dmin} unreachable")
        lo = 0.0
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if self.distortion(apply(mid)) >= self.dmin:
                hi = mid
            else:
                lo = mid
            if hi - lo <= 1e-15 * max(1.0, hi):
                break
        return apply(hi)

    def feasible_start(self, rng=None, spread: float = 0.0) -> np.ndarray:
        """Product-of-marginals coupling (optionally randomly tilted), pushed
        to the required distortion."""
        cols = self.rows.copy()
        if rng is not None and spread > 0:
            cols = cols * np.exp(spread * rng.standard_normal(self.n))
            cols /= cols.sum()
        M = self.rows[:, None] * cols[None, :]
        return self.tilt_to_distortion(M)

    # linear minimization (Frank-Wolfe vertex) ------------------------------

    def linear_minimizer(self, G: np.ndarray) -> np.ndarray:
        """Exact argmin of <G, V> over the polytope, via fractional knapsack
        on the single distortion constraint."""
        n = self.n
        Gm = np.where(self.maskb, G, np.inf)
        Gu = np.where(self.maskb, np.inf, G)
        bm = Gm.min(axis=1)
        im = Gm.argmin(axis=1)
        bu = Gu.min(axis=1)
        iu = Gu.argmin(axis=1)
        take_masked = bm <= bu
        V = np.zeros_like(G)
        dist = float(self.rows[take_masked].sum())
        if dist < self.dmin - 1e-15:
            need = self.dmin - dist
            order = np.argsort(bm - bu)
            for t in order:
                if take_masked[t]:
                    continue
                amount = min(self.rows[t], need)
                V[t, im[t]] = amount
                V[t, iu[t]] = self.rows[t] - amount
                need -= amount
                if need <= 1e-15:
                    break
            else:
                raise InfeasibleRegionError(f"distortion {self.dmin} unreachable")
        untouched = V.sum(axis=1) == 0.0
        idx = np.where(take_masked, im, iu)
        V[untouched, idx[untouched]] = self.rows[untouched]
        return V

    def fw_gap(self, M: np.ndarray, G: np.ndarray):
        """Duality gap <G, M - V> >= J(M) - min J; zero at the optimum."""
        V = self.linear_minimizer(G)
        return float(np.sum(G * (M - V))), V


class InfeasibleRegionError(ValueError):
    pass


def _mirror_step(prog: RatioProgram, M: np.ndarray, G: np.ndarray, eta: float) -> np.ndarray:
    Z = -eta * G
    Z -= Z.max(axis=1, keepdims=True)
    W = np.maximum(M, _FLOOR) * np.exp(Z)
    W *= (prog.rows / W.sum(axis=1))[:, None]
    return prog.tilt_to_distortion(W)


def solve_subproblem(
    prog: RatioProgram,
    theta: float,
    M0: np.ndarray,
    gap_tol: float,
    max_iter: int = 4000,
):
    """Minimize numerator - theta*denominator by entropic mirror descent with
    Frank-Wolfe fallback steps; stops when the exact duality gap is below
    gap_tol.  Returns (M, num, den, value, gap, iterations)."""
    M = prog.tilt_to_distortion(np.maximum(M0, _FLOOR) * (prog.rows / np.maximum(M0, _FLOOR).sum(axis=1))[:, None])
    f, num, den, Q = prog.objective(M, theta)
    eta = 1.0 / max(theta, 1e-2)
    gap = np.inf
    it = 0
    stall = 0
    for it in range(1, max_iter + 1):
        G = prog.gradient(M, theta, Q)
        if it % 10 == 1:
            gap, V = prog.fw_gap(M, G)
            if gap <= gap_tol:
                break
        accepted = False
        e = eta
        for _ in range(40):
            W = _mirror_step(prog, M, G, e)
            f2, num2, den2, Q2 = prog.objective(W, theta)
            if np.isfinite(f2) and f2 < f:
                accepted = True
                break
            e *= 0.5
        if accepted and f - f2 > 1e-15 * max(1.0, abs(f)):
            stall = 0
        else:
            stall += 1
        if not accepted or stall >= 3:
            # Frank-Wolfe step: exact-ish line search toward the LP vertex
            gap, V = prog.fw_gap(M, prog.gradient(M, theta, Q))
            if gap <= gap_tol:
                break
            direction = V - M
            alpha, fw_f = _segment_search(prog, theta, M, direction, f)
            if fw_f < f:
                W = M + alpha * direction
                f2, num2, den2, Q2 = prog.objective(W, theta)
                stall = 0
            elif not accepted:
                break
        M, f, num, den, Q = W, f2, num2, den2, Q2
        eta = min(e * 2.0, 1e8)
    G = prog.gradient(M, theta, Q)
    gap, _ = prog.fw_gap(M, G)
    return M, num, den, f, max(gap, 0.0), it


def _segment_search(prog, theta, M, direction, f0, trials=25):
    """Coarse-to-fine search of J(M + alpha*direction) over alpha in (0, 1]."""
    best_a, best_f = 0.0, f0
    alphas = np.concatenate([np.geomspace(1e-6, 1.0, trials)])
    for a in alphas:
        f, _, _, _ = prog.objective(M + a * direction, theta)
        if np.isfinite(f) and f < best_f:
            best_a, best_f = a, f
    return best_a, best_f


def maximize_denominator(prog: RatioProgram, max_iter: int = 2000):
    """Maximize the concave denominator over the polytope (mirror ascent);
    used to detect an empty positive-denominator region."""
    M = prog.feasible_start()
    den = prog.denominator(M)
    eta = 1.0
    for _ in range(max_iter):
        Ms = np.maximum(M, _FLOOR)
        G = (np.log2(Ms) + 1.0 / LN2) - prog.log_rows[None, :]   # gradient of -den
        accepted = False
        e = eta
        for _ in range(30):
            W = _mirror_step(prog, M, G, e)
            den2 = prog.denominator(W)
            if den2 > den:
                accepted = True
                break
            e *= 0.5
        if not accepted:
            break
        if den2 - den < 1e-12:
            M, den = W, den2
            break
        M, den = W, den2
        eta = min(e * 2.0, 1e6)
    return M, den


@dataclass
class DinkelbachResult:
    value: float
    witness: np.ndarray
    certificate: float
    gap: float
    iterations: int
    unconstrained: bool


def dinkelbach(
    prog: RatioProgram,
    inner_tol: float = 1e-7,
    theta_tol: float = 1e-9,
    restarts: int = 16,
    max_iters: int = 60,
    inner_iters: int = 4000,
    seed: int = 0,
    zero_tol: float = 1e-12,
) -> DinkelbachResult:
    """Global minimum of numerator/denominator over the positive-denominator
    part of the polytope.

    Each subproblem is convex, so the scheme converges from any start; the
    random restarts re-solve the final subproblem from fresh points to harden
    the certificate against inner-solver stalls.
    """
    rng = np.random.default_rng(seed)
    M = prog.feasible_start()
    _, num, den, _ = prog.objective(M, 0.0)
    if den <= 0:
        M, den = maximize_denominator(prog)
        if den <= 0:
            return DinkelbachResult(float("inf"), M, float("nan"), float("nan"), 0, True)
        num, _ = prog.numerator(M)
    if num <= zero_tol:
        return DinkelbachResult(0.0, M, 0.0, 0.0, 0, False)

    gap_tol = 0.1 * inner_tol
    state = {"iters": 0}

    def run(theta, M):
        """Dinkelbach iteration from (theta, M); returns the fixed point."""
        certificate = np.inf
        gap = np.inf
        for _ in range(max_iters):
            state["iters"] += 1
            M2, num, den, f, gap, _ = solve_subproblem(prog, theta, M, gap_tol, inner_iters)
            certificate = f
            if den <= 0:
                return theta, M, certificate, gap, False
            theta_new = num / den
            M = M2
            converged = abs(f) <= 0.5 * inner_tol and gap <= gap_tol
            if converged or abs(theta_new - theta) <= theta_tol:
                return theta_new, M, certificate, gap, True
            theta = theta_new
        return theta, M, certificate, gap, False

    theta = num / den
    theta, M, certificate, gap, _ = run(theta, M)

    # certificate hardening: re-solve the final subproblem from random points;
    # a strictly better point restarts the iteration there
    for _ in range(max(0, restarts)):
        M_r = _random_row_mix(prog, prog.feasible_start(rng, spread=1.0), rng)
        M2, num2, den2, f2, gap2, _ = solve_subproblem(
            prog, theta, M_r, gap_tol, inner_iters // 2
        )
        if f2 < -0.5 * inner_tol and den2 > 0:
            theta, M, certificate, gap, _ = run(num2 / den2, M2)
        elif np.isfinite(f2):
            certificate = min(certificate, f2)

    value = 0.0 if theta <= zero_tol else float(theta)
    return DinkelbachResult(value, M, float(certificate), float(gap), state["iters"], False)


def _random_row_mix(prog: RatioProgram, M: np.ndarray, rng) -> np.ndarray:
    """Blend a feasible point with random row-preserving couplings."""
    E = rng.exponential(size=M.shape)
    Rnd = E / E.sum(axis=1, keepdims=True) * prog.rows[:, None]
    a = rng.uniform(0.2, 0.9)
    return prog.tilt_to_distortion(a * M + (1 - a) * Rnd)


# ---------------------------------------------------------------------------
# batched random local search (the validation oracle's engine)
# ---------------------------------------------------------------------------


class LocalSearchBeam:
    """Vectorized ratio state over a batch of candidate matrices, updated by
    single-cell mass moves within a row (row marginals stay exact)."""

    def __init__(self, M: np.ndarray, prog: RatioProgram):
        self.prog = prog
        self.M = M
        B = M.shape[0]
        nx = prog.channel.shape[0]
        self.Q = np.zeros((B, nx, prog.channel.shape[1]))
        MS = M @ prog.S
        for x in range(nx):
            sel = prog.xmap == x
            self.Q[:, x, :] = MS[:, sel, :].sum(axis=1)
        self.rowterm = (
            prog.P[None] * (prog.logP[None] - np.log2(np.maximum(self.Q, _FLOOR)))
        ).sum(axis=2)
        self.num = self.rowterm.sum(axis=1)
        self.H = -_xlog2x(M).sum(axis=(1, 2))
        self.L = M.sum(axis=1) @ prog.log_rows
        self.dist = np.einsum("bij,ij->b", M, prog.mask)
        self._update_ratio()

    def _update_ratio(self):
        den = self.H + self.L
        with np.errstate(invalid="ignore"):
            self.r = np.where(den > 0, self.num / np.maximum(den, _FLOOR), np.inf)

    def step(self, rng, temp: float):
        prog = self.prog
        B = self.M.shape[0]
        idx = np.arange(B)
        t = rng.choice(prog.n, size=B, p=prog.rows)
        logrow = np.log(np.maximum(self.M[idx, t, :], _FLOOR))
        u1 = np.argmax(logrow + rng.gumbel(size=(B, prog.n)), axis=1)
        mode = rng.integers(0, 3, size=B)
        # destination: center-flip partner, uniform, or marginal-weighted
        u2 = np.where(
            mode == 0,
            u1 ^ 1,
            np.where(
                mode == 1,
                rng.integers(0, prog.n, size=B),
                rng.choice(prog.n, size=B, p=prog.rows),
            ),
        )
        a_old = self.M[idx, t, u1]
        b_old = self.M[idx, t, u2]
        best_r = self.r.copy()
        best_delta = np.zeros(B)
        for frac in (0.9 * temp, 0.3 * temp, 0.05 * temp):
            delta = a_old * frac
            dist2 = self.dist + delta * (prog.mask[t, u2] - prog.mask[t, u1])
            ok = (dist2 >= prog.dmin - 1e-12) & (u1 != u2) & (delta > 0)
            a_new = a_old - delta
            b_new = b_old + delta
            H2 = self.H - (
                _xlog2x(a_new) - _xlog2x(a_old) + _xlog2x(b_new) - _xlog2x(b_old)
            )
            L2 = self.L + delta * (prog.log_rows[u2] - prog.log_rows[u1])
            den2 = H2 + L2
            x_t = prog.xmap[t]
            qrow = self.Q[idx, x_t, :] + delta[:, None] * (prog.S[u2] - prog.S[u1])
            rt = (
                prog.P[x_t] * (prog.logP[x_t] - np.log2(np.maximum(qrow, _FLOOR)))
            ).sum(axis=1)
            num2 = self.num - self.rowterm[idx, x_t] + rt
            with np.errstate(invalid="ignore"):
                r2 = np.where(den2 > 0, num2 / np.maximum(den2, _FLOOR), np.inf)
            better = ok & (r2 < best_r)
            best_r = np.where(better, r2, best_r)
            best_delta = np.where(better, delta, best_delta)
        acc = best_delta > 0
        if not np.any(acc):
            return
        ai = idx[acc]
        ta, u1a, u2a = t[acc], u1[acc], u2[acc]
        d = best_delta[acc]
        a0, b0 = self.M[ai, ta, u1a], self.M[ai, ta, u2a]
        self.M[ai, ta, u1a] = a0 - d
        self.M[ai, ta, u2a] = b0 + d
        x_t = prog.xmap[ta]
        self.Q[ai, x_t, :] += d[:, None] * (prog.S[u2a] - prog.S[u1a])
        self.rowterm[ai, x_t] = (
            prog.P[x_t] * (prog.logP[x_t] - np.log2(np.maximum(self.Q[ai, x_t, :], _FLOOR)))
        ).sum(axis=1)
        self.num[acc] = self.rowterm[acc].sum(axis=1)
        self.H[acc] -= (
            _xlog2x(a0 - d) - _xlog2x(a0) + _xlog2x(b0 + d) - _xlog2x(b0)
        )
        self.L[acc] += d * (prog.log_rows[u2a] - prog.log_rows[u1a])
        self.dist[acc] += d * (prog.mask[ta, u2a] - prog.mask[ta, u1a])
        self._update_ratio()

    def refresh(self):
        """Recompute all state from M to purge incremental rounding drift."""
        self.__init__(self.M, self.prog)


def sample_feasible_batch(prog: RatioProgram, batch: int, rng) -> np.ndarray:
    """Random feasible matrices: a mix of flat-Dirichlet rows, marginal-shaped
    Dirichlet rows and near-diagonal couplings, repaired to the distortion
    constraint by blending toward the center-flip coupling."""
    n = prog.n
    third = batch // 3
    M = np.empty((batch, n, n))
    E = rng.exponential(size=(third, n, n))
    M[:third] = E / E.sum(axis=2, keepdims=True)
    shaped = rng.gamma(np.maximum(prog.rows * n, 0.05)[None, None, :], size=(third, n, n))
    M[third : 2 * third] = shaped / shaped.sum(axis=2, keepdims=True)
    rest = batch - 2 * third
    s = rng.uniform(max(prog.dmin, 1e-3), 1.0, size=rest)
    near_diag = np.zeros((rest, n, n))
    near_diag[:, np.arange(n), np.arange(n)] = 1.0 - s[:, None]
    if n == 32:
        near_diag[:, np.arange(n), np.arange(n) ^ 1] += s[:, None]
    else:
        near_diag[:, np.arange(n), (np.arange(n) + 1) % n] += s[:, None]
    noise = rng.exponential(size=(rest, n, n))
    w = rng.uniform(0.0, 0.3, size=rest)[:, None, None]
    near_diag = (1 - w) * near_diag + w * noise / noise.sum(axis=2, keepdims=True)
    M[2 * third :] = near_diag
    M *= prog.rows[None, :, None]
    dist = np.einsum("bij,ij->b", M, prog.mask)
    bad = dist < prog.dmin
    if np.any(bad):
        swap = np.zeros((n, n))
        if n == 32:
            swap[np.arange(n), np.arange(n) ^ 1] = prog.rows
        else:
            swap[np.arange(n), (np.arange(n) + 1) % n] = prog.rows
        al = ((prog.dmin + 1e-12 - dist[bad]) / np.maximum(1.0 - dist[bad], 1e-12))
        al = np.clip(al, 0.0, 1.0)[:, None, None]
        M[bad] = (1 - al) * M[bad] + al * swap[None]
    return M
