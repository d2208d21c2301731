"""Empirical side: MAP decoding on small grids, distortion accounting, and
Monte Carlo estimation of the average error probability versus rate.

A trial draws a field from the MRF, drops a fresh random network on it,
pushes the ideal outputs through the noise channel, decodes, and succeeds iff
the reconstruction lands strictly inside the tolerable distortion ball.
Error probability therefore averages over random fields, random networks and
noise, matching the average error metric the bound addresses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import mrf
from .mrf import MRFModel, TargetField
from .sensing import NoiseChannel, SensingFunction, coverage, footprint_size, generate_network, ideal_output, noisy_output

_WILSON_Z = 1.959963984540054  # 95% two-sided


@dataclass(frozen=True)
class TrialConfig:
    model: MRFModel
    k: int
    n: int
    c: int
    psi: SensingFunction
    channel: NoiseChannel
    D: float
    trials: int
    seed: int
    decoder: str = "map"
    gibbs_sweeps: int = 100

    def __post_init__(self):
        if self.decoder not in ("map", "icm"):
            raise ValueError(f"decoder must be 'map' or 'icm', got {self.decoder!r}")
        if self.decoder == "map" and self.k > 4:
            raise ValueError("exhaustive MAP decoding needs k <= 4; use the icm decoder")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


@dataclass(frozen=True)
class ErrorEstimate:
    p_e_hat: float
    ci_lo: float
    ci_hi: float
    trials: int
    failures: int


def wilson_interval(failures: int, trials: int, z: float = _WILSON_Z) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    p = failures / trials
    zz = z * z
    center = (p + zz / (2 * trials)) / (1 + zz / trials)
    half = z * np.sqrt(p * (1 - p) / trials + zz / (4 * trials * trials)) / (1 + zz / trials)
    return max(0.0, center - half), min(1.0, center + half)


def hamming_distortion(f_i: TargetField, f_j: TargetField) -> float:
    """Fraction of grid positions where the two fields differ."""
    if f_i.k != f_j.k:
        raise ValueError(f"field sides differ: {f_i.k} vs {f_j.k}")
    return float(np.count_nonzero(f_i.grid != f_j.grid)) / (f_i.k * f_i.k)


def _within_distortion(dist: float, D: float) -> bool:
    # strict "< D"; at D = 0 success degenerates to exact recovery
    if D <= 0.0:
        return dist == 0.0
    return dist < D


class _DecoderTables:
    """Per-(model, k) enumeration tables reused across trials."""

    def __init__(self, model: MRFModel, k: int):
        self.k = k
        self.grids = mrf._all_field_grids(k)                     # (F, k, k)
        self.flat = self.grids.reshape(self.grids.shape[0], -1)  # (F, k*k)
        self.log_prior = mrf._log_probs_unnorm_all(model, k)     # (F,)
        lp = self.log_prior
        self.probs = np.exp2(lp - mrf._logsumexp2(lp))
        self.cdf = np.cumsum(self.probs)

    def sample_field_index(self, rng) -> int:
        return int(np.searchsorted(self.cdf, rng.random(), side="right"))


def _all_field_outputs(tables: _DecoderTables, network) -> np.ndarray:
    """Ideal output indices of every candidate field under one network: (F, n)."""
    k = tables.k
    offs_cells = [coverage(network.c, (int(r), int(c)), k) for r, c in network.placements]
    m = footprint_size(network.c)
    weights = 1 << np.arange(m - 1, -1, -1)
    if network.n == 0:
        return np.zeros((tables.flat.shape[0], 0), dtype=np.int64)
    cell_idx = np.array([[r * k + c for r, c in cells] for cells in offs_cells])  # (n, m)
    bits = tables.flat[:, cell_idx]                                               # (F, n, m)
    patterns = bits @ weights
    return network.psi.table[patterns]


def map_decode(y: np.ndarray, network, model: MRFModel, tables: _DecoderTables | None = None) -> TargetField:
    """Exhaustive maximum a posteriori decoding over all 2^(k^2) fields.

    Score is log-likelihood plus unnormalized log-prior (the partition
    constant cancels in the argmax); ties go to the lowest canonical field
    index.
    """
    if network.k > 4:
        raise mrf.EnumerationTooLargeError("exhaustive MAP needs k <= 4; use icm_decode")
    if tables is None:
        tables = _DecoderTables(model, network.k)
    x_all = _all_field_outputs(tables, network)
    y = np.asarray(y, dtype=np.int64)
    with np.errstate(divide="ignore"):
        log_ch = np.log2(network.channel.matrix)
    loglik = log_ch[x_all, y[None, :]].sum(axis=1)
    score = loglik + tables.log_prior
    best = int(np.argmax(score))  # first occurrence = lowest canonical index
    return TargetField(tables.grids[best])


def icm_decode(
    y: np.ndarray,
    network,
    model: MRFModel,
    sweeps: int = 20,
    seed=0,
    init: TargetField | None = None,
) -> TargetField:
    """Iterated conditional modes: coordinate ascent on the posterior score.

    A labeled heuristic for grids too large to enumerate; it reaches a local
    maximum, not necessarily the MAP field.  Deterministic given seed.
    """
    k = network.k
    rng = np.random.default_rng(seed)
    if init is None:
        g = rng.integers(0, 2, size=(k, k), dtype=np.uint8)
    else:
        if init.k != k:
            raise ValueError("init field size does not match the network")
        g = init.grid.copy()
    y = np.asarray(y, dtype=np.int64)
    with np.errstate(divide="ignore"):
        log_ch = np.log2(network.channel.matrix)
    lw = mrf.log2_quintuplet_weights(model)
    # sensors covering each cell
    cover_cells = [coverage(network.c, (int(r), int(c)), k) for r, c in network.placements]
    by_cell: dict[tuple[int, int], list[int]] = {}
    for s_idx, cells in enumerate(cover_cells):
        for cell in cells:
            by_cell.setdefault(cell, []).append(s_idx)
    m = footprint_size(network.c)
    weights = 1 << np.arange(m - 1, -1, -1)

    def quint_at(r: int, c: int) -> int:
        return int(
            16 * g[(r - 1) % k, c]
            + 8 * g[r, (c + 1) % k]
            + 4 * g[(r + 1) % k, c]
            + 2 * g[r, (c - 1) % k]
            + g[r, c]
        )

    def sensor_loglik(s_idx: int) -> float:
        bits = np.array([g[r, c] for r, c in cover_cells[s_idx]], dtype=np.int64)
        x = int(network.psi.table[int(bits @ weights)])
        return float(log_ch[x, y[s_idx]])

    def prior_local(r: int, c: int) -> float:
        # factor groups whose quintuplet contains cell (r, c)
        total = lw[quint_at(r, c)]
        for nr, nc in mrf.neighbors((r, c), k):
            total += lw[quint_at(nr, nc)]
        return float(total)

    for _ in range(sweeps):
        changed = False
        for r in range(k):
            for c in range(k):
                affected = by_cell.get((r, c), [])
                old_local = prior_local(r, c) + sum(sensor_loglik(s) for s in affected)
                g[r, c] ^= 1
                new_local = prior_local(r, c) + sum(sensor_loglik(s) for s in affected)
                if not new_local > old_local:
                    g[r, c] ^= 1
                else:
                    changed = True
        if not changed:
            break
    return TargetField(g)


def posterior_score(fld: TargetField, y: np.ndarray, network, model: MRFModel) -> float:
    """log2 P(y | ideal outputs of fld) + unnormalized log2 prior."""
    x = ideal_output(network, fld)
    with np.errstate(divide="ignore"):
        log_ch = np.log2(network.channel.matrix)
    return float(log_ch[x, np.asarray(y, dtype=np.int64)].sum()) + mrf.log_prob_unnorm(fld, model)


def _trial_rngs(seed: int, trial_index: int):
    ss = np.random.SeedSequence(entropy=(seed, trial_index))
    return [np.random.default_rng(child) for child in ss.spawn(4)]


def run_trial(config: TrialConfig, trial_index: int, tables: _DecoderTables | None = None) -> bool:
    """One independent trial; True on success.  Deterministic given
    (config.seed, trial_index), independent of execution order."""
    rng_field, rng_net, rng_noise, rng_dec = _trial_rngs(config.seed, trial_index)
    if config.k <= 4:
        if tables is None:
            tables = _DecoderTables(config.model, config.k)
        fld = TargetField(tables.grids[tables.sample_field_index(rng_field)])
    else:
        fld = mrf.gibbs_sample(config.model, config.k, config.gibbs_sweeps, rng_field)
    network = generate_network(config.k, config.n, config.c, config.psi, config.channel, rng_net)
    x = ideal_output(network, fld)
    y = noisy_output(x, config.channel, rng_noise)
    if config.decoder == "map":
        decoded = map_decode(y, network, config.model, tables)
    else:
        decoded = icm_decode(y, network, config.model, seed=rng_dec)
    return _within_distortion(hamming_distortion(fld, decoded), config.D)


def estimate_pe(config: TrialConfig) -> ErrorEstimate:
    """Fraction of failed trials with a 95% Wilson interval."""
    tables = _DecoderTables(config.model, config.k) if config.k <= 4 else None
    failures = 0
    for i in range(config.trials):
        if not run_trial(config, i, tables):
            failures += 1
    lo, hi = wilson_interval(failures, config.trials)
    return ErrorEstimate(
        p_e_hat=failures / config.trials,
        ci_lo=lo,
        ci_hi=hi,
        trials=config.trials,
        failures=failures,
    )


@dataclass(frozen=True)
class RatePoint:
    n: int
    R: float
    estimate: ErrorEstimate


def rate_sweep(config: TrialConfig, n_list) -> list[RatePoint]:
    """One error estimate per sensor count; R = k^2 / n."""
    out = []
    for n in n_list:
        if n < 1:
            raise ValueError("every sensor count must be >= 1")
        cfg = TrialConfig(
            model=config.model,
            k=config.k,
            n=int(n),
            c=config.c,
            psi=config.psi,
            channel=config.channel,
            D=config.D,
            trials=config.trials,
            seed=config.seed,
            decoder=config.decoder,
            gibbs_sweeps=config.gibbs_sweeps,
        )
        out.append(RatePoint(n=int(n), R=config.k * config.k / n, estimate=estimate_pe(cfg)))
    return out
