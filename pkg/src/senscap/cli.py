"""Command-line interface: bound curves, simulation sweeps and the validation
suite, driven by a JSON config.

Exit codes: 0 success, 1 check/assertion failure, 2 configuration error.
CSV output uses a header row, '.' decimal separator and 12 significant
digits, so repeated runs of the same config are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import validate
from .capacity import CapacityResult, OptimizerOptions, clb_c0, clb_c1, InfeasibleError
from .mrf import MRFModel
from .montecarlo import TrialConfig, rate_sweep
from .sensing import NoiseChannel, SensingFunction


class ConfigError(ValueError):
    pass


_TOP_KEYS = {"model", "c", "psi", "channel", "D", "k", "n", "trials", "seed", "optimizer"}
_MODEL_KEYS = {"p", "p_node", "p_edge"}
_PSI_KEYS = {"kind", "weights"}
_CHANNEL_KEYS = {"kind", "q", "matrix"}
_OPT_KEYS = {"theta_tol", "inner_tol", "eps_dist", "restarts"}


def _require(cond: bool, msg: str):
    if not cond:
        raise ConfigError(msg)


def _check_keys(d: dict, allowed: set, where: str):
    unknown = set(d) - allowed
    _require(not unknown, f"unknown {where} keys: {sorted(unknown)}")


class RunConfig:
    """Validated run description; checks module preconditions before dispatch."""

    def __init__(self, raw: dict):
        _require(isinstance(raw, dict), "config must be a JSON object")
        _check_keys(raw, _TOP_KEYS, "config")
        for key in ("model", "c", "psi", "channel", "D", "k", "seed"):
            _require(key in raw, f"missing config key: {key}")

        model = raw["model"]
        _require(isinstance(model, dict), "model must be an object")
        _check_keys(model, _MODEL_KEYS, "model")
        if "p" in model:
            _require("p_node" not in model and "p_edge" not in model,
                     "give either model.p or model.p_node/p_edge, not both")
            self.model = MRFModel.from_p(_as_float(model["p"], "model.p"))
        else:
            _require("p_node" in model and "p_edge" in model,
                     "model needs p or both p_node and p_edge")
            try:
                self.model = MRFModel(np.asarray(model["p_node"], float),
                                      np.asarray(model["p_edge"], float))
            except ValueError as exc:
                raise ConfigError(f"invalid model: {exc}") from exc

        self.c = _as_int(raw["c"], "c")
        _require(self.c >= 0, "c must be >= 0")

        psi = raw["psi"]
        _require(isinstance(psi, dict) and "kind" in psi, "psi needs a kind")
        _check_keys(psi, _PSI_KEYS, "psi")
        kind = psi["kind"]
        try:
            if kind == "identity":
                _require(self.c == 0, "identity sensing is only well typed for c=0")
                self.psi = SensingFunction.identity()
            elif kind == "count":
                self.psi = SensingFunction.count(self.c)
            elif kind == "weighted_sum":
                _require("weights" in psi, "weighted_sum sensing needs psi.weights")
                self.psi = SensingFunction.weighted_sum(psi["weights"], self.c)
            elif kind == "center_bit":
                self.psi = SensingFunction.center_bit(self.c)
            else:
                raise ConfigError(f"unknown psi.kind: {kind!r}")
        except ValueError as exc:
            raise ConfigError(f"invalid psi: {exc}") from exc
        if kind != "weighted_sum":
            _require("weights" not in psi, f"psi.weights is only valid for weighted_sum")

        channel = raw["channel"]
        _require(isinstance(channel, dict) and "kind" in channel, "channel needs a kind")
        _check_keys(channel, _CHANNEL_KEYS, "channel")
        ckind = channel["kind"]
        try:
            if ckind == "bsc":
                _require("q" in channel, "bsc channel needs channel.q")
                _require(self.psi.n_outputs == 2,
                         "bsc needs a binary sensing alphabet; use symmetric or matrix")
                self.channel = NoiseChannel.bsc(_as_float(channel["q"], "channel.q"))
            elif ckind == "symmetric":
                _require("q" in channel, "symmetric channel needs channel.q")
                self.channel = NoiseChannel.symmetric(
                    self.psi.n_outputs, _as_float(channel["q"], "channel.q"))
            elif ckind == "matrix":
                _require("matrix" in channel, "matrix channel needs channel.matrix")
                self.channel = NoiseChannel(np.asarray(channel["matrix"], float))
            else:
                raise ConfigError(f"unknown channel.kind: {ckind!r}")
        except ValueError as exc:
            raise ConfigError(f"invalid channel: {exc}") from exc
        _require(self.channel.n_inputs == self.psi.n_outputs,
                 "channel input alphabet must match the sensing output alphabet")

        D = raw["D"]
        _require(isinstance(D, list) and D, "D must be a nonempty array")
        self.D = [_as_float(d, "D") for d in D]
        _require(all(0.0 <= d <= 1.0 for d in self.D), "every D must lie in [0, 1]")

        self.k = _as_int(raw["k"], "k")
        _require(self.k >= 3, "k must be >= 3")
        _require(self.k >= 2 * self.c + 1, f"k={self.k} too small for sensor range c={self.c}")

        self.n = [ _as_int(v, "n") for v in raw.get("n", []) ]
        _require(all(v >= 1 for v in self.n), "every n must be >= 1")
        self.trials = _as_int(raw.get("trials", 0), "trials")
        self.seed = _as_int(raw["seed"], "seed")

        opt = raw.get("optimizer", {})
        _require(isinstance(opt, dict), "optimizer must be an object")
        _check_keys(opt, _OPT_KEYS, "optimizer")
        try:
            self.optimizer = OptimizerOptions(
                theta_tol=float(opt.get("theta_tol", 1e-9)),
                inner_tol=float(opt.get("inner_tol", 1e-7)),
                eps_dist=float(opt.get("eps_dist", 0.0)),
                restarts=int(opt.get("restarts", 16)),
                seed=self.seed,
            )
        except ValueError as exc:
            raise ConfigError(f"invalid optimizer options: {exc}") from exc


def _as_float(v, name: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{name} must be a number")
    return float(v)


def _as_int(v, name: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{name} must be an integer")
    return int(v)


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return RunConfig(raw)


def _fmt(x: float) -> str:
    return format(float(x), ".12g")


def cmd_bound(cfg: RunConfig, out_path: str) -> int:
    """One capacity bound row per requested distortion."""
    _require(cfg.c in (0, 1), "bound computation supports c in {0, 1}")
    rows = ["D,c_lb,certificate,iterations,witness_distortion"]
    for D in cfg.D:
        _require(D < 1.0, "bound computation needs D < 1")
        try:
            if cfg.c == 0:
                res: CapacityResult = clb_c0(cfg.model, cfg.psi, cfg.channel, D, cfg.optimizer)
            else:
                res = clb_c1(cfg.model, cfg.psi, cfg.channel, D, cfg.optimizer)
        except InfeasibleError as exc:
            raise ConfigError(str(exc)) from exc
        rows.append(
            ",".join(
                [
                    _fmt(D),
                    _fmt(res.value),
                    _fmt(res.certificate),
                    str(res.iterations),
                    _fmt(res.witness_distortion),
                ]
            )
        )
    _write_lines(out_path, rows)
    return 0


def cmd_simulate(cfg: RunConfig, out_path: str) -> int:
    """Error-rate sweep over the configured sensor counts."""
    _require(len(cfg.D) == 1, "simulate needs exactly one D")
    _require(cfg.n, "simulate needs a nonempty n array")
    _require(cfg.trials >= 1, "simulate needs trials >= 1")
    _require(cfg.k <= 4, "exhaustive MAP simulation needs k <= 4")
    trial_cfg = TrialConfig(
        model=cfg.model,
        k=cfg.k,
        n=cfg.n[0],
        c=cfg.c,
        psi=cfg.psi,
        channel=cfg.channel,
        D=cfg.D[0],
        trials=cfg.trials,
        seed=cfg.seed,
    )
    rows = ["n,R,p_e_hat,ci_lo,ci_hi,trials"]
    for point in rate_sweep(trial_cfg, cfg.n):
        est = point.estimate
        rows.append(
            ",".join(
                [
                    str(point.n),
                    _fmt(point.R),
                    _fmt(est.p_e_hat),
                    _fmt(est.ci_lo),
                    _fmt(est.ci_hi),
                    str(est.trials),
                ]
            )
        )
    _write_lines(out_path, rows)
    return 0


def _write_lines(path: str, rows: list[str]):
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(rows) + "\n")


def cmd_validate(level: str) -> int:
    results = validate.run_checks(level)
    failed = 0
    for r in results:
        if r.warning:
            status = "WARN"
        elif r.passed:
            status = "PASS"
        else:
            status = "FAIL"
            failed += 1
        print(f"{status:4s} {r.name:22s} max_dev={r.max_dev:.3g} ({r.seconds:.1f}s) {r.note}")
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="senscap",
        description="Sensing-capacity lower bounds and Monte Carlo simulation "
        "for sensor networks observing a pairwise Markov random field.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_bound = sub.add_parser("bound", help="compute C_LB(D) over a distortion list")
    p_bound.add_argument("--config", required=True)
    p_bound.add_argument("--out", required=True)

    p_sim = sub.add_parser("simulate", help="Monte Carlo error-rate sweep over n")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--out", required=True)

    p_val = sub.add_parser("validate", help="run the invariant checks")
    p_val.add_argument("--level", choices=["fast", "full"], default="fast")

    args = parser.parse_args(argv)
    try:
        if args.command == "bound":
            return cmd_bound(load_config(args.config), args.out)
        if args.command == "simulate":
            return cmd_simulate(load_config(args.config), args.out)
        return cmd_validate(args.level)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
