"""Experiment driver.

Usage::

    privmarket wager-demo --seed 1 --n 5 --out results/
    privmarket dp-audit --seed 1 --n 6 --epsilon 1
    privmarket concentration --seed 1 --n 10,100,1000 --trials 10000
    privmarket loss-curve --seed 1 --noise tree --rounds 256,1024,4096,8192
    privmarket privacy-probe --seed 1 --noise fresh --noise-scale 1 --rounds 64,256

Every subcommand is deterministic given ``--seed``. Exit status is 0 on
success, 1 if an invariant check fails, 2 on invalid configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import adversary, dp_audit, wagering
from .cost_market import LMSR
from .noisy_market import make_noise
from .scoring import BRIER

log = logging.getLogger("privmarket")

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG = 0, 1, 2

DEFAULT_N = {"wager-demo": "5", "dp-audit": "5", "concentration": "10,100,1000"}
DEFAULT_TRIALS = {"dp-audit": 20, "concentration": 10_000, "loss-curve": 1000, "privacy-probe": 10_000}
DEFAULT_ROUNDS = {"loss-curve": "256,1024,4096,8192", "privacy-probe": "64,256,1024"}
MIN_TRIALS = {"concentration": 1000, "privacy-probe": 10_000}
AUDIT_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    subcommand: str
    seed: int
    n: tuple[int, ...]
    epsilon: float
    delta: float
    b: float
    a: float
    k: float
    qstar: float
    gamma: float
    rounds: tuple[int, ...]
    trials: int
    noise: str
    noise_scale: float
    fee: float
    min_unit: float
    out: Path

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "ExperimentConfig":
        cmd = args.command
        try:
            n = _int_list(args.n or DEFAULT_N.get(cmd, "5"))
            rounds = _int_list(args.rounds or DEFAULT_ROUNDS.get(cmd, "1024"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        cfg = cls(
            subcommand=cmd,
            seed=args.seed,
            n=n,
            epsilon=args.epsilon,
            delta=args.delta,
            b=args.b,
            a=args.a,
            k=args.k,
            qstar=args.qstar,
            gamma=args.k / 4.0 if args.gamma is None else args.gamma,
            rounds=rounds,
            trials=DEFAULT_TRIALS.get(cmd, 1) if args.trials is None else args.trials,
            noise=args.noise,
            noise_scale=args.noise_scale,
            fee=args.fee,
            min_unit=args.min_unit,
            out=Path(args.out),
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        checks = [
            (self.seed >= 0, "seed must be non-negative"),
            (all(v >= 1 for v in self.n), "n must be positive"),
            (self.epsilon > 0, "epsilon must be positive"),
            (0 < self.delta <= 1, "delta must lie in (0, 1]"),
            (self.b > 0, "b must be positive"),
            (self.k > 0, "k must be positive"),
            (0 < self.gamma <= self.k, "gamma must lie in (0, k]"),
            (all(r >= 1 for r in self.rounds), "rounds must be positive"),
            (list(self.rounds) == sorted(set(self.rounds)), "rounds must be strictly increasing"),
            (self.trials >= 1, "trials must be positive"),
            (self.noise_scale > 0, "noise scale must be positive"),
            (self.fee >= 0 and self.min_unit >= 0, "fee and min-unit must be non-negative"),
            (self.trials >= MIN_TRIALS.get(self.subcommand, 0),
             f"{self.subcommand} needs at least {MIN_TRIALS.get(self.subcommand)} trials"),
        ]
        if self.subcommand in ("wager-demo", "dp-audit"):
            checks.append((len(self.n) == 1, f"{self.subcommand} takes a single --n"))
        if self.subcommand == "dp-audit":
            checks.append((self.n[0] <= dp_audit.ENUMERATION_CAP,
                           f"dp-audit enumerates 2^n atoms; n must be <= {dp_audit.ENUMERATION_CAP}"))
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    @property
    def cost_function(self) -> LMSR:
        return LMSR(self.b, self.a)

    def noise_process(self):
        return make_noise(self.noise, scale=self.noise_scale, eps_prime=self.epsilon, k=self.k)


def _int_list(text: str) -> tuple[int, ...]:
    values = tuple(int(v) for v in str(text).split(",") if v.strip())
    if not values:
        raise ValueError("expected a comma-separated list of integers")
    return values


# ---------------------------------------------------------------------------
# Output helpers


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    return v


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def _random_profile(rng: np.random.Generator, n: int) -> wagering.WagerProfile:
    return wagering.WagerProfile(rng.random(n), rng.uniform(0.5, 5.0, n))


# ---------------------------------------------------------------------------
# Subcommands


def cmd_wager_demo(cfg: ExperimentConfig) -> int:
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n[0]
    profile = _random_profile(rng, n)
    omega = int(rng.random() < 0.5)
    params = wagering.privacy_params(cfg.epsilon)
    wswm = np.asarray(wagering.wswm_profits(profile, BRIER, omega))
    expected = np.asarray(wagering.expected_private_profits(profile, BRIER, omega, params))
    realized = np.asarray(wagering.private_profits(profile, BRIER, omega, params, rng))

    _write_csv(
        cfg.out / "profits.csv",
        ("bettor", "report", "wager", "wswm_profit", "private_expected", "private_realized"),
        zip(range(n), profile.reports, profile.wagers, wswm, expected, realized),
    )
    summary = {
        "seed": cfg.seed,
        "n": n,
        "omega": omega,
        "epsilon": params.epsilon,
        "alpha": params.alpha,
        "beta": params.beta,
        "wswm_balance_residual": math.fsum(wswm),
        "private_expected_balance_residual": math.fsum(expected),
        "private_realized_balance": math.fsum(realized),
        "expected_vs_scaled_wswm_max_abs_error": float(np.max(np.abs(expected - params.alpha * wswm))),
        "loss_floor_ok": bool(np.all(realized >= -profile.wagers)),
    }
    _write_json(cfg.out / "summary.json", summary)
    ok = (
        abs(summary["wswm_balance_residual"]) <= 1e-12
        and abs(summary["private_expected_balance_residual"]) <= 1e-12
        and summary["expected_vs_scaled_wswm_max_abs_error"] <= 1e-12
        and summary["loss_floor_ok"]
    )
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_dp_audit(cfg: ExperimentConfig) -> int:
    rng = np.random.default_rng(cfg.seed)
    params = wagering.privacy_params(cfg.epsilon)
    bound = math.exp(cfg.epsilon)
    rows = []
    for case in range(cfg.trials):
        profile = _random_profile(rng, cfg.n[0])
        for omega in (0, 1):
            for i in range(profile.n):
                for report in AUDIT_GRID:
                    base = profile.with_report(i, report)
                    for alt in AUDIT_GRID:
                        ratio = dp_audit.joint_dp_certificate(base, i, alt, BRIER, omega, params)
                        rows.append((case, i, omega, report, alt, ratio, bound,
                                     dp_audit.certifies(ratio, cfg.epsilon)))
    _write_csv(cfg.out / "dp_audit.csv",
               ("case", "bettor", "omega", "report", "alt_report", "ratio", "bound", "certified"), rows)
    max_ratio = max(r[5] for r in rows)
    violations = sum(not r[7] for r in rows)
    _write_json(cfg.out / "dp_audit_summary.json", {
        "seed": cfg.seed, "n": cfg.n[0], "epsilon": cfg.epsilon, "bound": bound,
        "cases": len(rows), "max_ratio": max_ratio, "violations": violations,
    })
    return EXIT_OK if violations == 0 else EXIT_VIOLATION


def concentration_trial(n: int, params, delta: float, trials: int, rng, chunk: int = 500) -> dict:
    """Equal wagers, reports spread evenly over [0, 1], outcome 1."""
    profile = wagering.WagerProfile(np.linspace(0.0, 1.0, n), np.ones(n))
    bound = wagering.concentration_bound(profile.wagers, params, delta)
    expected = np.asarray(wagering.expected_private_profits(profile, BRIER, 1, params))
    violations = 0
    sq = []
    done = 0
    while done < trials:
        size = min(chunk, trials - done)
        realized = wagering.private_profits_batch(profile, BRIER, 1, params, rng, size)
        dev = np.abs(realized - expected)
        violations += int(np.count_nonzero(dev > bound))
        sq.append(np.mean(dev**2, axis=1))
        done += size
    rate = violations / (trials * n)
    return {
        "n": n,
        "bound": float(bound[0]),
        "violation_rate": rate,
        "delta": delta,
        "slack": 3.0 * math.sqrt(delta * (1.0 - delta) / trials),
        "rms_deviation": math.sqrt(float(np.mean(np.concatenate(sq)))),
    }


def cmd_concentration(cfg: ExperimentConfig) -> int:
    rng = np.random.default_rng(cfg.seed)
    params = wagering.privacy_params(cfg.epsilon)
    results = [concentration_trial(n, params, cfg.delta, cfg.trials, rng) for n in cfg.n]
    _write_csv(cfg.out / "concentration.csv", ("n", "bound", "violation_rate", "delta"),
               [(r["n"], r["bound"], r["violation_rate"], r["delta"]) for r in results])
    _write_json(cfg.out / "concentration_summary.json",
                {"seed": cfg.seed, "epsilon": cfg.epsilon, "trials": cfg.trials, "rows": results})
    ok = all(r["violation_rate"] <= r["delta"] + r["slack"] for r in results)
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_loss_curve(cfg: ExperimentConfig) -> int:
    C = cfg.cost_function
    rows = adversary.loss_curve(
        C, cfg.noise_process(), cfg.k, cfg.qstar, cfg.gamma, cfg.rounds, cfg.trials,
        rng=cfg.seed, fee=cfg.fee, min_unit=cfg.min_unit,
    )
    _write_csv(cfg.out / "loss_curve.csv", ("T", "mean_loss", "ci_low", "ci_high", "lemma3_bound"),
               [(r["T"], r["mean_loss"], r["ci_low"], r["ci_high"], r["lemma3_bound"]) for r in rows])
    ok = True
    if cfg.fee == 0 and cfg.min_unit == 0:
        ok = all(r["mean_loss"] >= r["lemma3_bound"] - 4 * r["stderr"] for r in rows)
    if cfg.noise == "none":
        ok = ok and all(r["mean_loss"] <= C.worst_case_loss for r in rows)
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_privacy_probe(cfg: ExperimentConfig) -> int:
    rng = np.random.default_rng(cfg.seed)
    C = cfg.cost_function
    rows = []
    for t in cfg.rounds:
        try:
            r = adversary.privacy_probe(C, cfg.noise_process(), cfg.k, cfg.qstar, t, cfg.trials, rng)
            rows.append((t, r.p1, r.p2, r.implied_eps, r.ci_low, r.ci_high, r.n_cond))
        except adversary.InsufficientEvents as exc:
            log.warning("%s", exc)
            nan = math.nan
            rows.append((t, nan, nan, nan, nan, nan, exc.n_cond))
    _write_csv(cfg.out / "privacy_probe.csv",
               ("t", "p1", "p2", "implied_eps", "ci_low", "ci_high", "n_cond"), rows)
    return EXIT_OK


COMMANDS = {
    "wager-demo": cmd_wager_demo,
    "dp-audit": cmd_dp_audit,
    "concentration": cmd_concentration,
    "loss-curve": cmd_loss_curve,
    "privacy-probe": cmd_privacy_probe,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, required=True)
    common.add_argument("--n", default=None, help="bettor count, or comma list for concentration")
    common.add_argument("--epsilon", type=float, default=1.0,
                        help="wagering privacy level; per-level budget for tree noise")
    common.add_argument("--delta", type=float, default=0.05)
    common.add_argument("--b", type=float, default=100.0, help="LMSR liquidity")
    common.add_argument("--a", type=float, default=0.0, help="LMSR shift")
    common.add_argument("--k", type=float, default=10.0, help="trade cap")
    common.add_argument("--qstar", type=float, default=0.0, help="adversary target state")
    common.add_argument("--gamma", type=float, default=None, help="default k/4")
    common.add_argument("--rounds", default=None, help="comma list of horizons / probe rounds")
    common.add_argument("--trials", type=int, default=None)
    common.add_argument("--noise", choices=("none", "fresh", "tree"), default="fresh")
    common.add_argument("--noise-scale", type=float, default=5.0, help="Laplace scale for fresh noise")
    common.add_argument("--fee", type=float, default=0.0)
    common.add_argument("--min-unit", type=float, default=0.0)
    common.add_argument("--out", default=".")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="privmarket", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = ExperimentConfig.from_args(args)
    except ConfigError as exc:
        print(f"privmarket: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    status = COMMANDS[cfg.subcommand](cfg)
    if status == EXIT_VIOLATION:
        print(f"privmarket: invariant violated in {cfg.subcommand}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
