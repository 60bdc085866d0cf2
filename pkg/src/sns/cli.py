"""Command-line entry point ``sns``.

``sns <command> --config <path> [--seed N] [--out DIR] [--threads N]``

Commands: ``simulate``, ``verify``, ``invariant``, ``decay`` and ``mixing``.
Exit codes: 0 pass, 1 assertion failure, 2 usage or input error, 3 numerical blow-up.
Every CSV and JSON written embeds the hash of the effective configuration.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config
from .io import CheckpointError, write_csv, write_json

log = logging.getLogger("sns")

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_BLOWUP = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _out(config: ExperimentConfig, name: str) -> str:
    os.makedirs(config.out_dir, exist_ok=True)
    return os.path.join(config.out_dir, name)


# ------------------------------------------------------------------ commands
def cmd_simulate(config: ExperimentConfig, resume: str | None = None) -> bool:
    from .solver import RunReport, run_trajectory

    ck_dir = None
    if config.checkpoint_every:
        ck_dir = _out(config, "checkpoints")
        os.makedirs(ck_dir, exist_ok=True)
    report, _, _ = run_trajectory(config, checkpoint_dir=ck_dir, resume=resume)
    h = config.config_hash()
    write_csv(_out(config, "report.csv"), report.rows, RunReport.COLUMNS, h)
    summary = {
        "command": "simulate",
        "status": report.status,
        "provenance": report.provenance,
        "T": report.T, "cause": report.cause, "Tbar": report.Tbar,
        "lambda": report.lam, "w_threshold": report.w_threshold,
        "saturated_steps": report.saturated_steps,
        "passed": report.status == "completed",
    }
    write_json(_out(config, "summary.json"), summary, h)
    log.info("simulate: %d rows, status %s", len(report.rows), report.status)
    return report.status == "completed"


def cmd_verify(config: ExperimentConfig, suites: list[str] | None = None) -> bool:
    from .suites import COLUMNS, SUITES, run_suite, suite_passed

    names = list(suites or config.suites)
    unknown = [s for s in names if s not in SUITES]
    if unknown:
        raise UsageError(f"unknown suite(s) {', '.join(unknown)}; choose from {', '.join(SUITES)}")
    h = config.config_hash()
    verdicts = {}
    for name in names:
        kwargs = {"kappa": config.kappa} if name == "wick" else {}
        rows = run_suite(name, seed=config.seed, quick=config.quick, **kwargs)
        ok = suite_passed(rows)
        verdicts[name] = ok
        write_csv(_out(config, f"verify_{name}.csv"), [r.as_dict() for r in rows], COLUMNS, h)
        print(f"{name:18s} {'PASS' if ok else 'FAIL'}")
    write_json(_out(config, "verify.json"), {"command": "verify", "seed": config.seed, "quick": config.quick,
                                             "verdicts": verdicts, "passed": all(verdicts.values())}, h)
    return all(verdicts.values())


def _invariant_resume(path: str) -> dict:
    try:
        with np.load(path, allow_pickle=False) as z:
            sums = {"state": z["state"], "step": int(z["step"]), "batch_sums": list(z["batch_sums"]),
                    "batch_counts": z["batch_counts"].tolist(), "V": z["V"].tolist()}
            stored = str(z["config_hash"])
    except (OSError, KeyError, ValueError) as exc:
        raise CheckpointError(f"cannot read invariant state {path}: {exc}") from exc
    return sums, stored


def cmd_invariant(config: ExperimentConfig, resume: str | None = None) -> bool:
    from .experiments import InvariantResult, invariant_stats

    grid = config.grid()
    spectrum = config.spectrum(grid)
    h = config.config_hash()
    sums = None
    if resume:
        sums, stored = _invariant_resume(resume)
        if stored != h:
            log.warning("resuming from a state written under config hash %s", stored)
    res = invariant_stats(grid, spectrum, config.h, config.t_end, config.burn_in, config.seed,
                          n_traj=config.ensemble, sharp_N=config.sharp_N or None, scheme=config.scheme,
                          sample_every=config.sample_every, nonlinear=config.nonlinear,
                          alpha0=config.alpha0, kappa=config.kappa, resume=sums)
    write_csv(_out(config, "invariant.csv"), res.rows, InvariantResult.COLUMNS, h)
    s = res.sums
    np.savez(_out(config, "invariant_state.npz"), state=s["state"], step=s["step"],
             batch_sums=np.stack(s["batch_sums"]), batch_counts=np.array(s["batch_counts"]),
             V=np.array(s["V"], dtype=float), config_hash=h)
    passed = res.frac_within >= 0.95
    write_json(_out(config, "invariant.json"),
               {"command": "invariant", "seed": config.seed, "frac_within_3se": res.frac_within,
                "n_batches": res.n_samples, "V_tail": res.tail_fit, "passed": passed}, h)
    print(f"invariant: {res.frac_within:.3f} of modes within 3 SE ({'PASS' if passed else 'FAIL'})")
    return passed


def cmd_decay(config: ExperimentConfig) -> bool:
    from .experiments import lyapunov_decay_experiment

    grid = config.grid()
    spectrum = config.spectrum(grid)
    res = lyapunov_decay_experiment(grid, spectrum, config.lambdas, config.h, config.t_end,
                                    config.ensemble, config.seed, config.n_samples, config.alpha0,
                                    config.kappa)
    rows = []
    for lam, (mean, se) in res.curves.items():
        for t, m, e in zip(res.times, mean, se):
            rows.append({"lambda": lam, "t": t, "mean_V": m, "stderr": e})
    h = config.config_hash()
    write_csv(_out(config, "decay.csv"), rows, ("lambda", "t", "mean_V", "stderr"), h)
    passed = res.passed()
    write_json(_out(config, "decay.json"),
               {"command": "decay", "seed": config.seed, "gamma": res.gamma, "C": res.C,
                "plateau": res.plateau, "final": {str(k): v for k, v in res.final.items()},
                "common_plateau": res.common_plateau, "decreasing": res.decreasing, "passed": passed}, h)
    print(f"decay: gamma={res.gamma:.4g} plateau={res.plateau:.4g} ({'PASS' if passed else 'FAIL'})")
    return passed


def cmd_mixing(config: ExperimentConfig) -> bool:
    from .experiments import mixing_diagnostic
    from .solver import make_initial_split

    grid = config.grid()
    spectrum = config.spectrum(grid)
    lo, hi = min(config.lambdas), max(config.lambdas)
    u1 = make_initial_split(grid, lo, 0.0, 2 * config.alpha0, config.kappa, config.seed).u.coeffs
    u2 = make_initial_split(grid, hi, 0.0, 2 * config.alpha0, config.kappa, config.seed + 1).u.coeffs
    res = mixing_diagnostic(grid, spectrum, u1, u2, config.h, config.t_end, config.ensemble, config.seed,
                            config.n_samples)
    rows = [{"t": t, "q10": q[0], "q50": q[1], "q90": q[2], "wasserstein": w}
            for t, q, w in zip(res.times, res.quantiles, res.wasserstein)]
    h = config.config_hash()
    write_csv(_out(config, "mixing.csv"), rows, ("t", "q10", "q50", "q90", "wasserstein"), h)
    write_json(_out(config, "mixing.json"),
               {"command": "mixing", "seed": config.seed, "spearman": res.spearman,
                "passed": res.decreasing}, h)
    print(f"mixing: spearman={res.spearman:.3f} ({'PASS' if res.decreasing else 'FAIL'})")
    return res.decreasing


# ------------------------------------------------------------------ argument handling
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="INI configuration file")
    common.add_argument("--seed", type=int, default=None, help="override the configured seed")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--threads", type=int, default=None, help="FFT worker threads")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="sns", description="Stochastic Navier-Stokes pseudo-spectral toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", parents=[common], help="run the ansatz solver and write a report")
    s.add_argument("--resume", default=None, help="checkpoint file to continue from")
    v = sub.add_parser("verify", parents=[common], help="run verification suites")
    v.add_argument("--suite", action="append", default=None, help="suite name (repeatable)")
    v.add_argument("--full", action="store_true", help="use the full acceptance sizes")
    i = sub.add_parser("invariant", parents=[common], help="invariant-measure statistics")
    i.add_argument("--resume", default=None, help="invariant_state.npz from an earlier run")
    sub.add_parser("decay", parents=[common], help="Lyapunov decay curves")
    sub.add_parser("mixing", parents=[common], help="coupled mixing diagnostic")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_PASS
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from .solver import NumericalBlowUp

    try:
        overrides = {"seed": args.seed, "out_dir": args.out, "threads": args.threads}
        if getattr(args, "full", False):
            overrides["quick"] = False
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        config = load_config(args.config, **overrides)
        if args.command == "simulate":
            ok = cmd_simulate(config, args.resume)
        elif args.command == "verify":
            ok = cmd_verify(config, args.suite)
        elif args.command == "invariant":
            ok = cmd_invariant(config, args.resume)
        elif args.command == "decay":
            ok = cmd_decay(config)
        else:
            ok = cmd_mixing(config)
    except (ConfigError, CheckpointError, UsageError, FileNotFoundError) as exc:
        print(f"sns: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalBlowUp as exc:
        print(f"sns: numerical blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    return EXIT_PASS if ok else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
