"""Command-line entry points.

Subcommands: ``design`` (iterative LMI synthesis), ``simulate`` (single
closed-loop trace), ``montecarlo`` (detection statistics), ``calibrate``
(threshold from attack-free runs), ``verify-gain`` (certificate dissipation
plus frequency-domain vertex checks).  Exit codes: 0 success, 1 malformed
configuration, 2 infeasible design, 3 validation failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from ..codesign import algorithm1, algorithm2
from ..detection import monitoring_signal
from ..errors import ConfigError, InitInfeasible, ReplaymarkError
from ..gains import lti_frequency_gain_oracle, random_trajectory_pairs, verify_dissipation
from ..simkit import detection_channel, performance_channel, simulate
from .config import read_design_report, write_design_report
from .montecarlo import (
    INITIAL_GAINS,
    calibrate,
    load_experiment,
    run_montecarlo,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INFEASIBLE = 2
EXIT_VALIDATION = 3

_DEFAULT_EXPERIMENT = os.path.join(os.path.dirname(__file__), "data", "robot_experiment.cfg")


def _build_parser():
    parser = argparse.ArgumentParser(prog="replaymark", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="run the iterative LMI design")
    p.add_argument("--config", default=_DEFAULT_EXPERIMENT, help="experiment config file")
    p.add_argument("--algorithm", type=int, choices=(1, 2), default=2)
    p.add_argument("--alpha", type=float, default=4.0)
    p.add_argument("--iters", type=int, default=30)
    p.add_argument("--beta0", type=float, default=0.01)
    p.add_argument("--g-init", type=float, default=1.0)
    p.add_argument("--out", default="design", help="output prefix for the report files")

    p = sub.add_parser("simulate", help="run one closed-loop trace")
    p.add_argument("--config", default=_DEFAULT_EXPERIMENT)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--no-attack", action="store_true")
    p.add_argument("--out", default="trace.csv")

    p = sub.add_parser("montecarlo", help="Monte-Carlo detection statistics")
    p.add_argument("--config", default=_DEFAULT_EXPERIMENT)
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--watermark", choices=("chaotic", "bernoulli", "none"), default=None)
    p.add_argument("--gains", choices=("initial", "optimized"), default=None)
    p.add_argument("--out", default=None, help="output directory for CSV artifacts")

    p = sub.add_parser("calibrate", help="calibrate the detector threshold")
    p.add_argument("--config", default=_DEFAULT_EXPERIMENT)
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--out", default=None)

    p = sub.add_parser("verify-gain", help="validate certificates of a design report")
    p.add_argument("--report", required=True)
    p.add_argument("--config", default=_DEFAULT_EXPERIMENT)
    p.add_argument("--pairs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--slack-tol", type=float, default=-1e-4)
    return parser


def _cmd_design(args):
    spec = load_experiment(args.config)
    try:
        if args.algorithm == 2:
            report = algorithm2(
                spec.plant,
                g_init=args.g_init,
                alpha=args.alpha,
                beta0=args.beta0,
                iterations=args.iters,
            )
        else:
            base_loop, *_ = read_design_report(INITIAL_GAINS)
            report = algorithm1(
                spec.plant,
                k=base_loop.K,
                l=base_loop.L,
                g_init=args.g_init,
                alpha=args.alpha,
                beta0=args.beta0,
                iterations=args.iters,
            )
    except InitInfeasible as exc:
        print(f"design infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    if report.truncated:
        print("design truncated by a solver failure; report written anyway", file=sys.stderr)
    out_dir = os.path.dirname(args.out)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    write_design_report(report, args.out)
    betas = np.round(report.betas, 6)
    print(f"mode={report.mode} converged={report.converged} final_beta={report.final_beta:.6f}")
    print("beta trace:", " ".join(str(b) for b in betas))
    print(f"wrote {args.out}.cfg and {args.out}_trace.csv")
    return EXIT_INFEASIBLE if report.truncated else EXIT_OK


def _cmd_simulate(args):
    spec = load_experiment(args.config)
    seed = spec.base_seed if args.seed is None else args.seed
    trace = simulate(spec.sim_config(seed, attack=not args.no_attack and spec.attack_enabled))
    g = monitoring_signal(trace, spec.window)
    trace.to_csv(args.out, g=g)
    onset = "none" if trace.replay_onset is None else f"{trace.replay_onset:.3f}s"
    print(f"steps={trace.steps} replay_onset={onset} backend={trace.meta['backend']}")
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_montecarlo(args):
    spec = load_experiment(args.config)
    if args.runs is not None:
        spec.runs = args.runs
    if args.seed is not None:
        spec.base_seed = args.seed
    if args.watermark is not None:
        spec.watermark_kind = args.watermark
    if args.gains is not None:
        loop, det, perf, _ = read_design_report(
            INITIAL_GAINS if args.gains == "initial" else _optimized_path()
        )
        spec.loop, spec.detection_certificate, spec.performance_certificate = loop, det, perf
        spec.gains_mode = args.gains
        spec.meta.pop("x_eq", None)
    threshold, report = run_montecarlo(spec, out_dir=args.out)
    print(
        f"runs={spec.runs} threshold={threshold:.6g} rate={report.rate:.3f} "
        f"avg_delay={report.avg_delay:.3f} max_delay={report.max_delay:.3f} "
        f"fp_rate={report.false_positive_rate:.3f} D_mean={report.d_index_mean:.2f}"
    )
    if args.out:
        print(f"wrote CSV artifacts under {args.out}/")
    return EXIT_OK


def _optimized_path():
    from .montecarlo import OPTIMIZED_GAINS

    return OPTIMIZED_GAINS


def _cmd_calibrate(args):
    spec = load_experiment(args.config)
    threshold = calibrate(spec, runs=args.runs)
    print(f"threshold = {threshold!r}")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(f"{threshold!r}\n")
        print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_verify_gain(args):
    spec = load_experiment(args.config)
    loop, det_cert, perf_cert, _ = read_design_report(args.report)
    failures = []

    checks = []
    if det_cert is not None:
        checks.append(("detection", det_cert, detection_channel(spec.plant, loop), "inf"))
    if perf_cert is not None:
        checks.append(("performance", perf_cert, performance_channel(spec.plant, loop), "sup"))
    if not checks:
        print("report carries no certificates", file=sys.stderr)
        return EXIT_CONFIG

    for name, cert, channel, kind in checks:
        pairs = random_trajectory_pairs(channel, args.pairs, horizon=10.0, seed=args.seed)
        rep = verify_dissipation(cert, pairs, tol=args.slack_tol)
        status = "ok" if rep.ok(args.slack_tol) else "VIOLATED"
        print(f"{name}: dissipation worst slack {rep.worst_slack:.3e} over {args.pairs} pairs [{status}]")
        if not rep.ok(args.slack_tol):
            failures.append(f"{name} dissipation")
        for a, b, c, d in channel.vertex_matrices(spec.plant.jacobian):
            val = lti_frequency_gain_oracle(a, b, c, d, kind)
            if kind == "sup" and val > cert.gamma_sq + 1e-3:
                failures.append(f"{name} vertex sup {val:.6f} exceeds certified {cert.gamma_sq:.6f}")
            if kind == "inf" and val < cert.gamma_sq - 1e-3:
                failures.append(f"{name} vertex inf {val:.6f} below certified {cert.gamma_sq:.6f}")
    if failures:
        for f in failures:
            print(f"validation failure: {f}", file=sys.stderr)
        return EXIT_VALIDATION
    print("all certificate checks passed")
    return EXIT_OK


_COMMANDS = {
    "design": _cmd_design,
    "simulate": _cmd_simulate,
    "montecarlo": _cmd_montecarlo,
    "calibrate": _cmd_calibrate,
    "verify-gain": _cmd_verify_gain,
}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InitInfeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ReplaymarkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
