#!/usr/bin/env python3
"""Regenerate the packaged benchmark gain files.

Runs the deterministic co-design pipeline on the built-in robot model and
writes bench/data/initial_gains.cfg (bootstrap gains, unit watermark gain)
and bench/data/optimized_gains.cfg (full co-design output) plus the beta
trace.  Re-running reproduces the files bit for bit.
"""

import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from replaymark.bench.config import write_design_report
from replaymark.bench.robot import builtin_robot_model
from replaymark.codesign import (
    DesignReport,
    IterationRecord,
    _bootstrap_observer,
    _bootstrap_state_feedback,
    algorithm2,
    certify_final_gains,
)
from replaymark.gains.certificates import LoopMatrices
from replaymark.sdp import SdpOptions

ALPHA = 4.0
G_INIT = 1.0
BETA0 = 0.01
ITERATIONS = 30


def main():
    out_dir = os.path.join(os.path.dirname(__file__), "..", "src", "replaymark", "bench", "data")
    os.makedirs(out_dir, exist_ok=True)
    plant = builtin_robot_model()
    options = SdpOptions()

    k0, _ = _bootstrap_state_feedback(plant, np.array([[G_INIT]]), ALPHA, 1e-3, options)
    l0, _ = _bootstrap_observer(plant, 0.1, options)
    loop0 = LoopMatrices(K=k0, L=l0, G=np.array([[G_INIT]]))
    det0, perf0 = certify_final_gains(plant, loop0, options)
    initial = DesignReport(mode="Bootstrap", alpha=ALPHA)
    initial.iterations = [IterationRecord(0, BETA0, "init", float("nan"))]
    initial.loop = loop0
    initial.detection_certificate = det0
    initial.performance_certificate = perf0
    write_design_report(initial, os.path.join(out_dir, "initial_gains"))
    print("initial: K0 =", np.round(k0, 6), " L0 =", np.round(l0.ravel(), 6))
    print("initial: beta_cert =", det0.gamma_sq, " gamma+ =", perf0.gamma_sq)

    report = algorithm2(plant, g_init=G_INIT, alpha=ALPHA, beta0=BETA0, iterations=ITERATIONS)
    write_design_report(report, os.path.join(out_dir, "optimized_gains"))
    print("optimized: K =", np.round(report.loop.K, 6))
    print("optimized: L =", np.round(report.loop.L.ravel(), 6))
    print("optimized: G =", report.loop.G, " final beta =", report.final_beta)


if __name__ == "__main__":
    main()
