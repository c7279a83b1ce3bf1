"""Experiment assembly and the Monte-Carlo detection harness.

An experiment file names the model, the gain source, the watermark, the
attack scenario, the detector, and the Monte-Carlo parameters.  The harness
calibrates the threshold on attack-free runs (settling transient excluded),
then evaluates seeded attacked runs and aggregates detection statistics.
Run seeds are ``base_seed + run_index`` so batches parallelize cleanly and
reductions are deterministic (sorted by run index).
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..detection import (
    CALIBRATED,
    MANUAL,
    DetectionReport,
    DetectorConfig,
    calibrate_threshold,
    d_index,
    monitoring_signal,
    verdict,
)
from ..errors import ConfigError
from ..simkit import AttackScenario, ClosedLoopConfig, linear_plant, loop_equilibrium, simulate
from ..watermarks import BernoulliSource, rossler_prototype4
from .config import parse_config, read_design_report, write_config
from .robot import builtin_robot_model

_DATA_DIR = os.path.join(os.path.dirname(__file__), "data")

INITIAL_GAINS = os.path.join(_DATA_DIR, "initial_gains.cfg")
OPTIMIZED_GAINS = os.path.join(_DATA_DIR, "optimized_gains.cfg")


@dataclass
class ExperimentSpec:
    plant: object
    loop: object
    detection_certificate: object = None
    performance_certificate: object = None
    gains_mode: str = "optimized"
    watermark_kind: str = "chaotic"
    dwell: float = 0.1
    chaotic_scale: float = 1.0
    attack_enabled: bool = True
    replay_start: float = 70.0
    replay_end: float = None
    start_mode: str = "immediate"
    match_tolerance: float = 1e-3
    contamination: tuple = ("constant", 0.5)
    window: float = 2.0
    threshold_mode: str = CALIBRATED
    margin: float = 0.1
    threshold: float = 0.0
    step: float = 1e-3
    horizon: float = 100.0
    omega_bound: float = 0.05
    nu_bound: float = 0.05
    transient: float = 20.0
    runs: int = 100
    base_seed: int = 1000
    calibration_runs: int = 10
    workers: int = 1
    backend: str = "auto"
    start: str = "equilibrium"  # or "zero"
    meta: dict = field(default_factory=dict)

    def start_state(self):
        if self.start == "zero":
            return np.zeros(self.plant.n)
        if self.start == "equilibrium":
            if "x_eq" not in self.meta:
                self.meta["x_eq"] = loop_equilibrium(self.plant, self.loop.K)
            return self.meta["x_eq"]
        raise ConfigError(f"unknown start mode {self.start!r}", field="sim.start")

    def watermark_source(self, run_seed):
        if self.watermark_kind == "none":
            return None
        if self.watermark_kind == "chaotic":
            # per-run clone with a seeded generic start on the attractor
            return rossler_prototype4(scale=self.chaotic_scale).with_seed(run_seed + 7919)
        if self.watermark_kind == "bernoulli":
            return BernoulliSource(self.plant.m, dwell=self.dwell, seed=run_seed + 7919)
        raise ConfigError(f"unknown watermark kind {self.watermark_kind!r}", field="watermark.kind")

    def attack_scenario(self):
        if not self.attack_enabled:
            return None
        return AttackScenario(
            replay_start=self.replay_start,
            replay_end=self.replay_end,
            start_mode=self.start_mode,
            match_tolerance=self.match_tolerance,
            contamination=self.contamination,
        )

    def sim_config(self, seed, attack=True):
        x0 = self.start_state()
        return ClosedLoopConfig(
            plant=self.plant,
            loop=self.loop,
            step=self.step,
            horizon=self.horizon,
            omega_bound=self.omega_bound,
            nu_bound=self.nu_bound,
            seed=seed,
            watermark=self.watermark_source(seed),
            attack=self.attack_scenario() if attack else None,
            x0=x0,
            xhat0=x0.copy(),
            backend=self.backend,
        )


def _resolve_gains(doc, base_dir):
    mode = doc.get("gains", "mode", default="optimized")
    if mode == "initial":
        path = INITIAL_GAINS
    elif mode == "optimized":
        path = OPTIMIZED_GAINS
    elif mode == "file":
        path = doc.get("gains", "path", required=True)
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
    else:
        raise ConfigError(f"unknown gains mode {mode!r}", field="gains.mode")
    if not os.path.exists(path):
        raise ConfigError(f"gains file not found: {path}", field="gains.mode")
    loop, det, perf, _ = read_design_report(path)
    return mode, loop, det, perf


def _resolve_plant(doc):
    kind = doc.get("model", "kind", default="robot")
    if kind == "robot":
        return builtin_robot_model()
    if kind == "linear":
        return linear_plant(
            doc.matrix("A", required=True),
            doc.matrix("B", required=True),
            doc.matrix("C", required=True),
            doc.matrix("D", required=True),
        )
    raise ConfigError(f"unknown model kind {kind!r}", field="model.kind")


def load_experiment(path):
    doc = parse_config(path)
    base_dir = os.path.dirname(os.path.abspath(path))
    plant = _resolve_plant(doc)
    mode, loop, det, perf = _resolve_gains(doc, base_dir)

    contam_raw = doc.get("attack", "contamination", default="constant 0.5")
    parts = contam_raw.split()
    if parts[0] == "none":
        contamination = ("none", 0.0)
    elif parts[0] in ("constant", "ramp") and len(parts) == 2:
        contamination = (parts[0], float(parts[1]))
    else:
        raise ConfigError(f"bad contamination spec {contam_raw!r}", field="attack.contamination")

    spec = ExperimentSpec(
        plant=plant,
        loop=loop,
        detection_certificate=det,
        performance_certificate=perf,
        gains_mode=mode,
        watermark_kind=doc.get("watermark", "kind", default="chaotic"),
        dwell=doc.get("watermark", "dwell", default=0.1, cast=float),
        chaotic_scale=doc.get("watermark", "scale", default=1.0, cast=float),
        attack_enabled=doc.get("attack", "enabled", default=True, cast=bool),
        replay_start=doc.get("attack", "replay_start", default=70.0, cast=float),
        replay_end=doc.get("attack", "replay_end", default=None, cast=float),
        start_mode=doc.get("attack", "start_mode", default="immediate"),
        match_tolerance=doc.get("attack", "match_tolerance", default=1e-3, cast=float),
        contamination=contamination,
        window=doc.get("detector", "window", default=2.0, cast=float),
        threshold_mode=doc.get("detector", "threshold_mode", default=CALIBRATED),
        margin=doc.get("detector", "margin", default=0.1, cast=float),
        threshold=doc.get("detector", "threshold", default=0.0, cast=float),
        step=doc.get("sim", "step", default=1e-3, cast=float),
        horizon=doc.get("sim", "horizon", default=100.0, cast=float),
        omega_bound=doc.get("sim", "omega_bound", default=0.05, cast=float),
        nu_bound=doc.get("sim", "nu_bound", default=0.05, cast=float),
        transient=doc.get("sim", "transient", default=20.0, cast=float),
        start=doc.get("sim", "start", default="equilibrium"),
        runs=doc.get("montecarlo", "runs", default=100, cast=int),
        base_seed=doc.get("montecarlo", "base_seed", default=1000, cast=int),
        calibration_runs=doc.get("montecarlo", "calibration_runs", default=10, cast=int),
        workers=doc.get("montecarlo", "workers", default=1, cast=int),
    )
    if spec.runs < 1:
        raise ConfigError("montecarlo.runs must be >= 1", field="montecarlo.runs")
    if spec.threshold_mode not in (CALIBRATED, MANUAL):
        raise ConfigError(
            f"unknown threshold mode {spec.threshold_mode!r}", field="detector.threshold_mode"
        )
    return spec


def calibrate(spec, runs=None):
    """Threshold from attack-free runs on a disjoint seed block."""
    n = runs or spec.calibration_runs
    traces = [
        simulate(spec.sim_config(spec.base_seed + 900000 + j, attack=False)) for j in range(n)
    ]
    return calibrate_threshold(traces, spec.window, margin=spec.margin, transient=spec.transient)


def _one_run(args):
    spec, run_idx, threshold = args
    seed = spec.base_seed + run_idx
    trace = simulate(spec.sim_config(seed, attack=spec.attack_enabled))
    g = monitoring_signal(trace, spec.window)
    det_cfg = DetectorConfig(window=spec.window, threshold=threshold, threshold_mode=MANUAL)
    onset = trace.replay_onset if spec.attack_enabled else None
    v = verdict(g, trace.times, det_cfg, attack_onset=onset, ignore_before=spec.transient)
    v.run = run_idx
    v.seed = seed
    if spec.attack_enabled and spec.horizon > spec.replay_start + 1:
        v.d_index = d_index(
            g,
            trace.times,
            pre_window=(spec.transient, spec.replay_start - 1.0),
            post_window=(spec.replay_start, spec.horizon),
        )
    return v


def run_montecarlo(spec, out_dir=None, threshold=None):
    """Calibrate (unless manual/pinned), evaluate all runs, aggregate, dump CSVs."""
    if threshold is None:
        threshold = spec.threshold if spec.threshold_mode == MANUAL else calibrate(spec)
    jobs = [(spec, i, threshold) for i in range(spec.runs)]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            verdicts = list(pool.map(_one_run, jobs))
    else:
        verdicts = [_one_run(j) for j in jobs]
    report = DetectionReport.aggregate(verdicts)

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        report.to_csv(os.path.join(out_dir, "report.csv"))
        write_config(
            os.path.join(out_dir, "summary.cfg"),
            {
                "summary": {
                    "runs": spec.runs,
                    "threshold": float(threshold),
                    "rate": float(report.rate),
                    "avg_delay": float(report.avg_delay),
                    "max_delay": float(report.max_delay),
                    "false_positive_rate": float(report.false_positive_rate),
                    "d_index_mean": float(report.d_index_mean),
                }
            },
        )
        trace = simulate(spec.sim_config(spec.base_seed, attack=spec.attack_enabled))
        g = monitoring_signal(trace, spec.window)
        trace.to_csv(os.path.join(out_dir, "trace_run0.csv"), g=g)
    return threshold, report
