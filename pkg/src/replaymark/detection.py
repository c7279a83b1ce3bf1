"""Sliding-window monitoring signal, thresholds, verdicts, and indices.

The detector integrates the squared innovation over a trailing window of
``window`` seconds and divides by the window length.  Before one full
window has elapsed the integral runs from zero (ramp-in); that region is
flagged as warm-up and never triggers.  Thresholds are calibrated
empirically from attack-free traces, excluding the initial settling
transient, since the class-K noise-to-error bounds have no closed form.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateWindow, EmptyCalibrationSet, ShapeError

MANUAL = "manual"
CALIBRATED = "calibrated"


@dataclass(frozen=True)
class DetectorConfig:
    window: float
    threshold: float = 0.0
    threshold_mode: str = MANUAL

    def __post_init__(self):
        if self.window <= 0:
            raise ShapeError("window must be positive")
        if self.threshold < 0:
            raise ShapeError("threshold must be nonnegative")


def monitoring_signal(trace, window):
    """g(t): trailing-window mean of the squared innovation norm.

    Accepts a ClosedLoopTrace or a (times, innovation) pair; the grid must
    be uniform and the window at least two grid steps.
    """
    if hasattr(trace, "innovation"):
        times = trace.times
        innovation = trace.innovation
    else:
        times, innovation = trace
    times = np.asarray(times, dtype=float)
    innovation = np.atleast_2d(np.asarray(innovation, dtype=float))
    if innovation.shape[0] != times.shape[0]:
        raise ShapeError("innovation and time grid lengths differ")
    dt = float(times[1] - times[0])
    w = int(round(window / dt))
    if w < 2:
        raise ShapeError("window must span at least two grid steps")
    eff = w * dt  # effective window on the grid
    e = np.sum(innovation**2, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * dt * (e[1:] + e[:-1]))])
    g = np.empty_like(cum)
    g[:w] = cum[:w] / eff  # ramp-in
    g[w:] = (cum[w:] - cum[:-w]) / eff
    return g


def calibrate_threshold(attack_free_traces, window, margin=0.1, transient=20.0):
    """(1 + margin) times the largest post-transient g over the traces."""
    if len(attack_free_traces) < 5:
        raise EmptyCalibrationSet(f"need >= 5 attack-free traces, got {len(attack_free_traces)}")
    peak = 0.0
    for trace in attack_free_traces:
        g = monitoring_signal(trace, window)
        keep = trace.times >= max(transient, window)
        if not np.any(keep):
            raise ShapeError("trace too short for the calibration transient")
        peak = max(peak, float(np.max(g[keep])))
    return (1.0 + margin) * peak


@dataclass
class RunVerdict:
    detected: bool
    detection_time: float = None
    delay: float = None
    false_positive: bool = False
    first_false_positive: float = None
    run: int = 0
    seed: int = 0
    d_index: float = float("nan")


def verdict(g, times, config, attack_onset=None, ignore_before=None):
    """Threshold crossing verdict for one run.

    Crossings before ``attack_onset`` count as false positives, reported
    separately; the warm-up region (one window, or ``ignore_before`` when
    given, e.g. a settling transient) never triggers either way.
    """
    g = np.asarray(g, dtype=float)
    times = np.asarray(times, dtype=float)
    lo = max(config.window, ignore_before or 0.0)
    active = times >= lo
    over = active & (g > config.threshold)
    out = RunVerdict(detected=False)
    if attack_onset is None:
        if np.any(over):
            out.false_positive = True
            out.first_false_positive = float(times[np.argmax(over)])
        return out
    pre = over & (times < attack_onset)
    if np.any(pre):
        out.false_positive = True
        out.first_false_positive = float(times[np.argmax(pre)])
    post = over & (times >= attack_onset)
    if np.any(post):
        idx = int(np.argmax(post))
        out.detected = True
        out.detection_time = float(times[idx])
        out.delay = float(times[idx] - attack_onset)
    return out


def theorem1_bounds(trace, cert, t_shift, window, g_n, eps=1e-6):
    """Optimistic lower bound on g(t) during replay (initial-mismatch term omitted).

    Uses the certified squared lower gain of the watermark-to-prediction
    channel; returns (times, bound) over [T, min(2T, horizon)].  The bound
    omits the class-K initial-state term, which has no closed form, so it
    is labelled optimistic: whenever it clears the threshold the true g(t)
    is expected to as well, up to that term.
    """
    gamma = cert.gamma_sq if hasattr(cert, "gamma_sq") else float(cert)
    times = trace.times
    dt = float(times[1] - times[0])
    shift = int(round(t_shift / dt))
    if shift < 1 or shift >= len(times):
        raise ShapeError("shift outside the trace")
    end = min(2.0 * t_shift, float(times[-1]))
    k0 = shift
    k1 = int(round(end / dt))
    diff = trace.xi[k0 : k1 + 1] - trace.xi[k0 - shift : k1 + 1 - shift]
    d2 = np.sum(diff**2, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * dt * (d2[1:] + d2[:-1]))])
    w = int(round(window / dt))
    out = np.empty_like(cum)
    ramp = min(w, len(cum))
    out[:ramp] = cum[:ramp]  # Theta = T while t < T + window
    out[ramp:] = cum[ramp:] - cum[:-w][: len(cum) - ramp]
    bound = ((gamma - eps) / window) * out - g_n
    return times[k0 : k1 + 1], bound


def d_index(g, times, pre_window=(20.0, 69.0), post_window=(70.0, 100.0)):
    """Ratio of the maximal g after attack onset to the maximum before it."""
    g = np.asarray(g, dtype=float)
    times = np.asarray(times, dtype=float)
    pre = (times >= pre_window[0]) & (times <= pre_window[1])
    post = (times >= post_window[0]) & (times <= post_window[1])
    if not np.any(pre) or not np.any(post):
        raise ShapeError("windows fall outside the trace")
    denom = float(np.max(g[pre]))
    if denom < 1e-12:
        raise DegenerateWindow(f"pre-attack maximum {denom:.3e} below guard")
    return float(np.max(g[post])) / denom


@dataclass
class DetectionReport:
    """Aggregate Monte-Carlo detection statistics."""

    runs: list = field(default_factory=list)
    rate: float = float("nan")
    avg_delay: float = float("nan")
    max_delay: float = float("nan")
    false_positive_rate: float = float("nan")
    d_index_mean: float = float("nan")

    @classmethod
    def aggregate(cls, runs):
        runs = sorted(runs, key=lambda r: r.run)
        n = len(runs)
        detected = [r for r in runs if r.detected]
        delays = np.array([r.delay for r in detected]) if detected else np.array([])
        d_vals = np.array([r.d_index for r in runs if np.isfinite(r.d_index)])
        return cls(
            runs=runs,
            rate=len(detected) / n if n else float("nan"),
            avg_delay=float(np.mean(delays)) if delays.size else float("nan"),
            max_delay=float(np.max(delays)) if delays.size else float("nan"),
            false_positive_rate=sum(r.false_positive for r in runs) / n if n else float("nan"),
            d_index_mean=float(np.mean(d_vals)) if d_vals.size else float("nan"),
        )

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["run", "seed", "detected", "delay", "false_positive", "D"])
            for r in self.runs:
                writer.writerow(
                    [
                        r.run,
                        r.seed,
                        int(r.detected),
                        "" if r.delay is None else repr(float(r.delay)),
                        int(r.false_positive),
                        repr(float(r.d_index)),
                    ]
                )


def read_report_csv(path):
    """Read back an aggregate-report CSV (round-trip helper)."""
    runs = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            runs.append(
                RunVerdict(
                    run=int(row["run"]),
                    seed=int(row["seed"]),
                    detected=bool(int(row["detected"])),
                    delay=float(row["delay"]) if row["delay"] else None,
                    false_positive=bool(int(row["false_positive"])),
                    d_index=float(row["D"]),
                )
            )
    return DetectionReport.aggregate(runs)
