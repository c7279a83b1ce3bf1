#!/usr/bin/env python3
"""Compare the compiled and pure-Python simulation kernels.

Runs the benchmark closed loop (watermark + replay attack) and the channel
integrator on both backends, reports steps/second and the worst state
discrepancy.  The compiled kernel is what makes Monte-Carlo studies cheap;
the Python backend exists as a fallback and as an oracle for it.
"""

import time

import numpy as np

from replaymark.bench.config import read_design_report
from replaymark.bench.montecarlo import OPTIMIZED_GAINS, ExperimentSpec
from replaymark.bench.robot import builtin_robot_model
from replaymark.simkit import COMPILED_AVAILABLE, detection_channel, simulate, simulate_channel


def time_closed_loop(backend, horizon=20.0):
    plant = builtin_robot_model()
    loop, *_ = read_design_report(OPTIMIZED_GAINS)
    spec = ExperimentSpec(
        plant=plant, loop=loop, watermark_kind="chaotic", horizon=horizon,
        replay_start=horizon / 2.0,
    )
    spec.backend = backend
    cfg = spec.sim_config(seed=0, attack=True)
    t0 = time.perf_counter()
    trace = simulate(cfg)
    elapsed = time.perf_counter() - t0
    return trace, elapsed


def time_channel(backend, horizon=20.0, dt=1e-3):
    plant = builtin_robot_model()
    loop, *_ = read_design_report(OPTIMIZED_GAINS)
    chan = detection_channel(plant, loop)
    steps = int(round(horizon / dt))
    t = 0.5 * dt * np.arange(2 * steps + 1)
    u = np.sin(1.3 * t)[:, None]
    t0 = time.perf_counter()
    x, y = simulate_channel(chan, np.zeros(4), u, dt, steps, backend=backend)
    elapsed = time.perf_counter() - t0
    return (x, y), elapsed


def main():
    if not COMPILED_AVAILABLE:
        print("compiled backend unavailable; nothing to compare")
        return
    horizon = 20.0
    steps = int(horizon / 1e-3)

    tr_c, t_c = time_closed_loop("compiled", horizon)
    tr_p, t_p = time_closed_loop("python", horizon)
    dx = np.max(np.abs(tr_c.x - tr_p.x))
    print(f"closed loop ({steps} steps):")
    print(f"  compiled: {t_c*1e3:8.1f} ms   ({steps/t_c/1e6:6.2f} Msteps/s)")
    print(f"  python  : {t_p*1e3:8.1f} ms   ({steps/t_p/1e3:6.2f} ksteps/s)")
    print(f"  speedup : {t_p/t_c:8.0f}x    worst |dx| = {dx:.3e}")

    (xc, _), t_c = time_channel("compiled", horizon)
    (xp, _), t_p = time_channel("python", horizon)
    dx = np.max(np.abs(xc - xp))
    print(f"channel ({steps} steps):")
    print(f"  compiled: {t_c*1e3:8.1f} ms   ({steps/t_c/1e6:6.2f} Msteps/s)")
    print(f"  python  : {t_p*1e3:8.1f} ms   ({steps/t_p/1e3:6.2f} ksteps/s)")
    print(f"  speedup : {t_p/t_c:8.0f}x    worst |dx| = {dx:.3e}")


if __name__ == "__main__":
    main()
