import numpy as np
import pytest

from replaymark.detection import (
    DetectionReport,
    DetectorConfig,
    RunVerdict,
    calibrate_threshold,
    d_index,
    monitoring_signal,
    read_report_csv,
    theorem1_bounds,
    verdict,
)
from replaymark.errors import DegenerateWindow, EmptyCalibrationSet
from replaymark.gains import GainCertificate
from replaymark.gains.certificates import LOWER


def _grid(horizon, dt=1e-3):
    return dt * np.arange(int(round(horizon / dt)) + 1)


def test_monitoring_zero_innovation():
    t = _grid(5.0)
    g = monitoring_signal((t, np.zeros((len(t), 1))), 2.0)
    assert np.all(g == 0.0)


def test_monitoring_constant_innovation():
    t = _grid(5.0)
    c = 0.7
    innov = np.full((len(t), 1), c)
    g = monitoring_signal((t, innov), 2.0)
    steady = g[t >= 2.0]
    np.testing.assert_allclose(steady, c**2, atol=1e-12)
    # ramp-in: linear growth toward c^2
    assert g[1000] == pytest.approx(c**2 / 2.0, abs=1e-9)


def test_monitoring_sine_innovation():
    # grid aligned with the window so the integral covers whole periods
    dt = 2.0 * np.pi / 6000.0
    t = dt * np.arange(int(round(20.0 / dt)) + 1)
    innov = np.sin(t)[:, None]
    g = monitoring_signal((t, innov), 2.0 * np.pi)
    steady = g[t >= 2.0 * np.pi]
    np.testing.assert_allclose(steady, 0.5, atol=1e-6)


def test_calibrate_noiseless_traces_zero_threshold():
    class T:
        times = _grid(30.0)
        innovation = np.zeros((len(times), 1))

    assert calibrate_threshold([T()] * 5, window=2.0, margin=0.1) == 0.0


def test_calibrate_needs_five_traces():
    with pytest.raises(EmptyCalibrationSet):
        calibrate_threshold([], window=2.0)


def test_calibrate_margin_zero_no_fp_on_itself():
    rng = np.random.default_rng(0)
    traces = []
    for _ in range(6):
        t = _grid(30.0)
        innov = 0.05 * rng.standard_normal((len(t), 1))

        class T:
            times = t
            innovation = innov

        traces.append(T())
    theta = calibrate_threshold(traces, window=2.0, margin=0.0, transient=20.0)
    cfg = DetectorConfig(window=2.0, threshold=theta)
    for tr in traces:
        g = monitoring_signal((tr.times, tr.innovation), 2.0)
        v = verdict(g, tr.times, cfg, attack_onset=None, ignore_before=20.0)
        assert not v.false_positive


def test_verdict_below_threshold():
    t = _grid(10.0)
    g = np.full(len(t), 0.1)
    v = verdict(g, t, DetectorConfig(window=1.0, threshold=0.2), attack_onset=5.0)
    assert not v.detected and not v.false_positive


def test_verdict_delay_and_false_positive():
    t = _grid(10.0)
    g = np.zeros(len(t))
    g[int(6.9 * 1000)] = 1.0  # crossing at T + 1.9
    g[int(3.0 * 1000)] = 1.0  # pre-attack crossing
    v = verdict(g, t, DetectorConfig(window=1.0, threshold=0.5), attack_onset=5.0)
    assert v.detected
    assert v.delay == pytest.approx(1.9, abs=1e-9)
    assert v.false_positive
    assert v.first_false_positive == pytest.approx(3.0, abs=1e-9)


def test_verdict_warmup_never_triggers():
    t = _grid(10.0)
    g = np.zeros(len(t))
    g[100] = 10.0  # inside the one-window warm-up
    v = verdict(g, t, DetectorConfig(window=1.0, threshold=0.5), attack_onset=None)
    assert not v.false_positive


class _TraceStub:
    def __init__(self, times, xi):
        self.times = times
        self.xi = xi


def test_theorem1_zero_watermark_vacuous():
    t = _grid(10.0)
    tr = _TraceStub(t, np.zeros((len(t), 1)))
    cert = GainCertificate(LOWER, -np.eye(1), 1.5)
    times, bound = theorem1_bounds(tr, cert, 5.0, 2.0, g_n=0.3)
    np.testing.assert_allclose(bound, -0.3, atol=1e-12)
    assert times[0] == pytest.approx(5.0)


def test_theorem1_periodic_watermark_vacuous():
    t = _grid(10.0)
    xi = np.sin(2.0 * np.pi * t / 2.5)[:, None]  # period equal to the shift
    tr = _TraceStub(t, xi)
    cert = GainCertificate(LOWER, -np.eye(1), 1.5)
    _, bound = theorem1_bounds(tr, cert, 2.5, 1.0, g_n=0.3)
    np.testing.assert_allclose(bound, -0.3, atol=1e-9)


def test_theorem1_window_cases():
    # xi switches to a constant c at the shift time: the squared difference
    # is c^2 after T, so the bound ramps over one window then saturates
    t = _grid(12.0)
    t_shift, window, c, gamma, g_n = 4.0, 2.0, 0.8, 1.2, 0.05
    xi = np.where(np.arange(len(t)) >= int(round(t_shift / 1e-3)), c, 0.0)[:, None]
    tr = _TraceStub(t, xi)
    times, bound = theorem1_bounds(tr, gamma, t_shift, window, g_n=g_n, eps=0.0)
    sat = (gamma / window) * window * c**2 - g_n  # = gamma * c^2 - g_n
    ramp_mid = (gamma / window) * 1.0 * c**2 - g_n  # 1 s after onset
    k_mid = int(round(1.0 / 1e-3))
    assert bound[k_mid] == pytest.approx(ramp_mid, abs=1e-6)
    # saturated region: t in [T + window, 2T); at exactly 2T the difference
    # xi(s) - xi(s - T) of the stepped stub closes up again
    post = bound[(times - t_shift >= window) & (times < 2.0 * t_shift - 1e-9)]
    np.testing.assert_allclose(post, sat, atol=1e-6)


def test_d_index_values():
    t = _grid(100.0)
    g = np.ones(len(t))
    assert d_index(g, t) == pytest.approx(1.0)
    g2 = np.where(t >= 70.0, 2.0, 1.0)
    assert d_index(g2, t) == pytest.approx(2.0)


def test_d_index_degenerate_guard():
    t = _grid(100.0)
    with pytest.raises(DegenerateWindow):
        d_index(np.zeros(len(t)), t)


def test_report_aggregate_and_round_trip(tmp_path):
    runs = [
        RunVerdict(detected=True, delay=1.0, run=0, seed=10, d_index=3.0),
        RunVerdict(detected=True, delay=3.0, run=1, seed=11, d_index=5.0),
        RunVerdict(detected=False, run=2, seed=12, false_positive=True, d_index=1.0),
        RunVerdict(detected=True, delay=2.0, run=3, seed=13, d_index=4.0),
    ]
    rep = DetectionReport.aggregate(runs)
    assert rep.rate == pytest.approx(0.75)
    assert rep.avg_delay == pytest.approx(2.0)
    assert rep.max_delay == pytest.approx(3.0)
    assert rep.false_positive_rate == pytest.approx(0.25)
    assert rep.d_index_mean == pytest.approx(3.25)
    path = tmp_path / "report.csv"
    rep.to_csv(path)
    back = read_report_csv(path)
    assert back.rate == rep.rate
    assert back.avg_delay == rep.avg_delay
    assert [r.seed for r in back.runs] == [10, 11, 12, 13]


# -- closed-loop properties on the benchmark -----------------------------------


def test_replay_shift_reproduces_history(robot, optimized_gains):
    # without a watermark, the monitoring signal during replay reproduces its
    # own history (shifted by T) once the onset transient has died out
    from replaymark.bench.montecarlo import ExperimentSpec
    from replaymark.simkit import simulate

    spec = ExperimentSpec(plant=robot, loop=optimized_gains["loop"], watermark_kind="none")
    tr = simulate(spec.sim_config(5, attack=True))
    g = monitoring_signal(tr, spec.window)
    t = tr.times
    shift = int(round(70.0 / tr.step))
    sel = (t >= 80.0) & (t <= 100.0)
    diff = np.abs(g[sel] - g[np.nonzero(sel)[0] - shift])
    scale = np.max(g[(t >= 20.0) & (t < 70.0)])
    assert np.max(diff) <= 0.25 * scale


def test_monotone_dependence_on_watermark_gain(robot, optimized_gains):
    # scaling up G never lowers the post-onset peak of g (same seeds)
    from replaymark.bench.montecarlo import ExperimentSpec
    from replaymark.gains import LoopMatrices
    from replaymark.simkit import simulate

    base = optimized_gains["loop"]
    peaks = []
    for scale in (0.5, 1.0, 2.0):
        loop = LoopMatrices(K=base.K, L=base.L, G=scale * base.G)
        spec = ExperimentSpec(plant=robot, loop=loop, watermark_kind="chaotic", horizon=80.0,
                              replay_start=60.0, replay_end=120.0)
        peak = 0.0
        for seed in range(3):
            tr = simulate(spec.sim_config(seed, attack=True))
            g = monitoring_signal(tr, spec.window)
            peak = max(peak, np.max(g[tr.times >= 60.0]))
        peaks.append(peak)
    assert peaks[0] <= peaks[1] <= peaks[2]


def test_theorem1_bound_consistency_monte_carlo(robot, optimized_gains):
    # whenever the certified lower bound clears the threshold, the simulated
    # monitoring signal does too (pooled over runs and times >= 95%)
    from replaymark.bench.montecarlo import ExperimentSpec, calibrate
    from replaymark.simkit import simulate

    spec = ExperimentSpec(plant=robot, loop=optimized_gains["loop"], watermark_kind="chaotic",
                          runs=20, base_seed=3000)
    theta = calibrate(spec)
    cert = optimized_gains["det"]
    hits = 0
    total = 0
    for i in range(spec.runs):
        tr = simulate(spec.sim_config(spec.base_seed + i, attack=True))
        g = monitoring_signal(tr, spec.window)
        times_b, bound = theorem1_bounds(tr, cert, 70.0, spec.window, g_n=theta)
        k0 = int(round(70.0 / tr.step))
        g_b = g[k0 : k0 + len(times_b)]
        over = bound > theta
        total += int(np.sum(over))
        hits += int(np.sum(over & (g_b > theta)))
    assert total > 0
    assert hits / total >= 0.95


def test_calibrated_threshold_no_false_positives_fresh_seeds(robot, optimized_gains):
    # calibrate on 10 watermark-on seeds, then replay-free validation on 100
    # fresh seeds: no false positives
    from replaymark.bench.montecarlo import ExperimentSpec, calibrate
    from replaymark.simkit import simulate

    spec = ExperimentSpec(plant=robot, loop=optimized_gains["loop"], watermark_kind="chaotic",
                          base_seed=5000, calibration_runs=10)
    theta = calibrate(spec)
    assert np.isfinite(theta) and theta > 0.0
    cfg = DetectorConfig(window=spec.window, threshold=theta)
    fp = 0
    for i in range(100):
        tr = simulate(spec.sim_config(spec.base_seed + i, attack=False))
        g = monitoring_signal(tr, spec.window)
        v = verdict(g, tr.times, cfg, attack_onset=None, ignore_before=spec.transient)
        fp += int(v.false_positive)
    assert fp == 0


def test_monitoring_signal_shape_errors():
    from replaymark.errors import ShapeError

    t = _grid(5.0)
    with pytest.raises(ShapeError):
        monitoring_signal((t, np.zeros((10, 1))), 2.0)  # length mismatch
    with pytest.raises(ShapeError):
        monitoring_signal((t, np.zeros((len(t), 1))), 1e-3)  # < 2 grid steps
