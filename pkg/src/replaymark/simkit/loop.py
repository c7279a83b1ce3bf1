"""Closed-loop simulation of plant, observer, controller, and replay attacks.

The loop integrates plant and observer jointly with a classic fourth-order
fixed-step scheme.  Noise is uniform i.i.d., held constant over each step.
The live measurement couples continuously into the observer (the control
feedthrough cancels inside the innovation); the replayed stream is a
recorded sample sequence, zero-order-held per step, and matches the
recording exactly on the grid.  Everything is deterministic given the seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ..errors import DivergenceDetected, ShapeError
from ..linalg import as_vector
from ..watermarks import NullSource
from . import backend as _backend
from .replay import record_replay_feed  # noqa: F401 (re-exported surface)

IMMEDIATE = "immediate"
STATE_MATCHED = "state_matched"

_CONTAM_KINDS = {"none": 0, "constant": 1, "ramp": 2}


@dataclass(frozen=True)
class AttackScenario:
    """Record from t=0, replay from ``replay_start``, contaminate meanwhile."""

    replay_start: float
    replay_end: float = None
    start_mode: str = IMMEDIATE
    match_tolerance: float = 1e-3
    contamination: tuple = ("constant", 0.5)

    def __post_init__(self):
        if self.replay_start <= 0:
            raise ShapeError("replay_start must be positive")
        end = self.replay_end
        if end is None:
            end = 2.0 * self.replay_start
        if end <= self.replay_start:
            raise ShapeError("replay_end must exceed replay_start")
        object.__setattr__(self, "replay_end", float(end))
        if self.start_mode not in (IMMEDIATE, STATE_MATCHED):
            raise ShapeError(f"unknown start mode {self.start_mode!r}")
        contam = self.contamination or ("none", 0.0)
        if contam[0] not in _CONTAM_KINDS:
            raise ShapeError(f"unknown contamination kind {contam[0]!r}")
        object.__setattr__(self, "contamination", (contam[0], float(contam[1])))


@dataclass
class ClosedLoopConfig:
    plant: object
    loop: object  # LoopMatrices
    step: float = 1e-3
    horizon: float = 100.0
    omega_bound: float = 0.05
    nu_bound: float = 0.05
    seed: int = 0
    watermark: object = None  # source with .path(dt, steps), or None
    attack: AttackScenario = None
    x0: np.ndarray = None
    xhat0: np.ndarray = None
    backend: str = "auto"

    def __post_init__(self):
        if self.step <= 0 or self.horizon < self.step:
            raise ShapeError("need step > 0 and horizon >= step")
        if self.omega_bound < 0 or self.nu_bound < 0:
            raise ShapeError("noise bounds must be nonnegative")
        n = self.plant.n
        self.x0 = np.zeros(n) if self.x0 is None else as_vector(self.x0, n, "x0")
        self.xhat0 = np.zeros(n) if self.xhat0 is None else as_vector(self.xhat0, n, "xhat0")
        k = self.loop.K
        if k.shape != (self.plant.m, n):
            raise ShapeError(f"K must be {(self.plant.m, n)}, got {k.shape}")
        if self.loop.L.shape != (n, self.plant.p):
            raise ShapeError(f"L must be {(n, self.plant.p)}, got {self.loop.L.shape}")


@dataclass
class ClosedLoopTrace:
    times: np.ndarray
    x: np.ndarray
    xhat: np.ndarray
    y: np.ndarray
    y_received: np.ndarray
    u_sent: np.ndarray
    u_applied: np.ndarray
    xi: np.ndarray
    innovation: np.ndarray
    step: float
    replay_onset: float = None  # actual onset time (None without attack)
    replay_end: float = None
    state_match_fallback: bool = False
    diverged: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def steps(self):
        return len(self.times) - 1

    def to_csv(self, path, g=None):
        n = self.x.shape[1]
        p = self.y.shape[1]
        m = self.u_sent.shape[1]
        header = (
            ["t"]
            + [f"x{i+1}" for i in range(n)]
            + [f"xhat{i+1}" for i in range(n)]
            + [f"y{i+1}" for i in range(p)]
            + [f"y_received{i+1}" for i in range(p)]
            + [f"u{i+1}" for i in range(m)]
            + [f"xi{i+1}" for i in range(m)]
            + ["g"]
        )
        gcol = np.full(len(self.times), np.nan) if g is None else np.asarray(g)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i, t in enumerate(self.times):
                row = (
                    [repr(float(t))]
                    + [repr(float(v)) for v in self.x[i]]
                    + [repr(float(v)) for v in self.xhat[i]]
                    + [repr(float(v)) for v in self.y[i]]
                    + [repr(float(v)) for v in self.y_received[i]]
                    + [repr(float(v)) for v in self.u_sent[i]]
                    + [repr(float(v)) for v in self.xi[i]]
                    + [repr(float(gcol[i]))]
                )
                writer.writerow(row)


def read_trace_csv(path):
    """Read back a trace CSV as a dict of column name -> array."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    data = np.asarray(rows)
    return {name: data[:, i] for i, name in enumerate(header)}


def loop_equilibrium(plant, k_gain, x_guess=None, tol=1e-12, max_iter=50):
    """Equilibrium of the state-feedback loop: f(x) + B(-K x) = 0 (Newton).

    Starting the benchmark at this point realizes the steady-state-at-
    recording-start assumption; a zero start would leave a settling
    transient inside the replayed recording and make replay onset trivially
    visible even without a watermark.
    """
    from ..linalg import finite_difference_jacobian

    k_gain = np.atleast_2d(np.asarray(k_gain, dtype=float))
    x = np.zeros(plant.n) if x_guess is None else np.asarray(x_guess, dtype=float).copy()

    def h(xv):
        return plant.dynamics.f(xv) - plant.B @ (k_gain @ xv)

    for _ in range(max_iter):
        r = h(x)
        if np.linalg.norm(r) < tol:
            break
        jac = finite_difference_jacobian(h, x)
        x = x - np.linalg.solve(jac, r)
    return x


def simulate(config):
    """Run the closed loop and return a :class:`ClosedLoopTrace`.

    Raises :class:`DivergenceDetected` (carrying the partial trace) when a
    state norm passes 1e6.
    """
    plant = config.plant
    n, m, p = plant.n, plant.m, plant.p
    steps = int(round(config.horizon / config.step))
    dt = config.step

    rng = np.random.default_rng(config.seed)
    omega = rng.uniform(-config.omega_bound, config.omega_bound, size=(max(steps, 1), n))
    nu = rng.uniform(-config.nu_bound, config.nu_bound, size=(steps + 1, p))
    if config.omega_bound == 0:
        omega = np.zeros_like(omega)
    if config.nu_bound == 0:
        nu = np.zeros_like(nu)

    source = config.watermark if config.watermark is not None else NullSource(m)
    xi_half = np.ascontiguousarray(source.path(dt, steps), dtype=float)
    if xi_half.shape != (2 * steps + 1, m):
        raise ShapeError(
            f"watermark path must have shape {(2 * steps + 1, m)}, got {xi_half.shape}"
        )

    attack = config.attack
    if attack is not None:
        onset_idx = int(round(attack.replay_start / dt))
        if attack.replay_end >= config.horizon:
            # attack runs through the end of the simulation: cover the final sample
            end_len = steps + 1
        else:
            end_len = int(round((attack.replay_end - attack.replay_start) / dt))
        if onset_idx < 1 or end_len < 1 or onset_idx > steps:
            raise ShapeError("attack window does not fit the horizon")
        matched = 1 if attack.start_mode == STATE_MATCHED else 0
        deadline = onset_idx + int(round(0.5 * attack.replay_start / dt))
        ck, ca = attack.contamination
        contam_kind = _CONTAM_KINDS[ck]
    else:
        onset_idx = end_len = 0
        matched = 0
        deadline = 0
        contam_kind = 0
        ca = 0.0

    kern = _backend.select(plant.dynamics, config.backend)
    res = kern.run_closed_loop(
        plant.dynamics,
        plant.B,
        plant.C,
        plant.D,
        config.loop.K,
        config.loop.L,
        config.loop.G,
        config.x0,
        config.xhat0,
        steps,
        dt,
        omega,
        nu,
        xi_half,
        1 if attack is not None else 0,
        onset_idx,
        end_len,
        matched,
        attack.match_tolerance if attack is not None else 0.0,
        deadline,
        contam_kind,
        ca,
    )
    valid = res["valid"]
    trace = ClosedLoopTrace(
        times=dt * np.arange(valid),
        x=res["x"][:valid],
        xhat=res["xhat"][:valid],
        y=res["y"][:valid],
        y_received=res["y_received"][:valid],
        u_sent=res["u_sent"][:valid],
        u_applied=res["u_applied"][:valid],
        xi=xi_half[::2][:valid],
        innovation=res["innovation"][:valid],
        step=dt,
        replay_onset=(res["onset"] * dt) if res["onset"] >= 0 else None,
        replay_end=(min(res["end"], valid) * dt) if res["onset"] >= 0 else None,
        state_match_fallback=bool(res["fallback"]),
        diverged=res["status"] != 0,
        meta={"seed": config.seed, "backend": getattr(kern, "BACKEND_NAME", "?")},
    )
    if trace.diverged:
        raise DivergenceDetected(
            f"state norm exceeded 1e6 at t={trace.times[-1]:.3f}s", partial_trace=trace
        )
    return trace
