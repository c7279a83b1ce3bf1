"""Watermark signal sources under the unit average-power constraint.

Two families ship: a chaotic oscillator (deterministic, non-periodic; the
output matrix is rescaled offline so the running power stays below one on
every window of at least ten seconds) and a Bernoulli switching law whose
instantaneous power equals one exactly.  Sources are sampled on the
simulation half-step grid so the closed-loop integrator sees the same
fixed-step trajectory as the oscillator itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceDetected, ShapeError
from .linalg import as_matrix, as_vector

_OSC_DIVERGENCE = 1e6


@dataclass(frozen=True)
class ChaoticSource:
    """xi = Lambda * theta with theta' = A theta + phi(theta)."""

    a: np.ndarray
    nonlinearity: object  # theta -> phi(theta)
    lam: np.ndarray
    theta0: np.ndarray

    def __post_init__(self):
        a = as_matrix(self.a, name="A")
        if a.shape[0] != a.shape[1]:
            raise ShapeError("oscillator A must be square")
        lam = as_matrix(self.lam, cols=a.shape[0], name="Lambda")
        theta0 = as_vector(self.theta0, size=a.shape[0], name="theta0")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "theta0", theta0)

    @property
    def m(self):
        return self.lam.shape[0]

    def theta_path(self, dt, n_points):
        """Oscillator states at 0, dt, ..., (n_points-1)*dt via RK4."""
        a = self.a
        phi = self.nonlinearity
        n = a.shape[0]

        if hasattr(phi, "kernel_kind_id"):
            # route through the channel integrator (compiled when available)
            from .simkit.channel import ChannelSystem, simulate_channel

            chan = ChannelSystem(
                dynamics=_PhiDynamics(phi, n),
                a_extra=a,
                b_in=np.zeros((n, 1)),
                c_out=np.zeros((1, n)),
                d_out=np.zeros((1, 1)),
            )
            u = np.zeros((2 * (n_points - 1) + 1, 1))
            theta, _ = simulate_channel(chan, self.theta0, u, dt, n_points - 1, divergence_limit=_OSC_DIVERGENCE)
            return theta

        def deriv(th):
            return a @ th + np.asarray(phi(th), dtype=float)

        out = np.empty((n_points, n))
        th = self.theta0.copy()
        for k in range(n_points):
            out[k] = th
            if k == n_points - 1:
                break
            k1 = deriv(th)
            k2 = deriv(th + 0.5 * dt * k1)
            k3 = deriv(th + 0.5 * dt * k2)
            k4 = deriv(th + dt * k3)
            th = th + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if np.max(np.abs(th)) > _OSC_DIVERGENCE:
                raise DivergenceDetected(f"chaotic oscillator diverged at step {k}")
        return out

    def path(self, dt, steps):
        """Watermark on the half-step grid: shape (2*steps+1, m)."""
        theta = self.theta_path(0.5 * dt, 2 * steps + 1)
        return theta @ self.lam.T

    def with_scale(self, scale):
        return ChaoticSource(self.a, self.nonlinearity, scale * self.lam, self.theta0)

    def with_seed(self, seed, burn_range=(50.0, 250.0), dt=1e-3):
        """Clone started at a seeded point further along the trajectory.

        Burning in along the nominal orbit keeps the state on the attractor
        (an additive jitter can leave the basin and diverge) while fully
        decorrelating the phase between clones.  This is the supported way
        to run independent copies across Monte-Carlo runs.
        """
        rng = np.random.default_rng(seed)
        t_burn = float(rng.uniform(*burn_range))
        n_points = int(round(t_burn / dt)) + 1
        theta = self.theta_path(dt, n_points)
        return ChaoticSource(self.a, self.nonlinearity, self.lam, theta[-1])


@dataclass(frozen=True)
class BernoulliSource:
    """Components +-1/sqrt(m), redrawn independently every ``dwell`` seconds."""

    m: int
    dwell: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.m < 1 or self.dwell <= 0:
            raise ShapeError("need m >= 1 and dwell > 0")

    def draws(self, n_draws):
        rng = np.random.default_rng(self.seed)
        signs = 2.0 * rng.integers(0, 2, size=(n_draws, self.m)) - 1.0
        return signs / np.sqrt(self.m)

    def path(self, dt, steps):
        half = 0.5 * dt
        ratio = self.dwell / half
        per = int(round(ratio))
        n_points = 2 * steps + 1
        if per >= 1 and abs(ratio - per) < 1e-9:
            idx = np.arange(n_points) // per
        else:
            idx = np.floor(np.arange(n_points) * half / self.dwell).astype(int)
        values = self.draws(int(idx[-1]) + 1)
        return values[idx]

    def with_seed(self, seed):
        return BernoulliSource(self.m, self.dwell, seed)


@dataclass(frozen=True)
class NullSource:
    """No watermark: xi = 0."""

    m: int = 1

    def path(self, dt, steps):
        return np.zeros((2 * steps + 1, self.m))


def sample(source, t, dt=1e-3):
    """xi(t) for a single time (advances the source on the fixed grid)."""
    if source is None:
        raise ShapeError("source is None; use NullSource for a zero watermark")
    steps = max(1, int(np.ceil(t / dt)))
    path = source.path(dt, steps)
    j = int(round(t / (0.5 * dt)))
    return path[min(j, path.shape[0] - 1)].copy()


def running_power_sup(path, dt, min_window=10.0, stride_seconds=0.05):
    """Supremum of mean ||xi||^2 over windows of length >= min_window.

    Any window of length L >= W can be split into equal pieces with lengths
    in [W, 2W), and its mean power is dominated by the largest piece mean,
    so only lengths in [W, 2W] need scanning.  Window endpoints are taken on
    a coarse stride; cumulative integrals at those points are exact.
    """
    power = np.sum(np.asarray(path) ** 2, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * dt * (power[1:] + power[:-1]))])
    stride = max(1, int(round(stride_seconds / dt)))
    coarse = cum[::stride]
    step = stride * dt
    w_lo = int(np.floor(min_window / step))
    w_hi = int(np.ceil(2.0 * min_window / step))
    if w_lo < 1 or w_lo >= len(coarse):
        raise ShapeError("path shorter than the minimum window")
    best = 0.0
    for w in range(w_lo, min(w_hi, len(coarse) - 1) + 1):
        means = (coarse[w:] - coarse[:-w]) / (w * step)
        best = max(best, float(np.max(means)))
    return best


def replay_difference_energy(source, t_shift, a, b, dt=1e-3):
    """integral over [a, b] of ||xi(s) - xi(s - t_shift)||^2 ds (trapezoid)."""
    if b <= a or a < t_shift:
        raise ShapeError("need b > a >= t_shift")
    steps = int(round(b / dt))
    path = np.asarray(source.path(dt, steps))[::2]  # grid points only
    shift = int(round(t_shift / dt))
    i0 = int(round(a / dt))
    d = path[i0 : steps + 1] - path[i0 - shift : steps + 1 - shift]
    vals = np.sum(d**2, axis=1)
    trapezoid = getattr(np, "trapezoid", None) or np.trapz
    return float(trapezoid(vals, dx=dt))


class _PhiDynamics:
    """Adapter presenting a pure nonlinearity as a dynamics descriptor."""

    def __init__(self, phi, n):
        self.kind_id = phi.kernel_kind_id
        self._phi = phi
        self.n = n

    def f(self, x):
        return np.asarray(self._phi(x), dtype=float)

    def param_vector(self):
        return np.zeros(0)


class Prototype4Nonlinearity:
    """phi(theta) = [0, 0, -0.5 * theta_2^2]; has a compiled kernel kind."""

    kernel_kind_id = 3

    def __call__(self, theta):
        return np.array([0.0, 0.0, -0.5 * theta[1] ** 2])


def rossler_prototype4(scale=1.0):
    """The shipped chaotic generator (3-state prototype-4 oscillator).

    ``scale`` multiplies the calibrated output matrix; the default is
    already rescaled so a 1000 s pilot run keeps the running power at or
    below 0.95 on every window of at least 10 s.
    """
    a = np.array([[0.0, -1.0, -1.0], [1.0, 0.0, 0.0], [0.0, 0.5, -0.5]])
    lam = np.array([[0.5, 0.0, 0.0]]) * CHAOTIC_POWER_SCALE * scale
    return ChaoticSource(
        a=a,
        nonlinearity=Prototype4Nonlinearity(),
        lam=lam,
        theta0=np.array([1.0, 0.0, 0.0]),
    )


def calibrate_chaotic_power(source, horizon=1000.0, dt=1e-3, target=0.95, min_window=10.0):
    """Scale factor bringing the pilot-run running-power supremum to target."""
    steps = int(round(horizon / dt))
    path = source.path(dt, steps)
    sup = running_power_sup(path[::2], dt, min_window=min_window)
    return float(np.sqrt(target / sup))


# Frozen output of calibrate_chaotic_power() on the unscaled prototype-4
# source (Lambda = [0.5, 0, 0], theta0 = [1, 0, 0], 1000 s pilot at 1 ms,
# target 0.95 over >= 10 s windows).  test_watermarks re-derives it.
CHAOTIC_POWER_SCALE = 2.0589108713709408
