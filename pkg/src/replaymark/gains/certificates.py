"""Gain certificates and their trajectory-level dissipation validation.

A certificate pairs a Lyapunov matrix with a squared gain level.  For the
upper kind (P > 0, gamma+) the induced quadratic V+ = dx' P dx satisfies,
along any two trajectories of the certified system,

    int |dy|^2  <=  gamma+ * int |du|^2 + V+(x1(0), x2(0))

and for the lower kind (Q < 0, gamma-) with V- = -dx' Q dx,

    int |dy|^2  >=  gamma- * int |du|^2 - V-(x1(0), x2(0)).

``verify_dissipation`` replays these integral inequalities on simulated
trajectory pairs and reports the worst slack, which absorbs a small
discretization allowance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidMatrix, ShapeError
from ..linalg import as_matrix, as_symmetric, max_eigenvalue, min_eigenvalue
from ..sdp import SdpOptions, SdpProblem
from .lmis import build_l2minus_lmi, build_l2plus_lmi

UPPER = "L2PlusUpper"
LOWER = "L2MinusLower"


@dataclass(frozen=True)
class GainCertificate:
    """Lyapunov matrix plus a squared-gain level (see module docstring)."""

    kind: str
    lyapunov: np.ndarray
    gamma_sq: float

    def __post_init__(self):
        if self.kind not in (UPPER, LOWER):
            raise ValueError(f"unknown certificate kind {self.kind!r}")
        lyap = as_symmetric(self.lyapunov, name="lyapunov")
        object.__setattr__(self, "lyapunov", lyap)
        if not np.isfinite(self.gamma_sq) or self.gamma_sq < 0:
            raise InvalidMatrix(f"gamma_sq must be finite and >= 0, got {self.gamma_sq}")
        if self.kind == UPPER and min_eigenvalue(lyap) <= 0:
            raise InvalidMatrix("upper certificate needs a positive definite Lyapunov matrix")
        if self.kind == LOWER and max_eigenvalue(lyap) >= 0:
            raise InvalidMatrix("lower certificate needs a negative definite Lyapunov matrix")

    @property
    def gain(self):
        """Gain at the norm (non-squared) level."""
        return float(np.sqrt(self.gamma_sq))

    def storage_at(self, dx0):
        """V at an initial state difference (always >= 0)."""
        dx0 = np.asarray(dx0, dtype=float).reshape(-1)
        v = float(dx0 @ self.lyapunov @ dx0)
        return v if self.kind == UPPER else -v


@dataclass(frozen=True)
class LoopMatrices:
    """Feedback gain K, observer gain L, watermark gain G, delta-ISS margin."""

    K: np.ndarray
    L: np.ndarray
    G: np.ndarray
    epsilon: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "K", as_matrix(self.K, name="K"))
        object.__setattr__(self, "L", as_matrix(self.L, name="L"))
        object.__setattr__(self, "G", as_matrix(self.G, name="G"))
        if self.epsilon <= 0:
            raise ShapeError("epsilon must be positive")
        m, n = self.K.shape
        if self.L.shape[0] != n:
            raise ShapeError(f"L must have {n} rows, got {self.L.shape}")
        if self.G.shape != (m, m):
            raise ShapeError(f"G must be {m}x{m}, got {self.G.shape}")


def l2plus_gain_certificate(pj, b, c, d, options=None):
    """Smallest LMI-certified squared upper gain over the inclusion."""
    prob = SdpProblem()
    p = prob.sym_var("P", pj.dim, sign="positive-definite")
    g = prob.scalar_var("gamma_sq")
    for con in build_l2plus_lmi(pj, b, c, d, p, g.expr()):
        con.add_to(prob)
    prob.add_psd(g.expr())
    prob.minimize(g.expr())
    sol = prob.solve(options or SdpOptions())
    if not sol.optimal:
        return None, sol
    return GainCertificate(UPPER, sol.assignment["P"], max(sol.objective, 0.0)), sol


def l2minus_gain_certificate(pj, b, c, d, options=None):
    """Largest LMI-certified squared lower gain over the inclusion.

    The certified level never exceeds the frequency-domain infimum of the
    vertex systems, and for channels with right-half-plane zeros it is
    genuinely smaller (short-horizon outputs can carry little energy there).
    Degenerate cases -- D = 0, more inputs than outputs, or a feasible set
    with no interior -- fall back to the always-valid level zero with a
    unit-negative Lyapunov matrix.
    """
    d_arr = as_matrix(d, name="D")
    if not np.any(d_arr):
        return GainCertificate(LOWER, -np.eye(pj.dim), 0.0), None
    prob = SdpProblem()
    q = prob.sym_var("Q", pj.dim, sign="negative-definite")
    g = prob.scalar_var("gamma_sq")
    for con in build_l2minus_lmi(pj, b, c, d, q, g.expr()):
        con.add_to(prob)
    prob.add_psd(g.expr())
    prob.maximize(g.expr())
    sol = prob.solve(options or SdpOptions())
    if not sol.optimal:
        return GainCertificate(LOWER, -np.eye(pj.dim), 0.0), sol
    return GainCertificate(LOWER, sol.assignment["Q"], max(sol.objective, 0.0)), sol


@dataclass
class TrajectoryPair:
    """Two same-grid trajectories of one system with differing inputs/states."""

    times: np.ndarray
    u1: np.ndarray
    y1: np.ndarray
    x0_1: np.ndarray
    u2: np.ndarray
    y2: np.ndarray
    x0_2: np.ndarray


@dataclass
class DissipationReport:
    kind: str
    n_pairs: int
    worst_slack: float
    violations: list = field(default_factory=list)

    def ok(self, tol=-1e-4):
        return self.worst_slack >= tol


def _cumtrapz(values, dt):
    inc = 0.5 * dt * (values[1:] + values[:-1])
    out = np.empty(values.shape[0])
    out[0] = 0.0
    np.cumsum(inc, out=out[1:])
    return out


def verify_dissipation(cert, pairs, tol=-1e-4):
    """Check the certificate's integral inequality on every pair and horizon.

    Returns a report whose ``worst_slack`` is the most negative margin seen;
    entries below ``tol`` are listed as violations.
    """
    worst = np.inf
    violations = []
    for idx, pair in enumerate(pairs):
        t = np.asarray(pair.times, dtype=float)
        if pair.u1.shape != pair.u2.shape or pair.y1.shape != pair.y2.shape:
            raise ShapeError("trajectory pair grids do not match")
        if len(t) != pair.u1.shape[0] or len(t) != pair.y1.shape[0]:
            raise ShapeError("trajectory arrays do not share the time grid")
        dt = float(t[1] - t[0])
        du2 = np.sum((pair.u1 - pair.u2) ** 2, axis=1)
        dy2 = np.sum((pair.y1 - pair.y2) ** 2, axis=1)
        eu = _cumtrapz(du2, dt)
        ey = _cumtrapz(dy2, dt)
        v0 = cert.storage_at(np.asarray(pair.x0_1) - np.asarray(pair.x0_2))
        if cert.kind == UPPER:
            slack = cert.gamma_sq * eu + v0 - ey
        else:
            slack = ey - cert.gamma_sq * eu + v0
        pair_worst = float(np.min(slack))
        worst = min(worst, pair_worst)
        if pair_worst < tol:
            violations.append((idx, float(t[int(np.argmin(slack))]), pair_worst))
    return DissipationReport(cert.kind, len(pairs), worst, violations)


def random_trajectory_pairs(channel, n_pairs, horizon=10.0, dt=1e-3, seed=0, input_amp=1.0, x0_amp=0.5):
    """Simulate seeded random smooth-input trajectory pairs of a channel.

    Inputs are sums of four random sinusoids per component (smooth, so the
    trapezoidal energy integrals carry no jump error); initial states are
    uniform in a box.
    """
    from ..simkit.channel import simulate_channel  # deferred; simkit pulls in the kernels

    rng = np.random.default_rng(seed)
    steps = int(round(horizon / dt))
    t_half = 0.5 * dt * np.arange(2 * steps + 1)
    m = channel.n_inputs
    pairs = []
    for _ in range(n_pairs):
        traj = []
        for _ in range(2):
            amps = rng.uniform(-input_amp, input_amp, size=(4, m))
            freqs = rng.uniform(0.1, 5.0, size=(4, m))
            phases = rng.uniform(0.0, 2.0 * np.pi, size=(4, m))
            u_half = np.zeros((2 * steps + 1, m))
            for j in range(4):
                u_half += amps[j] * np.sin(freqs[j] * t_half[:, None] + phases[j])
            x0 = rng.uniform(-x0_amp, x0_amp, size=channel.n_states)
            _, y = simulate_channel(channel, x0, u_half, dt, steps)
            traj.append((u_half[::2].copy(), y, x0))
        pairs.append(
            TrajectoryPair(
                times=dt * np.arange(steps + 1),
                u1=traj[0][0],
                y1=traj[0][1],
                x0_1=traj[0][2],
                u2=traj[1][0],
                y2=traj[1][1],
                x0_2=traj[1][2],
            )
        )
    return pairs
