"""Single-input/output channel systems used for dissipation checks.

A channel is ``dx = f(x) + A_extra x + B u, y = C x + D u`` where f comes
from a plant's dynamics descriptor and the linear correction folds in the
controller/observer gains.  These are the systems whose incremental gains
the certificates bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from ..linalg import as_matrix
from . import backend as _backend


@dataclass(frozen=True)
class ChannelSystem:
    dynamics: object
    a_extra: np.ndarray
    b_in: np.ndarray
    c_out: np.ndarray
    d_out: np.ndarray

    def __post_init__(self):
        n = self.dynamics.n
        object.__setattr__(self, "a_extra", as_matrix(self.a_extra, n, n, name="a_extra"))
        object.__setattr__(self, "b_in", as_matrix(self.b_in, rows=n, name="b_in"))
        object.__setattr__(self, "c_out", as_matrix(self.c_out, cols=n, name="c_out"))
        q = self.c_out.shape[0]
        m = self.b_in.shape[1]
        object.__setattr__(self, "d_out", as_matrix(self.d_out, q, m, name="d_out"))

    @property
    def n_states(self):
        return self.dynamics.n

    @property
    def n_inputs(self):
        return self.b_in.shape[1]

    def vertex_matrices(self, pj):
        """Frozen vertex LTI systems (A_v + a_extra, b_in, c_out, d_out)."""
        return [(a + self.a_extra, self.b_in, self.c_out, self.d_out) for a in pj.vertices()]


def detection_channel(plant, loop):
    """Attacked-observer channel: watermark sample -> predicted output.

    Under replay both the live and the historical observers receive the
    same measurement stream, so the stream is common-mode and the channel
    input is the watermark sample alone.
    """
    k, l, g = loop.K, loop.L, loop.G
    ct = plant.C - plant.D @ k
    return ChannelSystem(
        dynamics=plant.dynamics,
        a_extra=-plant.B @ k - l @ ct,
        b_in=(plant.B - l @ plant.D) @ g,
        c_out=ct,
        d_out=plant.D @ g,
    )


def performance_channel(plant, loop):
    """Watermark sample -> plant output for the state-feedback loop."""
    k, g = loop.K, loop.G
    return ChannelSystem(
        dynamics=plant.dynamics,
        a_extra=-plant.B @ k,
        b_in=plant.B @ g,
        c_out=plant.C - plant.D @ k,
        d_out=plant.D @ g,
    )


def simulate_channel(channel, x0, u_half, dt, steps, backend="auto", divergence_limit=1e6):
    """Integrate a channel over ``steps`` fixed steps; u on the half grid."""
    u_half = np.ascontiguousarray(u_half, dtype=float)
    if u_half.shape != (2 * steps + 1, channel.n_inputs):
        raise ShapeError(
            f"u_half must have shape {(2 * steps + 1, channel.n_inputs)}, got {u_half.shape}"
        )
    x0 = np.ascontiguousarray(x0, dtype=float)
    kern = _backend.select(channel.dynamics, backend)
    return kern.run_channel(
        channel.dynamics,
        channel.a_extra,
        channel.b_in,
        channel.c_out,
        channel.d_out,
        x0,
        u_half,
        float(dt),
        int(steps),
        divergence_limit,
    )
