"""Frequency-domain gain oracle for LTI instances.

For a stable LTI system the incremental gains reduce to their non-incremental
versions, so the squared sup/inf of the transfer-matrix singular values over
frequency is an independent check on every LMI-certified gamma.  Used only
for testing and certificate validation; the design path never calls it.
"""

from __future__ import annotations

import numpy as np

from ..errors import UnstableSystem
from ..linalg import as_matrix

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def _sq_gain(a, b, c, d, omega, kind):
    m = c @ np.linalg.solve(1j * omega * np.eye(a.shape[0]) - a, b) + d
    if kind == "inf" and m.shape[1] > m.shape[0]:
        return 0.0  # more inputs than outputs: some input direction is silent
    s = np.linalg.svd(m, compute_uv=False)
    return float(s[0] ** 2) if kind == "sup" else float(s[-1] ** 2)


def lti_frequency_gain_oracle(a, b, c, d, kind, grid=None):
    """Squared sup/inf of the singular values of C(jwI-A)^-1 B + D.

    The default grid spans [1e-3, 1e4] rad/s (2000 log-spaced points) plus
    w = 0; the grid optimum is refined by golden-section search between its
    neighbours.
    """
    if kind not in ("sup", "inf"):
        raise ValueError("kind must be 'sup' or 'inf'")
    a = as_matrix(a, name="A")
    b = as_matrix(b, name="B")
    c = as_matrix(c, name="C")
    d = as_matrix(d, name="D")
    if np.max(np.linalg.eigvals(a).real) >= 0:
        raise UnstableSystem("frequency oracle requires a Hurwitz A")
    if grid is None:
        grid = np.logspace(-3.0, 4.0, 2000)
    grid = np.concatenate([[0.0], np.asarray(grid, dtype=float)])
    vals = np.array([_sq_gain(a, b, c, d, w, kind) for w in grid])
    best = int(np.argmax(vals)) if kind == "sup" else int(np.argmin(vals))

    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, len(grid) - 1)]
    if hi <= lo:
        return vals[best]
    sign = 1.0 if kind == "sup" else -1.0

    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1 = sign * _sq_gain(a, b, c, d, x1, kind)
    f2 = sign * _sq_gain(a, b, c, d, x2, kind)
    for _ in range(90):
        if f1 >= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = sign * _sq_gain(a, b, c, d, x1, kind)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = sign * _sq_gain(a, b, c, d, x2, kind)
        if hi - lo < 1e-12 * (1.0 + hi):
            break
    refined = sign * max(f1, f2)
    best_val = float(vals[best])
    return max(best_val, refined) if kind == "sup" else min(best_val, refined)
