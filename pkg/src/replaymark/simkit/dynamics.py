"""Plant dynamics descriptors and the nonlinear-plant container.

The compiled simulation kernel only understands closed-form dynamics kinds
(linear, single-link flexible joint); arbitrary Python callables run on the
pure-Python backend.  Each descriptor exposes ``f(x)`` plus the (kind id,
parameter vector) pair consumed by the kernels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from ..linalg import ParametricJacobian, as_matrix, as_vector

KIND_CALLABLE = 0
KIND_LINEAR = 1
KIND_FLEXJOINT = 2


class LinearDynamics:
    """f(x) = A x."""

    kind_id = KIND_LINEAR

    def __init__(self, a):
        self.a = as_matrix(a, name="A")
        if self.a.shape[0] != self.a.shape[1]:
            raise ShapeError("A must be square")

    @property
    def n(self):
        return self.a.shape[0]

    def f(self, x):
        return self.a @ x

    def param_vector(self):
        return self.a.ravel().copy()


class FlexJointDynamics:
    """Single-link flexible-joint rotor dynamics (4 states).

    f(x) = [x2,
            c21*x1 + ccos*cos(x1) + c22*x2 + c23*x3,
            x4,
            c41*x1 + c43*x3 + c44*x4]
    """

    kind_id = KIND_FLEXJOINT
    n = 4

    def __init__(self, c21, ccos, c22, c23, c41, c43, c44):
        self.coeffs = tuple(float(v) for v in (c21, ccos, c22, c23, c41, c43, c44))

    def f(self, x):
        c21, ccos, c22, c23, c41, c43, c44 = self.coeffs
        return np.array(
            [
                x[1],
                c21 * x[0] + ccos * np.cos(x[0]) + c22 * x[1] + c23 * x[2],
                x[3],
                c41 * x[0] + c43 * x[2] + c44 * x[3],
            ]
        )

    def param_vector(self):
        return np.array(self.coeffs)


class CallableDynamics:
    """Wrap an arbitrary f: R^n -> R^n (pure-Python backend only)."""

    kind_id = KIND_CALLABLE

    def __init__(self, f, n):
        self._f = f
        self.n = int(n)

    def f(self, x):
        return np.asarray(self._f(x), dtype=float)

    def param_vector(self):
        return np.zeros(0)


@dataclass(frozen=True)
class NonlinearPlant:
    """Dynamics, input/output matrices, and the Jacobian inclusion."""

    dynamics: object
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    jacobian: ParametricJacobian

    def __post_init__(self):
        n = self.dynamics.n
        object.__setattr__(self, "B", as_matrix(self.B, rows=n, name="B"))
        m = self.B.shape[1]
        object.__setattr__(self, "C", as_matrix(self.C, cols=n, name="C"))
        p = self.C.shape[0]
        object.__setattr__(self, "D", as_matrix(self.D, rows=p, cols=m, name="D"))
        if self.jacobian.dim != n:
            raise ShapeError(f"jacobian dim {self.jacobian.dim} != state dim {n}")

    @property
    def n(self):
        return self.dynamics.n

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]

    def equilibrium_residual(self, x, u):
        x = as_vector(x, self.n)
        u = as_vector(u, self.m)
        return self.dynamics.f(x) + self.B @ u


def linear_plant(a, b, c, d):
    """LTI plant with the single-vertex Jacobian inclusion."""
    a = as_matrix(a, name="A")
    return NonlinearPlant(
        dynamics=LinearDynamics(a),
        B=b,
        C=c,
        D=d,
        jacobian=ParametricJacobian(base=a),
    )
