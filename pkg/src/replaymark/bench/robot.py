"""Single-link flexible-joint robot benchmark plant.

State: link angle, link rate, motor angle (scaled by the gear ratio), motor
rate.  The only nonlinearity is the gravity torque on the link, so the
state-dependent Jacobian is covered exactly by one sine-bounded direction.

The measurement is the link angle with unit direct feedthrough from the
input (D = 1).  The feedthrough is deliberate and load-bearing: with D = 0
the lower incremental gain of any watermark channel is zero and the
detection side of the design collapses, so the benchmark output is defined
as y = x1 + u + noise.  Note also that the stiffness coupling in the motor
equation uses the link-side inertia scaling (k/(J2 b^2)); the resulting
asymmetric spring terms are part of the benchmark definition.
"""

from __future__ import annotations

import numpy as np

from ..simkit.dynamics import FlexJointDynamics, NonlinearPlant
from ..linalg import ParametricJacobian

ROBOT_PARAMETERS = {
    "k": 0.4,  # joint stiffness
    "m": 0.1,  # link mass
    "g": 9.81,  # gravity
    "d": 0.1,  # centre-of-mass distance
    "b": 2.0,  # gear ratio
    "f1": 0.1,  # motor friction
    "f2": 0.7,  # link friction
    "j1": 0.15,  # motor inertia
    "j2": 0.2,  # link inertia
}


def builtin_robot_model(params=None):
    """The benchmark plant with its sine-direction Jacobian inclusion."""
    q = dict(ROBOT_PARAMETERS)
    if params:
        q.update(params)
    k, m, g, d, b = q["k"], q["m"], q["g"], q["d"], q["b"]
    f1, f2, j1, j2 = q["f1"], q["f2"], q["j1"], q["j2"]

    c21 = -k / j2
    ccos = -m * g * d / j2
    c22 = -f2 / j2
    c23 = k / (j2 * b)
    c41 = k / (j1 * b)
    c43 = -k / (j2 * b * b)
    c44 = -f1 / j1
    dynamics = FlexJointDynamics(c21, ccos, c22, c23, c41, c43, c44)

    base = np.array(
        [
            [0.0, 1.0, 0.0, 0.0],
            [c21, c22, c23, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [c41, 0.0, c43, c44],
        ]
    )
    # d/dx1 of the gravity term: (m g d / J2) sin(x1), sin in [-1, 1]
    direction = np.zeros((4, 4))
    direction[1, 0] = m * g * d / j2
    jacobian = ParametricJacobian(base=base, directions=(direction,), bounds=((-1.0, 1.0),))

    return NonlinearPlant(
        dynamics=dynamics,
        B=np.array([[0.0], [0.0], [0.0], [1.0]]),
        C=np.array([[1.0, 0.0, 0.0, 0.0]]),
        D=np.array([[1.0]]),
        jacobian=jacobian,
    )
