import numpy as np
import pytest

from replaymark.errors import NotAffine
from replaymark.gains import (
    build_delta_iss_ctrl_lmi,
    build_iss_observer_lmi,
    build_l2minus_lmi,
    build_l2plus_lmi,
    build_anchored_detection_lmi,
    build_anchored_codesign_lmi,
    build_anchored_perf_lmi,
    build_anchored_observer_lmi,
    build_perf_l2plus,
    build_watermark_l2minus,
    detection_lmi_matrix,
    perf_lmi_matrix,
    lti_frequency_gain_oracle,
    observer_iss_matrix,
    detection_lmi_expanded,
    perf_lmi_schur,
    observer_lmi_schur,
    codesign_block_schur,
)
from replaymark.linalg import ParametricJacobian
from replaymark.sdp import SdpProblem
from replaymark.sdp.expr import Variable

B1 = np.array([[1.0]])
C1 = np.array([[1.0]])
D1 = np.array([[1.0]])
PJ1 = ParametricJacobian(base=np.array([[-1.0]]))

K_ANCHOR = np.array([[1.1525, 0.1535, 0.0755, 0.1651]])
L_ANCHOR = np.array([[0.3974], [3.8453], [0.2410], [0.9848]])


@pytest.fixture(scope="module")
def bootstrap_anchors(robot):
    """Feasible anchors (K0, Ps0, L0, R0, Q0) from the design bootstrap."""
    from replaymark.codesign import (
        _bootstrap_detection_lyapunov,
        _bootstrap_observer,
        _bootstrap_state_feedback,
    )
    from replaymark.sdp import SdpOptions

    opt = SdpOptions()
    k0, ps0 = _bootstrap_state_feedback(robot, np.eye(1), 4.0, 1e-3, opt)
    l0, r0 = _bootstrap_observer(robot, 0.1, opt)
    q0, _ = _bootstrap_detection_lyapunov(robot, k0, l0, np.eye(1), opt)
    return k0, ps0, l0, r0, q0


def _solve(constraints, variables, maximize=None):
    prob = SdpProblem()
    handles = {}
    for name, kind, shape, sign in variables:
        if kind == "sym":
            handles[name] = prob.sym_var(name, shape, sign=sign)
        elif kind == "rect":
            handles[name] = prob.rect_var(name, *shape)
        else:
            handles[name] = prob.scalar_var(name)
    for con in constraints(handles):
        con.add_to(prob)
    if maximize is not None:
        prob.maximize(maximize(handles))
    return prob.solve()


# -- plain gain LMIs ----------------------------------------------------------


def test_l2plus_scalar_block_by_hand():
    # at P = 2, gamma = 4 the block equals [[-3, 3], [3, -3]] (eigs {0, -6})
    pv = Variable("P", "symmetric", (1, 1))
    cons = build_l2plus_lmi(PJ1, B1, C1, D1, pv, 4.0)
    assert len(cons) == 1
    block = cons[0].evaluate({"P": np.array([[2.0]])})
    np.testing.assert_allclose(block, [[-3.0, 3.0], [3.0, -3.0]], atol=1e-14)
    np.testing.assert_allclose(sorted(np.linalg.eigvalsh(block)), [-6.0, 0.0], atol=1e-12)


def test_l2plus_feasible_above_infeasible_below():
    # the squared upper gain of the instance is exactly 4; the conic solver
    # needs a strict interior, so probe just off the boundary on both sides
    def make(gamma):
        def constraints(h):
            return build_l2plus_lmi(PJ1, B1, C1, D1, h["P"], gamma)

        return _solve(constraints, [("P", "sym", 1, "positive-definite")])

    assert make(4.02).optimal
    assert make(3.98).status == "Infeasible"


def test_l2plus_no_output_feasible_any_gamma():
    # D = 0, C = 0: blocks decouple into A'P + PA and -gamma I
    def constraints(h):
        return build_l2plus_lmi(PJ1, B1, np.zeros((1, 1)), np.zeros((1, 1)), h["P"], 0.5)

    sol = _solve(constraints, [("P", "sym", 1, "positive-definite")])
    assert sol.optimal


def test_l2minus_scalar_block_by_hand():
    qv = Variable("Q", "symmetric", (1, 1))
    cons = build_l2minus_lmi(PJ1, B1, C1, D1, qv, 0.7)
    block = cons[0].evaluate({"Q": np.array([[-1.0]])})
    np.testing.assert_allclose(block, [[3.0, 0.0], [0.0, 0.3]], atol=1e-14)


def test_l2minus_feasible_iff_gamma_below_one():
    def make(gamma):
        def constraints(h):
            return build_l2minus_lmi(PJ1, B1, C1, D1, h["Q"], gamma)

        return _solve(constraints, [("Q", "sym", 1, "negative-definite")])

    assert make(0.9).optimal
    assert make(1.1).status == "Infeasible"


def test_l2minus_zero_feedthrough_forces_zero_gamma():
    # (2,2) block is -gamma I, so only gamma = 0 can be nonnegative
    def make(gamma):
        def constraints(h):
            return build_l2minus_lmi(PJ1, B1, C1, np.zeros((1, 1)), h["Q"], gamma)

        return _solve(constraints, [("Q", "sym", 1, "negative-definite")])

    assert make(0.05).status == "Infeasible"


# -- watermarked-loop conditions ------------------------------------------------


def test_watermark_l2minus_zero_gain_kills_beta():
    def constraints(h):
        return build_watermark_l2minus(
            PJ1, B1, C1, D1, np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)), h["Q"], h["beta"]
        )

    sol = _solve(
        constraints,
        [("Q", "sym", 1, "negative-definite"), ("beta", "scalar", 1, None)],
        maximize=lambda h: h["beta"].expr(),
    )
    assert sol.optimal
    assert sol.objective <= 1e-6


def test_watermark_l2minus_round_trip_margin():
    q = np.array([[-1.0]])
    cons = build_watermark_l2minus(PJ1, B1, C1, D1, np.zeros((1, 1)), np.zeros((1, 1)), np.eye(1), q, 0.5)
    for con in cons:
        assert con.margin({"Q": q}) >= -1e-7


def test_watermark_l2minus_reduces_to_plain_lemma():
    # K = L = 0, G = 1 collapses the blocks onto the plain lower-gain LMI
    qv = Variable("Q", "symmetric", (1, 1))
    beta = 0.37
    wm = build_watermark_l2minus(PJ1, B1, C1, D1, np.zeros((1, 1)), np.zeros((1, 1)), np.eye(1), qv, beta)
    plain = build_l2minus_lmi(PJ1, B1, C1, D1, qv, beta)
    for qval in (-0.3, -1.0, -2.5):
        a = wm[0].evaluate({"Q": np.array([[qval]])})
        b = plain[0].evaluate({"Q": np.array([[qval]])})
        np.testing.assert_allclose(a, b, atol=1e-14)


def test_watermark_l2minus_bilinear_guard():
    qv = Variable("Q", "symmetric", (1, 1))
    gv = Variable("G", "rectangular", (1, 1))
    with pytest.raises(NotAffine):
        build_watermark_l2minus(PJ1, B1, C1, D1, np.zeros((1, 1)), np.zeros((1, 1)), gv, qv, 0.1)
    with pytest.raises(NotAffine):
        # variable G with D != 0 makes the corner quadratic
        build_watermark_l2minus(
            PJ1, B1, C1, D1, np.zeros((1, 1)), np.zeros((1, 1)), gv, np.array([[-1.0]]), 0.1
        )


def test_perf_l2plus_zero_watermark_feasible():
    def constraints(h):
        return build_perf_l2plus(PJ1, B1, C1, D1, np.zeros((1, 1)), np.zeros((1, 1)), h["Ps"], 0.5)

    sol = _solve(constraints, [("Ps", "sym", 1, "positive-definite")])
    assert sol.optimal


def test_perf_l2plus_alpha_below_closed_loop_gain_infeasible():
    # closed loop (K=0, G=1): sup gain^2 = 4 by the frequency oracle
    sup = lti_frequency_gain_oracle(np.array([[-1.0]]), B1, C1, D1, "sup")

    def make(alpha):
        def constraints(h):
            return build_perf_l2plus(PJ1, B1, C1, D1, np.zeros((1, 1)), np.eye(1), h["Ps"], alpha)

        return _solve(constraints, [("Ps", "sym", 1, "positive-definite")])

    assert make(sup * 1.05).optimal
    assert make(sup * 0.95).status == "Infeasible"


def test_perf_l2plus_robot_benchmark_operating_point(robot):
    # alpha = 4, bootstrap-scale K, unit watermark gain: feasible
    def constraints(h):
        return build_perf_l2plus(
            robot.jacobian, robot.B, robot.C, robot.D, K_ANCHOR, np.eye(1), h["Ps"], 4.0
        )

    sol = _solve(constraints, [("Ps", "sym", 4, "positive-definite")])
    assert sol.optimal


# -- anchored (iterative) conditions ---------------------------------------------


def _robot_vars():
    return {
        "Q": Variable("Q", "symmetric", (4, 4)),
        "K": Variable("K", "rectangular", (1, 4)),
        "L": Variable("L", "rectangular", (4, 1)),
        "G": Variable("G", "rectangular", (1, 1)),
        "beta": Variable("beta", "scalar", (1, 1)),
        "Ps": Variable("Ps", "symmetric", (4, 4)),
        "R": Variable("R", "symmetric", (4, 4)),
    }


def test_anchored_detection_anchor_identity_and_dominance(robot, rng):
    v = _robot_vars()
    a0 = robot.jacobian.vertices()[0]
    for _ in range(20):
        q0 = rng.standard_normal((4, 4))
        q0 = 0.5 * (q0 + q0.T) - 3.0 * np.eye(4)
        g0 = rng.standard_normal((1, 1))
        beta = float(rng.uniform(0.0, 1.0))
        cons = build_anchored_detection_lmi(
            robot.jacobian, robot.B, robot.C, robot.D, K_ANCHOR, L_ANCHOR, q0, g0,
            v["Q"], v["G"], v["beta"],
        )
        at_anchor = cons[0].evaluate({"Q": q0, "G": g0, "beta": beta})
        exact = detection_lmi_expanded(a0, robot.B, robot.C, robot.D, K_ANCHOR, L_ANCHOR, g0, q0, beta)
        assert np.max(np.abs(at_anchor - exact)) <= 1e-12 * (1.0 + np.max(np.abs(exact)))
        dq = rng.standard_normal((4, 4))
        q = q0 + 0.4 * 0.5 * (dq + dq.T)
        g = g0 + 0.4 * rng.standard_normal((1, 1))
        lin = cons[0].evaluate({"Q": q, "G": g, "beta": beta})
        gap = detection_lmi_expanded(a0, robot.B, robot.C, robot.D, K_ANCHOR, L_ANCHOR, g, q, beta) - lin
        assert np.linalg.eigvalsh(gap)[0] >= -1e-10


def test_anchored_detection_beta_never_exceeds_exact_condition(rng):
    # max beta over the anchored form at fixed (Q, G) never exceeds the
    # max beta of the exact condition at those values (scalar instance)
    k = np.zeros((1, 1))
    l = np.zeros((1, 1))
    for _ in range(20):
        q = np.array([[-float(rng.uniform(0.2, 3.0))]])
        g = np.array([[float(rng.uniform(-2.0, 2.0))]])
        q0 = q + 0.3 * rng.standard_normal((1, 1))
        q0 = q0 if q0[0, 0] < -1e-3 else -np.abs(q0)
        g0 = g + 0.3 * rng.standard_normal((1, 1))
        cons = build_anchored_detection_lmi(PJ1, B1, C1, D1, k, l, q0, g0, q, g, Variable("beta", "scalar", (1, 1)))

        def max_beta(matrix_fn):
            lo, hi = -5.0, 10.0
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if np.linalg.eigvalsh(matrix_fn(mid))[0] >= 0:
                    lo = mid
                else:
                    hi = mid
            return lo

        beta_lin = max_beta(lambda b: cons[0].evaluate({"beta": b}))
        beta_exact = max_beta(lambda b: detection_lmi_matrix(PJ1.base, B1, C1, D1, k, l, g, q, b))
        assert beta_lin <= beta_exact + 1e-9


def test_anchored_codesign_block_dimension(robot):
    v = _robot_vars()
    q0 = -np.eye(4)
    cons = build_anchored_codesign_lmi(
        robot.jacobian, robot.B, robot.C, robot.D, q0, K_ANCHOR, L_ANCHOR, np.eye(1),
        v["Q"], v["K"], v["L"], v["G"], v["beta"],
    )
    assert len(cons) == 2  # one per vertex
    assert cons[0].expr.shape == (32, 32)


def test_anchored_codesign_anchor_schur_matches_exact_condition(robot, rng):
    # at the anchors, eliminating the trailing blocks reproduces the exact
    # detection condition minus the output Gram on the (1,1) block
    a0 = robot.jacobian.vertices()[0]
    v = _robot_vars()
    for _ in range(10):
        q0 = rng.standard_normal((4, 4))
        q0 = 0.5 * (q0 + q0.T) - 3.0 * np.eye(4)
        g0 = np.atleast_2d(rng.uniform(0.5, 2.0))
        beta = float(rng.uniform(0.0, 1.0))
        cons = build_anchored_codesign_lmi(
            robot.jacobian, robot.B, robot.C, robot.D, q0, K_ANCHOR, L_ANCHOR, g0,
            v["Q"], v["K"], v["L"], v["G"], v["beta"],
        )
        big = cons[0].evaluate({"Q": q0, "K": K_ANCHOR, "L": L_ANCHOR, "G": g0, "beta": beta})
        red = codesign_block_schur(big, 4, 1, 1)
        e26 = detection_lmi_matrix(a0, robot.B, robot.C, robot.D, K_ANCHOR, L_ANCHOR, g0, q0, beta)
        ct = robot.C - robot.D @ K_ANCHOR
        gram = np.zeros((5, 5))
        gram[:4, :4] = ct.T @ ct
        np.testing.assert_allclose(red, e26 - gram, atol=1e-9)


def test_anchored_codesign_feasibility_implies_exact_condition(robot, bootstrap_anchors):
    # solver-produced points of the big block certify the exact condition
    k0, _, l0, _, q0 = bootstrap_anchors
    prob = SdpProblem()
    q = prob.sym_var("Q", 4, sign="negative-definite")
    k = prob.rect_var("K", 1, 4)
    l = prob.rect_var("L", 4, 1)
    g = prob.rect_var("G", 1, 1)
    beta = prob.scalar_var("beta")
    for con in build_anchored_codesign_lmi(
        robot.jacobian, robot.B, robot.C, robot.D, q0, k0, l0, np.eye(1),
        q, k, l, g, beta.expr(),
    ):
        con.add_to(prob)
    prob.maximize(beta.expr())
    sol = prob.solve()
    assert sol.optimal
    assert sol.objective >= 0.01  # the benchmark's starting detection level
    asg = sol.assignment
    for a in robot.jacobian.vertices():
        e26 = detection_lmi_matrix(
            a, robot.B, robot.C, robot.D,
            np.atleast_2d(asg["K"]), np.atleast_2d(asg["L"]), np.atleast_2d(asg["G"]),
            asg["Q"], sol.objective,
        )
        assert np.linalg.eigvalsh(e26)[0] >= -1e-7


def test_anchored_perf_anchor_identity(robot, rng):
    v = _robot_vars()
    a0 = robot.jacobian.vertices()[0]
    ps0 = np.eye(4) + 0.2 * rng.standard_normal((4, 4))
    ps0 = 0.5 * (ps0 + ps0.T) + 2.0 * np.eye(4)
    g0 = np.array([[1.3]])
    cons = build_anchored_perf_lmi(
        robot.jacobian, robot.B, robot.C, robot.D, ps0, K_ANCHOR, v["Ps"], v["K"], v["G"], 4.0
    )
    val = cons[0].evaluate({"Ps": ps0, "K": K_ANCHOR, "G": g0})
    head = 6
    schur = val[:head, :head] - val[head:, :head].T @ np.linalg.solve(val[head:, head:], val[head:, :head])
    e27 = perf_lmi_matrix(a0, robot.B, robot.C, robot.D, K_ANCHOR, g0, ps0, 4.0, eps=0.0)
    np.testing.assert_allclose(schur, e27, atol=1e-9)
    np.testing.assert_allclose(
        perf_lmi_schur(a0, robot.B, robot.C, robot.D, K_ANCHOR, g0, ps0, 4.0), e27, atol=1e-9
    )


def test_anchored_perf_zero_watermark_feasible(robot, bootstrap_anchors):
    k0, ps0, _, _, _ = bootstrap_anchors
    prob = SdpProblem()
    ps = prob.sym_var("Ps", 4, sign="positive-definite")
    k = prob.rect_var("K", 1, 4)
    for con in build_anchored_perf_lmi(
        robot.jacobian, robot.B, robot.C, robot.D, ps0, k0, ps, k, np.zeros((1, 1)), 4.0
    ):
        con.add_to(prob)
    sol = prob.solve()
    assert sol.optimal


def test_anchored_perf_zero_alpha_with_watermark_infeasible():
    # scalar instance: corner -alpha I = 0 loses definiteness against BG
    prob = SdpProblem()
    ps = prob.sym_var("Ps", 1, sign="positive-definite")
    for con in build_anchored_perf_lmi(
        PJ1, B1, C1, D1, np.eye(1), np.zeros((1, 1)), ps, np.zeros((1, 1)), np.eye(1), 0.0
    ):
        con.add_to(prob)
    sol = prob.solve()
    assert sol.status == "Infeasible"


def test_anchored_observer_anchor_identity(robot, rng):
    v = _robot_vars()
    a0 = robot.jacobian.vertices()[0]
    r0 = 2.0 * np.eye(4) + 0.1 * rng.standard_normal((4, 4))
    r0 = 0.5 * (r0 + r0.T) + 0.5 * np.eye(4)
    cons = build_anchored_observer_lmi(robot.jacobian, robot.C, r0, L_ANCHOR, v["R"], v["L"])
    val = cons[0].evaluate({"R": r0, "L": L_ANCHOR})
    schur = val[:4, :4] - val[4:, :4].T @ np.linalg.solve(val[4:, 4:], val[4:, :4])
    expected = observer_iss_matrix(a0, robot.C, L_ANCHOR, r0, eps1=0.0)
    np.testing.assert_allclose(schur, expected, atol=1e-9)
    np.testing.assert_allclose(observer_lmi_schur(a0, robot.C, L_ANCHOR, r0), expected, atol=1e-9)


def test_anchored_observer_detectable_pair_feasible():
    pj = ParametricJacobian(base=np.diag([-1.0, -2.0]))
    c = np.array([[1.0, 0.0]])
    prob = SdpProblem()
    r = prob.sym_var("R", 2, sign="positive-definite")
    l = prob.rect_var("L", 2, 1)
    for con in build_anchored_observer_lmi(pj, c, np.eye(2), np.zeros((2, 1)), r, l):
        con.add_to(prob)
    assert prob.solve().optimal


def test_anchored_observer_unobservable_unstable_infeasible():
    # PBH: the unstable mode +1 is invisible through C = [0, 1]
    pj = ParametricJacobian(base=np.diag([1.0, -1.0]))
    c = np.array([[0.0, 1.0]])
    prob = SdpProblem()
    r = prob.sym_var("R", 2, sign="positive-definite")
    l = prob.rect_var("L", 2, 1)
    for con in build_anchored_observer_lmi(pj, c, np.eye(2), np.zeros((2, 1)), r, l):
        con.add_to(prob)
    assert prob.solve().status == "Infeasible"


# -- delta-ISS conditions -----------------------------------------------------


def test_iss_observer_zero_gain_stable_vertices():
    prob = SdpProblem()
    r = prob.sym_var("R", 1, sign="positive-definite")
    for con in build_iss_observer_lmi(PJ1, C1, r, np.zeros((1, 1)), eps1=0.5):
        con.add_to(prob)
    assert prob.solve().optimal


def test_iss_observer_eps_threshold_scalar():
    # A = -1: A'R + RA = -2R, so feasible iff eps1 <= 2
    def run(eps1):
        prob = SdpProblem()
        r = prob.sym_var("R", 1, sign="positive-definite")
        for con in build_iss_observer_lmi(PJ1, C1, r, np.zeros((1, 1)), eps1=eps1):
            con.add_to(prob)
        return prob.solve()

    assert run(1.9).optimal
    assert run(2.1).status == "Infeasible"


def test_iss_observer_robot_with_benchmark_gain(robot, initial_gains):
    prob = SdpProblem()
    r = prob.sym_var("R", 4, sign="positive-definite")
    for con in build_iss_observer_lmi(robot.jacobian, robot.C, r, initial_gains["loop"].L, eps1=0.1):
        con.add_to(prob)
    assert prob.solve().optimal


def test_iss_ctrl_scalar_threshold():
    def run(eps2):
        prob = SdpProblem()
        s = prob.sym_var("S", 1, sign="positive-definite")
        for con in build_delta_iss_ctrl_lmi(PJ1, B1, s, np.zeros((1, 1)), eps2=eps2):
            con.add_to(prob)
        return prob.solve()

    assert run(1.9).optimal
    assert run(2.1).status == "Infeasible"


def test_iss_bilinear_guards():
    r = Variable("R", "symmetric", (1, 1))
    l = Variable("L", "rectangular", (1, 1))
    with pytest.raises(NotAffine):
        build_iss_observer_lmi(PJ1, C1, r, l, eps1=0.1)
    s = Variable("S", "symmetric", (1, 1))
    k = Variable("K", "rectangular", (1, 1))
    with pytest.raises(NotAffine):
        build_delta_iss_ctrl_lmi(PJ1, B1, s, k, eps2=0.1)
