import numpy as np
import pytest

from replaymark.errors import BracketError, NotAffine, ShapeError
from replaymark.sdp import (
    SdpOptions,
    SdpProblem,
    bisect_gain,
    blocks,
    const,
    dump_problem,
    load_problem,
    trace,
)
from replaymark.sdp.expr import Variable


# -- expressions ------------------------------------------------------------


def test_expr_algebra_evaluation():
    v = Variable("X", "symmetric", (2, 2))
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    expr = a @ v.expr() + v.expr() @ a.T - 2.0 * v.expr() + np.eye(2)
    x_val = np.array([[1.0, 0.5], [0.5, -2.0]])
    expected = a @ x_val + x_val @ a.T - 2.0 * x_val + np.eye(2)
    np.testing.assert_allclose(expr.value({"X": x_val}), expected, atol=1e-14)


def test_expr_transpose_and_blocks():
    k = Variable("K", "rectangular", (1, 3))
    a = np.array([[1.0, 2.0, 0.0], [0.0, 1.0, -1.0], [2.0, 0.0, 1.0]])
    off = (k.expr() @ a).T  # (3, 1)
    expr = blocks([[const(np.zeros((3, 3))), off], [off.T, const(np.zeros((1, 1)))]])
    k_val = np.array([[1.0, 2.0, 3.0]])
    got = expr.value({"K": k_val})
    np.testing.assert_allclose(got[:3, 3:], (k_val @ a).T)
    np.testing.assert_allclose(got, got.T)


def test_variable_products_rejected():
    p = Variable("P", "symmetric", (2, 2))
    q = Variable("Q", "symmetric", (2, 2))
    with pytest.raises(NotAffine):
        _ = p.expr() @ q.expr()


def test_shape_mismatch_rejected():
    p = Variable("P", "symmetric", (2, 2))
    with pytest.raises(ShapeError):
        _ = np.eye(3) @ p.expr()


def test_trace_expression():
    p = Variable("P", "symmetric", (3, 3))
    expr = trace(p.expr())
    val = np.diag([1.0, 2.0, 3.0])
    assert expr.value({"P": val})[0, 0] == pytest.approx(6.0)


# -- solver ------------------------------------------------------------------


def test_maximize_simple_bound():
    p = SdpProblem()
    beta = p.scalar_var("beta")
    p.add_psd(1.0 - 1.0 * beta.expr())
    p.maximize(beta.expr())
    sol = p.solve()
    assert sol.optimal
    assert sol.objective == pytest.approx(1.0, abs=2e-6)


def test_lyapunov_feasibility_certified():
    a = np.diag([-1.0, -2.0])
    p = SdpProblem()
    pv = p.sym_var("P", 2, sign="positive-definite")
    p.add_nsd(a.T @ pv.expr() + pv.expr() @ a + np.eye(2))
    sol = p.solve()
    assert sol.optimal
    m = a.T @ sol.assignment["P"] + sol.assignment["P"] @ a + np.eye(2)
    assert np.linalg.eigvalsh(m)[-1] <= 1e-7


def test_lyapunov_infeasible_with_unstable_mode():
    a = np.diag([1.0, -2.0])
    p = SdpProblem()
    pv = p.sym_var("P", 2, sign="positive-definite")
    p.add_nsd(a.T @ pv.expr() + pv.expr() @ a + np.eye(2))
    assert p.solve().status == "Infeasible"


def test_determinism_bitwise():
    def make():
        p = SdpProblem()
        b = p.scalar_var("b")
        q = p.sym_var("Q", 2, sign="negative-definite")
        p.add_psd(blocks([[-1.0 * q.expr(), None], [None, 4.0 - 1.0 * b.expr()]]))
        p.maximize(b.expr())
        return p

    s1 = make().solve()
    s2 = make().solve()
    assert s1.status == s2.status
    assert abs(s1.objective - s2.objective) <= 1e-12
    assert s1.objective == s2.objective  # deterministic arithmetic end to end


def test_solution_margin_and_self_consistency():
    # the reported objective equals the objective of the returned
    # (feasibility-certified) assignment
    p = SdpProblem()
    b = p.scalar_var("b")
    p.add_psd(3.0 - 1.0 * b.expr())
    p.add_psd(b.expr() + 1.0)
    p.maximize(2.0 * b.expr())
    sol = p.solve()
    assert sol.optimal
    assert sol.margin >= -1e-7
    assert sol.objective == pytest.approx(2.0 * sol.assignment["b"], abs=1e-12)
    for val in p.evaluate_constraints(sol.assignment):
        assert np.linalg.eigvalsh(np.atleast_2d(val))[0] >= -1e-7


def _gamma_problem(scale=1.0):
    # scalar upper-gain LMI; optimum gamma = 4
    p = SdpProblem()
    pv = p.sym_var("P", 1, sign="positive-definite")
    g = p.scalar_var("g")
    pe, ge = pv.expr(), g.expr()
    p.add_nsd(scale * blocks([[-2.0 * pe + 1.0, pe + 1.0], [pe + 1.0, 1.0 - ge]]))
    p.minimize(ge)
    return p


def test_scaling_covariance():
    sol1 = _gamma_problem(1.0).solve()
    sol2 = _gamma_problem(7.5).solve()
    assert sol1.optimal and sol2.optimal
    assert abs(sol1.objective - sol2.objective) <= 10 * SdpOptions().opt_tol
    assert abs(sol1.assignment["P"][0, 0] - sol2.assignment["P"][0, 0]) <= 1e-4


# -- bisection ----------------------------------------------------------------


def test_bisect_simple_boundary():
    calls = []

    def oracle(g):
        calls.append(g)
        return g >= 4.0

    out = bisect_gain(oracle, 0.0, 16.0, 1e-4)
    assert out == pytest.approx(4.0, abs=1e-4)
    assert len(calls) <= int(np.ceil(np.log2(16.0 / 1e-4)))


def test_bisect_nonbracketing_raises():
    with pytest.raises(BracketError):
        bisect_gain(lambda g: True, 0.0, 1.0, 1e-3)


def _lemma1_feasible(gamma):
    p = SdpProblem()
    pv = p.sym_var("P", 1, sign="positive-definite")
    pe = pv.expr()
    p.add_nsd(blocks([[-2.0 * pe + 1.0, pe + 1.0], [pe + 1.0, 1.0 - gamma]]))
    return p.solve().optimal


def _lemma2_feasible(gamma):
    p = SdpProblem()
    qv = p.sym_var("Q", 1, sign="negative-definite")
    qe = qv.expr()
    p.add_psd(blocks([[-2.0 * qe + 1.0, qe + 1.0], [qe + 1.0, 1.0 - gamma]]))
    return p.solve().optimal


def test_bisect_lemma1_upper_gain():
    # squared H-infinity norm of (s+2)/(s+1) is 4 (peak at w = 0)
    out = bisect_gain(_lemma1_feasible, 0.0, 16.0, 5e-4, feasible_side="hi")
    assert out == pytest.approx(4.0, abs=1e-3)


def test_bisect_lemma2_lower_gain():
    # squared infimum of |(jw+2)/(jw+1)| is 1 (limit w -> infinity)
    out = bisect_gain(_lemma2_feasible, 0.0, 16.0, 5e-4, feasible_side="lo")
    assert out == pytest.approx(1.0, abs=1e-3)


# -- archive -------------------------------------------------------------------


def test_archive_round_trip(tmp_path):
    p = _gamma_problem()
    path = tmp_path / "problem.lmi"
    dump_problem(p, path)
    p2 = load_problem(path)
    s1, s2 = p.solve(), p2.solve()
    assert s1.status == s2.status
    assert s1.objective == pytest.approx(s2.objective, abs=1e-10)
