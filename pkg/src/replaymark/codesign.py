"""Iterative LMI loops for watermark-gain design and full co-design.

Both loops maximize the detection-side level beta subject to the
performance cap alpha, re-anchoring the linearized conditions at each
iterate.  Because the previous iterate always satisfies the re-anchored
constraints, the beta sequence is nondecreasing (up to solver tolerance)
and bounded by alpha, so it converges to a local maximum.

Certificates reported at the end are re-derived from the plain incremental
gain LMIs on the closed-loop channels at the final gains, so they stand on
the canonical characterizations rather than on the linearized machinery.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InitInfeasible
from .linalg import ParametricJacobian, is_hurwitz
from .gains.certificates import GainCertificate, LoopMatrices
from .gains.lmis import (
    build_anchored_detection_lmi,
    build_anchored_codesign_lmi,
    build_anchored_perf_lmi,
    build_anchored_observer_lmi,
    build_perf_l2plus,
    detection_lmi_matrix,
    perf_lmi_matrix,
    observer_iss_matrix,
)
from .sdp import SdpOptions, SdpProblem, blocks, const, trace

WATERMARK_ONLY = "WatermarkOnly"
CODESIGN = "CoDesign"

_CONV_TOL = 1e-5  # relative beta change over three consecutive iterations


@dataclass
class IterationRecord:
    index: int
    beta: float
    solver_status: str
    margin: float
    anchor_margin: float = float("nan")  # previous iterate re-checked against
    #                                       this iteration's constraints


@dataclass
class DesignReport:
    mode: str
    alpha: float
    iterations: list = field(default_factory=list)
    loop: LoopMatrices = None
    detection_certificate: GainCertificate = None
    performance_certificate: GainCertificate = None
    converged: bool = False
    truncated: bool = False
    bootstrap: dict = field(default_factory=dict)
    final_margins: dict = field(default_factory=dict)

    @property
    def betas(self):
        return np.array([r.beta for r in self.iterations])

    @property
    def final_beta(self):
        return self.iterations[-1].beta if self.iterations else float("nan")


def _shifted(pj, delta):
    return ParametricJacobian(pj.base + delta, pj.directions, pj.bounds)


def detection_channel_matrices(plant, k, l, g):
    """(jacobian, B, C, D) of the watermark -> predicted-output channel."""
    ct = plant.C - plant.D @ k
    pj = _shifted(plant.jacobian, -plant.B @ k - l @ ct)
    return pj, (plant.B - l @ plant.D) @ g, ct, plant.D @ g


def performance_channel_matrices(plant, k, g):
    ct = plant.C - plant.D @ k
    pj = _shifted(plant.jacobian, -plant.B @ k)
    return pj, plant.B @ g, ct, plant.D @ g


def certify_final_gains(plant, loop, options=None):
    """Plain Lemma-level certificates for the closed-loop channels."""
    from .gains.certificates import l2minus_gain_certificate, l2plus_gain_certificate

    pj_d, b_d, c_d, d_d = detection_channel_matrices(plant, loop.K, loop.L, loop.G)
    det_cert, _ = l2minus_gain_certificate(pj_d, b_d, c_d, d_d, options)
    pj_p, b_p, c_p, d_p = performance_channel_matrices(plant, loop.K, loop.G)
    perf_cert, _ = l2plus_gain_certificate(pj_p, b_p, c_p, d_p, options)
    return det_cert, perf_cert


def _converged(betas):
    if len(betas) < 4:
        return False
    b = betas[-4:]
    scale = max(abs(b[-1]), 1e-12)
    return all(abs(b[i + 1] - b[i]) / scale < _CONV_TOL for i in range(3))


def _final_margins(plant, loop, q, ps, r, alpha, eps, eps1):
    """Worst vertex eigenvalue margins of the exact closed-loop conditions."""
    margins = {"detection": np.inf, "performance": np.inf, "observer": np.inf}
    for a in plant.jacobian.vertices():
        m26 = detection_lmi_matrix(a, plant.B, plant.C, plant.D, loop.K, loop.L, loop.G, q, 0.0)
        margins["detection"] = min(margins["detection"], float(np.linalg.eigvalsh(m26)[0]))
        m27 = perf_lmi_matrix(a, plant.B, plant.C, plant.D, loop.K, loop.G, ps, alpha, eps)
        margins["performance"] = min(margins["performance"], float(-np.linalg.eigvalsh(m27)[-1]))
        mo = observer_iss_matrix(a, plant.C, loop.L, r, eps1)
        margins["observer"] = min(margins["observer"], float(-np.linalg.eigvalsh(mo)[-1]))
    return margins


def _diag_scalar(var, dim):
    """var * I_dim as an expression."""
    e = var.expr()
    if dim == 1:
        return e
    return blocks([[e if i == j else None for j in range(dim)] for i in range(dim)])


# ---------------------------------------------------------------------------
# Algorithm for the watermark gain alone (fixed K, L)
# ---------------------------------------------------------------------------


def algorithm1(plant, k, l, g_init, q_init=None, alpha=4.0, beta0=0.01, iterations=30, eps=1e-3, options=None):
    """Maximize the detection level over G (and Q) at fixed controller gains."""
    options = options or SdpOptions()
    n, m = plant.n, plant.m
    k = np.atleast_2d(np.asarray(k, dtype=float))
    l = np.atleast_2d(np.asarray(l, dtype=float))
    g0 = np.atleast_2d(np.asarray(g_init, dtype=float))
    if q_init is None:
        q_init = -np.eye(n) / max(np.linalg.norm(plant.jacobian.base, 2), 1.0)
    q0 = np.atleast_2d(np.asarray(q_init, dtype=float))

    report = DesignReport(mode=WATERMARK_ONLY, alpha=alpha)
    report.iterations.append(IterationRecord(0, beta0, "init", float("nan")))
    report.bootstrap = {"K0": k.copy(), "L0": l.copy(), "G0": g0.copy(), "Q0": q0.copy()}

    def build(q_anchor, g_anchor):
        prob = SdpProblem()
        q = prob.sym_var("Q", n, sign="negative-definite")
        g = prob.rect_var("G", m, m)
        ps = prob.sym_var("Ps", n, sign="positive-definite")
        beta = prob.scalar_var("beta")
        cons = build_perf_l2plus(
            plant.jacobian, plant.B, plant.C, plant.D, k, g, ps, alpha, eps
        ) + build_anchored_detection_lmi(
            plant.jacobian, plant.B, plant.C, plant.D, k, l, q_anchor, g_anchor, q, g, beta
        )
        for con in cons:
            con.add_to(prob)
        prob.maximize(beta.expr())
        return prob, cons

    prob, _ = build(q0, g0)
    sol = prob.solve(options)
    if not sol.optimal:
        for scale in (10.0, 0.1):
            prob, _ = build(scale * q0, g0)
            sol = prob.solve(options)
            if sol.optimal:
                q0 = scale * q0
                break
        else:
            raise InitInfeasible("watermark-gain loop infeasible at the initial anchors")

    q_cur, g_cur = q0, g0
    prev_assign = None
    for i in range(1, iterations + 1):
        anchor_margin = float("nan")
        if i > 1:
            prob, cons = build(q_cur, g_cur)
            if prev_assign is not None:
                # the previous iterate must stay feasible for the re-anchored
                # constraints (this is what makes the beta sequence monotone)
                anchor_margin = min(con.margin(prev_assign) for con in cons)
            sol = prob.solve(options)
        if not sol.optimal:
            report.iterations.append(
                IterationRecord(i, float("nan"), sol.status, float("nan"), anchor_margin)
            )
            report.truncated = True
            break
        q_cur = sol.assignment["Q"]
        g_cur = np.atleast_2d(sol.assignment["G"])
        prev_assign = dict(sol.assignment)
        report.iterations.append(
            IterationRecord(i, sol.objective, sol.status, sol.margin, anchor_margin)
        )
        if _converged([r.beta for r in report.iterations[1:]]):
            report.converged = True

    report.loop = LoopMatrices(K=k, L=l, G=g_cur, epsilon=eps)
    det_cert, perf_cert = certify_final_gains(plant, report.loop, options)
    report.detection_certificate = det_cert
    report.performance_certificate = perf_cert
    return report


# ---------------------------------------------------------------------------
# Full co-design of K, L, and G
# ---------------------------------------------------------------------------


def _bootstrap_state_feedback(plant, g0, alpha, eps, options, cap=1e3):
    """Solve the performance LMI for (K, P_s) via the exact Y = K P_s change.

    Trace minimization alone is degenerate here (P_s collapses onto its
    definiteness margin and K = Y P_s^-1 blows up), so the bootstrap pins
    the scale with P_s >= I and loosely caps ||Y||.
    """
    n, m, p = plant.n, plant.m, plant.p
    prob = SdpProblem()
    ps = prob.sym_var("Ps", n, sign="positive-definite")
    y = prob.rect_var("Y", m, n)
    pse, ye = ps.expr(), y.expr()
    b, c, d = plant.B, plant.C, plant.D
    for a in plant.jacobian.vertices():
        n11 = (a @ pse + pse @ a.T) - const(b) @ ye - (const(b) @ ye).T + eps * pse
        n12 = const(b @ g0)
        n13 = pse @ c.T - ye.T @ d.T
        n23 = const((d @ g0).T)
        expr = blocks(
            [
                [n11, n12, n13],
                [n12.T, -alpha * np.eye(m), n23],
                [n13.T, n23.T, -np.eye(p)],
            ]
        )
        prob.add_nsd(expr)
    prob.add_psd(pse - np.eye(n))
    ty = prob.scalar_var("t_y")
    prob.add_psd(blocks([[_diag_scalar(ty, m), ye], [ye.T, _diag_scalar(ty, n)]]))
    prob.add_psd(cap - ty.expr())
    prob.minimize(trace(pse) + ty.expr())
    sol = prob.solve(options)
    if not sol.optimal:
        raise InitInfeasible(f"state-feedback bootstrap failed: {sol.status}")
    ps_val = sol.assignment["Ps"]
    k_val = sol.assignment["Y"] @ np.linalg.inv(ps_val)
    return np.atleast_2d(k_val), ps_val


def _bootstrap_observer(plant, eps1, options, cap=1e3):
    """Solve the observer delta-ISS LMI for (L, R) via the W = R L change.

    Normalized like the state-feedback bootstrap: R >= I and ||W|| capped.
    """
    n, p = plant.n, plant.p
    prob = SdpProblem()
    r = prob.sym_var("R", n, sign="positive-definite")
    w = prob.rect_var("W", n, p)
    re, we = r.expr(), w.expr()
    c = plant.C
    for a in plant.jacobian.vertices():
        expr = (a.T @ re + re @ a) - we @ c - (we @ c).T + eps1 * re
        prob.add_nsd(expr)
    prob.add_psd(re - np.eye(n))
    tw = prob.scalar_var("t_w")
    prob.add_psd(blocks([[_diag_scalar(tw, n), we], [we.T, _diag_scalar(tw, p)]]))
    prob.add_psd(cap - tw.expr())
    prob.minimize(trace(re) + tw.expr())
    sol = prob.solve(options)
    if not sol.optimal:
        raise InitInfeasible(f"observer bootstrap failed: {sol.status}")
    r_val = sol.assignment["R"]
    l_val = np.linalg.solve(r_val, sol.assignment["W"])
    return np.atleast_2d(l_val), r_val


def _bootstrap_detection_lyapunov(plant, k, l, g, options):
    """Max-beta anchor Q for the co-design loop.

    Solved on the variant of the detection condition whose (1,1) block
    omits the output Gram term: that variant is what the big anchored
    block reduces to at its anchors, so anchoring on it keeps the first
    co-design iteration feasible.  It implies the plain condition.
    """
    n, m = plant.n, plant.m
    b, c, d = plant.B, plant.C, plant.D
    ct = c - d @ k
    bld = (b - l @ d) @ g
    dg = d @ g
    prob = SdpProblem()
    q = prob.sym_var("Q", n, sign="negative-definite")
    beta = prob.scalar_var("beta")
    qe = q.expr()
    for a in plant.jacobian.vertices():
        acl = a - b @ k - l @ ct
        m11 = acl.T @ qe + qe @ acl
        m12 = qe @ bld + const(ct.T @ dg)
        if m > 1:
            corner = const(dg.T @ dg) - blocks(
                [[beta.expr() if i == j else None for j in range(m)] for i in range(m)]
            )
        else:
            corner = const(dg.T @ dg) - beta.expr()
        expr = blocks([[m11, m12], [m12.T, corner]])
        prob.add_psd(expr)
    prob.maximize(beta.expr())
    sol = prob.solve(options)
    if not sol.optimal:
        raise InitInfeasible(f"detection-anchor bootstrap failed: {sol.status}")
    return sol.assignment["Q"], sol.objective


def algorithm2(plant, g_init, alpha=4.0, beta0=0.01, iterations=30, eps=1e-3, eps1=0.1, options=None):
    """Co-design K, L, and G by the three anchored conditions jointly."""
    options = options or SdpOptions()
    n, m, p = plant.n, plant.m, plant.p
    g0 = np.atleast_2d(np.asarray(g_init, dtype=float))

    k0, ps0 = _bootstrap_state_feedback(plant, g0, alpha, eps, options)
    l0, r0 = _bootstrap_observer(plant, eps1, options)
    q0, beta_boot = _bootstrap_detection_lyapunov(plant, k0, l0, g0, options)

    report = DesignReport(mode=CODESIGN, alpha=alpha)
    report.bootstrap = {
        "K0": k0.copy(),
        "L0": l0.copy(),
        "G0": g0.copy(),
        "Q0": q0.copy(),
        "Ps0": ps0.copy(),
        "R0": r0.copy(),
        "beta_bootstrap": beta_boot,
    }
    report.iterations.append(IterationRecord(0, beta0, "init", float("nan")))

    anchors = {"Q": q0, "K": k0, "L": l0, "G": g0, "Ps": ps0, "R": r0}
    prev_beta = None
    for i in range(1, iterations + 1):
        prob = SdpProblem()
        q = prob.sym_var("Q", n, sign="negative-definite")
        k = prob.rect_var("K", m, n)
        l = prob.rect_var("L", n, p)
        g = prob.rect_var("G", m, m)
        ps = prob.sym_var("Ps", n, sign="positive-definite")
        r = prob.sym_var("R", n, sign="positive-definite")
        beta = prob.scalar_var("beta")
        cons = (
            build_anchored_codesign_lmi(
                plant.jacobian, plant.B, plant.C, plant.D,
                anchors["Q"], anchors["K"], anchors["L"], anchors["G"],
                q, k, l, g, beta.expr(),
            )
            + build_anchored_perf_lmi(
                plant.jacobian, plant.B, plant.C, plant.D,
                anchors["Ps"], anchors["K"], ps, k, g, alpha,
            )
            + build_anchored_observer_lmi(plant.jacobian, plant.C, anchors["R"], anchors["L"], r, l)
        )
        for con in cons:
            con.add_to(prob)
        prob.maximize(beta.expr())
        anchor_margin = float("nan")
        if prev_beta is not None:
            assign = dict(anchors, beta=prev_beta)
            anchor_margin = min(con.margin(assign) for con in cons)
        sol = prob.solve(options)
        if not sol.optimal:
            report.iterations.append(
                IterationRecord(i, float("nan"), sol.status, float("nan"), anchor_margin)
            )
            report.truncated = True
            break
        anchors = {
            "Q": sol.assignment["Q"],
            "K": np.atleast_2d(sol.assignment["K"]),
            "L": np.atleast_2d(sol.assignment["L"]),
            "G": np.atleast_2d(sol.assignment["G"]),
            "Ps": sol.assignment["Ps"],
            "R": sol.assignment["R"],
        }
        prev_beta = sol.objective
        report.iterations.append(
            IterationRecord(i, sol.objective, sol.status, sol.margin, anchor_margin)
        )
        if _converged([rec.beta for rec in report.iterations[1:]]):
            report.converged = True

    report.loop = LoopMatrices(K=anchors["K"], L=anchors["L"], G=anchors["G"], epsilon=eps)
    det_cert, perf_cert = certify_final_gains(plant, report.loop, options)
    report.detection_certificate = det_cert
    report.performance_certificate = perf_cert
    report.final_margins = _final_margins(
        plant, report.loop, anchors["Q"], anchors["Ps"], anchors["R"], alpha, eps=0.0, eps1=0.0
    )
    report.final_margins["K_stabilizing"] = all(
        is_hurwitz(a - plant.B @ anchors["K"]) for a in plant.jacobian.vertices()
    )
    report.final_margins["L_stabilizing"] = all(
        is_hurwitz(a - anchors["L"] @ plant.C) for a in plant.jacobian.vertices()
    )
    return report
