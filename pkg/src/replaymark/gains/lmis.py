"""LMI builders for incremental-gain bounds and their iterative linearizations.

Every builder emits one constraint per vertex of the polytopic Jacobian
inclusion, with the Lyapunov-type variable shared across vertices; affine
LMIs that hold at all vertices hold on the whole parameter box by convexity.

Two conventions used throughout:

* gamma values are SQUARED gains (they bound energy ratios); callers that
  want the gain in the sense of the output/input norm inequality take the
  square root.
* quadratic terms ``X'X`` in the iterative forms are replaced by the anchor
  linearization ``X'X0 + X0'X - X0'X0``, which under-estimates ``X'X`` by
  the PSD gap ``(X-X0)'(X-X0)`` and coincides with it at the anchor.  The
  ``*_schur``/``*_matrix`` helpers evaluate the corresponding exact
  (expanded) conditions numerically so the identities can be verified.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NotAffine, ShapeError
from ..linalg import as_matrix, as_symmetric
from ..sdp.expr import AffineExpr, Variable, blocks, const, eye, zeros

PSD = "psd"
NSD = "nsd"


@dataclass
class LmiConstraint:
    """A single PSD/NSD requirement on an affine matrix expression."""

    sense: str
    expr: AffineExpr
    label: str = ""

    def add_to(self, problem):
        if self.sense == PSD:
            problem.add_psd(self.expr)
        else:
            problem.add_nsd(self.expr)

    def evaluate(self, assignment):
        return self.expr.value(assignment)

    def margin(self, assignment):
        """Smallest eigenvalue in the feasible direction (>= 0 when satisfied)."""
        lam = np.linalg.eigvalsh(self.evaluate(assignment))
        return float(lam[0]) if self.sense == PSD else float(-lam[-1])


def _as_expr(x):
    if isinstance(x, Variable):
        return x.expr()
    if isinstance(x, AffineExpr):
        return x
    return const(x)


def _is_var(x):
    return isinstance(x, (Variable, AffineExpr)) and bool(_as_expr(x).terms)


def _lin_gram(x, x0):
    """Affine under-estimator of X'X at anchor X0 (exact at X = X0)."""
    x = _as_expr(x)
    x0 = as_matrix(x0)
    return x.T @ x0 + const(x0).T @ x - x0.T @ x0


def _lin_gram_t(x, x0):
    """Affine under-estimator of XX' at anchor X0."""
    x = _as_expr(x)
    x0 = as_matrix(x0)
    return x @ x0.T + const(x0) @ x.T - x0 @ x0.T


def _dims(b, c, d):
    b = as_matrix(b, name="B")
    c = as_matrix(c, name="C")
    d = as_matrix(d, name="D")
    n, m = b.shape
    p = c.shape[0]
    if c.shape[1] != n:
        raise ShapeError(f"C must be pxn with n={n}, got {c.shape}")
    if d.shape != (p, m):
        raise ShapeError(f"D must be {p}x{m}, got {d.shape}")
    return b, c, d, n, m, p


# ---------------------------------------------------------------------------
# Plain incremental-gain LMIs
# ---------------------------------------------------------------------------


def build_l2plus_lmi(pj, b, c, d, p_var, gamma_sq):
    """Upper-gain condition: [A'P+PA+C'C, PB+C'D; *, D'D-g*I] NSD per vertex."""
    b, c, d, n, m, _ = _dims(b, c, d)
    if pj.dim != n:
        raise ShapeError(f"inclusion dim {pj.dim} != B rows {n}")
    p = _as_expr(p_var)
    out = []
    for k, a in enumerate(pj.vertices()):
        m11 = (a.T @ p + p @ a) + c.T @ c
        m12 = p @ b + const(c.T @ d)
        m22 = const(d.T @ d) - _scale_identity(gamma_sq, m)
        expr = blocks([[m11, m12], [m12.T, m22]])
        out.append(LmiConstraint(NSD, expr, f"l2plus[{k}]"))
    return out


def _scale_identity(g, m):
    """gamma * I_m for scalar gamma given as expression or number."""
    g = _as_expr(g)
    if g.shape != (1, 1):
        raise ShapeError("gamma must be scalar")
    return blocks([[g if i == j else None for j in range(m)] for i in range(m)]) if m > 1 else g


def build_l2minus_lmi(pj, b, c, d, q_var, gamma_sq):
    """Lower-gain condition: [A'Q+QA+C'C, QB+C'D; *, D'D-g*I] PSD per vertex."""
    b, c, d, n, m, _ = _dims(b, c, d)
    if pj.dim != n:
        raise ShapeError(f"inclusion dim {pj.dim} != B rows {n}")
    q = _as_expr(q_var)
    out = []
    for k, a in enumerate(pj.vertices()):
        m11 = (a.T @ q + q @ a) + c.T @ c
        m12 = q @ b + const(c.T @ d)
        m22 = const(d.T @ d) - _scale_identity(gamma_sq, m)
        expr = blocks([[m11, m12], [m12.T, m22]])
        out.append(LmiConstraint(PSD, expr, f"l2minus[{k}]"))
    return out


# ---------------------------------------------------------------------------
# Watermarked-loop conditions (detection and performance sides)
# ---------------------------------------------------------------------------


def build_watermark_l2minus(pj, b, c, d, k_mat, l_mat, g_mat, q_var, beta):
    """Detection-side condition on the attacked-observer channel, PSD per vertex.

    Exactly one of ``q_var``/``g_mat`` may carry variables (the condition is
    bilinear otherwise); a variable G additionally requires D = 0 because of
    the G'D'DG corner.
    """
    b, c, d, n, m, _ = _dims(b, c, d)
    k_num = as_matrix(k_mat, m, n, name="K")
    l_num = as_matrix(l_mat, n, d.shape[0], name="L")
    q_is_var = _is_var(q_var)
    g_is_var = _is_var(g_mat)
    if q_is_var and g_is_var:
        raise NotAffine("Q and G cannot both be variables here; linearize instead")
    if g_is_var and np.any(d):
        raise NotAffine("variable G with D != 0 makes the corner block quadratic")
    q = _as_expr(q_var)
    g = _as_expr(g_mat)
    ct = c - d @ k_num  # C - DK
    a_cl_shift = -b @ k_num - l_num @ ct  # added to each vertex A
    bld = b - l_num @ d
    out = []
    for kv, a in enumerate(pj.vertices()):
        acl = a + a_cl_shift
        m11 = (acl.T @ q + q @ acl) + ct.T @ ct
        m12 = q @ bld @ g + const(ct.T @ d) @ g
        if g_is_var:
            m22 = -_scale_identity(beta, m)  # D = 0 here
        else:
            gn = g.constant
            m22 = const(gn.T @ d.T @ d @ gn) - _scale_identity(beta, m)
        expr = blocks([[m11, m12], [m12.T, m22]])
        out.append(LmiConstraint(PSD, expr, f"wm_l2minus[{kv}]"))
    return out


def build_perf_l2plus(pj, b, c, d, k_mat, g_mat, ps_var, alpha, eps=1e-3):
    """Performance-side condition (watermark -> plant output), NSD per vertex.

    Fixed numeric K; variables are P_s and optionally G.  The output
    coupling column is P_s C' - P_s K' D' (the congruence variable P_s
    appears throughout).
    """
    b, c, d, n, m, p = _dims(b, c, d)
    k_num = as_matrix(k_mat, m, n, name="K")
    if alpha <= 0:
        raise ShapeError("alpha must be positive")
    ps = _as_expr(ps_var)
    g = _as_expr(g_mat)
    out = []
    for kv, a in enumerate(pj.vertices()):
        n11 = (a @ ps + ps @ a.T) - (b @ k_num) @ ps - ps @ (b @ k_num).T + eps * ps
        n12 = const(b) @ g
        n13 = ps @ c.T - ps @ (d @ k_num).T
        n23 = (const(d) @ g).T
        expr = blocks(
            [
                [n11, n12, n13],
                [n12.T, -alpha * np.eye(m), n23],
                [n13.T, n23.T, -np.eye(p)],
            ]
        )
        out.append(LmiConstraint(NSD, expr, f"perf_l2plus[{kv}]"))
    return out


# ---------------------------------------------------------------------------
# Iterative (anchor-linearized) conditions
# ---------------------------------------------------------------------------


def build_anchored_detection_lmi(pj, b, c, d, k_mat, l_mat, q0, g0, q_var, g_var, beta):
    """Anchored form of the detection condition with (Q, G, beta) free.

    PSD 3x3 block per vertex; coincides with the Schur-expanded original at
    the anchor (Q0, G0) and under-estimates it elsewhere by
    diag((Q-Q0)^2, (G-G0)' Phi (G-G0), 0).
    """
    b, c, d, n, m, _ = _dims(b, c, d)
    k_num = as_matrix(k_mat, m, n, name="K")
    l_num = as_matrix(l_mat, n, d.shape[0], name="L")
    q0 = as_symmetric(q0, name="Q0")
    g0 = as_matrix(g0, m, m, name="G0")
    q = _as_expr(q_var)
    g = _as_expr(g_var)
    ct = c - d @ k_num
    bld = b - l_num @ d
    phi = bld.T @ bld + d.T @ d
    out = []
    for kv, a in enumerate(pj.vertices()):
        m11 = (
            _lin_gram(q, q0)
            + (q @ a + a.T @ q)
            - (q @ (b @ k_num) + (b @ k_num).T @ q)
            - (q @ (l_num @ c) + (l_num @ c).T @ q)
            + (q @ (l_num @ d @ k_num) + (l_num @ d @ k_num).T @ q)
            + const(ct.T @ ct)
        )
        m12 = const(ct.T @ d) @ g
        m13 = -q
        m22 = (g.T @ (phi @ g0) + const(g0.T @ phi) @ g - const(g0.T @ phi @ g0)) - _scale_identity(beta, m)
        m23 = (const(bld) @ g).T
        expr = blocks(
            [
                [m11, m12, m13],
                [m12.T, m22, m23],
                [m13.T, m23.T, np.eye(n)],
            ]
        )
        out.append(LmiConstraint(PSD, expr, f"anchored_detection[{kv}]"))
    return out


def detection_lmi_expanded(a, b, c, d, k, l, g, q, beta):
    """Numeric Schur-expanded original of the detection condition (3x3)."""
    a, b, c, d, k, l, g, q = map(np.atleast_2d, (a, b, c, d, k, l, g, q))
    ct = c - d @ k
    bld = b - l @ d
    m11 = (
        q @ q
        + q @ a
        + a.T @ q
        - q @ (b @ k)
        - (b @ k).T @ q
        - q @ (l @ c)
        - (l @ c).T @ q
        + q @ (l @ d @ k)
        + (l @ d @ k).T @ q
        + ct.T @ ct
    )
    m12 = ct.T @ d @ g
    m13 = -q
    m22 = (bld @ g).T @ (bld @ g) + (d @ g).T @ (d @ g) - beta * np.eye(g.shape[1])
    m23 = (bld @ g).T
    n = a.shape[0]
    return np.block([[m11, m12, m13], [m12.T, m22, m23], [m13.T, m23.T, np.eye(n)]])


def detection_lmi_matrix(a, b, c, d, k, l, g, q, beta):
    """Numeric detection-side condition (2x2 block form)."""
    a, b, c, d, k, l, g, q = map(np.atleast_2d, (a, b, c, d, k, l, g, q))
    ct = c - d @ k
    acl = a - b @ k - l @ ct
    m11 = acl.T @ q + q @ acl + ct.T @ ct
    m12 = q @ (b - l @ d) @ g + ct.T @ (d @ g)
    m22 = (d @ g).T @ (d @ g) - beta * np.eye(g.shape[1])
    return np.block([[m11, m12], [m12.T, m22]])


def perf_lmi_matrix(a, b, c, d, k, g, ps, alpha, eps=0.0):
    """Numeric performance-side condition (3x3 block form)."""
    a, b, c, d, k, g, ps = map(np.atleast_2d, (a, b, c, d, k, g, ps))
    m = b.shape[1]
    p = c.shape[0]
    n11 = a @ ps + ps @ a.T - (b @ k) @ ps - ps @ (b @ k).T + eps * ps
    n12 = b @ g
    n13 = ps @ c.T - ps @ (d @ k).T
    n23 = (d @ g).T
    return np.block(
        [
            [n11, n12, n13],
            [n12.T, -alpha * np.eye(m), n23],
            [n13.T, n23.T, -np.eye(p)],
        ]
    )


def observer_iss_matrix(a, c, l, r, eps1=0.0):
    """Numeric observer delta-ISS condition A'R+RA-C'L'R-RLC+eps1*R."""
    a, c, l, r = map(np.atleast_2d, (a, c, l, r))
    return a.T @ r + r @ a - c.T @ l.T @ r - r @ l @ c + eps1 * r


def build_anchored_codesign_lmi(pj, b, c, d, q0, k0, l0, g0, q_var, k_var, l_var, g_var, beta):
    """The big anchored co-design block (11x11 blocks), PSD per vertex.

    Eleven block rows; every quadratic term is either consumed by an
    identity Schur row or anchor-linearized, so all decision variables
    (Q, K, L, G, beta) enter affinely given the anchors.  Block sizes are
    [n, m, n, n, n, p, p, n, p, n, n].
    """
    b, c, d, n, m, p = _dims(b, c, d)
    q0 = as_symmetric(q0, name="Q0")
    k0 = as_matrix(k0, m, n, name="K0")
    l0 = as_matrix(l0, n, p, name="L0")
    g0 = as_matrix(g0, m, m, name="G0")
    q = _as_expr(q_var)
    k = _as_expr(k_var)
    l = _as_expr(l_var)
    g = _as_expr(g_var)
    w0 = q0 @ l0  # anchor product entering the last block row

    bk = const(b) @ k
    bk0 = b @ k0
    lc = l @ c
    lc0 = l0 @ c
    dk = const(d) @ k
    dk0 = d @ k0
    dg = const(d) @ g
    bg = const(b) @ g

    lin_ll = l.T @ l0 + const(l0.T) @ l - const(l0.T @ l0)

    out = []
    for kv, a in enumerate(pj.vertices()):
        m11 = (
            (q @ a + a.T @ q)
            + (bk.T @ bk0 + const(bk0.T) @ bk - const(bk0.T @ bk0))
            + 9.0 * (q @ q0 + const(q0) @ q - const(q0 @ q0))
            + (lc.T @ lc0 + const(lc0.T) @ lc - const(lc0.T @ lc0))
            + 2.0 * (dk.T @ dk0 + const(dk0.T) @ dk - const(dk0.T @ dk0))
            - const(2.0 * w0 @ w0.T)
            + const(w0) @ lin_ll @ const(w0.T)
        )
        m22 = (
            3.0 * (g.T @ (d.T @ d @ g0) + const(g0.T @ d.T @ d) @ g - const(g0.T @ d.T @ d @ g0))
            + (g.T @ (b.T @ b @ g0) + const(g0.T @ b.T @ b) @ g - const(g0.T @ b.T @ b @ g0))
            - _scale_identity(beta, m)
        )
        m77 = eye(p) + lin_ll
        m99 = eye(p) + lin_ll
        rows = [
            [m11, None, None, None, None, None, None, None, None, None, None],
            [dg.T @ const(c), m22] + [None] * 9,
            [q + lc, zeros(n, m), eye(n)] + [None] * 8,
            [q + bk, zeros(n, m), zeros(n, n), eye(n)] + [None] * 7,
            [-q, bg, zeros(n, n), zeros(n, n), eye(n)] + [None] * 6,
            [dk, dg, zeros(p, n), zeros(p, n), zeros(p, n), eye(p)] + [None] * 5,
            [-1.0 * dk, zeros(p, m), zeros(p, n), zeros(p, n), zeros(p, n), zeros(p, p), m77]
            + [None] * 4,
            [q, zeros(n, m), zeros(n, n), zeros(n, n), zeros(n, n), zeros(n, p), -l, eye(n)]
            + [None] * 3,
            [zeros(p, n), dg, zeros(p, n), zeros(p, n), zeros(p, n), zeros(p, p), zeros(p, p), zeros(p, n), m99]
            + [None] * 2,
            [q, zeros(n, m), zeros(n, n), zeros(n, n), zeros(n, n), zeros(n, p), zeros(n, p), zeros(n, n), -l, eye(n)]
            + [None],
            [
                2.0 * q - l @ const(w0.T),
                zeros(n, m),
                zeros(n, n),
                zeros(n, n),
                zeros(n, n),
                zeros(n, p),
                zeros(n, p),
                zeros(n, n),
                zeros(n, p),
                zeros(n, n),
                eye(n),
            ],
        ]
        expr = _symmetric_from_lower(rows)
        out.append(LmiConstraint(PSD, expr, f"anchored_codesign[{kv}]"))
    return out


def _symmetric_from_lower(rows):
    """Assemble a symmetric block matrix from its lower-triangular grid."""
    nb = len(rows)
    grid = [[None] * nb for _ in range(nb)]
    for i in range(nb):
        for j in range(i + 1):
            e = rows[i][j]
            grid[i][j] = e
            if i != j:
                grid[j][i] = None if e is None else _as_expr(e).T
    return blocks(grid)


def codesign_block_schur(block, n, m, p):
    """Schur-complement the trailing 9 block rows of the big co-design block.

    Returns the reduced (n+m)x(n+m) matrix whose positive semidefiniteness
    is equivalent to that of ``block`` (the eliminated diagonal is PD
    whenever the anchors are sane).
    """
    head = n + m
    a11 = block[:head, :head]
    a21 = block[head:, :head]
    a22 = block[head:, head:]
    return a11 - a21.T @ np.linalg.solve(a22, a21)


def build_anchored_perf_lmi(pj, b, c, d, ps0, k0, ps_var, k_var, g_var, alpha, eps=0.0):
    """Anchored performance condition with (P_s, K, G) free, NSD per vertex.

    The anchored form carries no margin of its own; a nonzero ``eps``
    adds eps*P_s back into the (1,1) block.
    """
    b, c, d, n, m, p = _dims(b, c, d)
    ps0 = as_symmetric(ps0, name="Ps0")
    k0 = as_matrix(k0, m, n, name="K0")
    ps = _as_expr(ps_var)
    k = _as_expr(k_var)
    g = _as_expr(g_var)
    bk = const(b) @ k
    bk0 = b @ k0
    dk = const(d) @ k
    dk0 = d @ k0
    out = []
    for kv, a in enumerate(pj.vertices()):
        n11 = (
            (a @ ps + ps @ a.T)
            - 2.0 * (const(ps0) @ ps + ps @ const(ps0) - const(ps0 @ ps0))
            - (const(bk0) @ bk.T + bk @ const(bk0.T) - const(bk0 @ bk0.T))
        )
        if eps:
            n11 = n11 + eps * ps
        n33 = -1.0 * eye(p) - (const(dk0) @ dk.T + dk @ const(dk0.T) - const(dk0 @ dk0.T))
        rows = [
            [n11],
            [(const(b) @ g).T, -alpha * np.eye(m)],
            [(ps @ c.T).T, const(d) @ g, n33],
            [(ps - bk).T, zeros(n, m), zeros(n, p), -1.0 * eye(n)],
            [ps, zeros(n, m), (-1.0 * dk).T, zeros(n, n), -1.0 * eye(n)],
        ]
        expr = _symmetric_from_lower(rows)
        out.append(LmiConstraint(NSD, expr, f"anchored_perf[{kv}]"))
    return out


def perf_lmi_schur(a, b, c, d, k, g, ps, alpha):
    """Eliminate the two trailing -I blocks of the exact (expanded) form.

    Equals ``perf_lmi_matrix(..., eps=0)`` identically, which is what the anchor
    identity test asserts.
    """
    a, b, c, d, k, g, ps = map(np.atleast_2d, (a, b, c, d, k, g, ps))
    n = a.shape[0]
    m = b.shape[1]
    p = c.shape[0]
    n11 = a @ ps + ps @ a.T - 2.0 * ps @ ps - (b @ k) @ (b @ k).T
    n33 = -np.eye(p) - (d @ k) @ (d @ k).T
    top = np.block(
        [
            [n11, b @ g, ps @ c.T],
            [(b @ g).T, -alpha * np.eye(m), (d @ g).T],
            [(ps @ c.T).T, d @ g, n33],
        ]
    )
    col4 = np.vstack([ps - b @ k, np.zeros((m, n)), np.zeros((p, n))])
    col5 = np.vstack([ps, np.zeros((m, n)), -(d @ k)])
    return top + col4 @ col4.T + col5 @ col5.T


def build_anchored_observer_lmi(pj, c, r0, l0, r_var, l_var):
    """Anchored observer condition with (R, L) free, NSD 2x2 per vertex."""
    c = as_matrix(c, name="C")
    n = pj.dim
    p = c.shape[0]
    if c.shape[1] != n:
        raise ShapeError(f"C must be px{n}, got {c.shape}")
    r0 = as_symmetric(r0, name="R0")
    l0 = as_matrix(l0, n, p, name="L0")
    r = _as_expr(r_var)
    l = _as_expr(l_var)
    lc = l @ c
    lc0 = l0 @ c
    out = []
    for kv, a in enumerate(pj.vertices()):
        u11 = (
            (a.T @ r + r @ a)
            - (const(r0) @ r + r @ const(r0) - const(r0 @ r0))
            - (lc0.T @ lc + lc.T @ lc0 - const(lc0.T @ lc0))
        )
        u12 = r - lc.T
        expr = blocks([[u11, u12], [u12.T, -np.eye(n)]])
        out.append(LmiConstraint(NSD, expr, f"anchored_observer[{kv}]"))
    return out


def observer_lmi_schur(a, c, l, r):
    """Exact expanded observer condition after eliminating the -I block."""
    a, c, l, r = map(np.atleast_2d, (a, c, l, r))
    u11 = a.T @ r + r @ a - r @ r - (l @ c).T @ (l @ c)
    x = r - (l @ c).T
    return u11 + x @ x.T


def build_iss_observer_lmi(pj, c, r_var, l_mat, eps1=0.1):
    """Observer-side delta-ISS condition; bilinear unless R or L is fixed."""
    c = as_matrix(c, name="C")
    r_is_var = _is_var(r_var)
    l_is_var = _is_var(l_mat)
    if r_is_var and l_is_var:
        raise NotAffine("R and L cannot both be variables; fix one or use the anchored form")
    if eps1 <= 0:
        raise ShapeError("eps1 must be positive")
    r = _as_expr(r_var)
    l = _as_expr(l_mat)
    out = []
    for kv, a in enumerate(pj.vertices()):
        if l_is_var:
            rn = const(r.constant)
            expr = (a.T @ rn + rn @ a) - c.T @ l.T @ rn - rn @ l @ c + eps1 * rn
        else:
            ln = l.constant
            expr = (a.T @ r + r @ a) - const(c.T @ ln.T) @ r - r @ const(ln @ c) + eps1 * r
        out.append(LmiConstraint(NSD, expr, f"iss_obsv[{kv}]"))
    return out


def build_delta_iss_ctrl_lmi(pj, b, s_var, k_mat, eps2=0.1):
    """Controller-side delta-ISS condition; bilinear unless S or K is fixed."""
    b = as_matrix(b, name="B")
    s_is_var = _is_var(s_var)
    k_is_var = _is_var(k_mat)
    if s_is_var and k_is_var:
        raise NotAffine("S and K cannot both be variables; fix one or substitute Y = K S")
    if eps2 <= 0:
        raise ShapeError("eps2 must be positive")
    s = _as_expr(s_var)
    k = _as_expr(k_mat)
    out = []
    for kv, a in enumerate(pj.vertices()):
        if k_is_var:
            sn = const(s.constant)
            expr = (a @ sn + sn @ a.T) - const(b) @ k @ sn - sn @ k.T @ const(b.T) + eps2 * sn
        else:
            kn = k.constant
            expr = (a @ s + s @ a.T) - const(b @ kn) @ s - s @ const((b @ kn).T) + eps2 * s
        out.append(LmiConstraint(NSD, expr, f"iss_ctrl[{kv}]"))
    return out
