"""Log-barrier path-following solver for small dense SDPs.

The problems this package generates are tiny by SDP standards (blocks up to
~35x35, at most a few dozen scalar unknowns), so a self-contained barrier
method with dense Newton systems is both adequate and fully deterministic:
two solves of the same problem with the same options produce identical
results bit for bit.

Strict definiteness hints on variables (P > 0, Q < 0) are enforced as margin
constraints ``P - mu*I >= 0`` with ``mu = 1e-6``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import BracketError, ShapeError
from .expr import SCALAR, SYMMETRIC, RECTANGULAR, AffineExpr, Variable

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
ITERATION_LIMIT = "IterationLimit"
NUMERICAL_FAILURE = "NumericalFailure"

_STRICT_MARGIN = 1e-6  # mu shift implementing strict definiteness
_FEAS_CLASSIFY = 1e-9  # phase-1 s* above -this counts as infeasible
_DIM_LIMIT = 2000


@dataclass
class SdpOptions:
    feas_tol: float = 1e-7
    opt_tol: float = 1e-6
    max_iter: int = 200


@dataclass
class SdpSolution:
    status: str
    assignment: dict = field(default_factory=dict)
    objective: float = float("nan")
    margin: float = float("nan")

    @property
    def optimal(self):
        return self.status == OPTIMAL


class SdpProblem:
    """Linear objective + affine PSD/NSD constraints over matrix variables."""

    def __init__(self):
        self._variables = {}
        self._constraints = []  # (sense, AffineExpr) with sense in {+1 psd, -1 nsd}
        self._objective = None  # (sign, AffineExpr 1x1), sign +1 maximize
        self._order = []

    # -- variables -----------------------------------------------------
    def _register(self, var):
        if var.name in self._variables:
            raise ValueError(f"duplicate variable name {var.name!r}")
        self._variables[var.name] = var
        self._order.append(var.name)
        return var

    def sym_var(self, name, dim, sign="free"):
        return self._register(Variable(name, SYMMETRIC, (dim, dim), sign))

    def rect_var(self, name, rows, cols):
        return self._register(Variable(name, RECTANGULAR, (rows, cols)))

    def scalar_var(self, name):
        return self._register(Variable(name, SCALAR, (1, 1)))

    # -- constraints and objective --------------------------------------
    def _check_expr(self, expr):
        expr = AffineExpr._coerce(expr)
        if expr.shape[0] != expr.shape[1]:
            raise ShapeError(f"constraint expression must be square, got {expr.shape}")
        for name in expr.terms:
            if name not in self._variables:
                raise ValueError(f"expression uses foreign variable {name!r}")
        return expr.sym()

    def add_psd(self, expr):
        self._constraints.append((+1, self._check_expr(expr)))

    def add_nsd(self, expr):
        self._constraints.append((-1, self._check_expr(expr)))

    def maximize(self, expr):
        self._objective = (+1, self._scalar_expr(expr))

    def minimize(self, expr):
        self._objective = (-1, self._scalar_expr(expr))

    def _scalar_expr(self, expr):
        expr = AffineExpr._coerce(expr)
        if expr.shape != (1, 1):
            raise ShapeError(f"objective must be scalar, got shape {expr.shape}")
        return expr

    # -- compilation -----------------------------------------------------
    def _layout(self):
        offsets = {}
        n = 0
        for name in self._order:
            offsets[name] = n
            n += self._variables[name].n_scalars
        return offsets, n

    def _canonical_blocks(self):
        """All constraints in the PSD sense, strictness shifts included."""
        blocks = list(self._constraints)
        canon = []
        for sense, expr in blocks:
            canon.append(expr if sense > 0 else -expr)
        for name in self._order:
            var = self._variables[name]
            if var.sign == "positive-definite":
                canon.append(var.expr() - _STRICT_MARGIN * np.eye(var.shape[0]))
            elif var.sign == "negative-definite":
                canon.append(-var.expr() - _STRICT_MARGIN * np.eye(var.shape[0]))
        return canon

    def _compile(self):
        offsets, n = self._layout()
        compiled = []
        for expr in self._canonical_blocks():
            d = expr.shape[0]
            idx = []
            mats = []
            for name, tensor in expr.terms.items():
                base = offsets[name]
                for k in range(tensor.shape[0]):
                    if np.any(tensor[k]):
                        idx.append(base + k)
                        mats.append(tensor[k])
            idx = np.asarray(idx, dtype=int)
            a = np.stack(mats) if mats else np.zeros((0, d, d))
            compiled.append(_Block(expr.constant.copy(), idx, a))
        total_dim = sum(b.dim for b in compiled)
        if total_dim > _DIM_LIMIT:
            raise ShapeError(f"total constraint dimension {total_dim} exceeds {_DIM_LIMIT}")
        c = np.zeros(n)
        obj_const = 0.0
        if self._objective is not None:
            sign, expr = self._objective
            obj_const = float(expr.constant[0, 0])
            for name, tensor in expr.terms.items():
                c[offsets[name] : offsets[name] + tensor.shape[0]] += sign * tensor[:, 0, 0]
        return compiled, c, n, obj_const

    # -- solve -----------------------------------------------------------
    def solve(self, options=None):
        options = options or SdpOptions()
        blocks, c, n, obj_const = self._compile()
        if not blocks:
            raise ShapeError("problem has no constraints")

        z, feasible, p1_status = _phase1(blocks, n, options)
        if p1_status == NUMERICAL_FAILURE:
            return SdpSolution(status=NUMERICAL_FAILURE)
        if not feasible:
            return SdpSolution(status=INFEASIBLE)

        status = OPTIMAL
        if np.any(c):
            z, status = _barrier(blocks, c, z, options)
        sol_margin = _margin(blocks, z)
        assignment = self._extract(z)
        objective = 0.0
        if self._objective is not None:
            # c carries the sign internally (maximization form); undo it here
            sign, _ = self._objective
            objective = sign * float(c @ z) + obj_const
        return SdpSolution(status=status, assignment=assignment, objective=objective, margin=sol_margin)

    def _extract(self, z):
        offsets, _ = self._layout()
        out = {}
        for name in self._order:
            var = self._variables[name]
            piece = z[offsets[name] : offsets[name] + var.n_scalars]
            out[name] = var.unscalarize(piece)
        return out

    def evaluate_constraints(self, assignment):
        """Signed constraint values (canonical PSD sense) at an assignment."""
        vals = []
        for sense, expr in self._constraints:
            m = expr.value(assignment)
            vals.append(m if sense > 0 else -m)
        return vals


@dataclass
class _Block:
    c0: np.ndarray
    idx: np.ndarray
    a: np.ndarray  # (k, d, d)

    @property
    def dim(self):
        return self.c0.shape[0]

    def matrix(self, z):
        m = self.c0.copy()
        if self.idx.size:
            m += np.einsum("k,kab->ab", z[self.idx], self.a)
        return m


def _margin(blocks, z):
    worst = np.inf
    for b in blocks:
        worst = min(worst, float(np.linalg.eigvalsh(b.matrix(z))[0]))
    return worst


def _chol_or_none(m):
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        return None


def _merit(blocks, z, tc):
    total = float(tc @ z)
    for b in blocks:
        ch = _chol_or_none(b.matrix(z))
        if ch is None:
            return -np.inf
        total += 2.0 * float(np.sum(np.log(np.diag(ch))))
    return total


def _newton_data(blocks, z, tc, n):
    g = tc.copy()
    h = np.zeros((n, n))
    for b in blocks:
        if not b.idx.size:
            ch = _chol_or_none(b.matrix(z))
            if ch is None:
                return None, None
            continue
        m = b.matrix(z)
        ch = _chol_or_none(m)
        if ch is None:
            return None, None
        s = np.linalg.solve(m, b.a)  # (k, d, d) = M^-1 A_k
        g[b.idx] += np.einsum("kaa->k", s)
        h[np.ix_(b.idx, b.idx)] -= np.einsum("iab,jba->ij", s, s)
    return g, h


def _center(blocks, z, tc, n, inner_tol=1e-11, max_inner=80, stop_when=None):
    """Damped Newton maximization of tc.z + sum logdet, from feasible z."""
    for _ in range(max_inner):
        if stop_when is not None and stop_when(z):
            return z, True
        g, h = _newton_data(blocks, z, tc, n)
        if g is None:
            return z, False
        neg_h = -h
        ridge = 1e-12 * (1.0 + float(np.trace(neg_h)) / max(n, 1))
        ch = _chol_or_none(neg_h + ridge * np.eye(n))
        if ch is None:
            return z, False
        delta = _chol_solve(ch, g)
        dec2 = float(g @ delta)
        if dec2 <= 2.0 * inner_tol:
            return z, True
        phi0 = _merit(blocks, z, tc)
        alpha = 1.0
        while alpha > 1e-14:
            zn = z + alpha * delta
            if _merit(blocks, zn, tc) > phi0 + 0.01 * alpha * dec2:
                z = zn
                break
            alpha *= 0.5
        else:
            # no progress possible; accept current point
            return z, True
    return z, True


def _chol_solve(ch, b):
    y = np.linalg.solve(ch, b)
    return np.linalg.solve(ch.T, y)


def _barrier(blocks, c, z, options, gap_factor=0.25, stop_when=None):
    m_total = sum(b.dim for b in blocks)
    t = 1.0
    gap_target = gap_factor * options.opt_tol
    for _ in range(options.max_iter):
        z, ok = _center(blocks, z, t * c, z.size, stop_when=stop_when)
        if not ok:
            # centering broke down (constraint boundary reached to machine
            # precision); the point is still optimal if the gap is in budget
            if m_total / t <= options.opt_tol:
                return z, OPTIMAL
            return z, NUMERICAL_FAILURE
        if stop_when is not None and stop_when(z):
            return z, OPTIMAL
        if np.abs(c @ z) > 1e12:
            return z, NUMERICAL_FAILURE
        if m_total / t <= gap_target:
            return z, OPTIMAL
        t *= 10.0
    return z, ITERATION_LIMIT


def _phase1(blocks, n, options):
    """Find a strictly feasible point, or report infeasibility.

    Maximizes -s subject to M_j(z) + s*I >= 0, starting from z = 0 with s
    large enough; feasibility is decided by the sign of the optimal s.
    """
    s0 = 0.0
    for b in blocks:
        lam = float(np.linalg.eigvalsh(b.matrix(np.zeros(n)))[0])
        s0 = max(s0, -lam)
    s0 += 1.0
    ext_blocks = []
    for b in blocks:
        idx = np.concatenate([b.idx, [n]])
        a = np.concatenate([b.a, np.eye(b.dim)[None]], axis=0)
        ext_blocks.append(_Block(b.c0, idx.astype(int), a))
    c = np.zeros(n + 1)
    c[n] = -1.0
    z = np.zeros(n + 1)
    z[n] = s0

    clear = max(1e-5, 100.0 * options.feas_tol)
    z, status = _barrier(
        ext_blocks,
        c,
        z,
        options,
        gap_factor=0.25 * min(1.0, options.feas_tol / options.opt_tol),
        stop_when=lambda zz: zz[n] <= -clear,
    )
    s = z[n]
    if status == NUMERICAL_FAILURE and abs(s) < 1e-6:
        return z[:n], False, NUMERICAL_FAILURE
    if s >= -_FEAS_CLASSIFY:
        return z[:n], False, INFEASIBLE
    return z[:n], True, OPTIMAL


def bisect_gain(feasibility_oracle, lo, hi, tol, feasible_side="hi"):
    """Bisect a monotone feasibility boundary to within ``tol``.

    ``feasible_side`` names the endpoint lying on the feasible side ("hi"
    for infimum-type problems, "lo" for supremum-type).  The endpoints are
    never evaluated, so at most ``ceil(log2((hi - lo) / tol))`` oracle calls
    are made; if every probed midpoint reports the same status, the
    endpoints cannot have bracketed the boundary and ``BracketError`` is
    raised.
    """
    lo = float(lo)
    hi = float(hi)
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
        raise BracketError(f"bad bracket [{lo}, {hi}]")
    if feasible_side not in ("hi", "lo"):
        raise ValueError("feasible_side must be 'hi' or 'lo'")
    seen = set()
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        ok = bool(feasibility_oracle(mid))
        seen.add(ok)
        if ok == (feasible_side == "hi"):
            hi = mid
        else:
            lo = mid
    if len(seen) < 2:
        raise BracketError("all probed points had the same feasibility; endpoints do not bracket")
    return 0.5 * (lo + hi)


# -- plain-text archive -------------------------------------------------


def dump_problem(problem, path):
    """Write constraints/objective as dense matrices for external checking."""
    offsets, n = problem._layout()
    lines = ["# replaymark LMI archive v1", f"nvars {n}"]
    for name in problem._order:
        var = problem._variables[name]
        lines.append(f"var {name} {var.kind} {var.shape[0]} {var.shape[1]} {var.sign}")
    if problem._objective is None:
        lines.append("objective none")
    else:
        sign, expr = problem._objective
        c = np.zeros(n)
        for vname, tensor in expr.terms.items():
            c[offsets[vname] : offsets[vname] + tensor.shape[0]] = tensor[:, 0, 0]
        sense = "maximize" if sign > 0 else "minimize"
        lines.append(f"objective {sense} {float(expr.constant[0, 0])!r}")
        lines.append(" ".join(repr(float(x)) for x in c))
    lines.append(f"nconstraints {len(problem._constraints)}")
    for ci, (sense, expr) in enumerate(problem._constraints):
        d = expr.shape[0]
        lines.append(f"constraint {ci} {'psd' if sense > 0 else 'nsd'} {d}")
        lines.append("matrix const")
        lines.extend(_matrix_lines(expr.constant))
        for vname, tensor in expr.terms.items():
            for k in range(tensor.shape[0]):
                if np.any(tensor[k]):
                    lines.append(f"matrix {vname} {k}")
                    lines.extend(_matrix_lines(tensor[k]))
        lines.append("end")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_problem(path):
    """Parse an archive written by :func:`dump_problem`."""
    with open(path) as fh:
        tokens = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    pos = 0

    def take():
        nonlocal pos
        line = tokens[pos]
        pos += 1
        return line

    problem = SdpProblem()
    n = int(take().split()[1])
    while tokens[pos].startswith("var "):
        _, name, kind, rows, cols, sign = take().split()
        if kind == SYMMETRIC:
            problem.sym_var(name, int(rows), sign)
        elif kind == RECTANGULAR:
            problem.rect_var(name, int(rows), int(cols))
        else:
            problem.scalar_var(name)
    offsets, n_check = problem._layout()
    if n_check != n:
        raise ShapeError("archive variable layout mismatch")
    obj_line = take().split()
    if obj_line[1] != "none":
        const = float(obj_line[2])
        c = np.array([float(x) for x in take().split()])
        expr = AffineExpr((1, 1), np.array([[const]]), {}, {})
        for name in problem._order:
            var = problem._variables[name]
            piece = c[offsets[name] : offsets[name] + var.n_scalars]
            if np.any(piece):
                expr = expr + AffineExpr(
                    (1, 1), np.zeros((1, 1)), {name: piece.reshape(-1, 1, 1)}, {name: var}
                )
        if obj_line[1] == "maximize":
            problem.maximize(expr)
        else:
            problem.minimize(expr)
    n_cons = int(take().split()[1])
    for _ in range(n_cons):
        _, _, sense, dim = take().split()
        d = int(dim)
        constant = np.zeros((d, d))
        terms = {}
        while True:
            header = take()
            if header == "end":
                break
            _, name, *rest = header.split()
            mat = np.array([[float(x) for x in take().split()] for _ in range(d)])
            if name == "const":
                constant = mat
            else:
                k = int(rest[0])
                var = problem._variables[name]
                if name not in terms:
                    terms[name] = np.zeros((var.n_scalars, d, d))
                terms[name][k] = mat
        expr = AffineExpr(
            (d, d), constant, terms, {nm: problem._variables[nm] for nm in terms}
        )
        if sense == "psd":
            problem.add_psd(expr)
        else:
            problem.add_nsd(expr)
    return problem


def _matrix_lines(m):
    return [" ".join(repr(float(x)) for x in row) for row in np.atleast_2d(m)]
