"""Affine matrix expressions over SDP decision variables.

An :class:`AffineExpr` represents ``const + sum_v sum_k z_v[k] * T_v[k]``
where ``z_v`` is the scalarization of variable ``v`` and ``T_v`` a coefficient
tensor of shape ``(k, rows, cols)``.  Products of two variable-carrying
expressions raise :class:`~replaymark.errors.NotAffine`; everything the LMI
builders need (constant left/right multiplication, transpose, block stacking,
trace) keeps expressions exactly affine.
"""

from __future__ import annotations

import numpy as np

from ..errors import NotAffine, ShapeError

SYMMETRIC = "symmetric"
RECTANGULAR = "rectangular"
SCALAR = "scalar"

_SIGNS = ("free", "positive-definite", "negative-definite")


class Variable:
    """A named SDP decision variable.

    ``kind`` is one of ``symmetric`` (dim d, d(d+1)/2 scalars, upper-triangle
    row-major), ``rectangular`` (rows x cols scalars, row-major) or
    ``scalar``.  ``sign`` hints strict definiteness, enforced by the solver
    as a small margin constraint.
    """

    def __init__(self, name, kind, shape, sign="free"):
        if sign not in _SIGNS:
            raise ValueError(f"unknown sign hint {sign!r}")
        if kind == SYMMETRIC:
            d = int(shape[0])
            shape = (d, d)
            n_scalars = d * (d + 1) // 2
        elif kind == RECTANGULAR:
            shape = (int(shape[0]), int(shape[1]))
            n_scalars = shape[0] * shape[1]
            if sign != "free":
                raise ValueError("sign hints apply to symmetric variables only")
        elif kind == SCALAR:
            shape = (1, 1)
            n_scalars = 1
            if sign != "free":
                raise ValueError("sign hints apply to symmetric variables only")
        else:
            raise ValueError(f"unknown variable kind {kind!r}")
        self.name = name
        self.kind = kind
        self.shape = shape
        self.sign = sign
        self.n_scalars = n_scalars

    def basis(self):
        """Coefficient tensor (n_scalars, rows, cols) of the raw variable."""
        r, c = self.shape
        t = np.zeros((self.n_scalars, r, c))
        if self.kind == SYMMETRIC:
            k = 0
            for i in range(r):
                for j in range(i, c):
                    t[k, i, j] = 1.0
                    t[k, j, i] = 1.0
                    k += 1
        else:
            k = 0
            for i in range(r):
                for j in range(c):
                    t[k, i, j] = 1.0
                    k += 1
        return t

    def scalarize(self, value):
        """Map a matrix/scalar value to the scalar vector z."""
        value = np.atleast_2d(np.asarray(value, dtype=float))
        if value.shape != self.shape:
            raise ShapeError(f"value for {self.name} must have shape {self.shape}")
        if self.kind == SYMMETRIC:
            skew = np.max(np.abs(value - value.T)) if value.size else 0.0
            if skew > 1e-9 * (1.0 + np.max(np.abs(value))):
                raise ShapeError(f"value for symmetric variable {self.name} is not symmetric")
            iu = np.triu_indices(self.shape[0])
            return value[iu].copy()
        return value.ravel().copy()

    def unscalarize(self, z):
        """Inverse of :meth:`scalarize`."""
        z = np.asarray(z, dtype=float)
        if self.kind == SYMMETRIC:
            d = self.shape[0]
            m = np.zeros((d, d))
            iu = np.triu_indices(d)
            m[iu] = z
            m = m + m.T - np.diag(np.diag(m))
            return m
        if self.kind == SCALAR:
            return float(z[0])
        return z.reshape(self.shape)

    def expr(self):
        """The variable as an affine expression."""
        return AffineExpr(self.shape, np.zeros(self.shape), {self.name: self.basis()}, {self.name: self})

    def __repr__(self):
        return f"Variable({self.name!r}, {self.kind}, {self.shape})"


class AffineExpr:
    """Matrix expression affine in the decision variables."""

    __array_priority__ = 100.0  # ndarray @ expr dispatches to __rmatmul__

    def __init__(self, shape, constant, terms, variables):
        self.shape = tuple(shape)
        self.constant = np.asarray(constant, dtype=float)
        self.terms = terms  # name -> (k, r, c) tensor
        self.variables = variables  # name -> Variable

    @property
    def is_constant(self):
        return not self.terms

    # -- helpers -------------------------------------------------------
    @staticmethod
    def _coerce(other):
        if isinstance(other, AffineExpr):
            return other
        if isinstance(other, Variable):
            return other.expr()
        arr = np.atleast_2d(np.asarray(other, dtype=float))
        return AffineExpr(arr.shape, arr, {}, {})

    def _merge_vars(self, other):
        v = dict(self.variables)
        v.update(other.variables)
        return v

    # -- linear ops ----------------------------------------------------
    def __add__(self, other):
        other = self._coerce(other)
        if self.shape != other.shape:
            raise ShapeError(f"cannot add shapes {self.shape} and {other.shape}")
        terms = {n: t.copy() for n, t in self.terms.items()}
        for n, t in other.terms.items():
            terms[n] = terms[n] + t if n in terms else t.copy()
        return AffineExpr(self.shape, self.constant + other.constant, terms, self._merge_vars(other))

    __radd__ = __add__

    def __neg__(self):
        return AffineExpr(
            self.shape,
            -self.constant,
            {n: -t for n, t in self.terms.items()},
            dict(self.variables),
        )

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) + (-self)

    def __mul__(self, scalar):
        s = float(scalar)
        return AffineExpr(
            self.shape,
            s * self.constant,
            {n: s * t for n, t in self.terms.items()},
            dict(self.variables),
        )

    __rmul__ = __mul__

    def __matmul__(self, other):
        other = self._coerce(other)
        if self.shape[1] != other.shape[0]:
            raise ShapeError(f"cannot multiply shapes {self.shape} @ {other.shape}")
        if self.terms and other.terms:
            raise NotAffine(
                "product of two variable expressions "
                f"({sorted(self.terms)} x {sorted(other.terms)})"
            )
        out_shape = (self.shape[0], other.shape[1])
        if other.terms:  # constant @ variable
            a = self.constant
            terms = {n: np.einsum("ab,kbc->kac", a, t) for n, t in other.terms.items()}
            return AffineExpr(out_shape, a @ other.constant, terms, dict(other.variables))
        b = other.constant
        terms = {n: np.einsum("kab,bc->kac", t, b) for n, t in self.terms.items()}
        return AffineExpr(out_shape, self.constant @ b, terms, dict(self.variables))

    def __rmatmul__(self, other):
        return self._coerce(other) @ self

    @property
    def T(self):
        return AffineExpr(
            (self.shape[1], self.shape[0]),
            self.constant.T.copy(),
            {n: np.transpose(t, (0, 2, 1)).copy() for n, t in self.terms.items()},
            dict(self.variables),
        )

    def sym(self):
        """(expr + expr.T) / 2 for square expressions."""
        return 0.5 * (self + self.T)

    # -- evaluation ----------------------------------------------------
    def value(self, assignment):
        """Evaluate at ``assignment`` (name -> matrix/scalar value)."""
        out = self.constant.copy()
        for name, tensor in self.terms.items():
            z = self.variables[name].scalarize(assignment[name])
            out += np.einsum("k,kab->ab", z, tensor)
        return out

    def __repr__(self):
        return f"AffineExpr(shape={self.shape}, vars={sorted(self.terms)})"


def const(a):
    """Wrap a constant matrix/scalar as an expression."""
    return AffineExpr._coerce(a)


def eye(n):
    return const(np.eye(n))


def zeros(rows, cols=None):
    cols = rows if cols is None else cols
    return const(np.zeros((rows, cols)))


def trace(expr):
    """Trace of a square expression as a 1x1 expression."""
    expr = AffineExpr._coerce(expr)
    if expr.shape[0] != expr.shape[1]:
        raise ShapeError(f"trace needs a square expression, got {expr.shape}")
    terms = {
        n: np.einsum("kaa->k", t).reshape(-1, 1, 1) for n, t in expr.terms.items()
    }
    return AffineExpr((1, 1), np.array([[np.trace(expr.constant)]]), terms, dict(expr.variables))


def blocks(grid):
    """Assemble a block matrix from a 2-D grid of expressions.

    Entries may be expressions, arrays, scalars, or ``None`` / ``0`` for a
    zero block; block sizes are inferred from the non-zero entries of each
    row and column.
    """
    nrows = len(grid)
    ncols = len(grid[0])
    if any(len(row) != ncols for row in grid):
        raise ShapeError("block grid rows have inconsistent lengths")
    coerced = [
        [None if _is_zero_placeholder(e) else AffineExpr._coerce(e) for e in row]
        for row in grid
    ]
    row_sizes = [None] * nrows
    col_sizes = [None] * ncols
    for i, row in enumerate(coerced):
        for j, e in enumerate(row):
            if e is None:
                continue
            r, c = e.shape
            if row_sizes[i] is None:
                row_sizes[i] = r
            elif row_sizes[i] != r:
                raise ShapeError(f"block ({i},{j}) row size {r} != {row_sizes[i]}")
            if col_sizes[j] is None:
                col_sizes[j] = c
            elif col_sizes[j] != c:
                raise ShapeError(f"block ({i},{j}) col size {c} != {col_sizes[j]}")
    if any(s is None for s in row_sizes) or any(s is None for s in col_sizes):
        raise ShapeError("a full zero block row/column leaves its size undetermined")
    row_off = np.concatenate([[0], np.cumsum(row_sizes)])
    col_off = np.concatenate([[0], np.cumsum(col_sizes)])
    total = (int(row_off[-1]), int(col_off[-1]))
    constant = np.zeros(total)
    terms = {}
    variables = {}
    for i, row in enumerate(coerced):
        for j, e in enumerate(row):
            if e is None:
                continue
            rs, re = row_off[i], row_off[i + 1]
            cs, ce = col_off[j], col_off[j + 1]
            constant[rs:re, cs:ce] = e.constant
            variables.update(e.variables)
            for n, t in e.terms.items():
                if n not in terms:
                    terms[n] = np.zeros((t.shape[0],) + total)
                terms[n][:, rs:re, cs:ce] += t
    return AffineExpr(total, constant, terms, variables)


def _is_zero_placeholder(e):
    if e is None:
        return True
    if isinstance(e, (int, float)) and e == 0:
        return True
    return False
