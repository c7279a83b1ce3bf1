"""Dense matrix helpers and polytopic Jacobian inclusions.

Everything downstream (LMI builders, solver, simulator) funnels its constant
matrices through :func:`as_matrix` / :func:`as_symmetric` so that NaN/Inf and
asymmetry problems surface at construction time instead of deep inside a
solve.  A :class:`ParametricJacobian` covers the state-dependent Jacobian of
a nonlinear vector field by an affine family ``A(rho) = base + sum_j rho_j *
directions[j]`` with box-bounded parameters, which is what lets matrix
inequalities quantified over the whole state space be enforced at finitely
many vertices.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidMatrix, ShapeError, TooManyVertices

_SYM_TOL = 1e-12
_VERTEX_LIMIT = 16


def as_matrix(a, rows=None, cols=None, name="matrix"):
    """Return ``a`` as a float64 2-D array, validating shape and finiteness."""
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise InvalidMatrix(f"{name} has non-finite entries")
    if rows is not None and m.shape[0] != rows:
        raise ShapeError(f"{name} must have {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols:
        raise ShapeError(f"{name} must have {cols} columns, got {m.shape[1]}")
    return m


def as_vector(a, size=None, name="vector"):
    """Return ``a`` as a float64 1-D array, validating length and finiteness."""
    v = np.asarray(a, dtype=float).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise InvalidMatrix(f"{name} has non-finite entries")
    if size is not None and v.size != size:
        raise ShapeError(f"{name} must have length {size}, got {v.size}")
    return v


def as_symmetric(a, name="matrix"):
    """Validate near-symmetry and return the canonically symmetrized matrix.

    Tolerates asymmetry up to ``1e-12 * (1 + max|a|)``.
    """
    m = as_matrix(a, name=name)
    if m.shape[0] != m.shape[1]:
        raise ShapeError(f"{name} must be square, got {m.shape}")
    scale = 1.0 + np.max(np.abs(m)) if m.size else 1.0
    skew = np.max(np.abs(m - m.T)) if m.size else 0.0
    if skew > _SYM_TOL * scale:
        raise InvalidMatrix(f"{name} is not symmetric (max skew {skew:.3e})")
    return 0.5 * (m + m.T)


def min_eigenvalue(m):
    """Smallest eigenvalue of a symmetric matrix (LAPACK tridiagonal path)."""
    return float(np.linalg.eigvalsh(as_symmetric(m))[0])


def max_eigenvalue(m):
    return float(np.linalg.eigvalsh(as_symmetric(m))[-1])


def is_hurwitz(a, margin=0.0):
    """True when every eigenvalue of ``a`` has real part < -margin."""
    return bool(np.max(np.linalg.eigvals(as_matrix(a)).real) < -margin)


@dataclass(frozen=True)
class ParametricJacobian:
    """Affine-parametric cover of a state-dependent Jacobian.

    ``A(rho) = base + sum_j rho_j * directions[j]`` with
    ``rho_j in [bounds[j][0], bounds[j][1]]``.  A constant Jacobian (LTI
    plant) is the ``q = 0`` case.
    """

    base: np.ndarray
    directions: tuple = ()
    bounds: tuple = ()

    def __post_init__(self):
        base = as_matrix(self.base, name="base")
        if base.shape[0] != base.shape[1]:
            raise ShapeError(f"base must be square, got {base.shape}")
        dirs = tuple(as_matrix(d, *base.shape, name="direction") for d in self.directions)
        bnds = []
        for lo, hi in self.bounds:
            lo, hi = float(lo), float(hi)
            if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
                raise InvalidMatrix(f"bad parameter interval [{lo}, {hi}]")
            bnds.append((lo, hi))
        if len(dirs) != len(bnds):
            raise ShapeError("one [lo, hi] interval is required per direction")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "directions", dirs)
        object.__setattr__(self, "bounds", tuple(bnds))

    @property
    def dim(self):
        return self.base.shape[0]

    @property
    def n_params(self):
        return len(self.directions)

    def evaluate(self, rho):
        """A(rho) for a concrete parameter vector."""
        rho = as_vector(rho, size=self.n_params, name="rho")
        a = self.base.copy()
        for r, d in zip(rho, self.directions):
            a += r * d
        return a

    def vertices(self):
        """A(rho) at every corner of the parameter box, lexicographic order."""
        q = self.n_params
        if q > _VERTEX_LIMIT:
            raise TooManyVertices(f"{q} directions would give 2**{q} vertices")
        if q == 0:
            return [self.base.copy()]
        return [self.evaluate(corner) for corner in itertools.product(*self.bounds)]


def jacobian_vertices(pj):
    """Corner list of a :class:`ParametricJacobian` (module-level alias)."""
    return pj.vertices()


def finite_difference_jacobian(f, x, rel_step=1e-6):
    """Central-difference Jacobian of ``f`` at ``x`` with per-axis step."""
    x = np.asarray(x, dtype=float)
    n = x.size
    fx = np.asarray(f(x), dtype=float)
    jac = np.empty((fx.size, n))
    for i in range(n):
        h = rel_step * (1.0 + abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        jac[:, i] = (np.asarray(f(xp)) - np.asarray(f(xm))) / (2.0 * h)
    return jac


@dataclass
class InclusionReport:
    """Outcome of sampling-based inclusion checking."""

    n_samples: int
    violations: list = field(default_factory=list)
    worst_residual: float = 0.0

    @property
    def ok(self):
        return not self.violations


def check_inclusion(pj, f, samples, tol_scale=1e-5):
    """Check that finite-difference Jacobians of ``f`` lie in the inclusion.

    For each sample ``x`` the Jacobian is fit as ``base + sum rho_j *
    directions[j]`` by least squares; ``rho`` is then clipped to the box and
    the reproduction residual compared against ``tol_scale * (1 + |J|_F)``.
    Violations are collected in the report, never raised.
    """
    basis = np.stack([d.ravel() for d in pj.directions]) if pj.n_params else None
    report = InclusionReport(n_samples=len(samples))
    for x in samples:
        jac = finite_difference_jacobian(f, x)
        if jac.shape != pj.base.shape:
            raise ShapeError(
                f"dynamics Jacobian {jac.shape} does not match inclusion {pj.base.shape}"
            )
        resid_mat = jac - pj.base
        if basis is None:
            rho = np.zeros(0)
        else:
            rho, *_ = np.linalg.lstsq(basis.T, resid_mat.ravel(), rcond=None)
            rho = np.clip(rho, [b[0] for b in pj.bounds], [b[1] for b in pj.bounds])
        approx = pj.evaluate(rho) if pj.n_params else pj.base
        residual = float(np.linalg.norm(jac - approx))
        tol = tol_scale * (1.0 + float(np.linalg.norm(jac)))
        report.worst_residual = max(report.worst_residual, residual)
        if residual > tol:
            report.violations.append(
                {"x": np.asarray(x, dtype=float), "rho": rho, "residual": residual}
            )
    return report
