"""Small dense semidefinite programming layer.

Decision variables (symmetric / rectangular / scalar) combine into affine
matrix expressions; each constraint requires such an expression to be PSD or
NSD.  Problems are solved by a self-contained logarithmic-barrier
path-following method, which is deterministic for fixed inputs and options.
"""

from .expr import AffineExpr, Variable, blocks, const, eye, trace, zeros
from .solver import (
    SdpOptions,
    SdpProblem,
    SdpSolution,
    bisect_gain,
    dump_problem,
    load_problem,
)

__all__ = [
    "AffineExpr",
    "Variable",
    "blocks",
    "const",
    "eye",
    "trace",
    "zeros",
    "SdpOptions",
    "SdpProblem",
    "SdpSolution",
    "bisect_gain",
    "dump_problem",
    "load_problem",
]
