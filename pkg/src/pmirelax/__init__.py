"""Moment-SOS relaxations for polynomial optimization under polynomial matrix inequalities.

The package builds and solves semidefinite relaxations of

    min f(x)  subject to  G(x) ⪰ 0,  x in the binary cube or the unit ball,

where ``G`` is a symmetric matrix with polynomial entries.  Besides the
classical Kronecker localizing relaxation it implements the trace-block
relaxation, in which the matrix constraint enters only through the
scalar polynomials ``tr(G^k)``, together with the univariate penalty
construction behind its convergence analysis and brute-force oracles.
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover - source checkout without install
    __version__ = "0.1.0"

__all__ = ["__version__"]
