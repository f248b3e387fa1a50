import warnings

import numpy as np
import pytest

from pmirelax.matpoly import SymPolyMatrix
from pmirelax.poly import MultiPoly


def pytest_configure(config):
    # orders below 3l are legal but trigger an advisory warning
    warnings.filterwarnings("ignore", message=r"r = \d+ < 3l")


def var(n, i):
    return MultiPoly.variable(n, i)


def const(n, c):
    return MultiPoly.constant(n, c)


def random_poly(rng, n, deg, density=1.0):
    from pmirelax.poly import monomial_basis

    terms = {a: rng.uniform(-1, 1) for a in monomial_basis(n, deg) if rng.random() < density}
    return MultiPoly(n, terms)


def random_sym(rng, n, m, deg):
    rows = [[None] * m for _ in range(m)]
    for i in range(m):
        for j in range(i, m):
            rows[i][j] = rows[j][i] = random_poly(rng, n, deg)
    return SymPolyMatrix(rows)


@pytest.fixture
def rng():
    return np.random.default_rng(20241016)
