"""Shared fixtures.

The heavy objects (catalog fields, mollified ensembles) are session-scoped:
every consumer sees the identical deterministic object, and the expensive
series table is built once.  Desk-scale geometry throughout: d = 1, R = 1,
T = 1, h = 0.01, tau = 1e-3.
"""

import numpy as np
import pytest

from rlflab.fields import MollifierKernel, catalog_field, mollify
from rlflab.flow import integrate_ensemble
from rlflab.numerics import make_grid

LEVELS = (4, 8, 16, 32)
H = 0.01
TAU = 1e-3
T = 1.0
R = 1.0


@pytest.fixture(scope="session")
def osgood():
    return catalog_field("osgood-sum", 1, terms=1000)


@pytest.fixture(scope="session")
def moll(osgood):
    return {n: mollify(osgood, MollifierKernel(n)) for n in LEVELS}


@pytest.fixture(scope="session")
def grid_b1():
    return make_grid(1, R, H)


@pytest.fixture(scope="session")
def ens_b1(moll, grid_b1):
    return {
        n: integrate_ensemble(moll[n], grid_b1, T, TAU) for n in LEVELS
    }


@pytest.fixture(scope="session")
def ens_b1_fine_step(moll, grid_b1):
    # same field and level as ens_b1[32], ten times smaller step
    return integrate_ensemble(moll[32], grid_b1, T, TAU / 10.0)


@pytest.fixture(scope="session")
def ens_b3_top(moll):
    return integrate_ensemble(moll[32], make_grid(1, 3.0 * R, H), T, TAU)


@pytest.fixture(scope="session")
def ens_b15(moll):
    grid = make_grid(1, 1.5 * R, H)
    return {
        n: integrate_ensemble(moll[n], grid, T, TAU) for n in (8, 16, 32)
    }


@pytest.fixture(scope="session")
def sobolev():
    return catalog_field("sobolev-singular", 1)


@pytest.fixture(scope="session")
def combined():
    return catalog_field("combined", 1)


@pytest.fixture(scope="session")
def linear_contracting():
    return catalog_field("linear", 1, slope=-1.0)


@pytest.fixture(scope="session")
def constant_unit():
    return catalog_field("constant", 1, value=1.0)
