import numpy as np
import pytest

from phwave import CoefficientSet, discretize, generate_rect_mesh, tag_boundary

ALL_SIDES = ["left", "right", "top", "bottom"]


def make_disc(nx=8, ny=None, gamma0=("left",), rho="1", k="1", lx=1.0, ly=1.0, rule=3, **T):
    mesh = generate_rect_mesh(nx, nx if ny is None else ny, lx, ly)
    part = tag_boundary(mesh, list(gamma0))
    coeffs = CoefficientSet.from_strings(rho=rho, k=k if part.n_gamma1 else None, **T)
    return discretize(mesh, part, coeffs, rule=rule)


@pytest.fixture(scope="session")
def damped():
    """8x8 unit square, Gamma0 = left, rho = T = k = 1."""
    return make_disc()


@pytest.fixture(scope="session")
def conservative():
    """8x8 unit square, Gamma0 = whole boundary (no damping)."""
    return make_disc(gamma0=ALL_SIDES)


@pytest.fixture(scope="session")
def varcoef():
    return make_disc(gamma0=("left", "bottom"), rho="1+0.5*x", T11="2+y", T12="0.3",
                     T22="1+x^2", k="1+0.5*sin(pi*y)")


@pytest.fixture(scope="session")
def hx():
    """Gamma0 = left and right, so w_e = x for h = x."""
    return make_disc(gamma0=("left", "right"))


@pytest.fixture(scope="session")
def small():
    return make_disc(nx=4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[num])
