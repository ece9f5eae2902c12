import numpy as np
import pytest

from elmild.domain import make_domain


def trig_field(domain, rng, components=1, band=3):
    """Random real trigonometric polynomial on the torus, plus its analytic form.

    Returns ``(values, func)`` where ``func(*coords)`` evaluates the same
    polynomial at arbitrary points (used by finite-difference and refined-grid
    oracles).
    """
    n = domain.dimension
    modes = []
    for _ in range(components):
        terms = []
        for _ in range(6):
            k = rng.integers(-band, band + 1, size=n)
            L = np.asarray(domain.extent)
            terms.append((2 * np.pi * k / L, rng.standard_normal(), rng.uniform(0, 2 * np.pi)))
        modes.append(terms)

    def func(*x):
        out = []
        for terms in modes:
            acc = 0.0
            for k, amp, ph in terms:
                acc = acc + amp * np.cos(sum(ki * xi for ki, xi in zip(k, x)) + ph)
            out.append(acc + 0.0 * x[0])
        return np.array(out)

    return func(*domain.coordinates), func


def periodic_d1(N, L):
    """Dense spectral first-derivative matrix on an even periodic grid."""
    j = np.arange(N)
    diff = j[:, None] - j[None, :]
    with np.errstate(divide="ignore"):
        D = 0.5 * (-1.0) ** diff / np.tan(diff * np.pi / N)
    D[diff == 0] = 0.0
    return D * (2 * np.pi / L)


def periodic_d2(N, L):
    """Dense spectral second-derivative matrix (Nyquist mode included)."""
    s = 2 * np.pi / L
    h = 2 * np.pi / N
    j = np.arange(N)
    diff = j[:, None] - j[None, :]
    with np.errstate(divide="ignore"):
        D = -0.5 * (-1.0) ** diff / np.sin(diff * h / 2) ** 2
    D[diff == 0] = -np.pi**2 / (3 * h**2) - 1.0 / 6
    return D * s * s


def dense_leray(N, L):
    """Dense Leray projector for 2-D vector fields stacked as (u_1, u_2)."""
    D = periodic_d1(N, L)
    I = np.eye(N)
    grad = np.vstack([np.kron(D, I), np.kron(I, D)])
    div = grad.T * -1.0  # D is antisymmetric
    return np.eye(2 * N * N) - grad @ np.linalg.pinv(div @ grad) @ div


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def torus64():
    return make_domain(2, None, 64)


@pytest.fixture(scope="session")
def torus16():
    return make_domain(2, None, 16)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines):
            terminalreporter.write_line(lines[key])
