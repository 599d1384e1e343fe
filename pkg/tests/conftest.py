import numpy as np
import pytest

from cmatorus import mongeampere as ma


def random_positive(rng, n, floor=0.2):
    M = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return M @ M.conj().T / n + floor * np.eye(n)


def random_hermitian(rng, n):
    M = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (M + M.conj().T)


def far_from_barrier(grid, alpha=1):
    """Exact solution ``u*`` and a barrier whose bad set sits under a lower peak of ``w``.

    ``w`` peaks at ``x1 = 1/2`` and has a lower local maximum at ``x1 = 0``;
    the offset ``u_bar - u*`` is convex near the first and concave near the
    second, so ``{w > N}`` stays away from every point where the barrier
    inequality fails.
    """
    theta = 2 * np.pi * grid.x(0) + grid.zeros()
    u = 0.02 * np.cos(theta) - 0.01 * np.cos(2 * theta)
    data = ma.manufacture(grid, u, np.eye(grid.n), np.eye(grid.n), alpha)
    return u, u + 0.01 * np.cos(theta), data


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = {}


@pytest.fixture
def criterion(request, capsys):
    """``criterion(k, ok, detail)`` records and prints one acceptance line."""

    def record(k, ok, detail):
        line = f"ACCEPTANCE {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.stash[ACCEPTANCE][k] = line
        with capsys.disabled():
            print("\n" + line)

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash[ACCEPTANCE]
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
