from math import comb

import numpy as np
import pytest

from cmatorus import oracle
from conftest import random_positive


def test_wedge_ratio_identity_pair_is_one():
    for n in (2, 3):
        for alpha in range(1, n + 1):
            assert oracle.wedge_ratio(np.eye(n), np.eye(n), alpha) == pytest.approx(1.0, abs=1e-14)


def test_wedge_ratio_diag_1_2():
    assert oracle.wedge_ratio(np.diag([1.0, 2.0]), np.eye(2), 1) == pytest.approx(4.0 / 3.0, rel=1e-14)


def test_wedge_ratio_rejects_n4():
    with pytest.raises(ValueError):
        oracle.wedge_ratio(np.eye(4), np.eye(4), 1)


def test_wedge_antisymmetry():
    a = oracle.WedgeForm(2, {(0,): 1.0})
    b = oracle.WedgeForm(2, {(2,): 1.0})
    ab = a.wedge(b)
    ba = b.wedge(a)
    assert ab.terms[(0, 2)] == -ba.terms[(0, 2)]
    assert a.wedge(a).terms == {}


def test_wedge_density_matches_subset_sums(rng):
    for n in (2, 3):
        lam = rng.uniform(0.5, 2.0, n)
        for k in range(n + 1):
            ref = oracle.subset_elementary(k, lam) / comb(n, k)
            assert oracle.wedge_density(np.diag(lam), np.eye(n), k) == pytest.approx(ref, rel=1e-13)


def test_cone_wedge_scale_relates_diagonal_entries(rng):
    for n in (2, 3):
        lam = rng.uniform(0.5, 2.0, n)
        for alpha in range(1, n):
            psi = 0.7
            Q = oracle.cone_form_matrix(np.diag(lam), np.eye(n), psi, alpha)
            margins = oracle.cone_pointwise_margins(lam, psi, alpha)
            scale = oracle.cone_wedge_scale(lam, psi, alpha)
            np.testing.assert_allclose(np.diag(Q).real / scale, margins, rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("s", [1e-1, 1e-3, 1e-6])
def test_fd_exact_on_linear(s):
    c = np.array([1.0, -2.0, 0.5])
    x = np.array([0.3, 0.1, 2.0])
    h = np.array([1.0, 1.0, -1.0])
    assert oracle.fd_directional(lambda v: c @ v, x, h, s) == pytest.approx(c @ h, abs=1e-9)


def test_fd_step_must_be_positive():
    with pytest.raises(ValueError):
        oracle.fd_directional(lambda v: v, 0.0, 1.0, 0.0)


def test_fd_richardson_is_more_accurate():
    F = np.sin
    plain = oracle.fd_directional(F, 0.4, 1.0, 1e-2)
    rich = oracle.fd_directional(F, 0.4, 1.0, 1e-2, richardson=True)
    assert abs(rich - np.cos(0.4)) < abs(plain - np.cos(0.4)) / 100


def test_fd_second_of_concave_quadratic():
    assert oracle.fd_second(lambda v: -(v**2), 1.0, 1.0) == pytest.approx(-2.0, rel=1e-9)


def test_dense_solve_laplacian_fourier():
    m = 16
    k = 2 * np.pi * np.fft.fftfreq(m, 1.0 / m)

    def lap(f):
        return np.fft.ifft(-(k**2) * np.fft.fft(f)).real

    x = np.arange(m) / m
    rhs = np.cos(2 * np.pi * x) + 0.5 * np.sin(6 * np.pi * x)
    exact = -np.cos(2 * np.pi * x) / (2 * np.pi) ** 2 - 0.5 * np.sin(6 * np.pi * x) / (6 * np.pi) ** 2
    np.testing.assert_allclose(oracle.dense_solve(lap, rhs), exact, atol=1e-10)


def test_dense_solve_flags_constant_rhs():
    m = 8
    k = 2 * np.pi * np.fft.fftfreq(m, 1.0 / m)
    with pytest.raises(oracle.IncompatibleRHS):
        oracle.dense_solve(lambda f: np.fft.ifft(-(k**2) * np.fft.fft(f)).real, np.ones(m))


def test_assemble_refuses_large_grids():
    with pytest.raises(ValueError):
        oracle.assemble(lambda f: f, (oracle.DENSE_LIMIT + 1,))


def test_subset_elementary_small_cases():
    assert oracle.subset_elementary(2, [1, 1, 1]) == 3
    assert oracle.subset_elementary(0, [4, 5]) == 1
    assert oracle.subset_elementary(1, [1, 2, 3], exclude=(0,)) == 5


def test_fd_christoffel_constant_metric_is_zero(rng):
    G = random_positive(rng, 2)
    gamma = oracle.fd_christoffel(lambda p: G, np.zeros(4))
    assert np.abs(gamma).max() == 0.0
