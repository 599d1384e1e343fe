import numpy as np
import pytest

from cmatorus import geometry, oracle, tensor
from cmatorus import mongeampere as ma
from cmatorus.grid import TorusGrid
from conftest import random_positive


@pytest.fixture(scope="module")
def grid():
    return TorusGrid(2, 16)


def ustar(grid):
    return grid.evaluate(lambda x1, y1, x2, y2: 0.05 * np.cos(2 * np.pi * x1) + 0.03 * np.cos(2 * np.pi * y2))


def test_varphi_identity_is_one():
    for n in (2, 3):
        for alpha in range(1, n + 1):
            assert ma.varphi_of(np.eye(n), np.eye(n), alpha) == pytest.approx(1.0)


def test_varphi_diag_1_2():
    chi = np.diag([1.0, 2.0]) + 0j
    assert ma.varphi_of(np.eye(2), chi, 1) == pytest.approx(4.0 / 3.0, rel=1e-14)
    assert oracle.wedge_ratio(chi, np.eye(2), 1) == pytest.approx(4.0 / 3.0, rel=1e-14)


@pytest.mark.parametrize("n", [2, 3])
def test_varphi_congruence_invariance(rng, n):
    chi, g = random_positive(rng, n), random_positive(rng, n)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
    for alpha in range(1, n + 1):
        a = ma.varphi_of(g, chi, alpha)
        b = ma.varphi_of(Q.conj().T @ g @ Q, Q.conj().T @ chi @ Q, alpha)
        assert a == pytest.approx(b, rel=1e-10)


def test_varphi_rejects_inadmissible():
    with pytest.raises(ma.Inadmissible):
        ma.varphi_of(np.eye(2), np.diag([1.0, -0.5]) + 0j, 1)


@pytest.mark.parametrize("n", [2, 3])
def test_wedge_equivalence_pointwise(rng, n):
    X = np.stack([random_positive(rng, n) for _ in range(30)])
    g = np.stack([random_positive(rng, n) for _ in range(30)])
    for alpha in range(1, n + 1):
        main = ma.wedge_ratio(X, g, alpha)
        ref = [oracle.wedge_ratio(Xi, gi, alpha) for Xi, gi in zip(X, g)]
        np.testing.assert_allclose(main, ref, rtol=1e-10)


def test_build_validation(grid):
    with pytest.raises(ValueError):
        ma.build(grid, np.eye(2), np.eye(2), 1.0, 3)
    with pytest.raises(ValueError):
        ma.build(grid, np.eye(2), np.eye(2), -1.0, 1)
    with pytest.raises(tensor.NotPositiveDefinite):
        ma.build(grid, -np.eye(2), np.eye(2), 1.0, 1)


@pytest.mark.parametrize("alpha", [1, 2])
def test_manufactured_residual_vanishes(grid, alpha):
    u = ustar(grid)
    data = ma.manufacture(grid, u, np.eye(2), np.eye(2), alpha)
    assert np.abs(ma.residual(u, 0.0, 1.0, data)).max() <= 1e-11


def test_manufacture_zero_gives_varphi(grid):
    chi = geometry.kahler_perturbed(grid, 0.05)
    data = ma.manufacture(grid, grid.zeros(), np.eye(2), chi, 1)
    np.testing.assert_allclose(data.psi, np.broadcast_to(data.varphi, grid.shape), rtol=1e-13)
    assert np.all(data.psi > 0)


def test_manufacture_rejects_inadmissible(grid):
    with pytest.raises(ma.Inadmissible):
        ma.manufacture(grid, 2.0 * np.cos(2 * np.pi * grid.x(0)) + grid.zeros(), np.eye(2), np.eye(2), 1)


def test_hand_residual(grid):
    # chi_u = diag(1, 2), psi = 4/3: r = log(3/2) - log 2 + log(4/3) = 0
    data = ma.build(grid, np.eye(2), np.diag([1.0, 2.0]), 4.0 / 3.0, 1)
    assert np.abs(ma.residual(grid.zeros(), 0.0, 1.0, data)).max() < 1e-15


def test_residual_shift_in_b(grid):
    data = ma.manufacture(grid, ustar(grid), np.eye(2), np.eye(2), 1)
    u = grid.zeros()
    r0 = ma.residual(u, 0.0, 0.4, data)
    np.testing.assert_allclose(ma.residual(u, 0.37, 0.4, data) - r0, 0.37, atol=1e-14)


@pytest.mark.parametrize("preset", ["flat", "conformal", "hermitianPerturbed"])
@pytest.mark.parametrize("alpha", [1, 2])
def test_linearization_fd(grid, rng, preset, alpha):
    g = geometry.metric_preset(grid, preset)
    u = ustar(grid)
    data = ma.build(grid, g, np.eye(2), 1.0, alpha)
    eta = grid.truncate(rng.standard_normal(grid.shape), 0.25)
    # keep the Hessian of eta O(1) so the difference quotient is accurate
    eta *= 0.02 / np.abs(eta).max()
    L = ma.linearize(u, data)
    fd = oracle.fd_directional(lambda v: ma.log_F(data, v), u, eta, 1e-5)
    assert np.abs(L.apply(eta) - fd).max() <= 1e-6


def test_linearization_lean_path_matches_matrix_path(grid, rng):
    u = ustar(grid) + 0.01 * grid.truncate(rng.standard_normal(grid.shape), 0.3)
    for alpha in (1, 2):
        lean = ma.PencilEval(ma.build(grid, np.eye(2), np.eye(2), 1.0, alpha), u)
        assert lean.lean
        # an identity field for g takes the general path
        gfield = np.broadcast_to(np.eye(2, dtype=complex), grid.shape + (2, 2)).copy()
        full = ma.PencilEval(ma.build(grid, gfield, np.eye(2), 1.0, alpha), u)
        assert not full.lean
        np.testing.assert_allclose(lean.log_F(), full.log_F(), atol=1e-13)
        assert lean.margin() == pytest.approx(full.margin(), rel=1e-12)
        eta = rng.standard_normal(grid.shape)
        np.testing.assert_allclose(lean.linearize().apply(eta), full.linearize().apply(eta), atol=1e-9)


def test_pure_monge_ampere_is_log_det(grid):
    u = ustar(grid)
    data = ma.build(grid, np.eye(2), np.eye(2), 1.0, 2)
    L = ma.linearize(u, data)
    X = ma.chi_u(data, u)
    np.testing.assert_allclose(L.dlog, np.linalg.inv(X), atol=1e-12)


def test_operator_kills_constants_and_is_elliptic(grid):
    data = ma.build(grid, geometry.conformal(grid), np.eye(2), 1.0, 1)
    L = ma.linearize(ustar(grid), data)
    assert np.abs(L.apply(grid.full(5.0))).max() <= 1e-12
    assert float(np.linalg.eigvalsh(L.coeff).min()) > 0


def test_inadmissible_reports_margin(grid):
    data = ma.build(grid, np.eye(2), np.eye(2), 1.0, 1)
    bad = 0.15 * np.cos(2 * np.pi * grid.x(0)) + grid.zeros()
    with pytest.raises(ma.Inadmissible) as exc:
        ma.residual(bad, 0.0, 1.0, data)
    assert exc.value.margin == pytest.approx(1 - 0.15 * np.pi**2, rel=1e-9)


def test_sup_gauge():
    u = np.array([1.0, -2.0, 0.5])
    g = ma.sup_gauge(u)
    assert g.max() == 0.0 and np.allclose(g - u, -1.0)
