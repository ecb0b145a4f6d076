"""Tests pour prox.py"""
import numpy as np
import pytest

from horpca.errors import NonFiniteError
from horpca.prox import (
    col_shrink,
    l1_shrink,
    l21_norm,
    nuclear_norm,
    numerical_rank,
    svd,
    svt,
    svt_with_rank,
)


def test_svt_diagonal():
    """Test seuillage d'une matrice diagonale"""
    m = np.diag([3.0, 1.0, 0.5])
    assert np.allclose(svt(m, 1.0), np.diag([2.0, 0.0, 0.0]), atol=1e-12)


def test_svt_large_tau_gives_zero():
    """Test tau >= sigma_max : matrice nulle"""
    rng = np.random.default_rng(0)
    m = rng.standard_normal((6, 4))
    sigma_max = svd(m).singular_values[0]
    assert np.all(svt(m, sigma_max * 1.01) == 0.0)


def test_svt_nuclear_norm():
    """Test ||svt(m, tau)||_* = somme des max(sigma - tau, 0)"""
    rng = np.random.default_rng(1)
    m = rng.standard_normal((8, 5))
    tau = 0.7
    s = svd(m).singular_values
    assert nuclear_norm(svt(m, tau)) == pytest.approx(np.maximum(s - tau, 0).sum(), rel=1e-10)


def test_svt_optimality():
    """Test condition d'optimalité : m - X = tau (U V^T + W)"""
    rng = np.random.default_rng(2)
    m = rng.standard_normal((7, 6))
    tau = 1.0
    x, rank = svt_with_rank(m, tau)
    g = (m - x) / tau
    result = svd(x)
    u, v = result.u[:, :rank], result.v[:, :rank]
    # composante sur le support de X : exactement U V^T
    assert np.allclose(u.T @ g @ v, np.eye(rank), atol=1e-8)
    # reste : norme spectrale <= 1
    assert np.linalg.norm(g, 2) <= 1.0 + 1e-8


def test_svt_rejects_bad_input():
    """Test seuil négatif et valeurs non finies"""
    with pytest.raises(ValueError):
        svt(np.eye(2), 0.0)
    with pytest.raises(NonFiniteError):
        svt(np.array([[1.0, np.inf], [0.0, 1.0]]), 1.0)


def test_svt_partial_matches_full():
    """Test voie partielle (svds) identique à la SVD complète"""
    rng = np.random.default_rng(3)
    low = rng.standard_normal((40, 3)) @ rng.standard_normal((3, 30))
    m = low + 0.01 * rng.standard_normal((40, 30))
    tau = 1.0
    full = svt(m, tau)
    partial = svt(m, tau, method="partial", rank_hint=2)
    assert np.allclose(partial, full, atol=1e-8)


def test_svd_reconstruct():
    """Test SVD réduite"""
    rng = np.random.default_rng(4)
    m = rng.standard_normal((5, 9))
    result = svd(m)
    assert result.u.shape == (5, 5)
    assert result.v.shape == (9, 5)
    assert np.allclose(result.reconstruct(), m, atol=1e-12)
    assert np.all(np.diff(result.singular_values) <= 0)


def test_numerical_rank():
    """Test rang numérique"""
    assert numerical_rank([3.0, 1.0, 1e-15]) == 2
    assert numerical_rank([0.0, 0.0]) == 0


def test_col_shrink_exact_zero_columns():
    """Test colonnes de norme <= kappa mises exactement à +0.0"""
    m = np.array([[3.0, 0.1, -0.3], [4.0, 0.1, 0.4]])
    result = col_shrink(m, 1.0)
    # colonne 0 : norme 5 -> facteur 0.8
    assert np.allclose(result[:, 0], [2.4, 3.2])
    assert np.all(result[:, 1:] == 0.0)
    assert not np.any(np.signbit(result[:, 1:]))


def test_col_shrink_norm_reduction():
    """Test chaque colonne conservée perd exactement kappa en norme"""
    rng = np.random.default_rng(5)
    m = rng.standard_normal((6, 10)) * 3
    kappa = 2.0
    before = np.linalg.norm(m, axis=0)
    after = np.linalg.norm(col_shrink(m, kappa), axis=0)
    assert np.allclose(after, np.maximum(before - kappa, 0.0), atol=1e-12)


def test_col_shrink_optimality():
    """Test condition d'optimalité de la norme l2,1"""
    rng = np.random.default_rng(6)
    m = rng.standard_normal((5, 8))
    kappa = 2.0
    e = col_shrink(m, kappa)
    g = (m - e) / kappa
    for j in range(m.shape[1]):
        norm = np.linalg.norm(e[:, j])
        if norm > 0:
            assert np.allclose(g[:, j], e[:, j] / norm, atol=1e-10)
        else:
            assert np.linalg.norm(g[:, j]) <= 1.0 + 1e-12


def test_l1_shrink():
    """Test seuillage doux"""
    m = np.array([[2.0, -0.5], [-3.0, 1.0]])
    assert np.allclose(l1_shrink(m, 1.0), [[1.0, 0.0], [-2.0, 0.0]])


def test_l21_norm():
    """Test norme l2,1"""
    assert l21_norm(np.array([[3.0, 0.0], [4.0, 1.0]])) == pytest.approx(6.0)


def test_svt_nonexpansive():
    """Test ||svt(a) - svt(b)||_F <= ||a - b||_F sur des paires aléatoires"""
    rng = np.random.default_rng(7)
    for _ in range(20):
        a = rng.standard_normal((8, 6))
        b = a + rng.standard_normal((8, 6)) * rng.uniform(0.01, 2.0)
        tau = rng.uniform(0.1, 2.0)
        assert np.linalg.norm(svt(a, tau) - svt(b, tau)) <= np.linalg.norm(a - b) + 1e-12


def test_svt_small_tau_returns_input():
    """Test tau -> 0+ : svt(m, tau) -> m"""
    rng = np.random.default_rng(8)
    m = rng.standard_normal((6, 9))
    for tau in (1e-4, 1e-8, 1e-12):
        assert np.linalg.norm(svt(m, tau) - m) <= np.sqrt(6) * tau + 1e-12


def test_svt_objective_below_perturbations():
    """Test tau ||X||_* + 1/2 ||X - m||^2 minimal en X = svt(m, tau)"""
    rng = np.random.default_rng(9)
    m = rng.standard_normal((6, 5))
    tau = 0.8

    def objective(x):
        return tau * nuclear_norm(x) + 0.5 * np.linalg.norm(x - m) ** 2

    x = svt(m, tau)
    best = objective(x)
    for _ in range(100):
        assert best <= objective(x + 1e-2 * rng.standard_normal(m.shape)) + 1e-12


def test_col_shrink_objective_below_perturbations():
    """Test kappa ||E||_2,1 + 1/2 ||E - m||^2 minimal en E = col_shrink(m, kappa)"""
    rng = np.random.default_rng(10)
    m = rng.standard_normal((4, 7)) * 2
    kappa = 1.5

    def objective(e):
        return kappa * l21_norm(e) + 0.5 * np.linalg.norm(e - m) ** 2

    e = col_shrink(m, kappa)
    best = objective(e)
    for _ in range(100):
        assert best <= objective(e + 1e-2 * rng.standard_normal(m.shape)) + 1e-12


def test_col_shrink_matches_column_oracle():
    """Test colonne par colonne : prox de kappa ||.||_2 en dimension I"""
    rng = np.random.default_rng(11)
    m = rng.standard_normal((5, 12)) * rng.uniform(0.1, 3.0, size=12)
    kappa = 1.2
    result = col_shrink(m, kappa)
    for j in range(m.shape[1]):
        column = m[:, j]
        norm = np.linalg.norm(column)
        expected = column * max(0.0, 1.0 - kappa / norm)
        assert np.allclose(result[:, j], expected, rtol=0, atol=1e-14)


def test_col_shrink_tie_gives_zero_column():
    """Test ||m_j|| = kappa : colonne exactement nulle"""
    m = np.array([[3.0, 6.0], [4.0, 8.0]])
    result = col_shrink(m, 5.0)
    assert np.all(result[:, 0] == 0.0)
    assert np.allclose(result[:, 1], [3.0, 4.0])
