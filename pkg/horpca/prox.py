"""
Opérateurs proximaux utilisés à chaque itération ADMM
- svt : seuillage des valeurs singulières (prox de la norme nucléaire)
- col_shrink : rétrécissement par colonne (prox de la norme l2,1)
- l1_shrink : seuillage doux élément par élément (référence l1)
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import ArpackError, svds

from horpca.errors import NonFiniteError, NumericalError

# Plancher de bruit pour le comptage des rangs
RANK_TOL = 1e-12


@dataclass(frozen=True)
class SvdResult:
    """SVD réduite : m = u @ diag(singular_values) @ v.T"""

    u: np.ndarray
    singular_values: np.ndarray
    v: np.ndarray

    def reconstruct(self):
        return (self.u * self.singular_values) @ self.v.T


def _as_matrix(m):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"❌ Matrice attendue, reçu un tableau de dimension {m.ndim}")
    if not np.all(np.isfinite(m)):
        raise NonFiniteError("❌ La matrice contient des valeurs NaN ou infinies")
    return m


def svd(m):
    """
    SVD réduite via LAPACK (gesdd, repli sur gesvd).

    Args:
        m: matrice réelle

    Returns:
        SvdResult avec valeurs singulières décroissantes
    """
    m = _as_matrix(m)
    try:
        u, s, vt = scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        try:
            u, s, vt = scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd")
        except np.linalg.LinAlgError as e:
            raise NumericalError(f"❌ La SVD n'a pas convergé : {e}") from e
    return SvdResult(u=u, singular_values=s, v=vt.T)


def numerical_rank(singular_values, rel_tol=RANK_TOL):
    """Nombre de valeurs singulières au-dessus de rel_tol * sigma_max."""
    s = np.asarray(singular_values)
    if s.size == 0 or s.max() == 0:
        return 0
    return int(np.sum(s > rel_tol * s.max()))


def _svt_full(m, tau):
    result = svd(m)
    shrunk = np.maximum(result.singular_values - tau, 0.0)
    keep = shrunk > 0
    rank = int(keep.sum())
    thresholded = (result.u[:, keep] * shrunk[keep]) @ result.v[:, keep].T
    return thresholded, rank


def _svt_partial(m, tau, rank_hint):
    # On agrandit k jusqu'à ce que la plus petite valeur calculée passe sous tau
    k_max = min(m.shape) - 1
    k = max(1, min(rank_hint + 1, k_max))
    while k <= k_max:
        try:
            u, s, vt = svds(m, k=k, tol=0, random_state=0)
        except ArpackError:
            break
        if s.min() <= tau:
            shrunk = np.maximum(s - tau, 0.0)
            keep = shrunk > 0
            return (u[:, keep] * shrunk[keep]) @ vt[keep], int(keep.sum())
        if k == k_max:
            break
        k = min(2 * k, k_max)
    return _svt_full(m, tau)


def svt(m, tau, method="full", rank_hint=None):
    """
    Seuillage des valeurs singulières U diag(max(sigma - tau, 0)) V^T.

    Args:
        m: matrice
        tau: seuil strictement positif
        method: "full" (SVD complète) ou "partial" (svds, k croissant)
        rank_hint: rang attendu pour la voie partielle

    Returns:
        Matrix: minimiseur de tau ||X||_* + 1/2 ||X - m||_F^2
    """
    return svt_with_rank(m, tau, method=method, rank_hint=rank_hint)[0]


def svt_with_rank(m, tau, method="full", rank_hint=None):
    """Comme svt, renvoie aussi le nombre de valeurs singulières conservées."""
    if tau <= 0:
        raise ValueError("❌ Le seuil tau doit être strictement positif")
    m = _as_matrix(m)
    if method == "partial" and min(m.shape) > 2:
        return _svt_partial(m, tau, rank_hint or 1)
    if method not in ("full", "partial"):
        raise ValueError(f"❌ Méthode SVD inconnue : {method}")
    return _svt_full(m, tau)


def col_shrink(m, kappa):
    """
    Rétrécissement par colonne : m_j * max(0, 1 - kappa / ||m_j||_2).

    Les colonnes de norme <= kappa valent exactement +0.0.

    Args:
        m: matrice
        kappa: seuil strictement positif (lambda / (mu N) dans l'ADMM)

    Returns:
        Matrix: minimiseur de kappa ||E||_2,1 + 1/2 ||E - m||_F^2
    """
    if kappa <= 0:
        raise ValueError("❌ Le seuil kappa doit être strictement positif")
    m = _as_matrix(m)
    norms = np.linalg.norm(m, axis=0)
    keep = norms > kappa
    scale = np.zeros_like(norms)
    scale[keep] = 1.0 - kappa / norms[keep]
    return np.where(keep[np.newaxis, :], m * scale[np.newaxis, :], 0.0)


def l1_shrink(m, kappa):
    """Seuillage doux sign(x) * max(|x| - kappa, 0)."""
    if kappa <= 0:
        raise ValueError("❌ Le seuil kappa doit être strictement positif")
    m = _as_matrix(m)
    magnitude = np.abs(m) - kappa
    return np.where(magnitude > 0, np.sign(m) * magnitude, 0.0)


def l21_norm(m):
    """Somme des normes l2 des colonnes."""
    return float(np.linalg.norm(np.asarray(m, dtype=np.float64), axis=0).sum())


def l1_norm(m):
    return float(np.abs(np.asarray(m, dtype=np.float64)).sum())


def nuclear_norm(m):
    """Somme des valeurs singulières."""
    return float(svd(m).singular_values.sum())
