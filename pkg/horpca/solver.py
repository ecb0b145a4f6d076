"""
Solveurs ADMM pour la décomposition tensorielle robuste
- horpca_fiber : observation complète, fibres corrompues (norme l2,1)
- robust_completion : observation partielle avec tenseur de compensation O
- regularizer=L1 : décomposition l1 de référence pour les comparaisons

Problème résolu :
    min  sum_i ||X_i(i)||_* + lambda R(E_(m))
    s.c. X_i + E (+ O) = B  pour tout i,  O nul sur Omega
"""

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from horpca import prox
from horpca.config import get_settings
from horpca.errors import ShapeError
from horpca.tensor_core import DenseTensor, fold_array, save_tensor, unfold


class Regularizer(str, Enum):
    L21 = "L21"
    L1 = "L1"


class UpdateOrder(str, Enum):
    E_FIRST = "e_first"  # E avant X_i : convergence plus rapide
    X_FIRST = "x_first"  # ordre des encadrés d'algorithme


class SolverConfig(BaseModel):
    """
    Hyperparamètres des solveurs.

    lambda_ et mu à None sont calculés à partir des données
    (voir default_lambda et default_mu).
    """

    model_config = ConfigDict(frozen=True, populate_by_name=True, use_enum_values=False)

    lambda_: float | None = Field(None, gt=0, alias="lambda")
    mu: float | None = Field(None, gt=0)
    epsilon: float = Field(default_factory=lambda: get_settings().epsilon, gt=0)
    max_iters: int = Field(default_factory=lambda: get_settings().max_iters, ge=1)
    outlier_threshold: float | None = Field(None, ge=0)
    regularizer: Regularizer = Regularizer.L21
    outlier_mode: int = Field(0, ge=0)
    update_order: UpdateOrder = UpdateOrder.E_FIRST
    mu_growth: float = Field(1.0, ge=1.0)
    mu_max: float = Field(1e10, gt=0)
    svd_method: str = Field("full", pattern="^(full|partial)$")
    parallel_modes: bool = False


@dataclass
class SolverState:
    """État courant de l'ADMM (accessible via state_hook)."""

    x_i: list
    e: np.ndarray
    o: np.ndarray
    y_i: list
    mu: float
    iteration: int = 0
    residuals: list = field(default_factory=list)


@dataclass
class SolverResult:
    """
    Sortie d'un solveur.

    x_hat est la moyenne des X_i avec les fibres détectées mises à zéro ;
    outlier_fibers contient les indices (0-based) des colonnes de
    unfold(e_hat, outlier_mode) signalées comme aberrantes.
    """

    x_hat: DenseTensor
    e_hat: DenseTensor
    o_hat: DenseTensor
    outlier_fibers: tuple
    iterations: int
    final_residual: float
    converged: bool
    residuals: list
    lambda_: float
    mu: float
    objective: float
    outlier_mode: int
    regularizer: Regularizer
    wall_time_seconds: float = 0.0

    @property
    def p(self):
        shape = self.x_hat.shape
        return int(np.prod(shape, dtype=np.int64)) // shape[self.outlier_mode]

    def imputed(self, b, mask):
        """Entrées observées de b conservées, entrées manquantes prises dans x_hat."""
        return DenseTensor(np.where(np.asarray(mask), np.asarray(b), self.x_hat.data))

    def metadata(self):
        return {
            "outlier_fibers": list(self.outlier_fibers),
            "n_outliers": len(self.outlier_fibers),
            "p": self.p,
            "iterations": self.iterations,
            "final_residual": self.final_residual,
            "converged": self.converged,
            "lambda": self.lambda_,
            "mu": self.mu,
            "objective": self.objective,
            "outlier_mode": self.outlier_mode,
            "regularizer": self.regularizer.value,
            "wall_time_seconds": self.wall_time_seconds,
            "shape": list(self.x_hat.shape),
            "residuals": self.residuals,
        }

    def save(self, directory):
        """
        Sauvegarde result.json + x_hat.bin + e_hat.bin dans directory.

        Returns:
            Path: chemin du fichier JSON
        """
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        save_tensor(directory / "x_hat.bin", self.x_hat)
        save_tensor(directory / "e_hat.bin", self.e_hat)
        json_path = directory / "result.json"
        with open(json_path, "w", encoding="utf-8") as f:
            json.dump(self.metadata(), f, ensure_ascii=False, indent=2)
        return json_path


def default_lambda(shape, regularizer=Regularizer.L21):
    """
    Valeur empirique de lambda.

    Args:
        shape: forme du tenseur
        regularizer: L21 -> 1 / (0.03 I_m), L1 -> 1 / sqrt(I_m)

    Returns:
        float, avec I_m = max(I_1, ..., I_N)
    """
    i_m = max(shape)
    if Regularizer(regularizer) is Regularizer.L1:
        return 1.0 / np.sqrt(i_m)
    return 1.0 / (0.03 * i_m)


def default_mu(b):
    """Heuristique RPCA : d1 d2 / (4 ||B_(1)||_1)."""
    b = np.asarray(b)
    total = np.abs(b).sum()
    if total == 0:
        return 1.0
    return b.size / (4.0 * total)


def detect_outliers(e_hat, mode=0, threshold=None):
    """
    Indices des colonnes de unfold(e_hat, mode) de norme > threshold.

    Args:
        e_hat: tenseur des aberrations estimé
        mode: mode des fibres corrompues
        threshold: seuil absolu ; None -> 1e-6 x norme de colonne maximale

    Returns:
        list: indices triés
    """
    norms = np.linalg.norm(unfold(e_hat, mode), axis=0)
    if threshold is None:
        peak = norms.max(initial=0.0)
        if peak == 0:
            return []
        threshold = 1e-6 * peak
    if threshold < 0:
        raise ValueError("❌ Le seuil de détection doit être positif")
    return [int(j) for j in np.flatnonzero(norms > threshold)]


def _objective(x_i, e, lambda_, mode, regularizer):
    nuclear = sum(prox.nuclear_norm(unfold(x, n)) for n, x in enumerate(x_i))
    e_mat = unfold(e, mode)
    penalty = prox.l21_norm(e_mat) if regularizer is Regularizer.L21 else prox.l1_norm(e_mat)
    return nuclear + lambda_ * penalty


class _ADMM:
    """Boucle commune aux deux algorithmes (mask=None : observation complète)."""

    def __init__(self, b, mask, cfg, progress=None, state_hook=None, verbose=False):
        self.b = np.asarray(b)
        self.mask = None if mask is None else np.asarray(mask, dtype=bool)
        self.cfg = cfg
        self.progress = progress
        self.state_hook = state_hook
        self.verbose = verbose
        self.shape = self.b.shape
        self.n = self.b.ndim
        if cfg.outlier_mode >= self.n:
            raise ShapeError(
                f"❌ outlier_mode={cfg.outlier_mode} hors limites pour un tenseur d'ordre {self.n}"
            )
        self.lambda_ = cfg.lambda_ if cfg.lambda_ is not None else default_lambda(self.shape, cfg.regularizer)
        self.ranks = [1] * self.n

    def _update_e(self, state):
        cfg = self.cfg
        c = sum(y / state.mu + self.b - x for x, y in zip(state.x_i, state.y_i)) / self.n
        if self.mask is not None:
            c = c - state.o
        kappa = self.lambda_ / (state.mu * self.n)
        c_mat = unfold(c, cfg.outlier_mode)
        if cfg.regularizer is Regularizer.L21:
            shrunk = prox.col_shrink(c_mat, kappa)
        else:
            shrunk = prox.l1_shrink(c_mat, kappa)
        state.e = fold_array(shrunk, cfg.outlier_mode, self.shape)

    def _update_x_mode(self, state, i):
        target = self.b + state.y_i[i] / state.mu - state.e
        if self.mask is not None:
            target = target - state.o
        thresholded, rank = prox.svt_with_rank(
            unfold(target, i), 1.0 / state.mu, method=self.cfg.svd_method, rank_hint=self.ranks[i]
        )
        self.ranks[i] = max(rank, 1)
        return fold_array(thresholded, i, self.shape)

    def _update_x(self, state, pool):
        if pool is not None:
            state.x_i = list(pool.map(lambda i: self._update_x_mode(state, i), range(self.n)))
        else:
            state.x_i = [self._update_x_mode(state, i) for i in range(self.n)]

    def _update_o(self, state):
        avg = sum(y / state.mu + self.b - x - state.e for x, y in zip(state.x_i, state.y_i)) / self.n
        state.o = np.where(self.mask, 0.0, avg)

    def run(self):
        cfg = self.cfg
        start = time.perf_counter()
        mu = cfg.mu if cfg.mu is not None else default_mu(self.b)
        zeros = np.zeros(self.shape)
        state = SolverState(
            x_i=[zeros.copy() for _ in range(self.n)],
            e=zeros.copy(),
            o=zeros.copy(),
            y_i=[zeros.copy() for _ in range(self.n)],
            mu=mu,
        )
        b_norm = np.linalg.norm(self.b.ravel())
        b_norm = b_norm if b_norm > 0 else 1.0

        best = None
        converged = False
        pool = ThreadPoolExecutor(max_workers=self.n) if cfg.parallel_modes else None
        try:
            for k in range(1, cfg.max_iters + 1):
                if cfg.update_order is UpdateOrder.E_FIRST:
                    self._update_e(state)
                    self._update_x(state, pool)
                else:
                    self._update_x(state, pool)
                    self._update_e(state)
                if self.mask is not None:
                    self._update_o(state)

                for i in range(self.n):
                    state.y_i[i] = state.y_i[i] + state.mu * (self.b - state.x_i[i] - state.e - state.o)

                x_mean = sum(state.x_i) / self.n
                residual = float(np.linalg.norm((self.b - state.e - x_mean - state.o).ravel()) / b_norm)
                state.iteration = k
                state.residuals.append(residual)

                if best is None or residual <= best[0]:
                    best = (residual, k, x_mean, state.e, state.o, list(state.x_i))
                if self.progress is not None:
                    self.progress(k, residual)
                if self.state_hook is not None:
                    self.state_hook(state)
                if self.verbose and (k == 1 or k % 10 == 0):
                    print(f"🔁 Itération {k:4d} : résidu = {residual:.3e} (mu = {state.mu:.3g})")

                if residual <= cfg.epsilon:
                    converged = True
                    break
                state.mu = min(state.mu * cfg.mu_growth, cfg.mu_max)
        finally:
            if pool is not None:
                pool.shutdown()

        if converged:
            residual, k, x_mean, e, o, x_i = state.residuals[-1], state.iteration, x_mean, state.e, state.o, state.x_i
        else:
            residual, k, x_mean, e, o, x_i = best

        outliers = detect_outliers(e, cfg.outlier_mode, cfg.outlier_threshold)
        x_hat = unfold(x_mean, cfg.outlier_mode).copy()
        x_hat[:, outliers] = 0.0
        x_hat = fold_array(x_hat, cfg.outlier_mode, self.shape)

        if self.verbose:
            status = "✅ Convergence" if converged else "⚠️ Pas de convergence"
            print(f"{status} après {state.iteration} itérations (résidu {residual:.3e}, {len(outliers)} fibres aberrantes)")

        return SolverResult(
            x_hat=DenseTensor(x_hat),
            e_hat=DenseTensor(e),
            o_hat=DenseTensor(o),
            outlier_fibers=tuple(outliers),
            iterations=state.iteration,
            final_residual=residual,
            converged=converged,
            residuals=list(state.residuals),
            lambda_=self.lambda_,
            mu=mu,
            objective=_objective(x_i, e, self.lambda_, cfg.outlier_mode, cfg.regularizer),
            outlier_mode=cfg.outlier_mode,
            regularizer=cfg.regularizer,
            wall_time_seconds=time.perf_counter() - start,
        )


def horpca_fiber(b, cfg=None, *, progress=None, state_hook=None, verbose=False):
    """
    ADMM pour l'observation complète (fibres corrompues).

    Args:
        b: DenseTensor observé
        cfg: SolverConfig (défauts si None)
        progress: callback (itération, résidu)
        state_hook: callback recevant le SolverState à chaque itération
        verbose: afficher la progression

    Returns:
        SolverResult
    """
    cfg = cfg or SolverConfig()
    b = b if isinstance(b, DenseTensor) else DenseTensor(b)
    return _ADMM(b, None, cfg, progress, state_hook, verbose).run()


def robust_completion(b, mask, cfg=None, *, progress=None, state_hook=None, verbose=False):
    """
    ADMM pour l'observation partielle avec tenseur de compensation O.

    Les entrées non observées de b sont mises à zéro avant résolution.

    Args:
        b: DenseTensor observé
        mask: ObservationMask (ou tableau booléen) de même forme que b
        cfg: SolverConfig

    Returns:
        SolverResult (o_hat nul sur Omega)
    """
    cfg = cfg or SolverConfig()
    mask_array = np.asarray(getattr(mask, "observed", mask), dtype=bool)
    b = b if isinstance(b, DenseTensor) else DenseTensor(b)
    if mask_array.shape != b.shape:
        raise ShapeError(f"❌ Masque {mask_array.shape} incompatible avec le tenseur {b.shape}")
    if not mask_array.any():
        raise ValueError("❌ Le masque ne contient aucune entrée observée")
    b_masked = DenseTensor(np.where(mask_array, b.data, 0.0), copy=False)
    return _ADMM(b_masked, mask_array, cfg, progress, state_hook, verbose).run()


def solve(b, mask=None, cfg=None, **kwargs):
    """Choisit l'algorithme selon la présence d'un masque partiel."""
    mask_array = None if mask is None else np.asarray(getattr(mask, "observed", mask), dtype=bool)
    if mask_array is None or mask_array.all():
        return horpca_fiber(b, cfg, **kwargs)
    return robust_completion(b, mask_array, cfg, **kwargs)
