"""
Évaluation d'un SolverResult par rapport à la vérité terrain
Erreur relative, précision / rappel des fibres aberrantes, critère de succès.
"""

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
import pandas as pd

from horpca.tensor_core import unfold

# Ordre stable des colonnes des journaux CSV
SCORE_COLUMNS = ["re", "precision", "recall", "tp", "fp", "fn", "iterations", "converged", "wall_time_seconds"]


class PRF(NamedTuple):
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class Score:
    re: float
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int
    iterations: int
    converged: bool = True
    wall_time_seconds: float = 0.0

    def as_row(self):
        return asdict(self)


def relative_error(x_hat, x0_zeroed, detected, mode=0):
    """
    RE = ||X0 - X_hat||_F / ||X0||_F, X_hat mis à zéro sur les fibres détectées.

    Args:
        x_hat: tenseur estimé
        x0_zeroed: vérité terrain (déjà nulle sur les fibres corrompues)
        detected: indices des fibres détectées
        mode: mode des fibres

    Returns:
        float
    """
    x_hat = np.asarray(x_hat)
    x0 = np.asarray(x0_zeroed)
    if x_hat.shape != x0.shape:
        raise ValueError(f"❌ Formes différentes : {x_hat.shape} et {x0.shape}")
    reference = np.linalg.norm(x0.ravel())
    if reference == 0:
        raise ValueError("❌ ||X0||_F est nul : erreur relative indéfinie")
    estimate = unfold(x_hat, mode).copy()
    estimate[:, list(detected)] = 0.0
    return float(np.linalg.norm(unfold(x0, mode) - estimate) / reference)


def prf(detected, true_support):
    """
    Précision et rappel des fibres détectées.

    Sans détection, la précision vaut 1 ; sans vraie aberration, le rappel vaut 1.

    Returns:
        PRF(precision, recall, tp, fp, fn)
    """
    detected, truth = set(detected), set(true_support)
    tp = len(detected & truth)
    fp = len(detected - truth)
    fn = len(truth - detected)
    precision = tp / (tp + fp) if tp + fp > 0 else 1.0
    recall = tp / (tp + fn) if tp + fn > 0 else 1.0
    return PRF(precision, recall, tp, fp, fn)


def success(score, threshold=0.99):
    """Succès si précision ET rappel sont strictement supérieurs au seuil."""
    return score.precision > threshold and score.recall > threshold


def score(result, truth, wall_time_seconds=None):
    """
    Score complet d'un SolverResult contre une GroundTruth.

    Returns:
        Score
    """
    counts = prf(result.outlier_fibers, truth.outlier_support)
    return Score(
        re=relative_error(result.x_hat, truth.x0, result.outlier_fibers, result.outlier_mode),
        precision=counts.precision,
        recall=counts.recall,
        tp=counts.tp,
        fp=counts.fp,
        fn=counts.fn,
        iterations=result.iterations,
        converged=result.converged,
        wall_time_seconds=result.wall_time_seconds if wall_time_seconds is None else wall_time_seconds,
    )


def append_scores(path, rows, columns=None):
    """
    Ajoute des lignes à un journal CSV (en-tête écrit à la création).

    Args:
        path: fichier CSV
        rows: liste de dicts (paramètres + champs de Score)
        columns: ordre des colonnes (par défaut celui de la première ligne)
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(rows, columns=columns)
    frame.to_csv(path, mode="a", header=not path.exists(), index=False)
    return path
