"""Tests longs : transitions de phase sur des cubes 70^3 (pytest -m slow)"""
import pytest

from horpca import metrics, synth
from horpca.cli import EXPERIMENT_MAX_ITERS, ExperimentGrid, _cube_spec, run_grid
from horpca.solver import SolverConfig, solve

pytestmark = pytest.mark.slow

SIZE = 70
EXPERIMENT_CFG = SolverConfig(max_iters=EXPERIMENT_MAX_ITERS)


def _success_rate(cells, trials):
    frame = run_grid(ExperimentGrid(cells=tuple(cells), trials=trials), EXPERIMENT_CFG)
    return frame.groupby("cell")["success"].mean().tolist()


def _single(rank, gamma, rho, cfg=None):
    truth = synth.generate(_cube_spec(SIZE, rank, gamma, rho))
    return metrics.score(solve(truth.b, truth.mask, cfg or SolverConfig()), truth)


@pytest.mark.parametrize("gamma", [0.1, 0.2, 0.3, 0.4])
def test_corruption_sweep_success(gamma):
    """Test observation complète, rang 5 : récupération jusqu'à gamma = 0.4"""
    score = _single(5, gamma, 1.0, EXPERIMENT_CFG)
    assert metrics.success(score)


def test_completion_success_rates():
    """Test gamma = 0.05 à rho = 0.7, gamma = 0.1 à rho = 0.85 : au moins 9 succès sur 10"""
    rates = _success_rate([_cube_spec(SIZE, 5, 0.05, 0.7), _cube_spec(SIZE, 5, 0.1, 0.85)], trials=10)
    assert all(rate >= 0.9 for rate in rates)


@pytest.mark.parametrize("rank, rho", [(2, 0.6), (8, 0.85)])
def test_rank_dependence_success(rank, rho):
    """Test gamma = 0.1 : rang 2 à rho = 0.6, rang 8 à rho = 0.85"""
    assert metrics.success(_single(rank, 0.1, rho, EXPERIMENT_CFG))


def test_phase_grid_low_rank_corner():
    """Test c <= 5, rho >= 0.7, gamma = 0.1 : taux de succès 1 sur 10 essais"""
    cells = [_cube_spec(SIZE, c, 0.1, rho) for c in (1, 5) for rho in (0.7, 1.0)]
    assert _success_rate(cells, trials=10) == [1.0] * 4


def test_phase_grid_high_rank_sparse_fails():
    """Test c = 20, rho = 0.3 : échec (précision 0.75 à la graine 0)"""
    score = _single(20, 0.1, 0.3)
    assert not metrics.success(score)
    assert score.precision < 0.9


# Bornes mesurées à la graine 0 (SolverConfig par défaut) : la transition en rho
# se situe sous 0.3 pour le rang 5 et sous 0.5 pour le rang 8
@pytest.mark.parametrize("rank, gamma, rho", [(5, 0.05, 0.3), (5, 0.1, 0.3), (8, 0.1, 0.5)])
def test_completion_succeeds_below_expected_transition(rank, gamma, rho):
    """Test récupération à faible rho là où un échec était attendu"""
    assert metrics.success(_single(rank, gamma, rho))
