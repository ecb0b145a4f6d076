"""Tests pour synth.py"""
import numpy as np
import pandas as pd
import pytest

from horpca import synth
from horpca.errors import ShapeError
from horpca.synth import HOURS_PER_WEEK, SynthSpec, round_half_up
from horpca.tensor_core import tucker_rank, unfold


def test_round_half_up():
    """Test arrondi à la moitié supérieure"""
    assert round_half_up(2.5) == 3
    assert round_half_up(3.5) == 4
    assert round_half_up(2.49) == 2


def test_gen_low_rank_tucker_rank():
    """Test rang de Tucker exact"""
    rng = np.random.default_rng(0)
    x, factors = synth.gen_low_rank((10, 12, 8), (3, 2, 4), rng)
    assert x.shape == (10, 12, 8)
    assert tucker_rank(x) == (3, 2, 4)
    assert factors.rank == (3, 2, 4)


def test_gen_low_rank_full_rank():
    """Test c = I autorisé"""
    rng = np.random.default_rng(1)
    x, _ = synth.gen_low_rank((4, 4, 4), (4, 4, 4), rng)
    assert tucker_rank(x) == (4, 4, 4)


def test_gen_low_rank_rank_too_large():
    """Test rang supérieur à la dimension"""
    with pytest.raises(ShapeError):
        synth.gen_low_rank((4, 4), (5, 2), np.random.default_rng(0))


def test_corrupt_fibers_support_size():
    """Test nombre de fibres corrompues = round(gamma * p)"""
    rng = np.random.default_rng(2)
    x, _ = synth.gen_low_rank((6, 10, 10), (2, 2, 2), rng)
    e0, support, x0 = synth.corrupt_fibers(x, 0.05, rng)
    assert len(support) == 5
    assert support == sorted(support)
    norms_e = np.linalg.norm(unfold(e0, 0), axis=0)
    norms_x = np.linalg.norm(unfold(x0, 0), axis=0)
    assert set(np.flatnonzero(norms_e)) == set(support)
    assert np.all(norms_x[support] == 0.0)
    values = unfold(e0, 0)[:, support]
    assert values.min() >= 0.0 and values.max() < 1.0


def test_corrupt_fibers_extremes():
    """Test gamma = 0 et gamma = 1"""
    rng = np.random.default_rng(3)
    x, _ = synth.gen_low_rank((4, 5, 6), (2, 2, 2), rng)
    e0, support, x0 = synth.corrupt_fibers(x, 0.0, rng)
    assert support == []
    assert np.all(e0.data == 0.0)
    assert x0 == x
    _, support, x0 = synth.corrupt_fibers(x, 1.0, rng)
    assert support == list(range(30))
    assert np.all(x0.data == 0.0)


def test_sample_mask_count():
    """Test nombre exact d'entrées observées"""
    rng = np.random.default_rng(4)
    mask = synth.sample_mask((10, 10, 10), 0.35, rng)
    assert mask.observed_count == 350
    assert mask.ratio == pytest.approx(0.35)
    assert synth.sample_mask((3, 3), 1.0, rng).observed.all()


def test_sample_mask_invalid_rho():
    """Test rho hors ]0, 1]"""
    with pytest.raises(ValueError):
        synth.sample_mask((3, 3), 0.0, np.random.default_rng(0))


def test_synth_spec_validation():
    """Test validation de SynthSpec"""
    with pytest.raises(ValueError):
        SynthSpec(shape=(5, 5), tucker_rank=(2,))
    with pytest.raises(ValueError):
        SynthSpec(shape=(5, 5), tucker_rank=(6, 2))
    with pytest.raises(ValueError):
        SynthSpec(shape=(5, 5), tucker_rank=(2, 2), outlier_mode=2)
    spec = SynthSpec(shape=(5, 5), tucker_rank=(2, 2))
    assert SynthSpec.model_validate_json(spec.model_dump_json()) == spec


def test_generate_deterministic():
    """Test même graine -> instance identique"""
    spec = SynthSpec(shape=(8, 9, 10), tucker_rank=(2, 3, 2), gamma=0.1, rho=0.7, seed=42)
    a, b = synth.generate(spec), synth.generate(spec)
    assert a.b == b.b
    assert a.outlier_support == b.outlier_support
    assert np.array_equal(a.mask.observed, b.mask.observed)
    other = synth.generate(spec.model_copy(update={"seed": 43}))
    assert not other.b == a.b


def test_generate_streams_independent():
    """Test changer rho ne change ni X0 ni le support"""
    spec = SynthSpec(shape=(8, 8, 8), tucker_rank=(2, 2, 2), gamma=0.1, rho=1.0, seed=5)
    full = synth.generate(spec)
    partial = synth.generate(spec.model_copy(update={"rho": 0.5}))
    assert full.x0 == partial.x0
    assert full.outlier_support == partial.outlier_support
    assert np.all(partial.b.data[~partial.mask.observed] == 0.0)


def test_generate_other_outlier_mode():
    """Test fibres corrompues le long du mode 2"""
    spec = SynthSpec(shape=(6, 7, 8), tucker_rank=(2, 2, 2), gamma=0.1, outlier_mode=2, seed=0)
    truth = synth.generate(spec)
    norms = np.linalg.norm(unfold(truth.e0, 2), axis=0)
    assert set(np.flatnonzero(norms)) == set(truth.outlier_support)
    assert len(truth.outlier_support) == round_half_up(0.1 * 42)


def test_make_traffic_records():
    """Test flux de vitesses synthétique"""
    frame, planted = synth.make_traffic_records(n_segments=5, n_weeks=2, rho=1.0, planted_hours=2, seed=0)
    assert list(frame.columns) == ["segment_id", "timestamp_iso8601", "speed"]
    assert len(frame) == 5 * HOURS_PER_WEEK * 2
    assert len(planted) == 2
    assert all(0 <= w < 2 and 0 <= h < HOURS_PER_WEEK for w, h in planted)
    assert (frame["speed"] >= 0).all()
    stamps = pd.to_datetime(frame["timestamp_iso8601"], utc=True)
    assert stamps.min() == pd.Timestamp("2018-01-01", tz="UTC")
    assert stamps.max() == pd.Timestamp("2018-01-14 23:00", tz="UTC")


def test_make_traffic_tensor_low_rank():
    """Test profils normaux de rang faible"""
    speeds = synth.make_traffic_tensor(20, 6, rank=2, seed=1)
    assert speeds.shape == (20, HOURS_PER_WEEK, 6)
    assert np.linalg.matrix_rank(unfold(speeds, 0), tol=1e-8 * np.abs(speeds).max()) <= 2


def test_sample_mask_uniform_inclusion():
    """Test taux d'inclusion par tranche 0.3 +- 0.02 sur 200 tirages"""
    rng = np.random.default_rng(14)
    counts = np.zeros((10, 10, 10))
    for _ in range(200):
        counts += synth.sample_mask((10, 10, 10), 0.3, rng).observed
    rates = counts / 200
    per_slice = rates.mean(axis=(1, 2))
    assert np.all(np.abs(per_slice - 0.3) <= 0.02)
    assert rates.mean() == pytest.approx(0.3)
    # aucune entrée systématiquement exclue
    assert rates.min() > 0.0
