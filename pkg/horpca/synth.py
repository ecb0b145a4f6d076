"""
Générateur de vérité terrain pour les expériences synthétiques
Tenseurs de Tucker aléatoires, corruption de fibres, masques d'observation,
et flux de vitesses synthétique au format du pipeline d'ingestion.

Flux aléatoires : un SeedSequence(seed) engendre cinq générateurs PCG64
indépendants, dans cet ordre : noyau, facteurs, support, valeurs, masque.
Les arrondis gamma * p et rho * total sont faits "à la moitié supérieure".
"""

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from horpca.errors import ShapeError
from horpca.tensor_core import DenseTensor, TuckerFactors, fold_array, tucker_compose, unfold

STREAMS = ("core", "factors", "support", "values", "mask")

HOURS_PER_WEEK = 168


def round_half_up(x):
    return int(math.floor(x + 0.5))


def make_streams(seed):
    """Dictionnaire nom -> numpy Generator (un flux par usage)."""
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.Generator(np.random.PCG64(child)) for name, child in zip(STREAMS, children)}


class SynthSpec(BaseModel):
    """Paramètres d'une instance synthétique (sérialisable en JSON)."""

    model_config = ConfigDict(frozen=True)

    shape: tuple[int, ...]
    tucker_rank: tuple[int, ...]
    gamma: float = Field(0.05, ge=0, le=1)
    rho: float = Field(1.0, gt=0, le=1)
    seed: int = 0
    outlier_mode: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check_dims(self):
        if len(self.shape) != len(self.tucker_rank):
            raise ValueError("❌ shape et tucker_rank doivent avoir la même longueur")
        if any(dim < 1 for dim in self.shape):
            raise ValueError(f"❌ Dimensions invalides : {self.shape}")
        if any(not 1 <= c <= dim for c, dim in zip(self.tucker_rank, self.shape)):
            raise ValueError(f"❌ Rang de Tucker {self.tucker_rank} incompatible avec {self.shape}")
        if self.outlier_mode >= len(self.shape):
            raise ValueError(f"❌ outlier_mode={self.outlier_mode} hors limites")
        return self


@dataclass(frozen=True)
class ObservationMask:
    """Ensemble Omega des entrées observées (tableau booléen)."""

    observed: np.ndarray

    def __post_init__(self):
        observed = np.array(self.observed, dtype=bool)
        observed.setflags(write=False)
        object.__setattr__(self, "observed", observed)

    @classmethod
    def full(cls, shape):
        return cls(np.ones(tuple(shape), dtype=bool))

    @property
    def shape(self):
        return self.observed.shape

    @property
    def observed_count(self):
        return int(self.observed.sum())

    @property
    def ratio(self):
        return self.observed_count / self.observed.size

    def __array__(self, dtype=None, copy=None):
        if dtype is None and not copy:
            return self.observed
        return self.observed.astype(dtype or bool, copy=True)


@dataclass(frozen=True)
class GroundTruth:
    """Vérité terrain : X0 (fibres corrompues à zéro), E0, B masqué, Omega, support."""

    x0: DenseTensor
    e0: DenseTensor
    b: DenseTensor
    mask: ObservationMask
    outlier_support: frozenset
    factors: TuckerFactors
    spec: SynthSpec


def _orthonormal(rows, cols, rng):
    # Gram-Schmidt via QR ; nouveau tirage si les vecteurs sont quasi dépendants
    while True:
        draws = rng.standard_normal((rows, cols))
        q, r = np.linalg.qr(draws)
        diag = np.abs(np.diag(r))
        if diag.min() > 1e-10 * max(diag.max(), 1.0):
            return q * np.sign(np.diag(r))[np.newaxis, :]


def gen_low_rank(shape, rank, rng, factors_rng=None):
    """
    Tenseur de Tucker aléatoire : noyau gaussien, facteurs orthonormés.

    Args:
        shape: (I_1, ..., I_N)
        rank: (c_1, ..., c_N) avec c_n <= I_n
        rng: générateur du noyau
        factors_rng: générateur des facteurs (rng si None)

    Returns:
        tuple: (DenseTensor, TuckerFactors)
    """
    shape, rank = tuple(shape), tuple(rank)
    if len(shape) != len(rank) or any(c > dim or c < 1 for c, dim in zip(rank, shape)):
        raise ShapeError(f"❌ Rang {rank} incompatible avec la forme {shape}")
    factors_rng = factors_rng or rng
    core = DenseTensor(rng.standard_normal(rank), copy=False)
    factors = tuple(_orthonormal(dim, c, factors_rng) for dim, c in zip(shape, rank))
    tucker = TuckerFactors(core=core, factors=factors)
    return tucker_compose(tucker), tucker


def corrupt_fibers(x0, gamma, rng, values_rng=None, mode=0):
    """
    Corrompt une fraction gamma des fibres mode-`mode` avec des valeurs U(0,1).

    Args:
        x0: tenseur bas rang
        gamma: proportion de fibres corrompues
        rng: générateur du support
        values_rng: générateur des valeurs (rng si None)
        mode: mode des fibres corrompues

    Returns:
        tuple: (e0, support trié, x0 mis à zéro sur le support)
    """
    if not 0 <= gamma <= 1:
        raise ValueError("❌ gamma doit être dans [0, 1]")
    values_rng = values_rng or rng
    x_mat = unfold(x0, mode).copy()
    fiber_len, p = x_mat.shape
    k = round_half_up(gamma * p)
    support = np.sort(rng.choice(p, size=k, replace=False))
    e_mat = np.zeros_like(x_mat)
    e_mat[:, support] = values_rng.uniform(0.0, 1.0, size=(fiber_len, k))
    x_mat[:, support] = 0.0
    shape = np.shape(x0)
    e0 = DenseTensor(fold_array(e_mat, mode, shape))
    x0_zeroed = DenseTensor(fold_array(x_mat, mode, shape))
    return e0, [int(j) for j in support], x0_zeroed


def sample_mask(shape, rho, rng):
    """
    Tirage uniforme sans remise de round(rho * total) entrées observées.

    Returns:
        ObservationMask
    """
    if not 0 < rho <= 1:
        raise ValueError("❌ rho doit être dans ]0, 1]")
    shape = tuple(shape)
    total = int(np.prod(shape, dtype=np.int64))
    count = round_half_up(rho * total)
    observed = np.zeros(total, dtype=bool)
    if count >= total:
        observed[:] = True
    else:
        observed[rng.choice(total, size=count, replace=False)] = True
    return ObservationMask(observed.reshape(shape))


def generate(spec):
    """
    Instance complète B = (X0 + E0) masqué à partir d'un SynthSpec.

    Returns:
        GroundTruth
    """
    streams = make_streams(spec.seed)
    x_full, factors = gen_low_rank(spec.shape, spec.tucker_rank, streams["core"], streams["factors"])
    e0, support, x0 = corrupt_fibers(
        x_full, spec.gamma, streams["support"], streams["values"], mode=spec.outlier_mode
    )
    mask = sample_mask(spec.shape, spec.rho, streams["mask"])
    b = DenseTensor(np.where(mask.observed, x0.data + e0.data, 0.0), copy=False)
    return GroundTruth(
        x0=x0, e0=e0, b=b, mask=mask, outlier_support=frozenset(support), factors=factors, spec=spec
    )


# ============================================================
# FLUX DE VITESSES SYNTHÉTIQUE (fixture d'ingestion)
# ============================================================

def _hour_profile(rng, n_profiles):
    hours = np.arange(HOURS_PER_WEEK)
    hour_of_day = hours % 24
    weekday = (hours // 24) < 5
    profiles = []
    for _ in range(n_profiles):
        am = rng.uniform(7, 9)
        pm = rng.uniform(16, 18.5)
        rush = np.exp(-0.5 * ((hour_of_day - am) / 1.2) ** 2) + np.exp(-0.5 * ((hour_of_day - pm) / 1.5) ** 2)
        profiles.append(1.0 - rng.uniform(0.2, 0.35) * rush * np.where(weekday, 1.0, 0.4))
    return np.stack(profiles, axis=1)


def make_traffic_tensor(n_segments, n_weeks, rank=2, seed=0):
    """
    Vitesses "normales" bas rang : segments x heures de la semaine x semaines.

    Returns:
        ndarray de vitesses positives (km/h ou mph, sans importance)
    """
    streams = make_streams(seed)
    core_rng, factor_rng = streams["core"], streams["factors"]
    segment_speed = factor_rng.uniform(25, 65, size=(n_segments, rank))
    segment_speed[:, 1:] *= factor_rng.uniform(0.0, 0.15, size=(n_segments, rank - 1))
    hourly = _hour_profile(core_rng, rank)
    weekly = 1.0 + factor_rng.uniform(-0.03, 0.03, size=(n_weeks, rank))
    return np.einsum("sr,hr,wr->shw", segment_speed, hourly, weekly)


def make_traffic_records(
    n_segments=556,
    n_weeks=17,
    week_start="2018-01-01",
    rho=0.8,
    planted_hours=3,
    shift=-20.0,
    rank=2,
    seed=0,
):
    """
    Flux de vitesses horaires (une ligne par cellule observée) avec des heures
    de perturbation plantées où tous les segments sont décalés de `shift`.

    Args:
        n_segments, n_weeks: taille du tenseur
        week_start: lundi de la semaine 0 (UTC)
        rho: proportion de cellules conservées
        planted_hours: nombre d'heures perturbées
        shift: décalage appliqué à tous les segments
        rank: rang des profils normaux
        seed: graine

    Returns:
        tuple: (DataFrame segment_id/timestamp_iso8601/speed, liste de (semaine, heure))
    """
    streams = make_streams(seed)
    speeds = make_traffic_tensor(n_segments, n_weeks, rank=rank, seed=seed)

    n_fibers = HOURS_PER_WEEK * n_weeks
    planted_flat = np.sort(streams["support"].choice(n_fibers, size=planted_hours, replace=False))
    planted = [(int(j % n_weeks), int(j // n_weeks)) for j in planted_flat]
    for week, hour in planted:
        speeds[:, hour, week] = np.maximum(speeds[:, hour, week] + shift, 0.0)

    mask = sample_mask(speeds.shape, rho, streams["mask"]).observed
    seg, hour, week = np.nonzero(mask)
    start = pd.Timestamp(week_start, tz="UTC")
    timestamps = start + pd.to_timedelta(week * HOURS_PER_WEEK + hour, unit="h")
    width = len(str(n_segments))
    frame = pd.DataFrame(
        {
            "segment_id": [f"seg_{s:0{width}d}" for s in seg],
            "timestamp_iso8601": timestamps.strftime("%Y-%m-%dT%H:%M:%SZ"),
            "speed": np.round(speeds[seg, hour, week], 6),
        }
    )
    return frame, sorted(planted)
