"""
Module d'ingestion des vitesses de trafic
Construit le tenseur (segment x heure de la semaine x semaine) à partir
d'un CSV `segment_id,timestamp_iso8601,speed`, lance la complétion robuste
et produit le rapport d'événements (heures anormales + z-scores).

Heure 0 = lundi 00:00-01:00, heure 167 = dimanche 23:00-24:00 (heure locale).
"""

import json
import time
import warnings
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path

import numpy as np
import pandas as pd

from horpca.config import get_settings
from horpca.errors import IngestError
from horpca.solver import SolverConfig, default_mu, robust_completion
from horpca.synth import HOURS_PER_WEEK, ObservationMask
from horpca.tensor_core import DenseTensor, unfold

CSV_COLUMNS = ["segment_id", "timestamp_iso8601", "speed"]
REPORT_COLUMNS = ["week", "hour", "timestamp", "segment_id", "z_score", "observed_speed", "baseline_speed"]

SEGMENT_MODE = 0


@dataclass(frozen=True)
class SpeedRecord:
    """Une vitesse moyenne horaire sur un segment."""

    segment_id: str
    timestamp: datetime
    speed: float

    def __post_init__(self):
        if self.speed < 0 or not np.isfinite(self.speed):
            raise IngestError(f"❌ Vitesse invalide : {self.speed}")
        if self.timestamp.tzinfo is None:
            raise IngestError("❌ Le timestamp doit être associé à un fuseau horaire")


def _data_path(name):
    return Path(__file__).parent.parent / get_settings().data_dir / "processed" / name


def _parse_timestamps(values, timezone):
    # Les timestamps sans décalage sont interprétés dans le fuseau local
    has_offset = values.str.contains(r"(?:Z|[+-]\d{2}:?\d{2})$", regex=True)
    parsed = pd.Series(pd.NaT, index=values.index, dtype="datetime64[ns, UTC]")
    if has_offset.any():
        parsed[has_offset] = pd.to_datetime(values[has_offset], utc=True, errors="coerce", format="ISO8601")
    if (~has_offset).any():
        naive = pd.to_datetime(values[~has_offset], errors="coerce", format="ISO8601")
        local = naive.dt.tz_localize(timezone, ambiguous="NaT", nonexistent="NaT")
        parsed[~has_offset] = local.dt.tz_convert("UTC")
    return parsed


def load_records(source="dummy", strict=False, timezone=None):
    """
    Charge les vitesses depuis un CSV.

    Args:
        source (str): "dummy" (fixture du dépôt), "fixture" (fixture générée)
                      ou chemin d'un fichier CSV
        strict (bool): lever une erreur sur la première ligne invalide
                       au lieu de l'ignorer
        timezone (str): fuseau des timestamps sans décalage horaire
                        (HORPCA_TIMEZONE si None)

    Returns:
        DataFrame: colonnes segment_id, timestamp (UTC), speed
    """
    if source == "dummy":
        path = _data_path("traffic_dummy.csv")
    elif source == "fixture":
        path = _data_path("traffic_fixture.csv")
    else:
        path = Path(source)
    if not path.exists():
        raise FileNotFoundError(f"Fichier de vitesses introuvable: {path}")

    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as e:
        raise IngestError(f"❌ Fichier vide : {path}") from e
    missing = [col for col in CSV_COLUMNS if col not in raw.columns]
    if missing:
        raise IngestError(f"❌ Colonnes manquantes dans {path} : {missing}")

    timestamps = _parse_timestamps(raw["timestamp_iso8601"].str.strip(), timezone or get_settings().timezone)
    speeds = pd.to_numeric(raw["speed"], errors="coerce")
    segment_ids = raw["segment_id"].str.strip()
    bad = timestamps.isna() | speeds.isna() | ~np.isfinite(speeds.fillna(0)) | (speeds < 0) | (segment_ids == "")

    if bad.any():
        # +2 : ligne d'en-tête et numérotation à partir de 1
        lines = (raw.index[bad] + 2).tolist()
        message = f"{len(lines)} ligne(s) invalide(s) dans {path.name} : {lines[:20]}"
        if strict:
            raise IngestError(f"❌ {message}")
        warnings.warn(message, stacklevel=2)

    records = pd.DataFrame(
        {"segment_id": segment_ids[~bad], "timestamp": timestamps[~bad], "speed": speeds[~bad].astype(float)}
    ).reset_index(drop=True)
    if records.empty:
        raise IngestError(f"❌ Aucun enregistrement exploitable dans {path}")
    return records


def records_frame(records):
    """Convertit une liste de SpeedRecord (ou un DataFrame) au format interne."""
    if isinstance(records, pd.DataFrame):
        return records
    rows = [(r.segment_id, r.timestamp, r.speed) for r in records]
    frame = pd.DataFrame(rows, columns=["segment_id", "timestamp", "speed"])
    if not frame.empty:
        frame["timestamp"] = pd.to_datetime(frame["timestamp"], utc=True)
    return frame


@dataclass(frozen=True)
class TrafficTensor:
    """Tenseur segments x 168 x semaines, masque d'observation et index."""

    tensor: DenseTensor
    mask: ObservationMask
    segment_index: dict
    week_start: date
    observation_ratio: float
    timezone: str = "UTC"
    dropped_segments: tuple = ()

    @property
    def n_weeks(self):
        return self.tensor.shape[2]

    @property
    def segments(self):
        return list(self.segment_index)

    def fiber_to_hour(self, j):
        """Colonne j de unfold(., 0) -> (semaine, heure de la semaine)."""
        return int(j % self.n_weeks), int(j // self.n_weeks)

    def hour_to_fiber(self, week, hour):
        return hour * self.n_weeks + week

    def hour_timestamp(self, week, hour):
        """Début de l'heure (week, hour) en heure locale."""
        wall = pd.Timestamp(self.week_start) + pd.Timedelta(days=7 * week + hour // 24, hours=hour % 24)
        return wall.tz_localize(self.timezone, ambiguous=False, nonexistent="shift_forward")

    def locate(self, timestamp):
        """Timestamp -> (semaine, heure de la semaine) en heure locale."""
        stamp = pd.Timestamp(timestamp)
        if stamp.tzinfo is None:
            stamp = stamp.tz_localize("UTC")
        local = stamp.tz_convert(self.timezone).tz_localize(None)
        week = (local.normalize() - pd.Timestamp(self.week_start)).days // 7
        return int(week), int(local.dayofweek * 24 + local.hour)


def build_tensor(records, date_range, min_coverage=None, timezone=None):
    """
    Agrège les vitesses en tenseur segment x heure x semaine.

    Args:
        records: DataFrame (load_records) ou liste de SpeedRecord
        date_range: (début, fin) ; début = lundi, fin exclue, semaines entières
        min_coverage: couverture minimale d'un segment (proportion de cellules)
        timezone: fuseau local pour le découpage en heures de la semaine

    Returns:
        TrafficTensor
    """
    settings = get_settings()
    min_coverage = settings.min_coverage if min_coverage is None else min_coverage
    timezone = timezone or settings.timezone
    if not 0 <= min_coverage <= 1:
        raise ValueError("❌ min_coverage doit être dans [0, 1]")

    frame = records_frame(records)
    if frame.empty:
        raise IngestError("❌ Aucun enregistrement de vitesse")

    start = pd.Timestamp(date_range[0]).normalize()
    end = pd.Timestamp(date_range[1]).normalize()
    days = (end - start).days
    if days <= 0 or days % 7:
        raise IngestError(f"❌ La période {start.date()} -> {end.date()} doit couvrir des semaines entières")
    if start.dayofweek != 0:
        raise IngestError(f"❌ La période doit commencer un lundi (reçu {start.day_name()})")
    n_weeks = days // 7

    local = frame["timestamp"].dt.tz_convert(timezone).dt.tz_localize(None)
    in_range = (local >= start) & (local < end)
    local = local[in_range]
    cells = pd.DataFrame(
        {
            "segment_id": frame.loc[in_range, "segment_id"].to_numpy(),
            "week": ((local.dt.normalize() - start).dt.days // 7).to_numpy(),
            "hour": (local.dt.dayofweek * 24 + local.dt.hour).to_numpy(),
            "speed": frame.loc[in_range, "speed"].to_numpy(),
        }
    )
    if cells.empty:
        raise IngestError("❌ Aucun enregistrement dans la période demandée")
    # Plusieurs relevés dans une même cellule : moyenne
    cells = cells.groupby(["segment_id", "week", "hour"], sort=True)["speed"].mean().reset_index()

    coverage = cells.groupby("segment_id").size() / (HOURS_PER_WEEK * n_weeks)
    kept = sorted(coverage.index[coverage >= min_coverage])
    dropped = tuple(sorted(coverage.index[coverage < min_coverage]))
    if not kept:
        raise IngestError(f"❌ Aucun segment n'atteint la couverture minimale {min_coverage}")

    segment_index = {segment_id: i for i, segment_id in enumerate(kept)}
    cells = cells[cells["segment_id"].isin(segment_index)]
    seg = cells["segment_id"].map(segment_index).to_numpy()
    hour = cells["hour"].to_numpy()
    week = cells["week"].to_numpy()

    values = np.zeros((len(kept), HOURS_PER_WEEK, n_weeks))
    observed = np.zeros(values.shape, dtype=bool)
    values[seg, hour, week] = cells["speed"].to_numpy()
    observed[seg, hour, week] = True

    return TrafficTensor(
        tensor=DenseTensor(values, copy=False),
        mask=ObservationMask(observed),
        segment_index=segment_index,
        week_start=start.date(),
        observation_ratio=float(observed.mean()),
        timezone=timezone,
        dropped_segments=dropped,
    )


# ============================================================
# DÉTECTION D'ÉVÉNEMENTS
# ============================================================

@dataclass(frozen=True)
class FlaggedHour:
    week: int
    hour: int
    timestamp: pd.Timestamp


@dataclass
class EventReport:
    """
    Heures anormales et écart de chaque segment à sa moyenne horaire.

    z_scores, observed_speed et baseline_speed sont de forme
    (heures signalées x segments) ; NaN pour les cellules non observées.
    """

    flagged_hours: list
    segment_ids: list
    z_scores: np.ndarray
    observed_speed: np.ndarray
    baseline_speed: np.ndarray
    corruption_ratio: float
    observation_ratio: float
    lambda_: float
    converged: bool
    baseline_mean: np.ndarray = field(repr=False, default=None)
    baseline_std: np.ndarray = field(repr=False, default=None)
    traffic: TrafficTensor = field(repr=False, default=None)

    def to_frame(self):
        """Une ligne par (heure signalée, segment), prête pour une heat-map."""
        n_segments = len(self.segment_ids)
        rows = {
            "week": np.repeat([f.week for f in self.flagged_hours], n_segments),
            "hour": np.repeat([f.hour for f in self.flagged_hours], n_segments),
            "timestamp": np.repeat([f.timestamp.isoformat() for f in self.flagged_hours], n_segments),
            "segment_id": np.tile(self.segment_ids, len(self.flagged_hours)),
            "z_score": self.z_scores.ravel(),
            "observed_speed": self.observed_speed.ravel(),
            "baseline_speed": self.baseline_speed.ravel(),
        }
        return pd.DataFrame(rows, columns=REPORT_COLUMNS)

    def to_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        return path

    def to_dict(self):
        return {
            "flagged_hours": [
                {"week": f.week, "hour": f.hour, "timestamp": f.timestamp.isoformat()} for f in self.flagged_hours
            ],
            "n_flagged": len(self.flagged_hours),
            "corruption_ratio": self.corruption_ratio,
            "observation_ratio": self.observation_ratio,
            "lambda": self.lambda_,
            "converged": self.converged,
            "n_segments": len(self.segment_ids),
        }

    def to_json(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, ensure_ascii=False, indent=2)
        return path

    def neighbourhood(self, index, radius=1):
        """
        Lignes de heat-map pour l'heure signalée `index` et les `radius`
        heures avant / après (vitesse observée, moyenne, z-score).
        """
        flag = self.flagged_hours[index]
        tt = self.traffic
        flagged = {(f.week, f.hour) for f in self.flagged_hours}
        origin = flag.week * HOURS_PER_WEEK + flag.hour
        frames = []
        for offset in range(-radius, radius + 1):
            g = origin + offset
            if not 0 <= g < HOURS_PER_WEEK * tt.n_weeks:
                continue
            week, hour = divmod(g, HOURS_PER_WEEK)
            observed = _observed_column(tt, week, hour)
            z = _z_scores(observed, self.baseline_mean[:, hour], self.baseline_std[:, hour])
            frames.append(
                pd.DataFrame(
                    {
                        "offset": offset,
                        "week": week,
                        "hour": hour,
                        "timestamp": tt.hour_timestamp(week, hour).isoformat(),
                        "segment_id": self.segment_ids,
                        "z_score": z,
                        "observed_speed": observed,
                        "baseline_speed": self.baseline_mean[:, hour],
                        "flagged": (week, hour) in flagged,
                    }
                )
            )
        return pd.concat(frames, ignore_index=True)


def _observed_column(tt, week, hour):
    return np.where(tt.mask.observed[:, hour, week], tt.tensor.data[:, hour, week], np.nan)


def _z_scores(observed, mean, std):
    with np.errstate(invalid="ignore", divide="ignore"):
        z = np.where(std > 0, (observed - mean) / std, 0.0)
    return np.where(np.isnan(observed), np.nan, z)


def _standardize(tt):
    data = tt.tensor.data
    observed = tt.mask.observed
    values = np.where(observed, data, np.nan)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.nanmean(values, axis=(1, 2))
        std = np.nanstd(values, axis=(1, 2))
    std = np.where(std > 0, std, 1.0)
    scaled = np.where(observed, (data - mean[:, None, None]) / std[:, None, None], 0.0)
    return scaled, mean, std


def _solver_input(tt, standardize):
    if standardize:
        scaled, mean, std = _standardize(tt)
        return DenseTensor(scaled, copy=False), mean, std
    return tt.tensor, None, None


def _segment_cfg(cfg):
    cfg = cfg or SolverConfig()
    update = {"outlier_mode": SEGMENT_MODE}
    if cfg.lambda_ is None:
        update["lambda_"] = get_settings().event_lambda
    return cfg.model_copy(update=update)


def detect_events(tt, cfg=None, standardize=False, verbose=False):
    """
    Complétion robuste sur le tenseur de trafic puis rapport d'événements.

    Les fibres aberrantes sont les fibres le long de la dimension segment :
    une colonne signalée correspond à une heure (semaine, heure de la semaine).

    Args:
        tt: TrafficTensor
        cfg: SolverConfig (outlier_mode forcé sur l'axe segment, lambda
             par défaut HORPCA_EVENT_LAMBDA)
        standardize: normaliser chaque segment avant résolution
        verbose: afficher la progression du solveur

    Returns:
        tuple: (SolverResult, EventReport)
    """
    cfg = _segment_cfg(cfg)
    b, mean, std = _solver_input(tt, standardize)
    result = robust_completion(b, tt.mask, cfg, verbose=verbose)

    x_hat = result.x_hat.data
    if standardize:
        x_hat = x_hat * std[:, None, None] + mean[:, None, None]

    flagged = [tt.fiber_to_hour(j) for j in result.outlier_fibers]
    n_segments = len(tt.segment_index)
    # Moyenne sur les semaines de X_hat, hors semaines signalées à cette heure
    normal = x_hat.copy()
    for week, hour in flagged:
        normal[:, hour, week] = np.nan
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        baseline_mean = np.nanmean(normal, axis=2)
        baseline_std = np.nanstd(normal, axis=2, ddof=1)
    baseline_std = np.nan_to_num(baseline_std, nan=0.0)

    observed = np.array([_observed_column(tt, week, hour) for week, hour in flagged]).reshape(len(flagged), n_segments)
    baseline = np.array([baseline_mean[:, hour] for _, hour in flagged]).reshape(len(flagged), n_segments)
    spread = np.array([baseline_std[:, hour] for _, hour in flagged]).reshape(len(flagged), n_segments)
    z_scores = _z_scores(observed, baseline, spread)

    report = EventReport(
        flagged_hours=[FlaggedHour(week, hour, tt.hour_timestamp(week, hour)) for week, hour in flagged],
        segment_ids=tt.segments,
        z_scores=z_scores,
        observed_speed=observed,
        baseline_speed=baseline,
        corruption_ratio=len(result.outlier_fibers) / result.p,
        observation_ratio=tt.observation_ratio,
        lambda_=result.lambda_,
        converged=result.converged,
        baseline_mean=baseline_mean,
        baseline_std=baseline_std,
        traffic=tt,
    )
    return result, report


def lambda_for_target_ratio(tt, target_ratio, cfg=None, lower=None, upper=None,
                            max_steps=12, rel_tol=0.1, standardize=False):
    """
    Recherche dichotomique (échelle log) de lambda pour atteindre une
    proportion d'heures signalées (lambda plus grand -> moins de fibres).

    Args:
        tt: TrafficTensor
        target_ratio: proportion visée dans ]0, 1[
        cfg: SolverConfig de base (mu fixé pendant toute la recherche)
        lower, upper: bornes de lambda (calculées si None)
        max_steps: nombre maximal de bisections
        rel_tol: tolérance relative sur la proportion

    Returns:
        float: lambda retenu
    """
    if not 0 < target_ratio < 1:
        raise ValueError("❌ target_ratio doit être dans ]0, 1[")
    cfg = _segment_cfg(cfg)
    b, _, _ = _solver_input(tt, standardize)
    b_masked = np.where(tt.mask.observed, b.data, 0.0)
    mu = cfg.mu if cfg.mu is not None else default_mu(b_masked)
    n_modes = b_masked.ndim
    p = b_masked.size // b_masked.shape[SEGMENT_MODE]

    if upper is None:
        # Au-delà, la première mise à jour de E n'isole aucune fibre
        upper = mu * n_modes * float(np.linalg.norm(unfold(b_masked, SEGMENT_MODE), axis=0).max())
    if lower is None:
        lower = upper * 1e-4

    if round(target_ratio * p) == 0:
        warnings.warn(f"Proportion {target_ratio} inatteignable pour {p} heures : lambda maximal retenu", stacklevel=2)
        return upper

    def flagged_ratio(lambda_):
        trial = cfg.model_copy(update={"lambda_": lambda_, "mu": mu})
        return len(robust_completion(b, tt.mask, trial).outlier_fibers) / p

    def close_enough(ratio):
        return abs(ratio - target_ratio) <= rel_tol * target_ratio

    ratio_hi = flagged_ratio(upper)
    if close_enough(ratio_hi):
        return upper
    if ratio_hi > target_ratio:
        warnings.warn("Proportion visée inatteignable : trop de fibres même au lambda maximal", stacklevel=2)
        return upper
    ratio_lo = flagged_ratio(lower)
    if close_enough(ratio_lo):
        return lower
    if ratio_lo < target_ratio:
        warnings.warn("Proportion visée inatteignable : trop peu de fibres même au lambda minimal", stacklevel=2)
        return lower

    lo, hi = lower, upper
    mid = float(np.sqrt(lo * hi))
    for _ in range(max_steps):
        mid = float(np.sqrt(lo * hi))
        ratio = flagged_ratio(mid)
        if close_enough(ratio):
            break
        if ratio > target_ratio:
            lo = mid
        else:
            hi = mid
    return mid


def run_detection(source, start, weeks, lambda_=None, target_ratio=None, min_coverage=None,
                  timezone=None, standardize=False, strict=False, cfg=None, out_dir=None, verbose=True):
    """
    Pipeline complet : charger -> construire le tenseur -> choisir lambda
    -> complétion robuste -> rapport (-> sauvegarde).

    Returns:
        tuple: (TrafficTensor, SolverResult, EventReport)
    """
    t0 = time.perf_counter()
    say = print if verbose else (lambda *args, **kwargs: None)
    say("🚀 Démarrage du pipeline de détection\n")

    records = load_records(source, strict=strict)
    say(f"📥 {len(records)} relevés de vitesse chargés")

    start = pd.Timestamp(start).normalize()
    tt = build_tensor(records, (start, start + pd.Timedelta(days=7 * weeks)), min_coverage, timezone)
    say(f"🔢 Tenseur {tt.tensor.shape} (taux d'observation {tt.observation_ratio:.3f}, "
        f"{len(tt.dropped_segments)} segments écartés)")

    cfg = _segment_cfg(cfg)
    if lambda_ is not None:
        cfg = cfg.model_copy(update={"lambda_": lambda_})
    elif target_ratio is not None:
        say(f"🎯 Recherche de lambda pour une proportion de {target_ratio:.2%}...")
        cfg = cfg.model_copy(update={"lambda_": lambda_for_target_ratio(tt, target_ratio, cfg, standardize=standardize)})

    say("🧮 Complétion robuste (ADMM)...")
    result, report = detect_events(tt, cfg, standardize=standardize)
    elapsed = time.perf_counter() - t0
    status = "✅" if result.converged else "⚠️ (non convergé)"
    say(f"{status} {len(report.flagged_hours)} heures anormales sur {result.p} "
        f"(proportion {report.corruption_ratio:.2%}, lambda = {result.lambda_:.4g})")
    say(f"⏱️ {result.iterations} itérations, {elapsed:.1f} s au total")

    if out_dir is not None:
        out_dir = Path(out_dir)
        report.to_json(out_dir / "event_report.json")
        report.to_csv(out_dir / "event_report.csv")
        result.save(out_dir / "solver")
        say(f"💾 Rapport sauvegardé dans {out_dir}")

    return tt, result, report
