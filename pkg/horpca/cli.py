"""
Interface en ligne de commande

    python main.py solve --shape 50 50 50 --rank 5 --gamma 0.05
    python main.py table1 --scale 0.5
    python main.py sweep gamma --trials 10
    python main.py phase-grid --scale 0.5 --workers 4
    python main.py ingest data/processed/traffic_fixture.csv --start 2018-01-01 --weeks 17
    python main.py make-fixture

Chaque commande écrit des CSV / JSON (le tracé des figures est externe).
Code de sortie 0 si et seulement si toutes les résolutions ont convergé.
"""

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from horpca import metrics, synth
from horpca.config import get_settings
from horpca.ingest import run_detection
from horpca.solver import Regularizer, SolverConfig, solve
from horpca.synth import SynthSpec, round_half_up

TABLE1_SIZES = (70, 90, 150, 210)
SWEEP_VALUES = {
    "gamma": tuple(round(0.05 * k, 2) for k in range(13)),
    "rho": tuple(round(0.1 * k, 1) for k in range(1, 11)),
}
GRID_RHOS = tuple(round(0.3 + 0.05 * k, 2) for k in range(15))
GRID_RANKS = (1, 2, 4, 6, 8, 10, 12, 14, 16, 18, 20)
# table1, sweep et phase-grid : la détection L1 et les gamma élevés demandent plus de 500 itérations
EXPERIMENT_MAX_ITERS = 2000

ROW_COLUMNS = ["cell", "trial", "regularizer", "shape", "rank", "gamma", "rho", "seed"] + metrics.SCORE_COLUMNS + ["success"]
DEFAULT_OUT = Path("data") / "experiments" / "results"


class ExperimentGrid(BaseModel):
    """
    Ensemble de cellules (une SynthSpec par cellule) répétées `trials` fois
    pour chaque régularisation. La graine d'un essai ne dépend que de
    (seed, cellule, essai) : L21 et L1 voient exactement la même instance.
    """

    model_config = ConfigDict(frozen=True)

    cells: tuple[SynthSpec, ...] = Field(min_length=1)
    trials: int = Field(10, ge=1)
    regularizers: tuple[Regularizer, ...] = (Regularizer.L21,)
    seed: int = Field(0, ge=0)

    def trial_seed(self, cell, trial):
        return int(np.random.SeedSequence([self.seed, cell, trial]).generate_state(1)[0])

    def tasks(self):
        for cell, spec in enumerate(self.cells):
            for trial in range(self.trials):
                trial_spec = spec.model_copy(update={"seed": self.trial_seed(cell, trial)})
                for regularizer in self.regularizers:
                    yield cell, trial, trial_spec, regularizer


def _fmt_dims(dims):
    return "x".join(str(d) for d in dims)


def _run_task(base_cfg, task):
    cell, trial, spec, regularizer = task
    cfg = base_cfg.model_copy(update={"regularizer": regularizer, "outlier_mode": spec.outlier_mode})
    truth = synth.generate(spec)
    result = solve(truth.b, truth.mask, cfg)
    score = metrics.score(result, truth)
    row = {
        "cell": cell,
        "trial": trial,
        "regularizer": regularizer.value,
        "shape": _fmt_dims(spec.shape),
        "rank": _fmt_dims(spec.tucker_rank),
        "gamma": spec.gamma,
        "rho": spec.rho,
        "seed": spec.seed,
    }
    row.update(score.as_row())
    row["success"] = metrics.success(score)
    return row


def run_grid(grid, cfg=None, workers=1, out=None):
    """
    Exécute toutes les résolutions d'une grille.

    Args:
        grid: ExperimentGrid
        cfg: SolverConfig de base (régularisation et mode fixés par tâche)
        workers: nombre de processus (1 = séquentiel)
        out: CSV de sortie (une ligne par essai), optionnel

    Returns:
        DataFrame ordonné par (cellule, essai, régularisation)
    """
    cfg = cfg or SolverConfig()
    tasks = list(grid.tasks())
    worker = partial(_run_task, cfg)
    print(f"🧪 {len(tasks)} résolutions ({len(grid.cells)} cellules x {grid.trials} essais "
          f"x {len(grid.regularizers)} régularisations, {workers} processus)")

    rows = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for row in pool.map(worker, tasks, chunksize=1):
                rows.append(row)
                _print_row(len(rows), len(tasks), row)
    else:
        for task in tasks:
            rows.append(worker(task))
            _print_row(len(rows), len(tasks), rows[-1])

    frame = pd.DataFrame(rows, columns=ROW_COLUMNS)
    if out is not None:
        _write_csv(frame, out)
    return frame


def _print_row(i, total, row):
    flag = "✅" if row["success"] else ("⚠️" if not row["converged"] else "❌")
    print(f"  [{i}/{total}] {flag} {row['shape']} rang {row['rank']} {row['regularizer']} "
          f"gamma={row['gamma']} rho={row['rho']} : RE={row['re']:.2e} "
          f"P={row['precision']:.2f} R={row['recall']:.2f} ({row['iterations']} it.)")


def _write_csv(frame, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    print(f"💾 {path}")
    return path


def _exit_code(frame):
    return 0 if bool(frame["converged"].all()) else 1


# ============================================================
# PARAMÈTRES COMMUNS
# ============================================================

def _scaled(size, scale):
    return max(1, round_half_up(size * scale))


def _regularizers(name, default):
    name = name or default
    if name == "both":
        return (Regularizer.L21, Regularizer.L1)
    return (Regularizer(name),)


def _solver_config(args, max_iters=None):
    overrides = {
        "lambda_": getattr(args, "lambda_", None),
        "mu": getattr(args, "mu", None),
        "epsilon": getattr(args, "epsilon", None),
        "max_iters": getattr(args, "max_iters", None) or max_iters,
        "mu_growth": getattr(args, "mu_growth", None),
        "svd_method": getattr(args, "svd_method", None),
    }
    return SolverConfig(**{key: value for key, value in overrides.items() if value is not None})


def _workers(args):
    return args.workers or get_settings().workers


def _out_dir(args):
    return Path(args.out) if args.out else DEFAULT_OUT


def _cube_spec(size, rank, gamma, rho):
    shape = (size,) * 3
    return SynthSpec(shape=shape, tucker_rank=(min(rank, size),) * 3, gamma=gamma, rho=rho)


def _aggregate(frame, keys):
    summary = frame.groupby(keys, sort=True).agg(
        re=("re", "mean"),
        precision=("precision", "mean"),
        recall=("recall", "mean"),
        iterations=("iterations", "mean"),
        success_rate=("success", "mean"),
        converged=("converged", "all"),
        trials=("trial", "nunique"),
        wall_time_seconds=("wall_time_seconds", "mean"),
    )
    return summary.reset_index()


# ============================================================
# COMMANDES
# ============================================================

def run_solve(args):
    """Une instance synthétique, résultat et score sauvegardés."""
    scale = args.scale or 1.0
    shape = tuple(_scaled(d, scale) for d in (args.shape or (50, 50, 50)))
    rank = tuple(args.rank or (5,))
    if len(rank) == 1:
        rank = rank * len(shape)
    rank = tuple(min(_scaled(c, scale), d) for c, d in zip(rank, shape))
    spec = SynthSpec(
        shape=shape,
        tucker_rank=rank,
        gamma=0.05 if args.gamma is None else args.gamma,
        rho=1.0 if args.rho is None else args.rho,
        seed=args.seed or 0,
        outlier_mode=args.outlier_mode or 0,
    )
    regularizer = _regularizers(args.regularizer, "L21")[0]
    cfg = _solver_config(args).model_copy(update={"regularizer": regularizer, "outlier_mode": spec.outlier_mode})

    print(f"🚀 Instance {_fmt_dims(shape)}, rang {_fmt_dims(rank)}, gamma={spec.gamma}, rho={spec.rho}, "
          f"graine {spec.seed} ({regularizer.value})")
    truth = synth.generate(spec)
    result = solve(truth.b, truth.mask, cfg, verbose=args.verbose)
    score = metrics.score(result, truth)
    print(f"📊 RE = {score.re:.3e} | précision = {score.precision:.3f} | rappel = {score.recall:.3f} "
          f"| {score.iterations} itérations | {score.wall_time_seconds:.2f} s")

    if args.out:
        out = Path(args.out)
        result.save(out)
        with open(out / "score.json", "w", encoding="utf-8") as f:
            json.dump({"spec": spec.model_dump(), "score": score.as_row()}, f, ensure_ascii=False, indent=2)
        print(f"💾 Résultat sauvegardé dans {out}")
    return 0 if result.converged else 1


def run_table1(args):
    """L21 contre L1 sur des cubes de taille croissante, rang c = 0.1 I."""
    scale = args.scale or 1.0
    sizes = [_scaled(size, scale) for size in (args.sizes or TABLE1_SIZES)]
    gamma = 0.05 if args.gamma is None else args.gamma
    cells = tuple(_cube_spec(size, max(1, round_half_up(0.1 * size)), gamma, 1.0) for size in sizes)
    grid = ExperimentGrid(
        cells=cells,
        trials=args.trials or 1,
        regularizers=_regularizers(args.regularizer, "both"),
        seed=args.seed or 0,
    )
    out = _out_dir(args)
    frame = run_grid(grid, _solver_config(args, EXPERIMENT_MAX_ITERS), _workers(args), out / "table1.csv")
    summary = _aggregate(frame, ["shape", "rank", "regularizer"])
    print("\n📋 Résumé :")
    print(summary[["shape", "rank", "regularizer", "re", "precision", "recall", "iterations",
                   "wall_time_seconds"]].to_string(index=False))
    _write_csv(summary, out / "table1_summary.csv")
    return _exit_code(frame)


def run_sweep(args):
    """Balayage de gamma (corruption) ou de rho (observation), moyenne par point."""
    param = args.param
    scale = args.scale or 1.0
    size = _scaled((args.shape or (70,))[0], scale)
    rank = _scaled((args.rank or (5,))[0], scale)
    values = tuple(args.values or SWEEP_VALUES[param])
    if param == "gamma":
        rho = 1.0 if args.rho is None else args.rho
        cells = tuple(_cube_spec(size, rank, value, rho) for value in values)
    else:
        gamma = 0.05 if args.gamma is None else args.gamma
        cells = tuple(_cube_spec(size, rank, gamma, value) for value in values)
    grid = ExperimentGrid(
        cells=cells,
        trials=args.trials or 10,
        regularizers=_regularizers(args.regularizer, "L21"),
        seed=args.seed or 0,
    )
    out = _out_dir(args)
    frame = run_grid(grid, _solver_config(args, EXPERIMENT_MAX_ITERS), _workers(args), out / f"sweep_{param}_trials.csv")
    summary = _aggregate(frame, [param, "regularizer"])
    print(f"\n📋 Balayage de {param} :")
    print(summary[[param, "regularizer", "re", "precision", "recall", "iterations", "success_rate"]].to_string(index=False))
    _write_csv(summary, out / f"sweep_{param}.csv")
    return _exit_code(frame)


def run_phase_grid(args):
    """Taux de succès sur la grille (rang c, rho)."""
    scale = args.scale or 1.0
    size = _scaled((args.shape or (70,))[0], scale)
    ranks = list(dict.fromkeys(min(_scaled(c, scale), size) for c in (args.ranks or GRID_RANKS)))
    rhos = tuple(args.rhos or GRID_RHOS)
    gamma = 0.1 if args.gamma is None else args.gamma

    cells, cell_rank = [], {}
    for c in ranks:
        for rho in rhos:
            cell_rank[len(cells)] = c
            cells.append(_cube_spec(size, c, gamma, rho))
    grid = ExperimentGrid(
        cells=tuple(cells),
        trials=args.trials or 10,
        regularizers=_regularizers(args.regularizer, "L21"),
        seed=args.seed or 0,
    )
    out = _out_dir(args)
    frame = run_grid(grid, _solver_config(args, EXPERIMENT_MAX_ITERS), _workers(args), out / "phase_grid_trials.csv")
    frame["c"] = frame["cell"].map(cell_rank)
    summary = _aggregate(frame, ["c", "rho", "regularizer"])
    _write_csv(summary[["c", "rho", "regularizer", "success_rate", "trials"]], out / "phase_grid.csv")

    print("\n📋 Taux de succès (lignes : rang c, colonnes : rho) :")
    print(summary.pivot_table(index="c", columns="rho", values="success_rate").to_string(float_format="%.1f"))
    return _exit_code(frame)


def run_ingest(args):
    """Pipeline de détection d'événements sur un CSV de vitesses."""
    _, result, report = run_detection(
        args.source,
        args.start,
        args.weeks,
        lambda_=args.lambda_,
        target_ratio=args.target_ratio,
        min_coverage=args.min_coverage,
        timezone=args.timezone,
        standardize=args.standardize,
        strict=args.strict,
        cfg=_solver_config(args),
        out_dir=args.out,
    )
    if report.flagged_hours:
        print("\n📍 Heures signalées (z-score médian sur les segments observés) :")
        for i, flag in enumerate(report.flagged_hours):
            z = report.z_scores[i]
            observed = int(np.sum(~np.isnan(z)))
            median = float(np.nanmedian(z)) if observed else float("nan")
            print(f"  {flag.timestamp:%Y-%m-%d %H:%M} (semaine {flag.week}, heure {flag.hour:3d}) : "
                  f"z médian {median:+.2f} sur {observed} segments")
    return 0 if result.converged else 1


def write_traffic_fixture(path, n_segments=556, n_weeks=17, rho=0.8, planted_hours=3,
                          week_start="2018-01-01", seed=0):
    """
    Écrit un flux de vitesses synthétique et la liste des heures plantées.

    Returns:
        tuple: (chemin du CSV, chemin du JSON des heures plantées)
    """
    frame, planted = synth.make_traffic_records(
        n_segments=n_segments, n_weeks=n_weeks, week_start=week_start, rho=rho,
        planted_hours=planted_hours, seed=seed,
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    planted_path = path.with_name(path.stem + "_planted.json")
    with open(planted_path, "w", encoding="utf-8") as f:
        json.dump(
            {"week_start": week_start, "n_weeks": n_weeks, "n_segments": n_segments,
             "planted": [{"week": w, "hour": h} for w, h in planted]},
            f, ensure_ascii=False, indent=2,
        )
    return path, planted_path


def run_make_fixture(args):
    """Génère la fixture d'ingestion (vitesses + heures plantées)."""
    out = Path(args.out) if args.out else Path(get_settings().data_dir) / "processed" / "traffic_fixture.csv"
    segments = 556 if args.segments is None else args.segments
    weeks = 17 if args.weeks is None else args.weeks
    rho = 0.8 if args.rho is None else args.rho
    planted = 3 if args.planted is None else args.planted
    print(f"🔧 Génération d'un flux {segments} segments x {weeks} semaines (rho={rho})...")
    csv_path, planted_path = write_traffic_fixture(
        out, segments, weeks, rho, planted, args.start or "2018-01-01", args.seed or 0
    )
    print(f"💾 {csv_path}\n💾 {planted_path}")
    return 0


# ============================================================
# PARSEUR
# ============================================================

def _common_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Fichier JSON (clés = noms longs des options)")
    common.add_argument("--lambda", dest="lambda_", type=float, help="Poids de la régularisation")
    common.add_argument("--mu", type=float, help="Paramètre de pénalité ADMM")
    common.add_argument("--mu-growth", type=float, help="Facteur de croissance de mu (1 = constant)")
    common.add_argument("--epsilon", type=float, help="Tolérance sur le résidu relatif (défaut 1e-7)")
    common.add_argument("--max-iters", type=int, help="Nombre maximal d'itérations")
    common.add_argument("--svd-method", choices=["full", "partial"], help="SVD complète ou partielle")
    common.add_argument("--seed", type=int, help="Graine")
    common.add_argument("--out", help="Dossier ou fichier de sortie")
    common.add_argument("--workers", type=int, help="Nombre de processus")
    return common


def _experiment_parser():
    experiment = argparse.ArgumentParser(add_help=False)
    experiment.add_argument("--shape", type=int, nargs="+", help="Dimensions du tenseur")
    experiment.add_argument("--rank", type=int, nargs="+", help="Rang de Tucker (une valeur = tous les modes)")
    experiment.add_argument("--gamma", type=float, help="Proportion de fibres corrompues")
    experiment.add_argument("--rho", type=float, help="Proportion d'entrées observées")
    experiment.add_argument("--trials", type=int, help="Essais par cellule")
    experiment.add_argument("--regularizer", choices=["L21", "L1", "both"], help="Régularisation des aberrations")
    experiment.add_argument("--scale", type=float, help="Facteur d'échelle des tailles et des rangs")
    return experiment


def build_parser():
    common = _common_parser()
    experiment = _experiment_parser()
    parser = argparse.ArgumentParser(prog="horpca", description="Décomposition tensorielle robuste (ADMM)")
    commands = parser.add_subparsers(dest="command", required=True)

    solve_cmd = commands.add_parser("solve", parents=[common, experiment], help="Une instance synthétique")
    solve_cmd.add_argument("--outlier-mode", type=int, help="Mode des fibres corrompues")
    solve_cmd.add_argument("--verbose", action="store_true", help="Afficher les itérations")
    solve_cmd.set_defaults(handler=run_solve)

    table1 = commands.add_parser("table1", parents=[common, experiment], help="L21 contre L1, c = 0.1 I")
    table1.add_argument("--sizes", type=int, nargs="+", help="Tailles des cubes (défaut 70 90 150 210)")
    table1.set_defaults(handler=run_table1)

    sweep = commands.add_parser("sweep", parents=[common, experiment], help="Balayage de gamma ou rho")
    sweep.add_argument("param", choices=["gamma", "rho"])
    sweep.add_argument("--values", type=float, nargs="+", help="Valeurs du paramètre balayé")
    sweep.set_defaults(handler=run_sweep)

    grid = commands.add_parser("phase-grid", parents=[common, experiment], help="Grille (rang, rho)")
    grid.add_argument("--ranks", type=int, nargs="+", help="Rangs c (défaut 1 à 20)")
    grid.add_argument("--rhos", type=float, nargs="+", help="Proportions observées (défaut 0.3 à 1)")
    grid.set_defaults(handler=run_phase_grid)

    ingest = commands.add_parser("ingest", parents=[common], help="Détection d'événements de trafic")
    ingest.add_argument("source", help="CSV segment_id,timestamp_iso8601,speed (ou 'dummy', 'fixture')")
    ingest.add_argument("--start", required=True, help="Lundi de la première semaine (AAAA-MM-JJ)")
    ingest.add_argument("--weeks", type=int, required=True, help="Nombre de semaines")
    ingest.add_argument("--target-ratio", type=float, help="Proportion d'heures signalées visée")
    ingest.add_argument("--min-coverage", type=float, help="Couverture minimale d'un segment")
    ingest.add_argument("--timezone", help="Fuseau horaire local")
    ingest.add_argument("--standardize", action="store_true", help="Normaliser chaque segment")
    ingest.add_argument("--strict", action="store_true", help="Erreur sur toute ligne invalide")
    ingest.set_defaults(handler=run_ingest)

    fixture = commands.add_parser("make-fixture", parents=[common], help="Flux de vitesses synthétique")
    fixture.add_argument("--segments", type=int, help="Nombre de segments (défaut 556)")
    fixture.add_argument("--weeks", type=int, help="Nombre de semaines (défaut 17)")
    fixture.add_argument("--rho", type=float, help="Proportion d'heures observées (défaut 0.8)")
    fixture.add_argument("--planted", type=int, help="Nombre d'heures perturbées (défaut 3)")
    fixture.add_argument("--start", help="Lundi de la semaine 0 (défaut 2018-01-01)")
    fixture.set_defaults(handler=run_make_fixture)

    return parser


def apply_config(args):
    """Complète les options absentes de la ligne de commande avec le fichier --config."""
    if not getattr(args, "config", None):
        return args
    with open(args.config, "r", encoding="utf-8") as f:
        config = json.load(f)
    for key, value in config.items():
        key = key.replace("-", "_")
        key = "lambda_" if key == "lambda" else key
        if not hasattr(args, key):
            print(f"⚠️ Clé de configuration ignorée : {key}")
            continue
        if getattr(args, key) is None:
            setattr(args, key, value)
    return args


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args = apply_config(args)
        return args.handler(args)
    except (ValueError, RuntimeError, FileNotFoundError) as e:
        message = str(e)
        print(message if message.startswith("❌") else f"❌ {message}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
