import json
import os
import sys
import time

from dotenv import load_dotenv

# Ajouter le chemin parent
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from horpca.ingest import run_detection
from horpca.metrics import prf

# Charger les variables d'environnement
load_dotenv()

FIXTURE_FILE = "data/processed/traffic_fixture.csv"
PLANTED_FILE = "data/processed/traffic_fixture_planted.json"
RESULTS_FILE = "data/evaluation/fixture_results.json"

# Charger la liste des heures plantées
print("📂 Chargement des heures plantées...")
if not os.path.exists(PLANTED_FILE):
    print("❌ Fixture introuvable : lancer d'abord scripts/generate_traffic_fixture.py")
    sys.exit(1)
with open(PLANTED_FILE, "r", encoding="utf-8") as f:
    planted_data = json.load(f)
planted = {(p["week"], p["hour"]) for p in planted_data["planted"]}
print(f"✅ {len(planted)} heures plantées\n")

# Lancer le pipeline complet
t0 = time.perf_counter()
tt, result, report = run_detection(
    FIXTURE_FILE,
    planted_data["week_start"],
    planted_data["n_weeks"],
    out_dir="data/evaluation/fixture_report",
)
elapsed = time.perf_counter() - t0

# Comparer heures signalées et heures plantées
flagged = {(f.week, f.hour) for f in report.flagged_hours}
counts = prf(flagged, planted)

print("\n" + "=" * 60)
print("📊 RÉSULTATS SUR LA FIXTURE")
print("=" * 60)
print(f"Précision : {counts.precision:.3f} ({counts.fp} faux positifs)")
print(f"Rappel    : {counts.recall:.3f} ({counts.fn} heures manquées)")
print(f"Durée     : {elapsed:.1f} s (limite 120 s)")
print("=" * 60)

# Sauvegarder les résultats
os.makedirs(os.path.dirname(RESULTS_FILE), exist_ok=True)
with open(RESULTS_FILE, "w", encoding="utf-8") as f:
    json.dump(
        {
            "precision": counts.precision,
            "recall": counts.recall,
            "tp": counts.tp,
            "fp": counts.fp,
            "fn": counts.fn,
            "runtime_seconds": elapsed,
            "iterations": result.iterations,
            "converged": result.converged,
            "observation_ratio": tt.observation_ratio,
            "lambda": result.lambda_,
            "planted": sorted([list(p) for p in planted]),
            "flagged": sorted([list(p) for p in flagged]),
        },
        f,
        ensure_ascii=False,
        indent=2,
    )
print(f"\n💾 Résultats sauvegardés dans {RESULTS_FILE}")
