import os
import sys

from dotenv import load_dotenv

# Ajouter le chemin parent
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from horpca.cli import write_traffic_fixture

# Charger les variables d'environnement
load_dotenv()

# Fixture pleine taille : 556 segments, 17 semaines
OUTPUT_FILE = "data/processed/traffic_fixture.csv"
N_SEGMENTS = 556
N_WEEKS = 17
RHO = 0.8
PLANTED_HOURS = 3
SEED = 0

print(f"🔧 Génération du flux de vitesses ({N_SEGMENTS} segments x 168 h x {N_WEEKS} semaines)...")
csv_path, planted_path = write_traffic_fixture(
    OUTPUT_FILE,
    n_segments=N_SEGMENTS,
    n_weeks=N_WEEKS,
    rho=RHO,
    planted_hours=PLANTED_HOURS,
    seed=SEED,
)
print(f"✅ Flux sauvegardé dans {csv_path}")
print(f"✅ Heures plantées sauvegardées dans {planted_path}")
