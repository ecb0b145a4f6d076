"""
Configuration globale chargée depuis l'environnement (.env)
Les options de la ligne de commande et les fichiers JSON d'expérience
ont priorité sur ces valeurs.
"""

import os
from functools import lru_cache

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field

# Charger les variables d'environnement depuis .env
load_dotenv()


class Settings(BaseModel):
    """Valeurs par défaut du projet."""

    model_config = ConfigDict(frozen=True)

    epsilon: float = Field(1e-7, gt=0)
    max_iters: int = Field(500, ge=1)
    timezone: str = "UTC"
    min_coverage: float = Field(0.5, ge=0, le=1)
    data_dir: str = "data"
    workers: int = Field(1, ge=1)
    event_lambda: float = Field(1.0, gt=0)


@lru_cache(maxsize=1)
def get_settings():
    """
    Construit les réglages à partir des variables HORPCA_*.

    Returns:
        Settings: réglages validés (immuables)
    """
    env = {
        "epsilon": os.getenv("HORPCA_EPSILON"),
        "max_iters": os.getenv("HORPCA_MAX_ITERS"),
        "timezone": os.getenv("HORPCA_TIMEZONE"),
        "min_coverage": os.getenv("HORPCA_MIN_COVERAGE"),
        "data_dir": os.getenv("HORPCA_DATA_DIR"),
        "workers": os.getenv("HORPCA_WORKERS"),
        "event_lambda": os.getenv("HORPCA_EVENT_LAMBDA"),
    }
    return Settings(**{key: value for key, value in env.items() if value})
