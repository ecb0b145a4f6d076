"""Exceptions du domaine (toutes dérivées des exceptions standard)."""


class ShapeError(ValueError):
    """Dimensions incompatibles ou mode hors limites."""


class NonFiniteError(ValueError):
    """Valeur NaN ou infinie refusée par un constructeur."""


class NumericalError(RuntimeError):
    """Échec numérique (SVD qui ne converge pas, même après repli)."""


class IngestError(ValueError):
    """Données de vitesse inutilisables (fichier vide, lignes invalides...)."""
