"""
Décomposition tensorielle robuste pour la détection d'événements de trafic
Tenseurs denses, opérateurs proximaux, solveurs ADMM (l2,1 / l1),
générateur synthétique, métriques et pipeline d'ingestion des vitesses.
"""

__version__ = "0.1.0"
