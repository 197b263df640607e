"""
Moteur symbolique-numérique des contraintes différentielles.

Modules :
    expr     -- arbres d'expressions, dérivation, évaluation
    jet      -- dérivées totales sur l'espace des jets
    lde      -- équation déterminante linéaire et ajustement des coefficients
    catalog  -- registre des contraintes, solutions et représentations
    reduce   -- systèmes d'EDO des coefficients et reconstruction des solutions
    pde      -- résidus exacts, méthode des lignes et contrôles 2-D
"""
from .errors import EngineError

__version__ = "1.0.0"

__all__ = ["EngineError", "__version__"]
