"""
Exceptions du moteur symbolique-numérique.
"""
from typing import Optional


class EngineError(Exception):
    """Erreur de base du moteur."""


class ExpressionSyntaxError(EngineError):
    """Erreur de syntaxe dans une expression (décalage en octets)."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (octet {offset})")
        self.offset = offset


class UnknownFunctionError(EngineError):
    """Appel d'une fonction absente de la grammaire."""


class UnboundSymbolError(EngineError):
    """Symbole libre non lié au point d'évaluation."""


class DomainError(EngineError, ArithmeticError):
    """Argument hors du domaine réel (base, ln, sqrt, valeur non finie)."""


class JetCapError(EngineError):
    """Le résultat exigerait un jet au-delà de u9."""


class OrderMismatchError(EngineError):
    """Ordre du schéma déterminant différent de celui de l'équation."""


class InadmissibleParameterError(EngineError):
    """Paramètres violant une contrainte d'admissibilité."""

    def __init__(self, message: str, constraint: Optional[str] = None):
        super().__init__(message)
        self.constraint = constraint


class UnknownEntryError(EngineError, KeyError):
    """Identifiant absent du catalogue."""

    def __str__(self):
        return str(self.args[0]) if self.args else "Entrée inconnue"


class SingularSamplingError(EngineError):
    """Échantillonnage dégénéré : lignes toutes dépendantes."""


class IntegrationError(EngineError):
    """Paramètres d'intégration invalides ou trajectoire insuffisante."""


class StabilityError(EngineError):
    """Pas de temps au-delà de la borne de stabilité."""

    def __init__(self, message: str, required_dt: float):
        super().__init__(message)
        self.required_dt = required_dt


class PreconditionError(EngineError):
    """Précondition d'une opération non satisfaite."""
