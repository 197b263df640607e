from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum, auto
import logging
import time
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np

from engine.catalog import Catalog, load_catalog
from engine.errors import (
    DomainError,
    ExpressionSyntaxError,
    InadmissibleParameterError,
    IntegrationError,
    JetCapError,
    OrderMismatchError,
    PreconditionError,
    SingularSamplingError,
    StabilityError,
    UnboundSymbolError,
    UnknownEntryError,
    UnknownFunctionError,
)
from engine.lde import ResidualReport, Sampler
from utils.config import Settings
from utils.metrics import measure_execution_time, metrics
from utils.report import ERRATUM, FAIL, PASS, CaseRecord

logger = logging.getLogger(__name__)


class ErrorType(Enum):
    """Types d'erreurs possibles"""
    INVALID_INPUT = auto()  # Identifiant ou paramètres invalides
    DOMAIN = auto()         # Point hors du domaine réel
    NUMERICAL = auto()      # Échec numérique (intégration, stabilité, échantillonnage)
    VERIFICATION = auto()   # Résidu au-delà de la tolérance
    UNKNOWN = auto()        # Erreur non catégorisée


@dataclass
class VerificationError(Exception):
    """Erreur classée d'un vérificateur"""
    error_type: ErrorType
    message: str
    case_id: Optional[str] = None
    original_exception: Optional[Exception] = None

    def __str__(self):
        return f"{self.error_type.name}: {self.message} (cas: {self.case_id or '-'})"


_INVALID_INPUT = (
    UnknownEntryError,
    InadmissibleParameterError,
    PreconditionError,
    OrderMismatchError,
    ExpressionSyntaxError,
    UnknownFunctionError,
    UnboundSymbolError,
    JetCapError,
)
_NUMERICAL = (
    SingularSamplingError,
    IntegrationError,
    StabilityError,
    FloatingPointError,
    OverflowError,
    np.linalg.LinAlgError,
)


class BaseVerifier(ABC):
    """Unité de vérification pilotée par la ligne de commande."""

    kind = "case"

    def __init__(self, name: str, settings: Settings, catalog: Optional[Catalog] = None):
        """
        Initialise un vérificateur.

        Args:
            name: Nom du vérificateur (préfixe des métriques)
            settings: Graine, nombre d'échantillons, tolérance, catalogue
            catalog: Catalogue déjà chargé (sinon lu depuis settings.catalog)
        """
        self.name = name
        self.settings = settings
        self.catalog = catalog or load_catalog(settings.catalog)
        self.metrics_prefix = f"verifier.{self.name.lower().replace(' ', '_')}"
        self._init_metrics()
        logger.info(f"Initialisation du vérificateur {name} (graine {settings.seed}, {settings.samples} points)")

    def _init_metrics(self):
        """Initialise les compteurs de métriques pour ce vérificateur"""
        metrics.counter(f"{self.metrics_prefix}.calls", f"Nombre total de cas traités par {self.name}")
        metrics.counter(f"{self.metrics_prefix}.errors", f"Nombre total d'erreurs pour {self.name}")
        metrics.histogram(
            f"{self.metrics_prefix}.processing_time",
            f"Temps de traitement pour {self.name} (secondes)",
            buckets=[0.01, 0.1, 0.5, 1, 5, 10, 60],
        )

    def sampler(self, case_id: str, tolerance: Optional[float] = None) -> Sampler:
        return Sampler(
            seed=self.settings.seed,
            count=self.settings.samples,
            tolerance=self.settings.tolerance if tolerance is None else tolerance,
            case_id=case_id,
        )

    def _classify_error(self, error: Exception) -> Tuple[ErrorType, str]:
        """
        Classe une exception et retourne son type et un message.

        Args:
            error: L'exception à classifier

        Returns:
            Tuple (type_erreur, message)
        """
        if isinstance(error, VerificationError):
            return error.error_type, error.message
        if isinstance(error, _INVALID_INPUT):
            return ErrorType.INVALID_INPUT, str(error)
        if isinstance(error, (DomainError, ZeroDivisionError)):
            return ErrorType.DOMAIN, f"Hors domaine: {error}"
        if isinstance(error, _NUMERICAL):
            return ErrorType.NUMERICAL, f"Échec numérique: {error}"
        return ErrorType.UNKNOWN, f"Erreur inattendue: {error.__class__.__name__}: {error}"

    def wrap_error(self, error: Exception, case_id: Optional[str] = None) -> VerificationError:
        error_type, message = self._classify_error(error)
        metrics.counter(
            f"{self.metrics_prefix}.errors",
            f"Erreurs du vérificateur {self.name}",
            error_type=error_type.name.lower(),
        ).inc()
        return VerificationError(error_type, message, case_id=case_id, original_exception=error)

    def record(
        self,
        case_id: str,
        report: Optional[ResidualReport],
        kind: Optional[str] = None,
        provenance: str = "",
        params: Optional[Dict[str, Any]] = None,
        erratum: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None,
    ) -> CaseRecord:
        """Construit l'enregistrement d'un cas à partir de son rapport de résidu."""
        details = dict(details or {})
        if report is not None:
            details.setdefault("num_samples", report.num_samples)
            details.setdefault("tolerance", report.tolerance)
            details.setdefault("retries", report.retries)
        return CaseRecord(
            id=case_id,
            kind=kind or self.kind,
            provenance=provenance,
            params=dict(params or {}),
            max_abs=report.max_abs if report is not None else None,
            rms=report.rms if report is not None else None,
            status=PASS if report is not None and report.passed else FAIL,
            erratum=erratum,
            details=details,
        )

    def failure(
        self,
        case_id: str,
        error: Exception,
        kind: Optional[str] = None,
        provenance: str = "",
        params: Optional[Dict[str, Any]] = None,
        erratum: Optional[str] = None,
    ) -> CaseRecord:
        """Enregistrement d'échec pour un cas interrompu par une exception."""
        wrapped = self.wrap_error(error, case_id)
        logger.error(f"[{self.name}] {wrapped}")
        return CaseRecord(
            id=case_id,
            kind=kind or self.kind,
            provenance=provenance,
            params=dict(params or {}),
            status=FAIL,
            erratum=erratum,
            details={"error_type": wrapped.error_type.name, "message": wrapped.message},
        )

    @staticmethod
    def printed_status(printed: CaseRecord, verified: CaseRecord, erratum: Optional[str]) -> str:
        """Une forme imprimée en échec compte comme erratum si la forme vérifiée passe."""
        if printed.status == PASS:
            return PASS
        if erratum and verified.status == PASS:
            return ERRATUM
        return FAIL

    def select(self, ids: Optional[Iterable[str]], available: List[str]) -> List[str]:
        """
        Valide les identifiants demandés (tous si `ids` est vide).

        Raises:
            VerificationError: Identifiant inconnu (INVALID_INPUT)
        """
        if not ids:
            return list(available)
        selected = []
        for case_id in ids:
            if case_id not in available:
                raise self.wrap_error(UnknownEntryError(f"Identifiant inconnu: {case_id}"), case_id)
            selected.append(case_id)
        return selected

    @measure_execution_time
    def process(self, **kwargs) -> List[CaseRecord]:
        """
        Exécute les cas demandés et retourne leurs enregistrements.

        Raises:
            VerificationError: Erreur de configuration (identifiant, paramètres)
        """
        start_time = time.perf_counter()
        cases = self.run(**kwargs)
        duration = time.perf_counter() - start_time
        metrics.counter(f"{self.metrics_prefix}.calls", f"Nombre total de cas traités par {self.name}").inc(len(cases))
        metrics.histogram(f"{self.metrics_prefix}.processing_time").observe(duration)
        failed = sum(1 for case in cases if not case.passed)
        logger.info(f"[{self.name}] {len(cases)} cas en {duration:.2f} s, {failed} échec(s)")
        return cases

    @abstractmethod
    def run(self, **kwargs) -> List[CaseRecord]:
        """Logique propre au vérificateur"""
        pass
