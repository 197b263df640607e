"""
Rapports de vérification : modèle, sérialisation JSON (orjson) et CSV.

Les flottants sont écrits avec 17 chiffres significatifs ; les valeurs non
finies deviennent null. À configuration et graine identiques, les octets
produits sont identiques.
"""
import csv
import io
import logging
import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import orjson

logger = logging.getLogger(__name__)

FORMATS = ("json", "csv")
CSV_HEADER = ("id", "provenance", "kind", "max_abs", "rms", "pass", "erratum")

# Statuts d'un cas : l'erratum documenté compte comme un succès
PASS = "pass"
FAIL = "fail"
ERRATUM = "erratum"


class ReportWriteError(OSError):
    """Écriture du rapport impossible."""


@dataclass
class CaseRecord:
    """Résultat d'un cas vérifié."""

    id: str
    kind: str
    provenance: str = ""
    params: Dict[str, Any] = field(default_factory=dict)
    max_abs: Optional[float] = None
    rms: Optional[float] = None
    status: str = FAIL
    erratum: Optional[str] = None
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status != FAIL

    def to_dict(self) -> Dict[str, Any]:
        record = {
            "id": self.id,
            "provenance": self.provenance,
            "params": dict(self.params),
            "kind": self.kind,
            "max_abs": self.max_abs,
            "rms": self.rms,
            "pass": self.passed,
            "status": self.status,
            "erratum": self.erratum,
        }
        if self.details:
            record["details"] = self.details
        return record


@dataclass
class Report:
    """Rapport complet : version, configuration, cas et bilan."""

    version: str
    config: Dict[str, Any]
    cases: List[CaseRecord] = field(default_factory=list)

    def add(self, case: CaseRecord) -> CaseRecord:
        self.cases.append(case)
        return case

    def extend(self, cases: List[CaseRecord]) -> None:
        self.cases.extend(cases)

    @property
    def ordered_cases(self) -> List[CaseRecord]:
        # tri stable : l'ordre d'insertion départage les cas d'un même identifiant
        return sorted(self.cases, key=lambda case: case.id)

    @property
    def summary(self) -> Dict[str, int]:
        passed = sum(1 for case in self.cases if case.passed)
        return {"pass": passed, "fail": len(self.cases) - passed}

    @property
    def all_passed(self) -> bool:
        return all(case.passed for case in self.cases)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "version": self.version,
            "config": self.config,
            "cases": [case.to_dict() for case in self.ordered_cases],
            "summary": self.summary,
        }


def _format_float(value: float) -> Optional[str]:
    return format(value, ".17g") if math.isfinite(value) else None


def _encode(value: Any) -> Any:
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return value
    if isinstance(value, (float, np.floating)):
        text = _format_float(float(value))
        return orjson.Fragment(text) if text is not None else None
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, dict):
        return {str(k): _encode(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_encode(v) for v in value]
    if hasattr(value, "to_dict"):
        return _encode(value.to_dict())
    return str(value)


def _csv_field(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return _format_float(value) or ""
    return str(value)


def emit(report: Report, fmt: str = "json") -> bytes:
    """
    Sérialise le rapport.

    Raises:
        ValueError: Format inconnu
    """
    if fmt == "json":
        return orjson.dumps(_encode(report.to_dict()), option=orjson.OPT_APPEND_NEWLINE)
    if fmt == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for case in report.ordered_cases:
            record = case.to_dict()
            writer.writerow([_csv_field(record[column]) for column in CSV_HEADER])
        return buffer.getvalue().encode("utf-8")
    raise ValueError(f"Format de rapport inconnu: {fmt}")


def write_report(report: Report, fmt: str = "json", out: Optional[Union[str, Path]] = None) -> bytes:
    """
    Écrit le rapport dans `out`, ou sur la sortie standard si `out` est absent.

    Raises:
        ReportWriteError: Chemin de sortie non inscriptible
    """
    payload = emit(report, fmt)
    if out is None:
        sys.stdout.buffer.write(payload)
        sys.stdout.flush()
        return payload
    try:
        target = Path(out)
        target.write_bytes(payload)
    except OSError as e:
        raise ReportWriteError(f"Impossible d'écrire le rapport dans {out}: {e}") from e
    logger.info(f"Rapport écrit dans {target} ({report.summary['pass']} succès, {report.summary['fail']} échecs)")
    return payload
