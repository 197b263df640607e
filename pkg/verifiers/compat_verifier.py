"""
Tests de compatibilité : l'évolution numérique préserve-t-elle h = 0 ?
"""
import logging
from typing import Any, Dict, Iterable, List, Mapping, Optional

from engine.catalog import ConstraintEntry, instantiate
from engine.errors import PreconditionError
from engine.expr import parse
from engine.pde import DRIFT_HORIZON, DriftReport, Grid, constraint_drift
from utils.report import FAIL, PASS, CaseRecord

from .base_verifier import BaseVerifier

logger = logging.getLogger(__name__)

DEFAULT_NODES = 401


class CompatVerifier(BaseVerifier):
    """Dérive de la contrainte le long d'une évolution par la méthode des lignes."""

    kind = "compat"

    def __init__(self, settings, catalog=None, nodes: int = DEFAULT_NODES):
        super().__init__("Compat", settings, catalog)
        self.nodes = nodes

    def _grid(self, block: Mapping[str, Any]) -> Grid:
        x_min, x_max = block.get("x", (-1.0, 1.0))
        return Grid(float(x_min), float(x_max), self.nodes, t0=0.0, t1=DRIFT_HORIZON)

    def _drift_record(self, case_id: str, kind: str, entry: ConstraintEntry, params, drift: DriftReport, expect_pass: bool) -> CaseRecord:
        peak = max(drift.norms) if drift.norms else None
        ok = drift.passed if expect_pass else not drift.passed
        details = drift.to_dict()
        details["nodes"] = self.nodes
        return CaseRecord(
            id=case_id,
            kind=kind,
            provenance=entry.provenance,
            params=dict(params),
            max_abs=peak,
            rms=None,
            status=PASS if ok else FAIL,
            details=details,
        )

    def verify_entry(self, entry: ConstraintEntry) -> List[CaseRecord]:
        block = entry.drift
        params: Dict[str, Any] = dict(block.get("params", {}))
        records = []
        try:
            instance = instantiate(entry.id, params, self.catalog)
            reference = instantiate(block["solution"], block.get("solution_params"), self.catalog).expression
            h = instance.corrected_h if instance.corrected_h is not None else instance.h
            grid = self._grid(block)
            drift = constraint_drift(instance.equation, h, reference, grid, reference=reference)
            records.append(self._drift_record(entry.id, "compat", entry, params, drift, expect_pass=True))
        except Exception as e:
            return [self.failure(entry.id, e, provenance=entry.provenance, params=params)]

        control = block.get("control")
        if control is not None:
            # h incompatible : la dérive doit dépasser le seuil
            try:
                drift = constraint_drift(instance.equation, parse(control["h"]), parse(control["initial"]), grid)
                records.append(self._drift_record(entry.id, "compat-control", entry, params, drift, expect_pass=False))
            except Exception as e:
                records.append(self.failure(entry.id, e, kind="compat-control", provenance=entry.provenance, params=params))
        return records

    def run(self, entries: Optional[Iterable[str]] = None, nodes: Optional[int] = None, **kwargs) -> List[CaseRecord]:
        if nodes is not None:
            self.nodes = nodes
        available = [entry.id for entry in self.catalog.constraints if entry.drift]
        if entries:
            constraints = {entry.id: entry for entry in self.catalog.constraints}
            for entry_id in entries:
                if entry_id in constraints and not constraints[entry_id].drift:
                    raise self.wrap_error(
                        PreconditionError(f"{entry_id}: aucune donnée de dérive dans le catalogue"), entry_id
                    )
        ids = self.select(entries, available)
        logger.info(f"Tests de compatibilité: {len(ids)} entrée(s) sur {self.nodes} nœuds")
        records: List[CaseRecord] = []
        for entry_id in ids:
            records.extend(self.verify_entry(self.catalog.constraint(entry_id)))
        return records
