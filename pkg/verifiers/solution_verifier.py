"""
Vérification des familles de solutions exactes (forme vérifiée, forme
imprimée, image conforme).
"""
import logging
from typing import Iterable, List, Optional

from engine.catalog import SolutionFamily, SolutionInstance, instantiate
from engine.lde import ResidualReport
from engine.pde import conformal_image, residual_2d, residual_exact
from utils.report import CaseRecord

from .base_verifier import BaseVerifier

logger = logging.getLogger(__name__)


class SolutionVerifier(BaseVerifier):
    kind = "solution"

    def __init__(self, settings, catalog=None):
        super().__init__("Solutions", settings, catalog)

    def _residual(self, family: SolutionFamily, instance: SolutionInstance, case_id: str) -> ResidualReport:
        sampler = self.sampler(case_id)
        if family.dim == 1:
            return residual_exact(instance.expression, instance.equation, sampler, instance.window)
        return residual_2d(instance.expression, family.form, sampler, instance.window)

    def verify_family(self, family: SolutionFamily) -> List[CaseRecord]:
        records = []
        params = dict(family.params)
        try:
            instance = instantiate(family.id, catalog=self.catalog)
            verified = self.record(
                family.id,
                self._residual(family, instance, family.id),
                provenance=family.provenance,
                params=params,
                erratum=family.erratum,
                details={"form": "verified"},
            )
        except Exception as e:
            return [self.failure(family.id, e, provenance=family.provenance, params=params, erratum=family.erratum)]
        records.append(verified)

        if instance.printed is not None:
            printed_params = dict(family.printed.params)
            try:
                printed = self.record(
                    family.id,
                    self._residual(family, instance.printed, f"{family.id}:imprime"),
                    kind="solution-printed",
                    provenance=family.provenance,
                    params=printed_params,
                    erratum=family.erratum,
                    details={"form": "printed"},
                )
            except Exception as e:
                printed = self.failure(
                    family.id, e, kind="solution-printed", provenance=family.provenance,
                    params=printed_params, erratum=family.erratum,
                )
            printed.status = self.printed_status(printed, verified, family.erratum)
            if printed.status != "pass":
                logger.info(f"{family.id}: forme imprimée en échec (max {printed.max_abs}), erratum signalé")
            records.append(printed)

        if family.conformal is not None:
            records.append(self._conformal(family, params))
        return records

    def _conformal(self, family: SolutionFamily, params) -> CaseRecord:
        """Image conforme de la solution de base : ũ = u(Re A, Im A)·|A'|²."""
        case_id = family.id
        try:
            report = conformal_image(
                family.conformal.base,
                family.conformal.coefficients,
                self.sampler(f"{case_id}:conforme"),
                family.window,
                params,
            )
        except Exception as e:
            return self.failure(case_id, e, kind="solution-conformal", provenance=family.provenance, params=params)
        return self.record(
            case_id,
            report,
            kind="solution-conformal",
            provenance=family.provenance,
            params=params,
            details={"map": [[c.real, c.imag] for c in family.conformal.coefficients]},
        )

    def run(self, families: Optional[Iterable[str]] = None, **kwargs) -> List[CaseRecord]:
        ids = self.select(families, [family.id for family in self.catalog.solutions])
        logger.info(f"Vérification des solutions exactes: {len(ids)} famille(s)")
        records: List[CaseRecord] = []
        for family_id in ids:
            records.extend(self.verify_family(self.catalog.solution(family_id)))
        return records
