"""
Réductions : représentation → intégration des coefficients → solution
reconstruite, puis contrôles (équation, contrainte, solution de référence).
"""
import logging
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

from engine.catalog import instantiate
from engine.lde import Sampler
from engine.reduce import (
    ORACLE_TOLERANCE,
    AssembledSolution,
    Representation,
    assemble_solution,
    identity_48_check,
    integrate_representation,
    liouville_pipeline,
    orthogonality_pipeline,
    ratio_drift,
    representation_for,
)
from utils.report import FAIL, PASS, CaseRecord

from .base_verifier import BaseVerifier

logger = logging.getLogger(__name__)

FIRST_INTEGRAL_TOLERANCE = 1e-8
FIRST_INTEGRALS = {"rep-22": ("b", "c")}
IDENTITY_CHECKS = ("rep-48",)

LIOUVILLE_DEFAULTS = {"s": 1.0, "m": 1.0, "k": 0.5, "c1": 1.0, "c2": 0.0, "c3": 0.0}
LIOUVILLE_X_INITIAL = (0.5, 1.0, 0.0)
LIOUVILLE_X_RANGE = (0.0, 0.5)

ORTHOGONALITY_DEFAULTS = {"m": 1.0, "r": -0.5, "a0": 1.0, "a1": 0.5, "a2": 0.2, "a3": 0.1, "x0": 1.0, "t0": 0.5}

SPECIAL_KEYS = ("liouville", "orthogonality")


class ReductionRunner(BaseVerifier):
    kind = "reduce"

    def __init__(self, settings, catalog=None):
        super().__init__("Reduction", settings, catalog)

    def _oracle_expression(self, rep: Representation):
        family = self.catalog.solution(rep.oracle)
        shared = {name: rep.params[name] for name in family.params if name in rep.params}
        return instantiate(family.id, shared, self.catalog).expression

    def check_assembled(self, rep: Representation, solution: AssembledSolution) -> List[CaseRecord]:
        """Résidu de l'équation, contrainte h et écart à la solution de référence."""
        params = dict(rep.params)
        checks = []
        if rep.dim == 2 or rep.equation is not None:
            checks.append(("reduce-pde", lambda: solution.pde_report()))
        if rep.h is not None:
            checks.append(("reduce-constraint", lambda: solution.constraint_report()))
        if rep.oracle is not None:
            checks.append(
                ("reduce-oracle", lambda: solution.oracle_report(self._oracle_expression(rep), tolerance=ORACLE_TOLERANCE))
            )

        records = []
        for kind, compute in checks:
            try:
                report = compute()
                records.append(self.record(rep.id, report, kind=kind, provenance=rep.provenance, params=params))
            except Exception as e:
                records.append(self.failure(rep.id, e, kind=kind, provenance=rep.provenance, params=params))
        return records

    def _first_integral(self, rep: Representation, trajectory) -> CaseRecord:
        numerator, denominator = FIRST_INTEGRALS[rep.id]
        drift = ratio_drift(trajectory, numerator, denominator)
        return CaseRecord(
            id=rep.id,
            kind="reduce-first-integral",
            provenance=rep.provenance,
            params=dict(rep.params),
            max_abs=drift,
            rms=None,
            status=PASS if drift <= FIRST_INTEGRAL_TOLERANCE else FAIL,
            details={"ratio": f"{numerator}/{denominator}", "tolerance": FIRST_INTEGRAL_TOLERANCE},
        )

    def _identity(self, rep: Representation) -> CaseRecord:
        sampler = Sampler(seed=self.settings.seed, count=self.settings.samples, tolerance=1e-10, case_id=f"{rep.id}:identite")
        report = identity_48_check(rep.params["m"], rep.initial["a"], rep.initial["b"], sampler)
        return self.record(rep.id, report, kind="reduce-identity", provenance=rep.provenance, params=dict(rep.params))

    def reduce(
        self,
        key: str,
        step: float,
        t1: Optional[float] = None,
        params: Optional[Mapping[str, float]] = None,
        trajectory_out: Optional[Union[str, Path]] = None,
    ) -> List[CaseRecord]:
        """
        Raises:
            VerificationError: Identifiant inconnu, non réductible ou paramètres inadmissibles
        """
        try:
            rep = representation_for(key, params, self.catalog)
        except Exception as e:
            raise self.wrap_error(e, key) from e
        logger.info(f"Réduction de {key} par {rep.id} (axe {rep.axis}, pas {step})")

        try:
            trajectory = integrate_representation(rep, step, t1)
        except Exception as e:
            return [self.failure(rep.id, e, kind="reduce-integration", provenance=rep.provenance, params=dict(rep.params))]
        if trajectory_out is not None:
            trajectory.to_csv(trajectory_out)
        if trajectory.blow_up:
            logger.warning(f"{rep.id}: trajectoire tronquée en {rep.axis} = {trajectory.times[-1]:.6g}")

        records = self.check_assembled(rep, assemble_solution(rep, trajectory))
        if rep.id in FIRST_INTEGRALS:
            records.append(self._first_integral(rep, trajectory))
        if rep.id in IDENTITY_CHECKS:
            records.append(self._identity(rep))
        for record in records:
            record.details.setdefault("step", trajectory.step)
            record.details.setdefault("end", float(trajectory.times[-1]))
            record.details.setdefault("blow_up", trajectory.blow_up)
        return records

    def liouville(self, step: float, params: Optional[Mapping[str, float]] = None) -> List[CaseRecord]:
        values: Dict[str, float] = {**LIOUVILLE_DEFAULTS, **(params or {})}
        try:
            solution = liouville_pipeline(
                values, LIOUVILLE_X_INITIAL, LIOUVILLE_X_RANGE, step=step, tolerance=self.settings.tolerance
            )
        except Exception as e:
            return [self.failure("liouville", e, kind="liouville", params=values)]
        details = {"blow_up": solution.blow_up, "step": step}
        return [
            self.record("liouville", solution.t_report, kind="liouville-t", params=values, details=details),
            self.record("liouville", solution.residual, kind="liouville", params=values, details=details),
        ]

    def orthogonality(self, step: float, params: Optional[Mapping[str, float]] = None) -> List[CaseRecord]:
        values: Dict[str, float] = {**ORTHOGONALITY_DEFAULTS, **(params or {})}
        coefficients = [values[name] for name in ("a0", "a1", "a2", "a3")]
        try:
            diagnostic, consistency = orthogonality_pipeline(
                {"m": values["m"], "r": values["r"]}, coefficients, values["x0"], values["t0"], step=step
            )
        except Exception as e:
            return [self.failure("orthogonality", e, kind="orthogonality", params=values)]
        return [
            self.record("orthogonality", diagnostic, kind="orthogonality", params=values, details={"diagnostic": True}),
            self.record("orthogonality", consistency, kind="orthogonality-cubic", params=values),
        ]

    def run(
        self,
        constraint: str = "",
        step: float = 1e-3,
        t1: Optional[float] = None,
        params: Optional[Mapping[str, Any]] = None,
        trajectory_out: Optional[Union[str, Path]] = None,
        **kwargs,
    ) -> List[CaseRecord]:
        params = {name: float(value) for name, value in (params or {}).items()}
        if constraint == "liouville":
            return self.liouville(step, params)
        if constraint == "orthogonality":
            return self.orthogonality(step, params)
        return self.reduce(constraint, step, t1, params, trajectory_out)
