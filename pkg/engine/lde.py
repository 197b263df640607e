"""
Équation déterminante linéaire : construction du résidu, test d'identité
sur l'espace des jets, ajustement des coefficients b et relations de branche.
"""
from __future__ import annotations

import logging
import math
import zlib
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    DomainError,
    OrderMismatchError,
    PreconditionError,
    SingularSamplingError,
    UnboundSymbolError,
)
from .expr import (
    Binary,
    Const,
    Expression,
    Var,
    additive_terms,
    as_expression,
    compile_expression,
    differentiate,
    jet_name,
    max_jet_index,
    simplify_basic,
)
from .jet import (
    EvolutionEquation,
    jet_domain,
    sample_domain,
    total_t_derivative,
    total_x_derivative,
)

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-8
FIT_TOLERANCE = 1e-7
MAX_RETRIES = 10
FIT_UNKNOWNS = 4
RANK_CUTOFF = 1e-10


def make_rng(seed: int, case_id: str = "") -> np.random.Generator:
    """Générateur reproductible dérivé de la graine et de l'identifiant du cas."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(case_id.encode("utf-8"))]
    return np.random.default_rng(np.random.SeedSequence(entropy))


@dataclass(frozen=True)
class DeterminingSpec:
    """
    Coefficients de l'équation déterminante.

    Forme générale : ordre N et coefficients b_ik (0 ≤ k ≤ i ≤ N).
    Forme réduite (diffusion) : quadruplet (b1, b2, b3, b4).
    """

    order: int = 0
    coefficients: Tuple[Tuple[Tuple[int, int], float], ...] = ()
    reduced: Optional[Tuple[float, float, float, float]] = None

    @classmethod
    def general(cls, order: int, coefficients: Mapping[Tuple[int, int], float]) -> "DeterminingSpec":
        for (i, k) in coefficients:
            if not 0 <= k <= i <= order:
                raise PreconditionError(f"Indice b_{i}{k} hors de 0 ≤ k ≤ i ≤ {order}")
        return cls(order=order, coefficients=tuple(sorted(coefficients.items())))

    @classmethod
    def classical(cls, order: int) -> "DeterminingSpec":
        """Choix b_ik = δ_ik des symétries ponctuelles classiques."""
        return cls.general(order, {(i, i): 1.0 for i in range(order + 1)})

    @classmethod
    def diffusion(cls, b1: float, b2: float, b3: float, b4: float) -> "DeterminingSpec":
        return cls(order=2, reduced=(b1, b2, b3, b4))

    @property
    def is_reduced(self) -> bool:
        return self.reduced is not None

    def coefficient(self, i: int, k: int) -> float:
        return dict(self.coefficients).get((i, k), 0.0)

    def to_diffusion(self) -> "DeterminingSpec":
        """
        Réduit une forme générale d'ordre 2 au quadruplet de l'équation de
        diffusion : b1 = b10 + 2·b11, b2 = b3 = b20 + 2·b21 + b22, b4 = b22.
        """
        if self.is_reduced:
            return self
        if self.order != 2:
            raise OrderMismatchError(f"Réduction impossible pour l'ordre {self.order}")
        if self.coefficient(0, 0) != 1:
            raise PreconditionError("La forme réduite exige b00 = 1")
        b1 = self.coefficient(1, 0) + 2 * self.coefficient(1, 1)
        second_row = self.coefficient(2, 0) + 2 * self.coefficient(2, 1) + self.coefficient(2, 2)
        return DeterminingSpec.diffusion(b1, second_row, second_row, self.coefficient(2, 2))


@dataclass
class ResidualReport:
    """Bilan d'un résidu évalué en des points tirés aléatoirement."""

    num_samples: int
    max_abs: float
    rms: float
    tolerance: float
    passed: bool
    worst_point: Dict[str, float] = field(default_factory=dict)
    seed: int = 0
    retries: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "num_samples": self.num_samples,
            "max_abs": self.max_abs,
            "rms": self.rms,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "worst_point": dict(self.worst_point),
            "seed": self.seed,
            "retries": self.retries,
        }


@dataclass
class FitResult:
    """Coefficients (b1, b2, b3, b4) ajustés et validation a posteriori."""

    coefficients: Tuple[float, float, float, float]
    rank: int
    report: ResidualReport
    degenerate: bool
    residual: Optional[Expression] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "coefficients": list(self.coefficients),
            "rank": self.rank,
            "degenerate": self.degenerate,
            "report": self.report.to_dict(),
        }


@dataclass(frozen=True)
class Sampler:
    """Paramètres d'échantillonnage : graine, nombre de points, tolérance."""

    seed: int = 0
    count: int = 100
    tolerance: float = DEFAULT_TOLERANCE
    case_id: str = ""
    max_retries: int = MAX_RETRIES

    def rng(self, salt: str = "") -> np.random.Generator:
        return make_rng(self.seed, self.case_id + salt)


# ---------------------------------------------------------------------------
# Construction des résidus
# ---------------------------------------------------------------------------

def build_residual_general(h: Expression, eq: EvolutionEquation, spec: DeterminingSpec) -> Expression:
    """
    Résidu de l'équation déterminante générale :
    D_t(h) − Σ_i Σ_{k≤i} b_ik · D_x^{i−k}(F_{u_{N−k}}) · D_x^{N−i}(h).

    Raises:
        OrderMismatchError: Si l'ordre N de `spec` diffère de celui de l'équation
        JetCapError: Si une dérivée dépasse u9
    """
    if spec.is_reduced:
        raise PreconditionError("Forme générale attendue")
    if spec.order != eq.order:
        raise OrderMismatchError(f"Ordre du schéma {spec.order} ≠ ordre de l'équation {eq.order}")
    n = spec.order
    h_derivatives = [h]
    for _ in range(n):
        h_derivatives.append(total_x_derivative(h_derivatives[-1]))
    partials = [differentiate(eq.rhs, jet_name(n - k)) for k in range(n + 1)]

    result: Expression = total_t_derivative(h, eq)
    for (i, k), value in spec.coefficients:
        if value == 0:
            continue
        factor = partials[k]
        for _ in range(i - k):
            factor = total_x_derivative(factor)
        result = Binary("-", result, Binary("*", as_expression(value), Binary("*", factor, h_derivatives[n - i])))
    return simplify_basic(result)


def diffusion_equation(q: Any, f: Any) -> EvolutionEquation:
    """u_t = u^q·u2 + q·u^{q−1}·u1² + f(u), c'est-à-dire u_t = (u^q u_x)_x + f(u)."""
    q = _checked_q(q)
    u = Var("u0")
    rhs = u ** q * Var("u2") + q * u ** (q - 1) * Var("u1") ** 2 + as_expression(f)
    return EvolutionEquation.from_rhs(simplify_basic(rhs))


def _checked_q(q: Any) -> Expression:
    q = as_expression(q)
    if isinstance(q, Const) and q.value == 0:
        raise PreconditionError("q = 0 est exclu")
    return q


def diffusion_parts(h: Any, q: Any, f: Any) -> Tuple[Expression, List[Expression]]:
    """
    Décompose le résidu réduit en R0 − Σ b_j·A_j, affine en (b1, b2, b3, b4).

    Returns:
        (R0, [A1, A2, A3, A4])
    """
    h = as_expression(h)
    q = _checked_q(q)
    f = as_expression(f)
    eq = diffusion_equation(q, f)
    u, u1, u2 = Var("u0"), Var("u1"), Var("u2")
    dx_h = total_x_derivative(h)
    dxx_h = total_x_derivative(dx_h)
    r0 = total_t_derivative(h, eq) - u ** q * dxx_h
    columns = [
        q * u1 * u ** (q - 1) * dx_h,
        q * (q - 1) * u ** (q - 2) * u1 ** 2 * h,
        q * u ** (q - 1) * u2 * h,
        differentiate(f, "u0") * h,
    ]
    return simplify_basic(r0), [simplify_basic(column) for column in columns]


def build_residual_diffusion(h: Any, q: Any, f: Any, spec: DeterminingSpec) -> Expression:
    """
    Résidu de l'équation déterminante réduite pour u_t = (u^q u_x)_x + f(u).

    Raises:
        PreconditionError: Si q = 0
    """
    spec = spec.to_diffusion()
    r0, columns = diffusion_parts(h, q, f)
    result = r0
    for value, column in zip(spec.reduced, columns):
        if value != 0:
            result = Binary("-", result, Binary("*", as_expression(value), column))
    return simplify_basic(result)


# ---------------------------------------------------------------------------
# Test d'identité par évaluation aléatoire
# ---------------------------------------------------------------------------

def _draw_valid(
    program,
    domain: Mapping[str, Tuple[float, float]],
    count: int,
    rng: np.random.Generator,
    parameters: Mapping[str, float],
    max_retries: int,
) -> Tuple[Dict[str, np.ndarray], List[np.ndarray], int]:
    """
    Tire `count` points et réévalue ceux qui tombent hors du domaine de
    définition, au plus `max_retries` fois.
    """
    arrays = sample_domain(rng, domain, count)
    point: Dict[str, Any] = dict(parameters)
    point.update(arrays)
    values = program.evaluate_array(point)
    invalid = ~np.all(np.isfinite(np.vstack(values)), axis=0)
    retries = 0
    while invalid.any():
        if retries >= max_retries:
            raise DomainError(
                f"{int(invalid.sum())} point(s) hors domaine après {max_retries} tentatives"
            )
        retries += 1
        bad = int(invalid.sum())
        logger.warning(f"{bad} point(s) hors domaine, nouveau tirage ({retries}/{max_retries})")
        fresh = sample_domain(rng, domain, bad)
        for name in arrays:
            arrays[name][invalid] = fresh[name]
        point.update(arrays)
        values = program.evaluate_array(point)
        invalid = ~np.all(np.isfinite(np.vstack(values)), axis=0)
    return arrays, values, retries


def relative_residual(residual: np.ndarray, terms: Sequence[np.ndarray]) -> np.ndarray:
    """|r| / (1 + max|terme|), point par point."""
    residual = np.asarray(residual, dtype=float)
    if not len(terms):
        return np.abs(residual)
    scale = 1.0 + np.max(np.abs(np.vstack([np.ravel(t) for t in terms])), axis=0)
    return np.abs(np.ravel(residual)) / scale


def summarize_relative(
    relative: np.ndarray,
    arrays: Mapping[str, Any],
    tolerance: float,
    seed: int = 0,
    retries: int = 0,
) -> ResidualReport:
    """Construit le bilan (max, rms, pire point) d'un résidu relatif déjà évalué."""
    relative = np.ravel(np.asarray(relative, dtype=float))
    if relative.size == 0:
        raise PreconditionError("Aucun point évalué")
    if not np.all(np.isfinite(relative)):
        raise DomainError("Résidu non fini")
    worst = int(np.argmax(relative))
    max_abs = float(relative[worst])
    rms = float(math.sqrt(float(np.mean(relative ** 2))))
    worst_point = {
        name: float(np.ravel(np.broadcast_to(values, relative.shape))[worst])
        for name, values in arrays.items()
    }
    return ResidualReport(
        num_samples=int(relative.size),
        max_abs=max_abs,
        rms=min(rms, max_abs),
        tolerance=tolerance,
        passed=max_abs <= tolerance,
        worst_point=worst_point,
        seed=seed,
        retries=retries,
    )


def sampled_report(
    residual: Expression,
    domain: Mapping[str, Tuple[float, float]],
    sampler: Sampler,
    parameters: Optional[Mapping[str, float]] = None,
) -> ResidualReport:
    """
    Évalue le résidu relatif |r| / (1 + max|terme additif|) en `sampler.count`
    points tirés uniformément dans `domain`.
    """
    if sampler.count < 1:
        raise PreconditionError("Le nombre d'échantillons doit être ≥ 1")
    parameters = dict(parameters or {})
    unbound = residual.free_symbols - set(domain) - set(parameters)
    if unbound:
        raise UnboundSymbolError(f"Symboles non liés: {', '.join(sorted(unbound))}")

    terms = [term for _, term in additive_terms(residual)]
    program = compile_expression(residual, *terms)
    arrays, values, retries = _draw_valid(
        program, domain, sampler.count, sampler.rng(), parameters, sampler.max_retries
    )
    relative = relative_residual(values[0], values[1:])
    report = summarize_relative(relative, arrays, sampler.tolerance, seed=sampler.seed, retries=retries)
    logger.debug(f"Résidu {sampler.case_id or '-'}: max={report.max_abs:.3e} rms={report.rms:.3e}")
    return report


def check_identity(
    residual: Expression,
    sampler: Sampler,
    parameters: Optional[Mapping[str, float]] = None,
) -> ResidualReport:
    """Vérifie que `residual` s'annule identiquement sur l'espace des jets."""
    domain = jet_domain(max(max_jet_index(residual), 0))
    return sampled_report(residual, domain, sampler, parameters)


# ---------------------------------------------------------------------------
# Ajustement des coefficients b
# ---------------------------------------------------------------------------

def _numeric_rank(matrix: np.ndarray) -> int:
    singular = np.linalg.svd(matrix, compute_uv=False)
    if singular.size == 0 or singular[0] == 0:
        return 0
    return int(np.sum(singular > RANK_CUTOFF * singular[0]))


def fit_b_coefficients(
    h: Any,
    q: Any,
    f: Any,
    sampler: Optional[Sampler] = None,
    parameters: Optional[Mapping[str, float]] = None,
    points: Optional[Sequence[Mapping[str, float]]] = None,
) -> FitResult:
    """
    Ajuste (b1, b2, b3, b4) par moindres carrés : le résidu réduit est affine
    en ces coefficients. Valide ensuite sur des points frais.

    Args:
        points: Points de jets imposés (sinon 2 × 4 points tirés)

    Raises:
        PreconditionError: Si q = 0
        SingularSamplingError: Si les points fournis sont dégénérés
    """
    sampler = sampler or Sampler(tolerance=FIT_TOLERANCE)
    parameters = dict(parameters or {})
    r0, columns = diffusion_parts(h, q, f)
    program = compile_expression(r0, *columns)
    order = max(max_jet_index(r0), *(max_jet_index(c) for c in columns), 0)
    domain = jet_domain(order)

    if points is not None:
        distinct = {tuple(sorted(p.items())) for p in points}
        if len(distinct) < FIT_UNKNOWNS:
            raise SingularSamplingError(
                f"{len(distinct)} point(s) distinct(s) pour {FIT_UNKNOWNS} inconnues"
            )
        point: Dict[str, Any] = dict(parameters)
        for name in points[0]:
            point[name] = np.array([float(p[name]) for p in points])
        values = program.evaluate_array(point)
        if not np.all(np.isfinite(np.vstack(values))):
            raise DomainError("Point imposé hors du domaine de définition")
    else:
        _, values, _ = _draw_valid(
            program, domain, 2 * FIT_UNKNOWNS, sampler.rng(":fit"), parameters, sampler.max_retries
        )

    target = np.asarray(values[0], dtype=float)
    matrix = np.column_stack([np.asarray(v, dtype=float) for v in values[1:]])
    weights = 1.0 / (1.0 + np.max(np.abs(np.column_stack([target, matrix])), axis=1))
    target = target * weights
    matrix = matrix * weights[:, None]
    if not np.any(matrix):
        rank = 0
        solution = np.zeros(FIT_UNKNOWNS)
    else:
        solution, _, _, _ = np.linalg.lstsq(matrix, target, rcond=RANK_CUTOFF)
        rank = _numeric_rank(matrix)
    coefficients = tuple(float(b) for b in solution)

    spec = DeterminingSpec.diffusion(*coefficients)
    residual = build_residual_diffusion(h, q, f, spec)
    report = check_identity(residual, sampler, parameters)
    degenerate = rank < FIT_UNKNOWNS
    if degenerate:
        logger.info(f"Système d'ajustement dégénéré (rang {rank}/{FIT_UNKNOWNS}), solution de norme minimale")
    return FitResult(
        coefficients=coefficients,
        rank=rank,
        report=report,
        degenerate=degenerate,
        residual=residual,
    )


# ---------------------------------------------------------------------------
# Relations de branche sur (b2, b3)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BranchRoot:
    """Racine b3 de l'éliminant et coefficient b2 associé (None si indéfini)."""

    b3: Fraction
    b2: Optional[Fraction]
    consistent: bool

    @property
    def b2_undefined(self) -> bool:
        return self.b2 is None


def relation_residuals(q: Fraction, b2: Fraction, b3: Fraction) -> Tuple[Fraction, Fraction]:
    """Valeurs exactes des deux relations quadratiques liant b2, b3 et q."""
    first = 2 * b2 * q - 2 * b2 - b3 ** 2 * q + b3 * q + 4 * b3 - 6 * q
    second = 4 * b2 * q - 4 * b2 + b3 ** 2 * q - 4 * b3 * q + 2 * b3 - 9 * q + 6
    return first, second


def solve_b3_relations(q: Any) -> List[BranchRoot]:
    """
    Élimine b2 entre les deux relations : q·b3² − 2(q+1)·b3 + (q+2) = 0,
    de racines 1 et (q+2)/q. Pour q ≠ 1, b2 se déduit de la première
    relation ; pour q = 1, b2 disparaît des relations et reste indéfini.

    Raises:
        PreconditionError: Si q = 0
    """
    q = Fraction(str(q)) if isinstance(q, float) else Fraction(q)
    if q == 0:
        raise PreconditionError("q = 0 est exclu")
    roots = sorted({Fraction(1), (q + 2) / q})
    result = []
    for b3 in roots:
        if q == 1:
            b2 = None
            # b2 disparaît : les deux relations portent sur b3 seul
            first, second = relation_residuals(q, Fraction(0), b3)
        else:
            b2 = (b3 ** 2 * q - b3 * q - 4 * b3 + 6 * q) / (2 * (q - 1))
            first, second = relation_residuals(q, b2, b3)
        result.append(BranchRoot(b3=b3, b2=b2, consistent=first == 0 and second == 0))
    return result
