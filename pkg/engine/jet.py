"""
Dérivées totales D_x et D_t sur l'espace des jets d'une équation d'évolution.

Les dérivées en t des jets sont éliminées par prolongement :
D_t(u_k) = D_x^k(F) sur les solutions de u_t = F.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from .errors import JetCapError, PreconditionError
from .expr import (
    JET_CAP,
    Binary,
    Expression,
    Var,
    as_expression,
    differentiate,
    jet_name,
    max_jet_index,
    parameters_of,
    simplify_basic,
)

logger = logging.getLogger(__name__)

# Domaines d'échantillonnage de l'espace des jets
U0_RANGE = (0.5, 2.0)
JET_RANGE = (-2.0, 2.0)
T_RANGE = (0.0, 1.0)
X_RANGE = (-1.0, 1.0)


@dataclass(frozen=True)
class EvolutionEquation:
    """Équation u_t = F(t, x, u, u1, …, un)."""

    rhs: Expression
    order: int
    parameters: Tuple[str, ...] = ()

    def __post_init__(self):
        highest = max_jet_index(self.rhs)
        if "ut" in self.rhs.free_symbols:
            raise PreconditionError("Le second membre ne doit pas contenir u_t")
        if self.order < 1:
            raise PreconditionError(f"Ordre invalide: {self.order}")
        if highest != self.order:
            raise PreconditionError(
                f"L'ordre déclaré ({self.order}) diffère du plus haut jet ({highest})"
            )

    @classmethod
    def from_rhs(cls, rhs) -> "EvolutionEquation":
        """Construit l'équation en déduisant ordre et paramètres du second membre."""
        expression = as_expression(rhs)
        return cls(
            rhs=expression,
            order=max_jet_index(expression),
            parameters=tuple(sorted(parameters_of(expression))),
        )

    @property
    def is_autonomous_in_x(self) -> bool:
        return "x" not in self.rhs.free_symbols


def total_x_derivative(e: Expression, cap: int = JET_CAP) -> Expression:
    """
    D_x(e) = ∂e/∂x + Σ_{k<cap} u_{k+1}·∂e/∂u_k.

    Raises:
        JetCapError: Si le résultat exigerait un jet au-delà de u_cap
    """
    if cap > JET_CAP:
        raise JetCapError(f"Plafond {cap} au-delà de u{JET_CAP}")
    highest = max_jet_index(e)
    if highest >= cap:
        raise JetCapError(f"D_x de u{highest} exigerait u{highest + 1} (plafond u{cap})")
    result: Expression = differentiate(e, "x")
    for k in range(highest + 1):
        name = jet_name(k)
        if name in e.free_symbols:
            result = Binary("+", result, Binary("*", Var(jet_name(k + 1)), differentiate(e, name)))
    return simplify_basic(result)


@lru_cache(maxsize=256)
def prolong_rhs(eq: EvolutionEquation, k: int) -> Expression:
    """Retourne D_x^k(F) : l'évolution de u_k sur les solutions."""
    if k < 0:
        raise PreconditionError("k doit être positif ou nul")
    if eq.order + k > JET_CAP:
        raise JetCapError(f"Prolongement d'ordre {k} au-delà de u{JET_CAP} (ordre {eq.order})")
    if k == 0:
        return eq.rhs
    return total_x_derivative(prolong_rhs(eq, k - 1))


def total_t_derivative(e: Expression, eq: EvolutionEquation) -> Expression:
    """D_t(e) restreinte aux solutions : ∂e/∂t + Σ_k D_x^k(F)·∂e/∂u_k."""
    highest = max_jet_index(e)
    if highest + eq.order > JET_CAP:
        raise JetCapError(f"D_t de u{highest} exigerait u{highest + eq.order}")
    result: Expression = differentiate(e, "t")
    for k in range(highest + 1):
        name = jet_name(k)
        if name in e.free_symbols:
            result = Binary("+", result, Binary("*", prolong_rhs(eq, k), differentiate(e, name)))
    return simplify_basic(result)


def iterated_x_derivative(e: Expression, times: int) -> Expression:
    for _ in range(times):
        e = total_x_derivative(e)
    return e


@dataclass
class JetPoint:
    """Point de l'espace des jets : t, x, u0…uM et valeurs de paramètres."""

    t: float
    x: float
    jets: List[float]
    parameters: Dict[str, float] = field(default_factory=dict)

    def as_eval_point(self) -> Dict[str, float]:
        point = {"t": self.t, "x": self.x}
        point.update({jet_name(k): value for k, value in enumerate(self.jets)})
        point.update(self.parameters)
        return point


def jet_domain(max_order: int) -> Dict[str, Tuple[float, float]]:
    """Intervalles d'échantillonnage de t, x et des jets u0…u_max_order."""
    domain = {"t": T_RANGE, "x": X_RANGE, "u0": U0_RANGE}
    for k in range(1, max(max_order, 0) + 1):
        domain[jet_name(k)] = JET_RANGE
    return domain


def sample_domain(
    rng: np.random.Generator, domain: Mapping[str, Tuple[float, float]], count: int
) -> Dict[str, np.ndarray]:
    """Tire `count` valeurs uniformes par coordonnée, dans l'ordre du domaine."""
    return {name: rng.uniform(low, high, size=count) for name, (low, high) in domain.items()}


def sample_jet_arrays(rng: np.random.Generator, count: int, max_order: int) -> Dict[str, np.ndarray]:
    """Tire `count` points de jets (tableaux par coordonnée) dans les domaines sûrs."""
    return sample_domain(rng, jet_domain(max_order), count)


def sample_jet_points(
    rng: np.random.Generator,
    count: int,
    max_order: int,
    parameters: Optional[Mapping[str, float]] = None,
) -> List[JetPoint]:
    arrays = sample_jet_arrays(rng, count, max_order)
    points = []
    for i in range(count):
        jets = [float(arrays[jet_name(k)][i]) for k in range(max(max_order, 0) + 1)]
        points.append(JetPoint(float(arrays["t"][i]), float(arrays["x"][i]), jets, dict(parameters or {})))
    return points
