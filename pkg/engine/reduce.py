"""
Réduction aux EDO des coefficients : représentations, intégration RK4 à pas
fixe et reconstruction des solutions de l'équation d'évolution.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .catalog import Catalog, load_catalog
from .errors import (
    DomainError,
    InadmissibleParameterError,
    IntegrationError,
    PreconditionError,
    UnknownEntryError,
)
from .expr import (
    INDEPENDENT_VARIABLES,
    Expression,
    additive_terms,
    as_expression,
    compile_expression,
    differentiate,
    evaluate,
    jet_name,
    max_jet_index,
    parse,
    simplify_basic,
    substitute,
)
from .jet import EvolutionEquation
from .lde import (
    ResidualReport,
    Sampler,
    relative_residual,
    sampled_report,
    summarize_relative,
)

logger = logging.getLogger(__name__)

NODE_TOLERANCE = 1e-9
ORACLE_TOLERANCE = 1e-6
CONSTRAINT_TOLERANCE = 1e-7
T_CHECK_TOLERANCE = 1e-9


# ---------------------------------------------------------------------------
# Représentations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Representation:
    """Ansatz à coefficients fonctions d'une variable et système d'EDO associé."""

    id: str
    ansatz: Expression
    coefficients: Tuple[str, ...]
    system: Tuple[Expression, ...]
    axis: str = "t"
    h: Optional[Expression] = None
    equation: Optional[EvolutionEquation] = None
    initial: Dict[str, float] = field(default_factory=dict)
    span: Tuple[float, float] = (0.0, 1.0)
    window: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    params: Dict[str, float] = field(default_factory=dict)
    oracle: Optional[str] = None
    provenance: str = ""

    def __post_init__(self):
        if len(self.system) != len(self.coefficients):
            raise PreconditionError(
                f"{self.id}: {len(self.system)} équations pour {len(self.coefficients)} coefficients"
            )
        allowed = INDEPENDENT_VARIABLES | set(self.coefficients)
        extra = self.ansatz.free_symbols - allowed
        if extra:
            raise PreconditionError(f"{self.id}: symboles non liés dans l'ansatz: {', '.join(sorted(extra))}")
        for rhs in self.system:
            extra = rhs.free_symbols - allowed
            if extra:
                raise PreconditionError(
                    f"{self.id}: symboles non liés dans le système: {', '.join(sorted(extra))}"
                )

    @property
    def dim(self) -> int:
        return 2 if "y" in self.ansatz.free_symbols or "y" in self.window else 1

    @property
    def free_coordinates(self) -> Tuple[str, ...]:
        coordinates = ("t", "x", "y") if self.dim == 2 else ("t", "x")
        return tuple(c for c in coordinates if c != self.axis)


def _resolve_record(catalog: Catalog, key: str, params: Mapping[str, float]):
    candidates = [r for r in catalog.representations if r.id == key or key in r.aliases]
    if not candidates:
        try:
            catalog.get(key)
        except UnknownEntryError:
            raise UnknownEntryError(f"Identifiant inconnu: {key}") from None
        raise PreconditionError(f"{key} n'admet pas de représentation réductible dans le catalogue")
    for record in candidates:
        if record.applies({**record.params, **params}):
            return record
    conditions = "; ".join(
        f"{r.id}: " + ", ".join(f"{name} {op} {value}" for name, op, value in r.when) for r in candidates
    )
    raise InadmissibleParameterError(
        f"Aucune représentation de {key} ne s'applique aux paramètres donnés", constraint=conditions
    )


def representation_for(
    key: str,
    params: Optional[Mapping[str, float]] = None,
    catalog: Optional[Catalog] = None,
) -> Representation:
    """
    Retourne la représentation associée à une contrainte (identifiant ou alias).

    Pour un alias partagé (ex. "14"), la branche est choisie par les conditions
    `when` de chaque enregistrement (q != -1 : forme puissance, q = -1 :
    forme exponentielle).

    Raises:
        UnknownEntryError: Identifiant inconnu
        PreconditionError: Entrée connue mais non réductible
        InadmissibleParameterError: Aucune branche ne s'applique
    """
    catalog = catalog or load_catalog()
    params = {name: float(value) for name, value in (params or {}).items()}
    record = _resolve_record(catalog, key, params)
    values = {**record.params, **params}
    bindings = {name: value for name, value in values.items() if name not in record.coefficients}

    initial = {}
    for name in record.coefficients:
        try:
            initial[name] = evaluate(record.initial[name], values)
        except KeyError:
            raise PreconditionError(f"{record.id}: valeur initiale manquante pour {name}") from None
        except ArithmeticError as e:
            raise InadmissibleParameterError(
                f"{record.id}: valeur initiale de {name} hors domaine ({e})",
                constraint=f"{name}(0) fini",
            ) from e

    equation = None
    if record.rhs is not None:
        equation = EvolutionEquation.from_rhs(simplify_basic(substitute(record.rhs, bindings)))
    h = simplify_basic(substitute(record.h, bindings)) if record.h is not None else None
    representation = Representation(
        id=record.id,
        ansatz=simplify_basic(substitute(record.ansatz, bindings)),
        coefficients=record.coefficients,
        system=tuple(simplify_basic(substitute(e, bindings)) for e in record.system),
        axis=record.axis,
        h=h,
        equation=equation,
        initial=initial,
        span=record.span,
        window=dict(record.window),
        params=values,
        oracle=record.oracle,
        provenance=record.provenance,
    )
    logger.debug(f"Représentation {record.id} retenue pour {key}")
    return representation


def lie_derivative(e: Expression, rep: Representation) -> Expression:
    """Dérivée de `e` le long du flot des coefficients : ∂e/∂axe + Σ ∂e/∂c_i · c_i'."""
    result = differentiate(e, rep.axis)
    for name, rhs in zip(rep.coefficients, rep.system):
        if name in e.free_symbols:
            result = result + differentiate(e, name) * rhs
    return simplify_basic(result)


# ---------------------------------------------------------------------------
# Intégration
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    """Valeurs des coefficients sur une grille uniforme de l'axe d'intégration."""

    times: np.ndarray
    values: np.ndarray
    names: Tuple[str, ...]
    axis: str = "t"
    step: float = 0.0
    method: str = "rk4"
    blow_up: bool = False

    def __len__(self) -> int:
        return len(self.times)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def node_index(self, value: float) -> int:
        """
        Raises:
            PreconditionError: Si `value` n'est pas un nœud de la trajectoire
        """
        if len(self.times) == 0:
            raise PreconditionError("Trajectoire vide")
        index = int(round((value - self.times[0]) / self.step)) if self.step > 0 else 0
        if index < 0 or index >= len(self.times) or abs(self.times[index] - value) > NODE_TOLERANCE:
            raise PreconditionError(
                f"{self.axis} = {value} hors de la trajectoire "
                f"[{self.times[0]}, {self.times[-1]}] (pas {self.step})"
            )
        return index

    def state(self, index: int) -> Dict[str, float]:
        return {name: float(v) for name, v in zip(self.names, self.values[index])}

    def at(self, value: float) -> Dict[str, float]:
        return self.state(self.node_index(value))

    def to_csv(self, path: Optional[Union[str, Path]] = None) -> str:
        """Exporte une ligne par nœud : axe, puis les coefficients."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow([self.axis, *self.names])
        for time, row in zip(self.times, self.values):
            writer.writerow([format(float(time), ".17g"), *(format(float(v), ".17g") for v in row)])
        text = buffer.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def integrate_rk4(
    system: Sequence[Any],
    initial: Union[Sequence[float], Mapping[str, float]],
    t0: float,
    t1: float,
    step: float,
    names: Optional[Sequence[str]] = None,
    axis: str = "t",
    parameters: Optional[Mapping[str, float]] = None,
) -> Trajectory:
    """
    Intègre y' = F(axe, y) par Runge-Kutta classique d'ordre 4 à pas fixe.

    Le nombre de pas est ceil((t1 - t0) / step) ; le pas effectif est ajusté
    pour que la grille finisse exactement en t1. Un état non fini arrête
    l'intégration : la trajectoire est tronquée et marquée `blow_up`.

    Raises:
        IntegrationError: Pas non positif, t1 <= t0, état initial non fini
    """
    if not step > 0:
        raise IntegrationError(f"Pas d'intégration invalide: {step}")
    if not t1 > t0:
        raise IntegrationError(f"Intervalle vide: [{t0}, {t1}]")
    expressions = [as_expression(e) for e in system]
    if isinstance(initial, Mapping):
        names = tuple(names or initial.keys())
        y0 = [float(initial[name]) for name in names]
    else:
        y0 = [float(v) for v in initial]
        names = tuple(names or (f"y{i}" for i in range(len(y0))))
    if len(y0) != len(expressions) or len(names) != len(expressions):
        raise IntegrationError(f"{len(expressions)} équations pour {len(y0)} valeurs initiales")
    if not all(math.isfinite(v) for v in y0):
        raise IntegrationError(f"Valeurs initiales non finies: {y0}")

    count = max(1, math.ceil((t1 - t0) / step - 1e-9))
    h = (t1 - t0) / count
    program = compile_expression(*expressions)
    base = dict(parameters or {})

    def rhs(time: float, state: np.ndarray) -> np.ndarray:
        point = dict(base)
        point[axis] = time
        point.update(zip(names, state))
        return np.array(program.evaluate(point))

    times = [t0]
    values = [np.array(y0)]
    blow_up = False
    y = values[0]
    for i in range(count):
        time = t0 + i * h
        try:
            k1 = rhs(time, y)
            k2 = rhs(time + h / 2, y + h / 2 * k1)
            k3 = rhs(time + h / 2, y + h / 2 * k2)
            k4 = rhs(time + h, y + h * k3)
        except ArithmeticError as e:
            logger.warning(f"Explosion à {axis} = {time:.6g}: {e}")
            blow_up = True
            break
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            logger.warning(f"État non fini à {axis} = {t0 + (i + 1) * h:.6g}")
            blow_up = True
            break
        times.append(t0 + (i + 1) * h)
        values.append(y)
    return Trajectory(
        times=np.array(times),
        values=np.vstack(values),
        names=names,
        axis=axis,
        step=h,
        blow_up=blow_up,
    )


def integrate_representation(rep: Representation, step: float, t1: Optional[float] = None) -> Trajectory:
    """Intègre le système de `rep` depuis ses valeurs initiales sur son intervalle."""
    t0, default_end = rep.span
    return integrate_rk4(
        rep.system,
        rep.initial,
        t0,
        default_end if t1 is None else t1,
        step,
        names=rep.coefficients,
        axis=rep.axis,
    )


def ratio_drift(trajectory: Trajectory, numerator: str, denominator: str) -> float:
    """Écart relatif maximal du rapport numerator/denominator à sa valeur initiale."""
    ratio = trajectory.column(numerator) / trajectory.column(denominator)
    return float(np.max(np.abs(ratio - ratio[0])) / max(abs(ratio[0]), 1e-300))


# ---------------------------------------------------------------------------
# Solutions reconstruites
# ---------------------------------------------------------------------------

class AssembledSolution:
    """
    Solution u reconstruite à partir d'une trajectoire : dérivées exactes selon
    les coordonnées libres, dérivées selon l'axe par la règle de chaîne à
    travers le système d'EDO.
    """

    def __init__(self, rep: Representation, trajectory: Trajectory):
        if tuple(trajectory.names) != tuple(rep.coefficients):
            raise PreconditionError(
                f"Trajectoire ({', '.join(trajectory.names)}) incompatible avec {rep.id} "
                f"({', '.join(rep.coefficients)})"
            )
        self.representation = rep
        self.trajectory = trajectory
        self.jet_order = 2
        if rep.h is not None:
            self.jet_order = max(self.jet_order, max_jet_index(rep.h))
        if rep.equation is not None:
            self.jet_order = max(self.jet_order, rep.equation.order)

        u = rep.ansatz
        derivatives: Dict[str, Expression] = {"u": u}
        if rep.axis == "t":
            derivatives["u_t"] = lie_derivative(u, rep)
            jets = [u]
            for _ in range(self.jet_order):
                jets.append(simplify_basic(differentiate(jets[-1], "x")))
            if rep.dim == 2:
                derivatives["u_y"] = simplify_basic(differentiate(u, "y"))
                derivatives["u_yy"] = simplify_basic(differentiate(derivatives["u_y"], "y"))
        else:
            derivatives["u_t"] = simplify_basic(differentiate(u, "t"))
            jets = [u]
            for _ in range(self.jet_order):
                jets.append(lie_derivative(jets[-1], rep))
        derivatives["u_x"] = jets[1]
        derivatives["u_xx"] = jets[2]
        self._derivative_names = tuple(derivatives)
        self._jets = tuple(jets)
        self._program = compile_expression(*derivatives.values(), *jets)

    def node_index(self, node: float) -> int:
        return self.trajectory.node_index(node)

    def _point(self, index: int, coords: Mapping[str, Any]) -> Dict[str, Any]:
        point: Dict[str, Any] = dict(coords)
        point[self.representation.axis] = float(self.trajectory.times[index])
        point.update(self.trajectory.state(index))
        return point

    def _evaluate(self, node: float, coords: Mapping[str, Any]) -> Tuple[Dict[str, Any], List[np.ndarray]]:
        index = self.node_index(node)
        point = self._point(index, coords)
        values = self._program.evaluate_array(point)
        if not all(np.all(np.isfinite(v)) for v in values):
            raise DomainError(
                f"{self.representation.id}: base non positive ou valeur non finie en "
                f"{self.representation.axis} = {node}"
            )
        return point, values

    def evaluate(self, node: float, coords: Mapping[str, Any]) -> Dict[str, np.ndarray]:
        """
        Valeurs de u, u_t, u_x, u_xx (et u_y, u_yy en 2-D) au nœud `node`
        pour les coordonnées libres `coords` (scalaires ou tableaux).

        Raises:
            PreconditionError: Nœud hors de la trajectoire
            DomainError: Base non positive au point demandé
        """
        _, values = self._evaluate(node, coords)
        return dict(zip(self._derivative_names, values))

    def jets(self, node: float, coords: Mapping[str, Any]) -> Dict[str, np.ndarray]:
        """Valeurs des jets u0…u_ordre au nœud `node`."""
        _, values = self._evaluate(node, coords)
        offset = len(self._derivative_names)
        return {jet_name(k): values[offset + k] for k in range(len(self._jets))}

    def _grid(self, nodes: int, points: int):
        rep = self.representation
        count = len(self.trajectory)
        indices = np.unique(np.linspace(0, count - 1, min(nodes, count)).round().astype(int))
        axes = []
        for name in rep.free_coordinates:
            low, high = rep.window.get(name, (-1.0, 1.0))
            axes.append(np.linspace(low, high, points))
        mesh = np.meshgrid(*axes, indexing="ij")
        coords = {name: m.ravel() for name, m in zip(rep.free_coordinates, mesh)}
        return indices, coords

    def _collect(self, nodes: int, points: int, compute) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        indices, coords = self._grid(nodes, points)
        relatives, arrays = [], {name: [] for name in (self.representation.axis, *coords)}
        for index in indices:
            node = float(self.trajectory.times[index])
            relatives.append(compute(node, coords))
            arrays[self.representation.axis].append(np.full(len(next(iter(coords.values()))), node))
            for name, values in coords.items():
                arrays[name].append(values)
        return np.concatenate(relatives), {name: np.concatenate(v) for name, v in arrays.items()}

    def oracle_report(
        self,
        oracle: Expression,
        nodes: int = 20,
        points: int = 20,
        tolerance: float = ORACLE_TOLERANCE,
    ) -> ResidualReport:
        """Écart |u − oracle| / (1 + |oracle|) sur une grille nœuds × coordonnées."""
        program = compile_expression(as_expression(oracle))

        def compute(node, coords):
            u = self.evaluate(node, coords)["u"]
            point = dict(coords)
            point[self.representation.axis] = node
            exact = program.evaluate_array(point)[0]
            return np.abs(u - exact) / (1.0 + np.abs(exact))

        relative, arrays = self._collect(nodes, points, compute)
        return summarize_relative(relative, arrays, tolerance)

    def pde_report(self, nodes: int = 20, points: int = 20, tolerance: float = CONSTRAINT_TOLERANCE) -> ResidualReport:
        """Résidu de l'équation d'évolution (1-D) ou de v_t = v²Δ ln v (2-D) sur la grille."""
        rep = self.representation
        if rep.dim == 1 and rep.equation is None:
            raise PreconditionError(f"{rep.id}: pas d'équation d'évolution associée")
        if rep.dim == 1:
            rhs_program = compile_expression(rep.equation.rhs)

        def compute(node, coords):
            values = self.evaluate(node, coords)
            if rep.dim == 2:
                v = values["u"]
                laplacian_log = (values["u_xx"] + values["u_yy"]) / v - (values["u_x"] ** 2 + values["u_y"] ** 2) / v ** 2
                terms = [values["u_t"], v ** 2 * laplacian_log]
                return relative_residual(terms[0] - terms[1], terms)
            point = dict(coords)
            point[rep.axis] = node
            point.update(self.jets(node, coords))
            forcing = rhs_program.evaluate_array(point)[0]
            return relative_residual(values["u_t"] - forcing, [values["u_t"], forcing])

        relative, arrays = self._collect(nodes, points, compute)
        return summarize_relative(relative, arrays, tolerance)

    def constraint_report(self, nodes: int = 20, points: int = 20, tolerance: float = CONSTRAINT_TOLERANCE) -> ResidualReport:
        """Valeur relative de la contrainte h évaluée sur les jets reconstruits."""
        rep = self.representation
        if rep.h is None:
            raise PreconditionError(f"{rep.id}: aucune contrainte h associée")
        terms = [term for _, term in additive_terms(rep.h)]
        program = compile_expression(rep.h, *terms)

        def compute(node, coords):
            point = dict(coords)
            point[rep.axis] = node
            point.update(self.jets(node, coords))
            values = program.evaluate_array(point)
            return relative_residual(values[0], values[1:])

        relative, arrays = self._collect(nodes, points, compute)
        return summarize_relative(relative, arrays, tolerance)


def assemble_solution(rep: Representation, traj: Trajectory) -> AssembledSolution:
    return AssembledSolution(rep, traj)


def coefficient_residuals(
    rep: Representation,
    closed_forms: Mapping[str, Any],
    sampler: Sampler,
    interval: Optional[Tuple[float, float]] = None,
) -> ResidualReport:
    """
    Vérifie que des expressions explicites des coefficients (fonctions de l'axe)
    satisfont le système de `rep` : d c_i/d axe − F_i(c) = 0.
    """
    missing = [name for name in rep.coefficients if name not in closed_forms]
    if missing:
        raise PreconditionError(f"Formes explicites manquantes: {', '.join(missing)}")
    forms = {name: as_expression(closed_forms[name]) for name in rep.coefficients}
    reports = []
    for name, rhs in zip(rep.coefficients, rep.system):
        residual = simplify_basic(differentiate(forms[name], rep.axis) - substitute(rhs, forms))
        reports.append(sampled_report(residual, {rep.axis: interval or rep.span}, sampler))
    return max(reports, key=lambda r: r.max_abs)


def identity_48_check(
    m: float, a: float, b: float, sampler: Optional[Sampler] = None, interval: Tuple[float, float] = (0.0, 1.0)
) -> ResidualReport:
    """u = (a + b e^{mt/2})² vérifie u_tt = u_t²/(2u) + m u_t/2 à (a, b, m) fixés."""
    sampler = sampler or Sampler(tolerance=1e-10, case_id="identity-48")
    u = parse("(a+b*exp(m*t/2))^2")
    u_t = differentiate(u, "t")
    residual = simplify_basic(differentiate(u_t, "t") - u_t ** 2 / (2 * u) - parse("m") * u_t / 2)
    return sampled_report(residual, {"t": interval}, sampler, {"m": m, "a": a, "b": b})


# ---------------------------------------------------------------------------
# Chaîne de Liouville
# ---------------------------------------------------------------------------

LIOUVILLE_KEYS = ("s", "m", "k", "c1", "c2", "c3")


@dataclass
class LiouvilleSolution:
    """Solution échantillonnée u = s(T+X)²/(2T'X')·e^{mt/2} et ses contrôles."""

    parameters: Dict[str, float]
    times: np.ndarray
    trajectory: Trajectory
    u: np.ndarray
    t_report: ResidualReport
    residual: ResidualReport
    blow_up: bool = False

    @property
    def xs(self) -> np.ndarray:
        return self.trajectory.times


def _time_function(params: Mapping[str, float]) -> List[Expression]:
    tau = parse("m*t/4+c3")
    t_expr = simplify_basic(substitute(parse("c1*tanh(tau)+c2"), {"tau": tau}))
    t_expr = simplify_basic(substitute(t_expr, {k: params[k] for k in ("m", "c1", "c2", "c3")}))
    derivatives = [t_expr]
    for _ in range(3):
        derivatives.append(simplify_basic(differentiate(derivatives[-1], "t")))
    return derivatives


def liouville_t_check(
    params: Mapping[str, float], t_values: Sequence[float], tolerance: float = T_CHECK_TOLERANCE
) -> ResidualReport:
    """T = c1·tanh(mt/4 + c3) + c2 vérifie 2T'''T' − 3T''² + (m²/4)T'² = 0."""
    _, t1, t2, t3 = _time_function(params)
    m = params["m"]
    terms = [2 * t3 * t1, 3 * t2 ** 2, (m * m / 4) * t1 ** 2]
    program = compile_expression(terms[0] - terms[1] + terms[2], *terms)
    times = np.asarray(t_values, dtype=float)
    values = program.evaluate_array({"t": times})
    return summarize_relative(relative_residual(values[0], values[1:]), {"t": times}, tolerance)


def liouville_pipeline(
    params: Mapping[str, float],
    x_initial: Sequence[float],
    x_range: Tuple[float, float],
    t_values: Optional[Sequence[float]] = None,
    step: float = 1e-3,
    tolerance: float = 1e-8,
) -> LiouvilleSolution:
    """
    Construit u solution de u_t = (u^{-1/2}u_x)_x + mu − 2k√u par la
    représentation u = s(T+X)²/(2T'X')·e^{mt/2}.

    T est explicite ; X est intégré comme système (X, X', X'') avec
    X''' = (3/2)X''²/X' − 2kX' − σ√X'(c1 − c2 − X), σ = √(sm/(2c1))·e^{−c3}.

    Args:
        params: s, m, k, c1, c2, c3
        x_initial: (X, X', X'') au début de `x_range`
        x_range: intervalle d'intégration en x
        t_values: instants d'échantillonnage (défaut : 50 points sur [0, 0.5])
        step: pas RK4 en x

    Raises:
        PreconditionError: m = 0, c1·m <= 0, s <= 0, X' <= 0, T' <= 0 ou u <= 0
    """
    missing = [k for k in LIOUVILLE_KEYS if k not in params]
    if missing:
        raise PreconditionError(f"Paramètres manquants: {', '.join(missing)}")
    values = {k: float(params[k]) for k in LIOUVILLE_KEYS}
    s, m, k, c1, c2, c3 = (values[key] for key in LIOUVILLE_KEYS)
    if m == 0:
        raise PreconditionError("m doit être non nul")
    if c1 * m <= 0:
        raise PreconditionError("T' > 0 exige c1·m > 0")
    if s <= 0:
        raise PreconditionError("s·m/(2c1) doit être positif (s > 0)")
    x0, dx0, ddx0 = (float(v) for v in x_initial)
    if dx0 <= 0:
        raise PreconditionError("X' doit être strictement positif")

    times = np.asarray(t_values if t_values is not None else np.linspace(0.0, 0.5, 50), dtype=float)
    t_report = liouville_t_check(values, times)

    sigma = math.sqrt(s * m / (2 * c1)) * math.exp(-c3)
    third = parse("(3/2)*X2^2/X1-2*k*X1-sigma*X1^(1/2)*(c1-c2-X)")
    third = simplify_basic(substitute(third, {"k": k, "sigma": sigma, "c1": c1, "c2": c2}))
    trajectory = integrate_rk4(
        [parse("X1"), parse("X2"), third],
        {"X": x0, "X1": dx0, "X2": ddx0},
        x_range[0],
        x_range[1],
        step,
        axis="x",
    )
    x_values = trajectory.column("X")
    x_prime = trajectory.column("X1")
    x_second = trajectory.column("X2")
    if np.any(x_prime <= 0):
        raise PreconditionError("X' s'annule sur l'intervalle d'intégration")
    x_third = compile_expression(third).evaluate_array(
        {"X": x_values, "X1": x_prime, "X2": x_second}
    )[0]

    t_expr, t1_expr, t2_expr, _ = _time_function(values)
    t_program = compile_expression(t_expr, t1_expr, t2_expr)
    big_t, t_prime, t_second = (v[:, None] for v in t_program.evaluate_array({"t": times}))
    if np.any(t_prime <= 0):
        raise PreconditionError("T' doit être strictement positif")

    total = big_t + x_values[None, :]
    if np.any(total <= 0):
        raise PreconditionError("u doit rester positif : T + X s'annule sur la grille")
    growth = np.exp(m * times / 4)[:, None]
    u = s * total ** 2 / (2 * t_prime * x_prime[None, :]) * growth ** 2

    # A = √u, résidu 2A·A_t − 2A_xx − mA² + 2kA
    amplitude = math.sqrt(s / 2) * growth / np.sqrt(t_prime)
    a = amplitude * total / np.sqrt(x_prime)[None, :]
    p_second = (
        -0.5 * total * x_third[None, :] * x_prime[None, :] ** -1.5
        + 0.75 * total * x_second[None, :] ** 2 * x_prime[None, :] ** -2.5
    )
    a_xx = amplitude * p_second
    a_t = a * (m / 4 - t_second / (2 * t_prime) + t_prime / total)
    terms = [2 * a * a_t, 2 * a_xx, m * a ** 2, 2 * k * a]
    residual = terms[0] - terms[1] - terms[2] + terms[3]
    grid_t, grid_x = np.meshgrid(times, x_values, indexing="ij")
    report = summarize_relative(
        relative_residual(residual.ravel(), [term.ravel() for term in terms]),
        {"t": grid_t.ravel(), "x": grid_x.ravel()},
        tolerance,
    )
    if trajectory.blow_up:
        logger.warning("Intégration de X interrompue avant la fin de l'intervalle")
    return LiouvilleSolution(
        parameters=values,
        times=times,
        trajectory=trajectory,
        u=u,
        t_report=t_report,
        residual=report,
        blow_up=trajectory.blow_up,
    )


# ---------------------------------------------------------------------------
# Condition d'orthogonalité
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OrthogonalityOptions:
    """Variantes imprimées : −c1·X(x0) dans l'équation de T, double signe moins dans R."""

    printed_t_equation: bool = False
    printed_r_sign: bool = False


def _cubic(variable: str, coefficients: Sequence[float], signs: Sequence[int]) -> Expression:
    c0, c1, c2, c3 = (float(c) for c in coefficients)
    text = f"{signs[3] * c3}*{variable}^3+{signs[2] * c2}*{variable}^2+{signs[1] * c1}*{variable}+{c0}"
    return parse(text.replace("+-", "-"))


def _square_cube_root(cubic: Expression) -> Expression:
    return (cubic ** 2) ** parse("1/3")


def cubic_consistency(
    trajectory: Trajectory,
    coefficients: Sequence[float],
    tolerance: float = 1e-5,
    variable: str = "X",
) -> ResidualReport:
    """
    Compare la dérivée de l'échantillon RK4 (différences finies d'ordre 2)
    à (c3X³ + c2X² + c1X + c0)^{2/3} le long de la trajectoire.

    L'erreur de troncature des différences finies est en O(pas²) ;
    `orthogonality_pipeline` passe une tolérance max(1e-5, 10·pas²).

    Raises:
        PreconditionError: Moins de trois nœuds
    """
    if len(trajectory) < 3:
        raise PreconditionError("Au moins trois nœuds sont nécessaires")
    values = trajectory.column(variable)
    slope = np.gradient(values, trajectory.times, edge_order=2)
    flow = _square_cube_root(_cubic(variable, coefficients, (1, 1, 1, 1)))
    expected = compile_expression(flow).evaluate_array({variable: values})[0]
    return summarize_relative(
        relative_residual(slope - expected, [slope, expected]), {"x": trajectory.times}, tolerance
    )


def orthogonality_check(
    x_trajectory: Trajectory,
    t_trajectory: Trajectory,
    constants: Mapping[str, float],
    grid: int = 10,
    options: Optional["OrthogonalityOptions"] = None,
) -> ResidualReport:
    """
    Évalue C(T)X + D(X)T + B(X)T² + Q(T) + R(X) sur la grille produit (t, x).

    Diagnostic uniquement : la tolérance est infinie, le rapport donne les
    amplitudes relatives.

    Args:
        x_trajectory: X intégré depuis X' = (cubique)^{2/3} (`integrate_cubic_flow`)
        t_trajectory: T intégré depuis T' = A^{1/3}(cubique en T)^{2/3}
        constants: m, r (r < 0)
        options: variantes imprimées à appliquer
    """
    m, r = float(constants["m"]), float(constants["r"])
    if r >= 0:
        raise PreconditionError("√(−2/r) exige r < 0")
    x_values = x_trajectory.column("X")
    t_values = t_trajectory.column("T")
    x_flow = x_trajectory.column("X1")
    t_flow = t_trajectory.column("T1")
    if np.any(x_flow <= 0):
        raise PreconditionError("X' doit être strictement positif")
    if np.any(t_flow <= 0):
        raise PreconditionError("T' doit être strictement positif")

    xi = np.unique(np.linspace(0, len(x_values) - 1, grid).round().astype(int))
    ti = np.unique(np.linspace(0, len(t_values) - 1, grid).round().astype(int))
    X, X1, X2, X3 = (x_trajectory.column(n)[xi][None, :] for n in ("X", "X1", "X2", "X3"))
    T, T1, T2 = (t_trajectory.column(n)[ti][:, None] for n in ("T", "T1", "T2"))
    times = t_trajectory.times[ti][:, None]

    scale = math.sqrt(-2 / r) * np.exp(3 * m * times / 4)
    c = scale * (m * np.sqrt(T1) + 2 * T2 / np.sqrt(T1))
    b = X2 ** 2 * X1 ** -2.5 - 2 * X3 * X1 ** -1.5
    d = 2 * X * b + 8 * X2 / np.sqrt(X1)
    q = scale * (m * np.sqrt(T1) * T + 2 * T2 * T / np.sqrt(T1) - 4 * T1 ** 1.5)
    sign = 1.0 if options is not None and options.printed_r_sign else -1.0
    r_term = b * X ** 2 + 8 * X2 / np.sqrt(X1) * X + sign * 8 * X1 ** 1.5
    terms = [c * X, d * T, b * T ** 2, q + 0 * X, r_term + 0 * T]
    total = sum(terms)
    grid_t, grid_x = np.meshgrid(t_trajectory.times[ti], x_trajectory.times[xi], indexing="ij")
    report = summarize_relative(
        relative_residual(total.ravel(), [term.ravel() for term in terms]),
        {"t": grid_t.ravel(), "x": grid_x.ravel()},
        math.inf,
    )
    logger.info(f"Orthogonalité (diagnostic): max={report.max_abs:.3e} rms={report.rms:.3e}")
    return report


def integrate_cubic_flow(
    variable: str,
    coefficients: Sequence[float],
    initial: float,
    interval: Tuple[float, float],
    step: float,
    factor: float = 1.0,
    signs: Sequence[int] = (1, 1, 1, 1),
    frozen: Optional[Mapping[int, float]] = None,
) -> Trajectory:
    """
    Intègre V' = factor·(cubique en V)^{2/3} et ajoute les colonnes V1, V2, V3
    (dérivées exactes le long du flot).

    `frozen` remplace le monôme de degré donné par une constante (variante
    imprimée −c1·X(x0) de l'équation en T).

    Raises:
        PreconditionError: Si V' s'annule à l'instant initial
    """
    cubic = _cubic(variable, coefficients, signs)
    if frozen:
        for degree, value in frozen.items():
            c = float(coefficients[degree]) * signs[degree]
            monomial = c * parse(variable) ** degree
            cubic = simplify_basic(cubic - monomial + c * as_expression(float(value)) ** degree)
    flow = simplify_basic(as_expression(float(factor)) * _square_cube_root(cubic))
    try:
        start = evaluate(flow, {variable: float(initial)})
    except ArithmeticError as e:
        raise PreconditionError(f"{variable}' indéfini en {initial} (flot dégénéré): {e}") from e
    if not start > 0:
        raise PreconditionError(f"{variable}' doit être strictement positif (flot dégénéré)")
    second = simplify_basic(differentiate(flow, variable) * flow)
    third = simplify_basic(differentiate(second, variable) * flow)
    axis = "x" if variable == "X" else "t"
    base = integrate_rk4([flow], [initial], interval[0], interval[1], step, names=[variable], axis=axis)
    program = compile_expression(flow, second, third)
    derived = program.evaluate_array({variable: base.column(variable)})
    return Trajectory(
        times=base.times,
        values=np.column_stack([base.column(variable), *derived]),
        names=(variable, f"{variable}1", f"{variable}2", f"{variable}3"),
        axis=axis,
        step=base.step,
        blow_up=base.blow_up,
    )


def orthogonality_pipeline(
    constants: Mapping[str, float],
    coefficients: Sequence[float],
    x_initial: float,
    t_initial: float,
    x_range: Tuple[float, float] = (0.0, 0.5),
    t_range: Tuple[float, float] = (0.0, 0.5),
    step: float = 1e-3,
    options: OrthogonalityOptions = OrthogonalityOptions(),
) -> Tuple[ResidualReport, ResidualReport]:
    """
    Intègre X et T depuis leurs équations cubiques puis évalue la condition
    d'orthogonalité. Retourne (rapport diagnostique, cohérence cubique de X).
    """
    r = float(constants["r"])
    a_factor = np.cbrt(-2.0 * r)
    x_traj = integrate_cubic_flow("X", coefficients, x_initial, x_range, step)
    frozen = {1: x_initial} if options.printed_t_equation else None
    t_traj = integrate_cubic_flow(
        "T",
        coefficients,
        t_initial,
        t_range,
        step,
        factor=float(np.cbrt(a_factor)),
        signs=(1, -1, 1, -1),
        frozen=frozen,
    )
    report = orthogonality_check(x_traj, t_traj, constants, options=options)
    return report, cubic_consistency(x_traj, coefficients, tolerance=max(1e-5, 10 * x_traj.step ** 2))
