"""
Certification des solutions : résidus symboliques exacts, évolution par la
méthode des lignes pour les tests de dérive des contraintes, et contrôles
de l'équation de diffusion rapide en dimension 2.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DomainError, PreconditionError, StabilityError
from .expr import (
    Expression,
    Func,
    as_expression,
    compile_expression,
    differentiate,
    jet_name,
    max_jet_index,
    simplify_basic,
    substitute,
)
from .jet import EvolutionEquation
from .lde import ResidualReport, Sampler, sampled_report

logger = logging.getLogger(__name__)

DEFAULT_WINDOW = {"t": (0.0, 0.5), "x": (-1.0, 1.0), "y": (-1.0, 1.0)}
STABILITY_FACTOR = 0.2
AUTO_DT_FRACTION = 0.5
DRIFT_HORIZON = 0.1
DRIFT_FLOOR = 1e-4
DRIFT_FACTOR = 100.0
PRECONDITION_TOLERANCE = 1e-8
FORMS = ("v", "u")

Profile = Union[Expression, str, np.ndarray, Sequence[float]]


def _window(window: Optional[Mapping[str, Tuple[float, float]]], names: Sequence[str]) -> Dict[str, Tuple[float, float]]:
    window = dict(window or {})
    return {name: tuple(window.get(name, DEFAULT_WINDOW[name])) for name in names}


# ---------------------------------------------------------------------------
# Résidus exacts
# ---------------------------------------------------------------------------

def solution_residual(u: Expression, eq: EvolutionEquation) -> Expression:
    """u_t − F(t, x, u, u_x, …) avec toutes les dérivées prises symboliquement."""
    u = as_expression(u)
    jets: Dict[str, Expression] = {}
    current = u
    for k in range(eq.order + 1):
        jets[jet_name(k)] = current
        current = simplify_basic(differentiate(current, "x"))
    return simplify_basic(differentiate(u, "t") - substitute(eq.rhs, jets))


def residual_exact(
    u: Any,
    eq: EvolutionEquation,
    sampler: Sampler,
    window: Optional[Mapping[str, Tuple[float, float]]] = None,
    parameters: Optional[Mapping[str, float]] = None,
) -> ResidualReport:
    """
    Résidu relatif de u_t = F en des points (t, x) tirés dans la fenêtre.

    Raises:
        UnboundSymbolError: Symbole libre hors de {t, x} et des paramètres
        DomainError: Points hors domaine après rééchantillonnage
    """
    residual = solution_residual(as_expression(u), eq)
    return sampled_report(residual, _window(window, ("t", "x")), sampler, parameters)


def _laplacian_log(e: Expression) -> Expression:
    log_e = Func("ln", e)
    return differentiate(differentiate(log_e, "x"), "x") + differentiate(differentiate(log_e, "y"), "y")


def residual_2d_expression(e: Any, form: str) -> Expression:
    """v_t − v²Δ ln v (forme v) ou u_t − Δ ln u (forme u)."""
    if form not in FORMS:
        raise PreconditionError(f"Forme inconnue: {form} (attendu v ou u)")
    e = as_expression(e)
    laplacian = _laplacian_log(e)
    if form == "v":
        return simplify_basic(differentiate(e, "t") - e ** 2 * laplacian)
    return simplify_basic(differentiate(e, "t") - laplacian)


def _check_positive(e: Expression, domain, sampler: Sampler, parameters: Mapping[str, float]) -> None:
    rng = sampler.rng(":positivite")
    point: Dict[str, Any] = dict(parameters)
    point.update({name: rng.uniform(lo, hi, size=sampler.count) for name, (lo, hi) in domain.items()})
    values = compile_expression(e).evaluate_array(point)[0]
    if np.any(values <= 0):
        raise DomainError(f"Solution non positive sur la fenêtre (min {np.nanmin(values):.3e})")


def residual_2d(
    e: Any,
    form: str,
    sampler: Sampler,
    window: Optional[Mapping[str, Tuple[float, float]]] = None,
    parameters: Optional[Mapping[str, float]] = None,
) -> ResidualReport:
    """
    Résidu relatif de l'équation de diffusion rapide en (t, x, y).

    Raises:
        PreconditionError: Forme inconnue
        DomainError: v (ou u) non positive sur la fenêtre
    """
    e = as_expression(e)
    parameters = dict(parameters or {})
    domain = _window(window, ("t", "x", "y"))
    _check_positive(e, domain, sampler, parameters)
    return sampled_report(residual_2d_expression(e, form), domain, sampler, parameters)


def _complex_horner(coefficients: Sequence[complex]) -> Tuple[Expression, Expression]:
    x, y = as_expression("x"), as_expression("y")
    real: Expression = as_expression(0)
    imag: Expression = as_expression(0)
    for c in coefficients:
        c = complex(c)
        real, imag = (
            real * x - imag * y + as_expression(float(c.real)),
            real * y + imag * x + as_expression(float(c.imag)),
        )
    return simplify_basic(real), simplify_basic(imag)


def conformal_map(base: Any, coefficients: Sequence[complex]) -> Expression:
    """ũ(t, x, y) = u(t, Re A, Im A)·|A'(z)|² pour A polynomial (degré décroissant)."""
    coefficients = [complex(c) for c in coefficients]
    if not coefficients:
        raise PreconditionError("Polynôme A vide")
    derivative = np.polyder(np.array(coefficients, dtype=complex)) if len(coefficients) > 1 else np.array([0j])
    real, imag = _complex_horner(coefficients)
    d_real, d_imag = _complex_horner(list(derivative))
    image = substitute(as_expression(base), {"x": real, "y": imag})
    return simplify_basic(image * (d_real ** 2 + d_imag ** 2))


def conformal_image(
    base: Any,
    coefficients: Sequence[complex],
    sampler: Sampler,
    window: Optional[Mapping[str, Tuple[float, float]]] = None,
    parameters: Optional[Mapping[str, float]] = None,
) -> ResidualReport:
    """
    Résidu de u_t = Δ ln u pour l'image conforme de `base` par A.

    Raises:
        PreconditionError: A' nul (ou s'annulant) dans la fenêtre
    """
    coefficients = [complex(c) for c in coefficients]
    domain = _window(window, ("t", "x", "y"))
    derivative = np.polyder(np.array(coefficients, dtype=complex)) if len(coefficients) > 1 else np.array([0j])
    if np.all(np.abs(derivative) == 0):
        raise PreconditionError("A' est identiquement nul")
    (x_lo, x_hi), (y_lo, y_hi) = domain["x"], domain["y"]
    roots = np.roots(derivative) if len(derivative) > 1 else []
    for root in roots:
        if x_lo <= root.real <= x_hi and y_lo <= root.imag <= y_hi:
            raise PreconditionError(f"A' s'annule en z = {root:.6g}, dans la fenêtre")
    return residual_2d(conformal_map(base, coefficients), "u", sampler, domain, parameters)


# ---------------------------------------------------------------------------
# Méthode des lignes
# ---------------------------------------------------------------------------

@dataclass
class Grid:
    """Grille uniforme en x et fenêtre temporelle d'une évolution."""

    x_min: float
    x_max: float
    nx: int
    t0: float = 0.0
    t1: float = 0.1
    dt: Optional[float] = None

    def __post_init__(self):
        if self.nx < 5:
            raise PreconditionError("Au moins 5 nœuds sont nécessaires")
        if not self.x_max > self.x_min:
            raise PreconditionError(f"Intervalle en x vide: [{self.x_min}, {self.x_max}]")
        if not self.t1 > self.t0:
            raise PreconditionError(f"Fenêtre temporelle vide: [{self.t0}, {self.t1}]")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    def refined(self) -> "Grid":
        """Même fenêtre, pas en x divisé par deux."""
        return Grid(self.x_min, self.x_max, 2 * self.nx - 1, self.t0, self.t1, self.dt)


@dataclass
class FieldHistory:
    """Champs enregistrés au cours d'une évolution."""

    times: np.ndarray
    x: np.ndarray
    fields: np.ndarray
    dt: float
    boundary: str
    blow_up: bool = False

    @property
    def final(self) -> np.ndarray:
        return self.fields[-1]

    def to_csv(self, path: Optional[Union[str, Path]] = None) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["t", "x", "u"])
        for time, row in zip(self.times, self.fields):
            for x, u in zip(self.x, row):
                writer.writerow([format(float(time), ".17g"), format(float(x), ".17g"), format(float(u), ".17g")])
        text = buffer.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def profile_values(profile: Profile, x: np.ndarray, t: float = 0.0) -> np.ndarray:
    """Valeurs d'un profil initial (expression en x, éventuellement en t, ou tableau)."""
    if isinstance(profile, (Expression, str)):
        expression = as_expression(profile)
        values = compile_expression(expression).evaluate_array({"t": t, "x": x})[0]
    else:
        values = np.asarray(profile, dtype=float)
    if values.shape != x.shape:
        raise PreconditionError(f"Profil de taille {values.shape}, grille de taille {x.shape}")
    return values


def _finite_jets(u: np.ndarray, dx: float, reflective: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    if reflective:
        padded = np.concatenate(([u[1]], u, [u[-2]]))
    else:
        padded = np.concatenate(([2 * u[0] - u[1]], u, [2 * u[-1] - u[-2]]))
    u1 = (padded[2:] - padded[:-2]) / (2 * dx)
    u2 = (padded[2:] - 2 * u + padded[:-2]) / dx ** 2
    return u1, u2


def finite_difference_jets(u: np.ndarray, dx: float, order: int) -> Dict[str, np.ndarray]:
    """Jets u0…u_order par différences centrées, sur les nœuds intérieurs [2:-2]."""
    if order > 3:
        raise PreconditionError("Différences finies disponibles jusqu'à l'ordre 3")
    core = slice(2, len(u) - 2)
    jets = {"u0": u[core]}
    if order >= 1:
        jets["u1"] = (u[3:-1] - u[1:-3]) / (2 * dx)
    if order >= 2:
        jets["u2"] = (u[3:-1] - 2 * u[2:-2] + u[1:-3]) / dx ** 2
    if order >= 3:
        jets["u3"] = (u[4:] - 2 * u[3:-1] + 2 * u[1:-3] - u[:-4]) / (2 * dx ** 3)
    return jets


class _Stepper:
    """Second membre semi-discret et borne de stabilité d'une évolution."""

    def __init__(self, eq: EvolutionEquation, grid: Grid, reference: Optional[Expression]):
        if eq.order > 2:
            raise PreconditionError("La méthode des lignes est limitée aux équations d'ordre ≤ 2")
        self.x = grid.x
        self.dx = grid.dx
        self.rhs = compile_expression(eq.rhs)
        self.diffusivity = compile_expression(differentiate(eq.rhs, "u2")) if eq.order == 2 else None
        self.reference_t = None
        if reference is not None:
            self.reference_t = compile_expression(differentiate(as_expression(reference), "t"))
        self.ends = self.x[[0, -1]]

    @property
    def boundary(self) -> str:
        return "dirichlet" if self.reference_t is not None else "reflective"

    def __call__(self, t: float, u: np.ndarray) -> np.ndarray:
        u1, u2 = _finite_jets(u, self.dx)
        dudt = self.rhs.evaluate_array({"t": t, "x": self.x, "u0": u, "u1": u1, "u2": u2})[0]
        if self.reference_t is not None:
            dudt[[0, -1]] = self.reference_t.evaluate_array({"t": t, "x": self.ends})[0]
        return dudt

    def bound(self, t: float, u: np.ndarray) -> float:
        if self.diffusivity is None:
            return math.inf
        u1, u2 = _finite_jets(u, self.dx)
        d = self.diffusivity.evaluate_array({"t": t, "x": self.x, "u0": u, "u1": u1, "u2": u2})[0]
        peak = float(np.max(np.abs(d)))
        if not math.isfinite(peak):
            raise DomainError("Diffusivité non finie sur le champ courant")
        return math.inf if peak == 0 else STABILITY_FACTOR * self.dx ** 2 / peak


def mol_evolve(
    eq: EvolutionEquation,
    initial: Profile,
    grid: Grid,
    reference: Optional[Any] = None,
    dt: Optional[float] = None,
    n_records: int = 50,
) -> FieldHistory:
    """
    Évolue u_t = F par différences centrées en x et RK4 en t.

    Aux bords : valeurs de Dirichlet suivant `reference` (sa dérivée en t) si
    elle est fournie, nœuds fantômes réfléchissants (u_x = 0) sinon.

    Raises:
        StabilityError: Pas de temps au-delà de 0.2·Δx²/max|∂F/∂u2| (borne jointe)
        PreconditionError: Profil initial hors domaine de F
    """
    stepper = _Stepper(eq, grid, as_expression(reference) if reference is not None else None)
    u = profile_values(initial, grid.x, grid.t0).copy()
    if not np.all(np.isfinite(stepper(grid.t0, u))):
        raise PreconditionError("Le second membre n'est pas défini sur le profil initial (positivité)")

    requested = dt if dt is not None else grid.dt
    bound = stepper.bound(grid.t0, u)
    if requested is None:
        if math.isinf(bound):
            requested = (grid.t1 - grid.t0) / 100
        else:
            requested = AUTO_DT_FRACTION * bound
    if requested > bound:
        raise StabilityError(f"Pas {requested:.3e} au-delà de la borne de stabilité {bound:.3e}", required_dt=bound)
    steps = max(1, math.ceil((grid.t1 - grid.t0) / requested - 1e-9))
    h = (grid.t1 - grid.t0) / steps
    record_at = set(np.linspace(0, steps, max(2, n_records)).round().astype(int).tolist())

    times, fields = [grid.t0], [u.copy()]
    blow_up = False
    for i in range(steps):
        t = grid.t0 + i * h
        if i:
            bound = stepper.bound(t, u)
            if h > bound:
                raise StabilityError(
                    f"Pas {h:.3e} au-delà de la borne de stabilité {bound:.3e} à t = {t:.4g}",
                    required_dt=bound,
                )
        k1 = stepper(t, u)
        k2 = stepper(t + h / 2, u + h / 2 * k1)
        k3 = stepper(t + h / 2, u + h / 2 * k2)
        k4 = stepper(t + h, u + h * k3)
        u = u + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(u)):
            logger.warning(f"Explosion du champ à t = {t + h:.4g}")
            blow_up = True
            break
        if i + 1 in record_at:
            times.append(grid.t0 + (i + 1) * h)
            fields.append(u.copy())
    logger.debug(f"Évolution terminée: {steps} pas de {h:.3e}, bord {stepper.boundary}")
    return FieldHistory(
        times=np.array(times),
        x=grid.x,
        fields=np.vstack(fields),
        dt=h,
        boundary=stepper.boundary,
        blow_up=blow_up,
    )


# ---------------------------------------------------------------------------
# Dérive des contraintes
# ---------------------------------------------------------------------------

@dataclass
class DriftReport:
    """Évolution de ‖h‖∞ sur le champ calculé."""

    times: List[float]
    norms: List[float]
    initial: float
    growth: float
    passed: bool
    threshold: float
    blow_up: bool = False
    boundary: str = "reflective"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "times": list(self.times),
            "norms": list(self.norms),
            "initial": self.initial,
            "growth": self.growth,
            "threshold": self.threshold,
            "pass": self.passed,
            "blow_up": self.blow_up,
            "boundary": self.boundary,
        }


def _exact_constraint_norm(h: Expression, profile: Expression, x: np.ndarray, t: float) -> float:
    jets: Dict[str, Expression] = {}
    current = profile
    for k in range(max_jet_index(h) + 1):
        jets[jet_name(k)] = current
        current = simplify_basic(differentiate(current, "x"))
    values = compile_expression(substitute(h, jets)).evaluate_array({"t": t, "x": x})[0]
    return float(np.max(np.abs(values)))


def constraint_drift(
    eq: EvolutionEquation,
    h: Any,
    initial: Profile,
    grid: Grid,
    reference: Optional[Any] = None,
    dt: Optional[float] = None,
    horizon: float = DRIFT_HORIZON,
    check_initial: bool = True,
) -> DriftReport:
    """
    Évolue les données initiales et suit ‖h‖∞ (différences finies, nœuds
    intérieurs). Succès si ‖h‖∞ <= max(100 × valeur initiale, 1e-4) jusqu'à
    t0 + horizon.

    Raises:
        PreconditionError: h d'ordre > 3, ou données initiales ne vérifiant pas h = 0
    """
    h = as_expression(h)
    order = max_jet_index(h)
    if order > 3:
        raise PreconditionError(f"Contrainte d'ordre {order} > 3")
    if check_initial and isinstance(initial, (Expression, str)):
        norm = _exact_constraint_norm(h, as_expression(initial), grid.x, grid.t0)
        if not norm < PRECONDITION_TOLERANCE:
            raise PreconditionError(f"Les données initiales ne vérifient pas h = 0 (‖h‖∞ = {norm:.3e})")

    history = mol_evolve(eq, initial, grid, reference=reference, dt=dt)
    program = compile_expression(h)
    core = grid.x[2:-2]
    times, norms = [], []
    for time, u in zip(history.times, history.fields):
        if time > grid.t0 + horizon + 1e-12:
            break
        point: Dict[str, Any] = {"t": time, "x": core}
        point.update(finite_difference_jets(u, grid.dx, max(order, 0)))
        values = program.evaluate_array(point)[0]
        times.append(float(time))
        norms.append(float(np.max(np.abs(values))))
    initial_norm = norms[0]
    threshold = max(DRIFT_FACTOR * initial_norm, DRIFT_FLOOR)
    peak = max(norms)
    finite = all(math.isfinite(n) for n in norms)
    passed = finite and not history.blow_up and peak <= threshold
    growth = peak / initial_norm if initial_norm > 0 else (0.0 if peak == 0 else math.inf)
    logger.info(
        f"Dérive de h: initial {initial_norm:.3e}, maximum {peak:.3e}, seuil {threshold:.3e} "
        f"({'succès' if passed else 'échec'})"
    )
    return DriftReport(
        times=times,
        norms=norms,
        initial=initial_norm,
        growth=growth,
        passed=passed,
        threshold=threshold,
        blow_up=history.blow_up,
        boundary=history.boundary,
    )


def max_deviation(history: FieldHistory, reference: Any) -> float:
    """Écart maximal entre le champ final et une solution de référence."""
    exact = compile_expression(as_expression(reference)).evaluate_array(
        {"t": float(history.times[-1]), "x": history.x}
    )[0]
    return float(np.max(np.abs(history.final - exact)))
