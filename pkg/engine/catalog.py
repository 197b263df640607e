"""
Registre des familles de contraintes (q, f, h), des solutions exactes et
des représentations à coefficients dépendant du temps.

Les formules sont stockées dans la grammaire des expressions, un objet JSON
par ligne, dans trois fichiers du répertoire du catalogue.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
import orjson

from .errors import InadmissibleParameterError, PreconditionError, UnknownEntryError
from .expr import (
    INDEPENDENT_VARIABLES,
    Const,
    Expression,
    as_expression,
    evaluate,
    jet_index,
    parse,
    simplify_basic,
    substitute,
    to_string,
)
from .jet import EvolutionEquation
from .lde import diffusion_equation

logger = logging.getLogger(__name__)

DEFAULT_CATALOG_DIR = Path(__file__).parent / "data"
CONSTRAINTS_FILE = "constraints.jsonl"
SOLUTIONS_FILE = "solutions.jsonl"
REPRESENTATIONS_FILE = "representations.jsonl"

RULES = ("nonzero", "zero", "positive", "negative")
MATCH_TOLERANCE = 1e-12
MAX_DRAWS = 50

Number = Union[int, float, Fraction]


def exact_number(value: Any) -> Fraction:
    """Convertit une valeur (nombre, chaîne "p/q") en rationnel exact."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(str(value))


def _matches(value: Number, target: Fraction) -> bool:
    return abs(float(value) - float(target)) <= MATCH_TOLERANCE * max(1.0, abs(float(target)))


def _format_number(value: Fraction) -> str:
    return str(value.numerator) if value.denominator == 1 else f"{value.numerator}/{value.denominator}"


# ---------------------------------------------------------------------------
# Briques des entrées
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Admissibility:
    """Prédicat d'admissibilité : expression soumise à une règle de signe."""

    expr: Expression
    rule: str

    def __post_init__(self):
        if self.rule not in RULES:
            raise PreconditionError(f"Règle d'admissibilité inconnue: {self.rule}")

    @property
    def label(self) -> str:
        return f"{to_string(self.expr)} {self.rule}"

    def holds(self, values: Mapping[str, Number]) -> bool:
        try:
            value = evaluate(self.expr, {name: float(v) for name, v in values.items()})
        except ArithmeticError:
            return False
        if self.rule == "nonzero":
            return abs(value) > MATCH_TOLERANCE
        if self.rule == "zero":
            return abs(value) <= MATCH_TOLERANCE
        if self.rule == "positive":
            return value > 0
        return value < 0

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "Admissibility":
        return cls(expr=parse(record["expr"]), rule=record["rule"])

    def to_record(self) -> Dict[str, Any]:
        return {"expr": to_string(self.expr), "rule": self.rule}


@dataclass(frozen=True)
class ParameterRange:
    """Intervalle de tirage d'un paramètre, éventuellement conditionné par q."""

    low: float
    high: float
    when_q: Tuple[Fraction, ...] = ()
    otherwise: float = 0.0

    def active(self, q: Optional[Number]) -> bool:
        if not self.when_q:
            return True
        return q is not None and any(_matches(q, value) for value in self.when_q)

    @classmethod
    def from_record(cls, record: Any) -> "ParameterRange":
        if isinstance(record, Mapping):
            low, high = record["range"]
            return cls(
                low=float(low),
                high=float(high),
                when_q=tuple(exact_number(v) for v in record.get("when_q", ())),
                otherwise=float(record.get("otherwise", 0.0)),
            )
        low, high = record
        return cls(low=float(low), high=float(high))

    def to_record(self) -> Any:
        if not self.when_q:
            return [self.low, self.high]
        return {
            "range": [self.low, self.high],
            "when_q": [_format_number(v) for v in self.when_q],
            "otherwise": self.otherwise,
        }


@dataclass(frozen=True)
class QSpec:
    """Spécification de l'exposant q : valeur fixe, choix, ou intervalle libre."""

    value: Optional[Fraction] = None
    range: Optional[Tuple[float, float]] = None
    choices: Tuple[Fraction, ...] = ()
    exclude: Tuple[Fraction, ...] = ()

    def resolve(self, q: Optional[Number]) -> Fraction:
        """
        Valide q et retourne sa valeur exacte.

        Raises:
            InadmissibleParameterError: Si q viole la spécification
        """
        if q is None:
            if self.value is not None:
                return self.value
            raise InadmissibleParameterError("Paramètre q manquant", constraint="q requis")
        if self.value is not None:
            if not _matches(q, self.value):
                raise InadmissibleParameterError(
                    f"q = {q} alors que l'entrée exige q = {self.value}",
                    constraint=f"q = {_format_number(self.value)}",
                )
            return self.value
        for excluded in self.exclude:
            if _matches(q, excluded):
                raise InadmissibleParameterError(
                    f"q = {q} est exclu", constraint=f"q != {_format_number(excluded)}"
                )
        for choice in self.choices:
            if _matches(q, choice):
                return choice
        if self.range is None and self.choices:
            allowed = ", ".join(_format_number(c) for c in self.choices)
            raise InadmissibleParameterError(
                f"q = {q} hors des valeurs permises", constraint=f"q dans {{{allowed}}}"
            )
        return exact_number(q)

    def draw(self, rng: np.random.Generator) -> Fraction:
        if self.value is not None:
            return self.value
        options = len(self.choices) + (1 if self.range is not None else 0)
        index = int(rng.integers(options))
        if index < len(self.choices):
            return self.choices[index]
        for _ in range(MAX_DRAWS):
            q = exact_number(round(float(rng.uniform(*self.range)), 6))
            if not any(_matches(q, e) for e in self.exclude):
                return q
        raise InadmissibleParameterError("Aucun q admissible tiré", constraint="q")

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "QSpec":
        return cls(
            value=exact_number(record["value"]) if "value" in record else None,
            range=tuple(float(v) for v in record["range"]) if "range" in record else None,
            choices=tuple(exact_number(v) for v in record.get("choices", ())),
            exclude=tuple(exact_number(v) for v in record.get("exclude", ())),
        )

    def to_record(self) -> Dict[str, Any]:
        record: Dict[str, Any] = {}
        if self.value is not None:
            record["value"] = _format_number(self.value)
        if self.range is not None:
            record["range"] = list(self.range)
        if self.choices:
            record["choices"] = [_format_number(v) for v in self.choices]
        if self.exclude:
            record["exclude"] = [_format_number(v) for v in self.exclude]
        return record


@dataclass(frozen=True)
class ConstraintErratum:
    h: Expression
    note: str


@dataclass(frozen=True)
class ConstraintEntry:
    """Famille (q, f, h) : h solution de l'équation déterminante réduite."""

    id: str
    order: int
    q: QSpec
    f: Expression
    h: Expression
    params: Dict[str, ParameterRange] = field(default_factory=dict)
    admissible: Tuple[Admissibility, ...] = ()
    expected_b: Optional[Tuple[Expression, ...]] = None
    provenance: str = ""
    erratum: Optional[ConstraintErratum] = None
    drift: Optional[Dict[str, Any]] = None

    kind = "constraint"

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "ConstraintEntry":
        erratum = record.get("erratum")
        expected = record.get("expected_b")
        return cls(
            id=record["id"],
            order=int(record["order"]),
            q=QSpec.from_record(record["q"]),
            f=parse(record["f"]),
            h=parse(record["h"]),
            params={name: ParameterRange.from_record(v) for name, v in record.get("params", {}).items()},
            admissible=tuple(Admissibility.from_record(a) for a in record.get("admissible", ())),
            expected_b=tuple(parse(b) for b in expected) if expected else None,
            provenance=record.get("provenance", ""),
            erratum=ConstraintErratum(parse(erratum["h"]), erratum["note"]) if erratum else None,
            drift=record.get("drift"),
        )

    def to_record(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "kind": self.kind,
            "order": self.order,
            "q": self.q.to_record(),
            "f": to_string(self.f),
            "h": to_string(self.h),
            "params": {name: r.to_record() for name, r in self.params.items()},
            "admissible": [a.to_record() for a in self.admissible],
            "expected_b": [to_string(b) for b in self.expected_b] if self.expected_b else None,
            "provenance": self.provenance,
            "erratum": {"h": to_string(self.erratum.h), "note": self.erratum.note} if self.erratum else None,
            "drift": self.drift,
        }


@dataclass(frozen=True)
class PrintedForm:
    """Forme imprimée d'une solution et ses paramètres propres."""

    expression: Expression
    params: Dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ConformalSpec:
    """Solution de base et coefficients (complexes, degré décroissant) de A(z)."""

    base: Expression
    coefficients: Tuple[complex, ...]


@dataclass(frozen=True)
class SolutionFamily:
    """Solution exacte vérifiée, avec sa forme imprimée lorsqu'elle diffère."""

    id: str
    dim: int
    variable: str
    expression: Expression
    rhs: Optional[Expression] = None
    form: Optional[str] = None
    params: Dict[str, float] = field(default_factory=dict)
    window: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    printed: Optional[PrintedForm] = None
    conformal: Optional[ConformalSpec] = None
    provenance: str = ""
    erratum: Optional[str] = None

    kind = "solution"

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "SolutionFamily":
        pde = record["pde"]
        dim = int(pde["dim"])
        variable = "v" if "v" in record else "u"
        printed = record.get("printed")
        conformal = record.get("conformal")
        return cls(
            id=record["id"],
            dim=dim,
            variable=variable,
            expression=parse(record[variable]),
            rhs=parse(pde["rhs"]) if dim == 1 else None,
            form=pde.get("form") if dim == 2 else None,
            params={name: float(v) for name, v in record.get("params", {}).items()},
            window={name: (float(lo), float(hi)) for name, (lo, hi) in record.get("window", {}).items()},
            printed=PrintedForm(
                parse(printed[variable]),
                {name: float(v) for name, v in printed.get("params", {}).items()},
            ) if printed else None,
            conformal=ConformalSpec(
                parse(conformal["base"]),
                tuple(complex(re, im) for re, im in conformal["map"]),
            ) if conformal else None,
            provenance=record.get("provenance", ""),
            erratum=record.get("erratum"),
        )

    def to_record(self) -> Dict[str, Any]:
        pde: Dict[str, Any] = {"dim": self.dim}
        if self.dim == 1:
            pde["rhs"] = to_string(self.rhs)
        else:
            pde["form"] = self.form
        record: Dict[str, Any] = {
            "id": self.id,
            "kind": self.kind,
            "pde": pde,
            self.variable: to_string(self.expression),
            "params": dict(self.params),
            "window": {name: list(bounds) for name, bounds in self.window.items()},
            "printed": {
                self.variable: to_string(self.printed.expression),
                "params": dict(self.printed.params),
            } if self.printed else None,
        }
        if self.conformal:
            record["conformal"] = {
                "base": to_string(self.conformal.base),
                "map": [[c.real, c.imag] for c in self.conformal.coefficients],
            }
        record["provenance"] = self.provenance
        record["erratum"] = self.erratum
        return record


@dataclass(frozen=True)
class RepresentationRecord:
    """Ansatz, système d'EDO des coefficients et données initiales par défaut."""

    id: str
    aliases: Tuple[str, ...]
    axis: str
    coefficients: Tuple[str, ...]
    ansatz: Expression
    system: Tuple[Expression, ...]
    rhs: Optional[Expression] = None
    h: Optional[Expression] = None
    when: Tuple[Tuple[str, str, Fraction], ...] = ()
    params: Dict[str, float] = field(default_factory=dict)
    initial: Dict[str, Expression] = field(default_factory=dict)
    span: Tuple[float, float] = (0.0, 1.0)
    window: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    oracle: Optional[str] = None
    provenance: str = ""

    kind = "representation"

    def applies(self, params: Mapping[str, Number]) -> bool:
        for name, op, value in self.when:
            current = params.get(name, self.params.get(name))
            if current is None:
                return False
            equal = _matches(current, value)
            if (op == "equals") != equal:
                return False
        return True

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "RepresentationRecord":
        when = []
        for name, condition in (record.get("when") or {}).items():
            for op, value in condition.items():
                if op not in ("equals", "not"):
                    raise PreconditionError(f"Condition inconnue '{op}' dans {record['id']}")
                when.append((name, op, exact_number(value)))
        return cls(
            id=record["id"],
            aliases=tuple(record.get("aliases", ())),
            axis=record.get("axis", "t"),
            coefficients=tuple(record["coefficients"]),
            ansatz=parse(record["ansatz"]),
            system=tuple(parse(e) for e in record["system"]),
            rhs=parse(record["rhs"]) if record.get("rhs") else None,
            h=parse(record["h"]) if record.get("h") else None,
            when=tuple(when),
            params={name: float(v) for name, v in record.get("params", {}).items()},
            initial={name: parse(str(e)) for name, e in record.get("initial", {}).items()},
            span=tuple(float(v) for v in record.get("span", (0.0, 1.0))),
            window={name: (float(lo), float(hi)) for name, (lo, hi) in record.get("window", {}).items()},
            oracle=record.get("oracle"),
            provenance=record.get("provenance", ""),
        )

    def to_record(self) -> Dict[str, Any]:
        when: Dict[str, Dict[str, str]] = {}
        for name, op, value in self.when:
            when.setdefault(name, {})[op] = _format_number(value)
        return {
            "id": self.id,
            "kind": self.kind,
            "aliases": list(self.aliases),
            "when": when or None,
            "axis": self.axis,
            "coefficients": list(self.coefficients),
            "ansatz": to_string(self.ansatz),
            "system": [to_string(e) for e in self.system],
            "rhs": to_string(self.rhs) if self.rhs is not None else None,
            "h": to_string(self.h) if self.h is not None else None,
            "params": dict(self.params),
            "initial": {name: to_string(e) for name, e in self.initial.items()},
            "span": list(self.span),
            "window": {name: list(bounds) for name, bounds in self.window.items()},
            "oracle": self.oracle,
            "provenance": self.provenance,
        }


# ---------------------------------------------------------------------------
# Chargement et sérialisation
# ---------------------------------------------------------------------------

@dataclass
class Catalog:
    """Catalogue immuable après chargement."""

    constraints: List[ConstraintEntry]
    solutions: List[SolutionFamily]
    representations: List[RepresentationRecord]
    source: Optional[Path] = None

    def _find(self, entries, entry_id: str, label: str):
        for entry in entries:
            if entry.id == entry_id:
                return entry
        raise UnknownEntryError(f"{label} inconnue: {entry_id}")

    def constraint(self, entry_id: str) -> ConstraintEntry:
        return self._find(self.constraints, entry_id, "Contrainte")

    def solution(self, family_id: str) -> SolutionFamily:
        return self._find(self.solutions, family_id, "Famille de solutions")

    def representation(self, rep_id: str) -> RepresentationRecord:
        return self._find(self.representations, rep_id, "Représentation")

    def get(self, entry_id: str):
        for entries in (self.constraints, self.solutions, self.representations):
            for entry in entries:
                if entry.id == entry_id:
                    return entry
        raise UnknownEntryError(f"Identifiant inconnu: {entry_id}")

    def ids(self) -> List[str]:
        return [e.id for e in self.constraints] + [e.id for e in self.solutions] + [
            e.id for e in self.representations
        ]


def _read_records(path: Path) -> List[Dict[str, Any]]:
    records = []
    with open(path, "rb") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                records.append(orjson.loads(line))
            except orjson.JSONDecodeError as e:
                raise PreconditionError(f"{path}:{number}: JSON invalide ({e})") from e
    return records


def _write_records(path: Path, records: List[Dict[str, Any]]) -> None:
    with open(path, "wb") as handle:
        for record in records:
            handle.write(orjson.dumps(record) + b"\n")


def load_catalog(directory: Optional[Union[str, Path]] = None) -> Catalog:
    """
    Charge les trois fichiers du catalogue.

    Raises:
        PreconditionError: Répertoire ou fichier illisible, enregistrement invalide
    """
    return _load_cached(str(Path(directory or DEFAULT_CATALOG_DIR).resolve()))


@lru_cache(maxsize=8)
def _load_cached(directory: str) -> Catalog:
    root = Path(directory)
    if not root.is_dir():
        raise PreconditionError(f"Répertoire du catalogue introuvable: {root}")
    try:
        constraints = [ConstraintEntry.from_record(r) for r in _read_records(root / CONSTRAINTS_FILE)]
        solutions = [SolutionFamily.from_record(r) for r in _read_records(root / SOLUTIONS_FILE)]
        representations = [
            RepresentationRecord.from_record(r) for r in _read_records(root / REPRESENTATIONS_FILE)
        ]
    except (OSError, KeyError, TypeError, ValueError) as e:
        raise PreconditionError(f"Catalogue invalide dans {root}: {e}") from e
    logger.info(
        f"Catalogue chargé depuis {root}: {len(constraints)} contraintes, "
        f"{len(solutions)} solutions, {len(representations)} représentations"
    )
    return Catalog(constraints, solutions, representations, source=root)


def dump_catalog(catalog: Catalog, directory: Union[str, Path]) -> Path:
    """Écrit le catalogue dans `directory` (mêmes noms de fichiers)."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    _write_records(root / CONSTRAINTS_FILE, [e.to_record() for e in catalog.constraints])
    _write_records(root / SOLUTIONS_FILE, [e.to_record() for e in catalog.solutions])
    _write_records(root / REPRESENTATIONS_FILE, [e.to_record() for e in catalog.representations])
    return root


def list_constraints(catalog: Optional[Catalog] = None) -> List[ConstraintEntry]:
    return list((catalog or load_catalog()).constraints)


def list_solutions(catalog: Optional[Catalog] = None) -> List[SolutionFamily]:
    return list((catalog or load_catalog()).solutions)


def list_representations(catalog: Optional[Catalog] = None) -> List[RepresentationRecord]:
    return list((catalog or load_catalog()).representations)


# ---------------------------------------------------------------------------
# Instanciation
# ---------------------------------------------------------------------------

@dataclass
class ConstraintInstance:
    """Entrée de contrainte à paramètres numériques."""

    entry_id: str
    q: Fraction
    f: Expression
    h: Expression
    equation: EvolutionEquation
    params: Dict[str, Number]
    corrected_h: Optional[Expression] = None


@dataclass
class SolutionInstance:
    """Famille de solutions à paramètres numériques."""

    family_id: str
    dim: int
    expression: Expression
    window: Dict[str, Tuple[float, float]]
    params: Dict[str, float]
    equation: Optional[EvolutionEquation] = None
    form: Optional[str] = None
    printed: Optional["SolutionInstance"] = None


def _bindings(params: Mapping[str, Number]) -> Dict[str, Expression]:
    return {name: as_expression(exact_number(value)) for name, value in params.items()}


def _check_bound(expression: Expression, allowed: frozenset, label: str) -> None:
    unbound = sorted(
        name for name in expression.free_symbols if name not in allowed and jet_index(name) is None
    )
    if unbound:
        raise InadmissibleParameterError(
            f"Paramètres manquants pour {label}: {', '.join(unbound)}",
            constraint=f"paramètres requis: {', '.join(unbound)}",
        )


def _instantiate_constraint(entry: ConstraintEntry, params: Mapping[str, Number]) -> ConstraintInstance:
    values = dict(params)
    q = entry.q.resolve(values.get("q"))
    values["q"] = q
    for name, parameter in entry.params.items():
        if name in values and not parameter.active(q) and not _matches(values[name], exact_number(parameter.otherwise)):
            raise InadmissibleParameterError(
                f"{name} = {values[name]} n'est permis que pour q dans "
                f"{{{', '.join(_format_number(v) for v in parameter.when_q)}}}",
                constraint=f"{name} = {parameter.otherwise} hors de ces valeurs",
            )
    for predicate in entry.admissible:
        missing = [n for n in predicate.expr.free_symbols if n not in values]
        if missing:
            continue
        if not predicate.holds(values):
            raise InadmissibleParameterError(
                f"Paramètres inadmissibles pour {entry.id}: {predicate.label} violé",
                constraint=predicate.label,
            )
    bindings = _bindings(values)
    f = simplify_basic(substitute(entry.f, bindings))
    h = simplify_basic(substitute(entry.h, bindings))
    _check_bound(f, INDEPENDENT_VARIABLES, entry.id)
    _check_bound(h, INDEPENDENT_VARIABLES, entry.id)
    corrected = simplify_basic(substitute(entry.erratum.h, bindings)) if entry.erratum else None
    return ConstraintInstance(
        entry_id=entry.id,
        q=q,
        f=f,
        h=h,
        equation=diffusion_equation(Const(q), f),
        params=values,
        corrected_h=corrected,
    )


def _instantiate_solution(
    family: SolutionFamily,
    expression: Expression,
    params: Mapping[str, Number],
) -> SolutionInstance:
    bindings = _bindings(params)
    u = simplify_basic(substitute(expression, bindings))
    _check_bound(u, INDEPENDENT_VARIABLES, family.id)
    equation = None
    if family.dim == 1:
        rhs = simplify_basic(substitute(family.rhs, bindings))
        _check_bound(rhs, INDEPENDENT_VARIABLES, family.id)
        equation = EvolutionEquation.from_rhs(rhs)
    return SolutionInstance(
        family_id=family.id,
        dim=family.dim,
        expression=u,
        window=dict(family.window),
        params={name: float(v) for name, v in params.items()},
        equation=equation,
        form=family.form,
    )


def instantiate(entry_id: str, params: Optional[Mapping[str, Number]] = None, catalog: Optional[Catalog] = None):
    """
    Instancie une entrée du catalogue à paramètres numériques.

    Pour une contrainte, retourne un ConstraintInstance (équation u_t =
    (u^q u_x)_x + f et h). Pour une solution, retourne un SolutionInstance
    (paramètres par défaut complétés par `params`) portant aussi, le cas
    échéant, la forme imprimée instanciée.

    Raises:
        UnknownEntryError: Identifiant inconnu
        InadmissibleParameterError: Contrainte d'admissibilité violée (nommée)
    """
    catalog = catalog or load_catalog()
    entry = catalog.get(entry_id)
    params = dict(params or {})
    if isinstance(entry, ConstraintEntry):
        return _instantiate_constraint(entry, params)
    if isinstance(entry, SolutionFamily):
        values = {**entry.params, **params}
        instance = _instantiate_solution(entry, entry.expression, values)
        if entry.printed is not None:
            instance.printed = _instantiate_solution(entry, entry.printed.expression, {**entry.printed.params})
        return instance
    raise PreconditionError(f"{entry_id} est une représentation : utiliser reduce.representation_for")


def draw_parameters(entry: ConstraintEntry, rng: np.random.Generator) -> Dict[str, Number]:
    """
    Tire des paramètres admissibles pour une contrainte.

    Raises:
        InadmissibleParameterError: Si aucun tirage admissible n'est trouvé
    """
    for _ in range(MAX_DRAWS):
        values: Dict[str, Number] = {"q": entry.q.draw(rng)}
        for name, parameter in entry.params.items():
            if parameter.active(values["q"]):
                values[name] = float(rng.uniform(parameter.low, parameter.high))
            else:
                values[name] = parameter.otherwise
        if all(p.holds(values) for p in entry.admissible):
            return values
    raise InadmissibleParameterError(
        f"Aucun tirage admissible pour {entry.id} après {MAX_DRAWS} essais",
        constraint=", ".join(p.label for p in entry.admissible),
    )


def window_is_valid(window: Mapping[str, Tuple[float, float]]) -> bool:
    return all(math.isfinite(lo) and math.isfinite(hi) and lo < hi for lo, hi in window.values())
