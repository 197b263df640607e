"""
Arbres d'expressions immuables sur l'espace des jets.

Fournit l'analyse syntaxique, la dérivation structurelle exacte, la
substitution, la simplification élémentaire et l'évaluation numérique
(scalaire contrôlée ou vectorisée avec numpy).
"""
from __future__ import annotations

import logging
import math
import re
from fractions import Fraction
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Tuple, Union

import numpy as np

from .errors import (
    DomainError,
    ExpressionSyntaxError,
    UnboundSymbolError,
    UnknownFunctionError,
)

logger = logging.getLogger(__name__)

# Variables indépendantes et jets u0…u9
INDEPENDENT_VARIABLES = frozenset({"t", "x", "y"})
JET_CAP = 9
JET_PATTERN = re.compile(r"^u([0-9])$")
FUNCTIONS = ("exp", "ln", "sin", "cos", "tan", "sinh", "cosh", "tanh", "sqrt")

# Point d'évaluation : identifiant -> valeur réelle
EvalPoint = Dict[str, float]

_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 3}
_ATOM_PRECEDENCE = 4


def jet_index(name: str) -> Optional[int]:
    """Retourne k si `name` est le jet u_k, sinon None."""
    match = JET_PATTERN.match(name)
    return int(match.group(1)) if match else None


def jet_name(k: int) -> str:
    return f"u{k}"


class Expression:
    """Nœud d'arbre d'expression (classe de base abstraite, immuable)."""

    __slots__ = ("_hash", "_free")

    precedence = _ATOM_PRECEDENCE

    @property
    def free_symbols(self) -> frozenset:
        """Ensemble exact des identifiants libres de l'expression."""
        return self._free

    def depends_on(self, name: str) -> bool:
        return name in self._free

    def __hash__(self) -> int:
        return self._hash

    def __setattr__(self, key, value):
        raise AttributeError("Les expressions sont immuables")

    def _init(self, key: tuple, free: frozenset) -> None:
        object.__setattr__(self, "_hash", hash(key))
        object.__setattr__(self, "_free", free)

    def __str__(self) -> str:
        return to_string(self)

    # Raccourcis de construction
    def __add__(self, other):
        return Binary("+", self, as_expression(other))

    def __radd__(self, other):
        return Binary("+", as_expression(other), self)

    def __sub__(self, other):
        return Binary("-", self, as_expression(other))

    def __rsub__(self, other):
        return Binary("-", as_expression(other), self)

    def __mul__(self, other):
        return Binary("*", self, as_expression(other))

    def __rmul__(self, other):
        return Binary("*", as_expression(other), self)

    def __truediv__(self, other):
        return Binary("/", self, as_expression(other))

    def __rtruediv__(self, other):
        return Binary("/", as_expression(other), self)

    def __pow__(self, other):
        return Binary("^", self, as_expression(other))

    def __neg__(self):
        return Binary("-", ZERO, self)


class Const(Expression):
    """Constante rationnelle exacte."""

    __slots__ = ("value",)

    def __init__(self, value: Union[int, Fraction]):
        object.__setattr__(self, "value", Fraction(value))
        self._init(("const", self.value), frozenset())

    __hash__ = Expression.__hash__

    def __eq__(self, other):
        return isinstance(other, Const) and self.value == other.value

    def __repr__(self):
        return f"Const({self.value})"


class Var(Expression):
    """Référence à une variable : indépendante, jet ou paramètre."""

    __slots__ = ("name",)

    def __init__(self, name: str):
        if name == "u":
            name = "u0"
        object.__setattr__(self, "name", name)
        self._init(("var", name), frozenset({name}))

    __hash__ = Expression.__hash__

    def __eq__(self, other):
        return isinstance(other, Var) and self.name == other.name

    def __repr__(self):
        return f"Var({self.name!r})"


class Binary(Expression):
    """Opération binaire parmi + - * / ^."""

    __slots__ = ("op", "left", "right")

    def __init__(self, op: str, left: Expression, right: Expression):
        if op not in _PRECEDENCE:
            raise ValueError(f"Opérateur inconnu: {op}")
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)
        self._init(("bin", op, left._hash, right._hash), left._free | right._free)

    @property
    def precedence(self) -> int:
        return _PRECEDENCE[self.op]

    __hash__ = Expression.__hash__

    def __eq__(self, other):
        if self is other:
            return True
        return (
            isinstance(other, Binary)
            and self._hash == other._hash
            and self.op == other.op
            and self.left == other.left
            and self.right == other.right
        )

    def __repr__(self):
        return f"Binary({self.op!r}, {self.left!r}, {self.right!r})"


class Func(Expression):
    """Application d'une fonction élémentaire à un argument."""

    __slots__ = ("name", "arg")

    def __init__(self, name: str, arg: Expression):
        if name not in FUNCTIONS:
            raise UnknownFunctionError(f"Fonction inconnue: {name}")
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "arg", arg)
        self._init(("fn", name, arg._hash), arg._free)

    __hash__ = Expression.__hash__

    def __eq__(self, other):
        if self is other:
            return True
        return (
            isinstance(other, Func)
            and self._hash == other._hash
            and self.name == other.name
            and self.arg == other.arg
        )

    def __repr__(self):
        return f"Func({self.name!r}, {self.arg!r})"


ZERO = Const(0)
ONE = Const(1)
TWO = Const(2)


def as_expression(value: Any) -> Expression:
    """Convertit un nombre, une chaîne ou une expression en Expression."""
    if isinstance(value, Expression):
        return value
    if isinstance(value, bool):
        raise TypeError("Un booléen n'est pas une expression")
    if isinstance(value, (int, Fraction)):
        return Const(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise DomainError(f"Constante non finie: {value}")
        # repr donne la plus courte écriture décimale exacte au sens du flottant
        return Const(Fraction(repr(value)))
    if isinstance(value, str):
        return parse(value)
    raise TypeError(f"Impossible de convertir {type(value).__name__} en expression")


# ---------------------------------------------------------------------------
# Analyse syntaxique
# ---------------------------------------------------------------------------

_TOKEN_PATTERN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


class _Parser:
    """Analyseur descendant récursif ; les positions sont des décalages en octets."""

    def __init__(self, source: str):
        self.source = source
        self.tokens: List[Tuple[str, str, int]] = []
        self._tokenize()
        self.pos = 0

    def _byte_offset(self, index: int) -> int:
        return len(self.source[:index].encode("utf-8"))

    def _tokenize(self) -> None:
        index = 0
        text = self.source
        while index < len(text):
            if text[index:].strip() == "":
                break
            match = _TOKEN_PATTERN.match(text, index)
            if not match or match.end() == index:
                raise ExpressionSyntaxError(
                    f"Caractère inattendu {text[index:].lstrip()[:1]!r}",
                    offset=self._byte_offset(len(text) - len(text[index:].lstrip())),
                )
            kind = match.lastgroup
            start = match.start(kind)
            self.tokens.append((kind, match.group(kind), self._byte_offset(start)))
            index = match.end()
        self.end_offset = len(text.encode("utf-8"))

    def _peek(self) -> Optional[Tuple[str, str, int]]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def _advance(self) -> Tuple[str, str, int]:
        token = self._peek()
        if token is None:
            raise ExpressionSyntaxError("Fin d'entrée inattendue", offset=self.end_offset)
        self.pos += 1
        return token

    def _accept(self, symbol: str) -> bool:
        token = self._peek()
        if token is not None and token[0] == "op" and token[1] == symbol:
            self.pos += 1
            return True
        return False

    def _expect(self, symbol: str) -> None:
        token = self._peek()
        if token is None:
            raise ExpressionSyntaxError(f"'{symbol}' attendu en fin d'entrée", offset=self.end_offset)
        if not (token[0] == "op" and token[1] == symbol):
            raise ExpressionSyntaxError(f"'{symbol}' attendu, obtenu {token[1]!r}", offset=token[2])
        self.pos += 1

    def parse(self) -> Expression:
        if not self.tokens:
            raise ExpressionSyntaxError("Expression vide", offset=0)
        expr = self._sum()
        token = self._peek()
        if token is not None:
            raise ExpressionSyntaxError(f"Symbole inattendu {token[1]!r}", offset=token[2])
        return expr

    def _sum(self) -> Expression:
        left = self._product()
        while True:
            if self._accept("+"):
                left = Binary("+", left, self._product())
            elif self._accept("-"):
                left = Binary("-", left, self._product())
            else:
                return left

    def _product(self) -> Expression:
        left = self._unary()
        while True:
            if self._accept("*"):
                left = Binary("*", left, self._unary())
            elif self._accept("/"):
                left = Binary("/", left, self._unary())
            else:
                return left

    def _unary(self) -> Expression:
        # le moins unaire se lit 0 - e et lie moins fort que ^
        if self._accept("-"):
            return Binary("-", ZERO, self._unary())
        return self._power()

    def _power(self) -> Expression:
        base = self._atom()
        if self._accept("^"):
            return Binary("^", base, self._unary())
        return base

    def _atom(self) -> Expression:
        kind, text, offset = self._advance()
        if kind == "num":
            return Const(Fraction(text))
        if kind == "ident":
            token = self._peek()
            if token is not None and token[0] == "op" and token[1] == "(":
                if text not in FUNCTIONS:
                    raise UnknownFunctionError(f"Fonction inconnue {text!r} (octet {offset})")
                self.pos += 1
                arg = self._sum()
                self._expect(")")
                return Func(text, arg)
            index = jet_index(text)
            if text.startswith("u") and text[1:].isdigit() and index is None:
                raise ExpressionSyntaxError(f"Jet au-delà de u{JET_CAP}: {text}", offset=offset)
            return Var(text)
        if kind == "op" and text == "(":
            inner = self._sum()
            self._expect(")")
            return inner
        raise ExpressionSyntaxError(f"Symbole inattendu {text!r}", offset=offset)


def parse(source: str) -> Expression:
    """
    Analyse une expression selon la grammaire du moteur.

    Args:
        source: Texte non vide (ex. "u2 + q*u1^2/u0")

    Returns:
        L'arbre d'expression correspondant

    Raises:
        ExpressionSyntaxError: En cas d'erreur de syntaxe (avec décalage en octets)
        UnknownFunctionError: Si une fonction inconnue est appelée
    """
    if not isinstance(source, str):
        raise TypeError("La source doit être une chaîne")
    return _Parser(source).parse()


# ---------------------------------------------------------------------------
# Écriture
# ---------------------------------------------------------------------------

def _format_const(value: Fraction) -> str:
    denominator = value.denominator
    reduced = denominator
    for prime in (2, 5):
        while reduced % prime == 0:
            reduced //= prime
    if reduced != 1:
        return f"({_format_const(Fraction(value.numerator))}/{denominator})"
    digits = 0
    while (10 ** digits) % denominator:
        digits += 1
    scaled = abs(value.numerator) * (10 ** digits) // denominator
    text = str(scaled)
    if digits:
        text = text.rjust(digits + 1, "0")
        text = f"{text[:-digits]}.{text[-digits:]}"
    if value < 0:
        return f"(0-{text})"
    return text


def to_string(e: Expression) -> str:
    """Écrit l'expression dans la grammaire d'entrée (relecture stable)."""
    if isinstance(e, Const):
        return _format_const(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Func):
        return f"{e.name}({to_string(e.arg)})"
    op = e.op
    prec = _PRECEDENCE[op]
    left = to_string(e.left)
    right = to_string(e.right)
    left_prec = e.left.precedence
    right_prec = e.right.precedence
    if op == "^":
        if left_prec <= prec:
            left = f"({left})"
        if right_prec < prec:
            right = f"({right})"
    else:
        if left_prec < prec:
            left = f"({left})"
        if right_prec <= prec:
            right = f"({right})"
    return f"{left}{op}{right}"


# ---------------------------------------------------------------------------
# Dérivation, substitution, simplification
# ---------------------------------------------------------------------------

def _mul(a: Expression, b: Expression) -> Expression:
    return Binary("*", a, b)


def _derivative(e: Expression, v: str, memo: Dict[Expression, Expression]) -> Expression:
    if v not in e._free:
        return ZERO
    cached = memo.get(e)
    if cached is not None:
        return cached
    if isinstance(e, Var):
        result = ONE
    elif isinstance(e, Func):
        a = e.arg
        da = _derivative(a, v, memo)
        name = e.name
        if name == "exp":
            outer = e
        elif name == "ln":
            outer = Binary("/", ONE, a)
        elif name == "sin":
            outer = Func("cos", a)
        elif name == "cos":
            outer = Binary("-", ZERO, Func("sin", a))
        elif name == "tan":
            outer = Binary("/", ONE, Binary("^", Func("cos", a), TWO))
        elif name == "sinh":
            outer = Func("cosh", a)
        elif name == "cosh":
            outer = Func("sinh", a)
        elif name == "tanh":
            outer = Binary("/", ONE, Binary("^", Func("cosh", a), TWO))
        else:  # sqrt
            outer = Binary("/", ONE, Binary("*", TWO, e))
        result = _mul(outer, da)
    else:
        op, left, right = e.op, e.left, e.right
        if op in ("+", "-"):
            result = Binary(op, _derivative(left, v, memo), _derivative(right, v, memo))
        elif op == "*":
            result = Binary(
                "+",
                _mul(_derivative(left, v, memo), right),
                _mul(left, _derivative(right, v, memo)),
            )
        elif op == "/":
            numerator = Binary(
                "-",
                _mul(_derivative(left, v, memo), right),
                _mul(left, _derivative(right, v, memo)),
            )
            result = Binary("/", numerator, Binary("^", right, TWO))
        else:
            if v not in right._free:
                # règle de la puissance, exposant indépendant de v
                result = _mul(
                    _mul(right, Binary("^", left, Binary("-", right, ONE))),
                    _derivative(left, v, memo),
                )
            else:
                inner = Binary(
                    "+",
                    _mul(_derivative(right, v, memo), Func("ln", left)),
                    Binary("/", _mul(right, _derivative(left, v, memo)), left),
                )
                result = _mul(e, inner)
    memo[e] = result
    return result


def differentiate(e: Expression, v: str) -> Expression:
    """
    Dérivée partielle structurelle exacte de `e` par rapport à `v`.

    Les jets sont des coordonnées indépendantes ; le résultat est
    simplifié par `simplify_basic`.
    """
    if v == "u":
        v = "u0"
    if v not in e._free:
        return ZERO
    return simplify_basic(_derivative(e, v, {}))


def substitute(e: Expression, bindings: Mapping[str, Any]) -> Expression:
    """Substitution simultanée (non récursive) des identifiants liés."""
    if not bindings:
        return e
    table = {("u0" if k == "u" else k): as_expression(v) for k, v in bindings.items()}
    memo: Dict[Expression, Expression] = {}

    def walk(node: Expression) -> Expression:
        if not (node._free & table.keys()):
            return node
        cached = memo.get(node)
        if cached is not None:
            return cached
        if isinstance(node, Var):
            result = table[node.name]
        elif isinstance(node, Func):
            result = Func(node.name, walk(node.arg))
        else:
            result = Binary(node.op, walk(node.left), walk(node.right))
        memo[node] = result
        return result

    return walk(e)


_EXACT_FUNCTION_VALUES = {
    ("exp", Fraction(0)): Fraction(1),
    ("ln", Fraction(1)): Fraction(0),
    ("sin", Fraction(0)): Fraction(0),
    ("cos", Fraction(0)): Fraction(1),
    ("tan", Fraction(0)): Fraction(0),
    ("sinh", Fraction(0)): Fraction(0),
    ("cosh", Fraction(0)): Fraction(1),
    ("tanh", Fraction(0)): Fraction(0),
    ("sqrt", Fraction(0)): Fraction(0),
    ("sqrt", Fraction(1)): Fraction(1),
}


def _is_const(e: Expression, value: Optional[int] = None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


def _collect(e: Expression, op: str, out: List[Expression]) -> None:
    if isinstance(e, Binary) and e.op == op:
        _collect(e.left, op, out)
        _collect(e.right, op, out)
    else:
        out.append(e)


def _rebuild(op: str, items: List[Expression]) -> Expression:
    result = items[0]
    for item in items[1:]:
        result = Binary(op, result, item)
    return result


def _fold_power(base: Fraction, exponent: Fraction) -> Optional[Fraction]:
    if exponent.denominator != 1 or abs(exponent.numerator) > 64:
        return None
    if base == 0 and exponent < 0:
        return None
    return base ** exponent.numerator


def _simplify_node(e: Expression) -> Expression:
    if isinstance(e, Func):
        if isinstance(e.arg, Const):
            exact = _EXACT_FUNCTION_VALUES.get((e.name, e.arg.value))
            if exact is not None:
                return Const(exact)
        return e
    if not isinstance(e, Binary):
        return e
    op, left, right = e.op, e.left, e.right
    if op in ("+", "*"):
        items: List[Expression] = []
        _collect(e, op, items)
        neutral = 0 if op == "+" else 1
        constant = Fraction(neutral)
        rest: List[Expression] = []
        for item in items:
            if isinstance(item, Const):
                constant = constant + item.value if op == "+" else constant * item.value
            else:
                rest.append(item)
        if op == "*" and constant == 0:
            return ZERO
        if constant != neutral or not rest:
            rest = ([Const(constant)] + rest) if op == "*" else (rest + [Const(constant)])
        return _rebuild(op, rest)
    if op == "-":
        if _is_const(right, 0):
            return left
        if isinstance(left, Const) and isinstance(right, Const):
            return Const(left.value - right.value)
        if left == right:
            return ZERO
        return e
    if op == "/":
        if _is_const(left, 0):
            return ZERO
        if _is_const(right, 1):
            return left
        if isinstance(left, Const) and isinstance(right, Const) and right.value != 0:
            return Const(left.value / right.value)
        return e
    # puissance
    if _is_const(right, 1):
        return left
    if _is_const(right, 0) or _is_const(left, 1):
        return ONE
    if isinstance(left, Const) and isinstance(right, Const):
        folded = _fold_power(left.value, right.value)
        if folded is not None:
            return Const(folded)
    return e


def simplify_basic(e: Expression) -> Expression:
    """
    Simplification élémentaire préservant la valeur : repliement des
    constantes, éliminations des neutres 0 et 1, aplatissement des sommes
    et produits imbriqués.
    """
    memo: Dict[Expression, Expression] = {}

    def walk(node: Expression) -> Expression:
        if isinstance(node, (Const, Var)):
            return node
        cached = memo.get(node)
        if cached is not None:
            return cached
        if isinstance(node, Func):
            rebuilt: Expression = Func(node.name, walk(node.arg))
        else:
            rebuilt = Binary(node.op, walk(node.left), walk(node.right))
        result = _simplify_node(rebuilt)
        memo[node] = result
        return result

    return walk(e)


def additive_terms(e: Expression) -> List[Tuple[int, Expression]]:
    """Décompose `e` en termes additifs signés (à travers + et -)."""
    terms: List[Tuple[int, Expression]] = []

    def walk(node: Expression, sign: int) -> None:
        if isinstance(node, Binary) and node.op in ("+", "-"):
            walk(node.left, sign)
            walk(node.right, sign if node.op == "+" else -sign)
        else:
            terms.append((sign, node))

    walk(e, 1)
    return terms


def max_jet_index(e: Expression) -> int:
    """Indice du plus haut jet présent dans `e` (-1 s'il n'y en a aucun)."""
    indices = [jet_index(name) for name in e._free]
    return max((k for k in indices if k is not None), default=-1)


def parameters_of(e: Expression) -> frozenset:
    """Identifiants libres qui ne sont ni des variables indépendantes ni des jets."""
    return frozenset(
        name for name in e._free
        if name not in INDEPENDENT_VARIABLES and jet_index(name) is None
    )


# ---------------------------------------------------------------------------
# Évaluation
# ---------------------------------------------------------------------------

def _checked_pow(base: float, exponent: float) -> float:
    if float(exponent).is_integer():
        if base == 0 and exponent < 0:
            raise ZeroDivisionError("0 élevé à une puissance négative")
        return float(base) ** int(exponent)
    if base <= 0:
        raise DomainError(f"Base non positive {base} pour l'exposant non entier {exponent}")
    return math.pow(base, exponent)


def _checked_ln(a: float) -> float:
    if a <= 0:
        raise DomainError(f"ln d'un argument non positif: {a}")
    return math.log(a)


def _checked_sqrt(a: float) -> float:
    if a <= 0:
        raise DomainError(f"sqrt d'un argument non positif: {a}")
    return math.sqrt(a)


def _checked_div(a: float, b: float) -> float:
    if b == 0:
        raise ZeroDivisionError("Division par zéro")
    return a / b


_SCALAR_FUNCTIONS: Dict[str, Callable[[float], float]] = {
    "exp": math.exp,
    "ln": _checked_ln,
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "sinh": math.sinh,
    "cosh": math.cosh,
    "tanh": math.tanh,
    "sqrt": _checked_sqrt,
}

_ARRAY_FUNCTIONS: Dict[str, Callable[[Any], Any]] = {
    "exp": np.exp,
    "ln": np.log,
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "tanh": np.tanh,
    "sqrt": np.sqrt,
}


def _array_pow(base, exponent):
    base = np.asarray(base, dtype=float)
    exponent = np.asarray(exponent, dtype=float)
    integral = exponent == np.round(exponent)
    with np.errstate(all="ignore"):
        result = np.power(base, exponent)
    # exposant non entier : base strictement positive exigée
    return np.where(integral | (base > 0), result, np.nan)


def _array_div(a, b):
    with np.errstate(all="ignore"):
        result = np.true_divide(a, b)
    return np.where(np.asarray(b) == 0, np.nan, result)


def _array_ln(a):
    a = np.asarray(a, dtype=float)
    with np.errstate(all="ignore"):
        return np.where(a > 0, np.log(np.where(a > 0, a, 1.0)), np.nan)


def _array_sqrt(a):
    a = np.asarray(a, dtype=float)
    with np.errstate(all="ignore"):
        return np.where(a > 0, np.sqrt(np.where(a > 0, a, 1.0)), np.nan)


_ARRAY_FUNCTIONS["ln"] = _array_ln
_ARRAY_FUNCTIONS["sqrt"] = _array_sqrt


class CompiledExpression:
    """
    Programme linéaire équivalent à une expression, avec partage des
    sous-expressions communes. Évaluable sur des scalaires (contrôles de
    domaine stricts) ou sur des tableaux numpy (valeurs NaN hors domaine).
    """

    def __init__(self, roots: Iterable[Expression]):
        self.roots = tuple(roots)
        self._index: Dict[Expression, int] = {}
        self.program: List[Tuple[str, Any, Any]] = []
        self.symbols: List[str] = []
        self.outputs = [self._emit(root) for root in self.roots]
        self.free_symbols = frozenset().union(*(r._free for r in self.roots)) if self.roots else frozenset()

    def _emit(self, node: Expression) -> int:
        existing = self._index.get(node)
        if existing is not None:
            return existing
        stack = [(node, False)]
        while stack:
            current, ready = stack.pop()
            if current in self._index:
                continue
            if isinstance(current, Const):
                instruction = ("const", float(current.value), None)
            elif isinstance(current, Var):
                instruction = ("var", current.name, None)
                if current.name not in self.symbols:
                    self.symbols.append(current.name)
            elif isinstance(current, Func):
                if not ready:
                    stack.append((current, True))
                    stack.append((current.arg, False))
                    continue
                instruction = ("fn", current.name, self._index[current.arg])
            else:
                if not ready:
                    stack.append((current, True))
                    stack.append((current.right, False))
                    stack.append((current.left, False))
                    continue
                instruction = (current.op, self._index[current.left], self._index[current.right])
            self._index[current] = len(self.program)
            self.program.append(instruction)
        return self._index[node]

    def _run(self, point: Mapping[str, Any], vectorised: bool) -> List[Any]:
        values: List[Any] = []
        append = values.append
        functions = _ARRAY_FUNCTIONS if vectorised else _SCALAR_FUNCTIONS
        power = _array_pow if vectorised else _checked_pow
        divide = _array_div if vectorised else _checked_div
        for kind, a, b in self.program:
            if kind == "const":
                append(a)
            elif kind == "var":
                try:
                    append(point[a])
                except KeyError:
                    raise UnboundSymbolError(f"Symbole non lié: {a}") from None
            elif kind == "fn":
                append(functions[a](values[b]))
            elif kind == "+":
                append(values[a] + values[b])
            elif kind == "-":
                append(values[a] - values[b])
            elif kind == "*":
                append(values[a] * values[b])
            elif kind == "/":
                append(divide(values[a], values[b]))
            else:
                append(power(values[a], values[b]))
        return values

    def evaluate(self, point: Mapping[str, float]) -> List[float]:
        """Évalue toutes les racines au point donné (contrôles stricts)."""
        try:
            values = self._run(point, vectorised=False)
        except OverflowError as exc:
            raise DomainError(f"Dépassement numérique: {exc}") from exc
        results = [float(values[i]) for i in self.outputs]
        for value in results:
            if not math.isfinite(value):
                raise DomainError("Valeur non finie")
        return results

    def evaluate_array(self, point: Mapping[str, Any]) -> List[np.ndarray]:
        """Évalue toutes les racines sur des tableaux ; NaN hors domaine."""
        with np.errstate(all="ignore"):
            values = self._run(point, vectorised=True)
            shape = np.broadcast_shapes(*[np.shape(v) for v in point.values()]) if point else ()
            return [np.broadcast_to(np.asarray(values[i], dtype=float), shape).copy() for i in self.outputs]


def compile_expression(*roots: Expression) -> CompiledExpression:
    return CompiledExpression(roots)


def evaluate(e: Expression, p: Mapping[str, float]) -> float:
    """
    Évalue `e` au point `p` en arithmétique réelle.

    Raises:
        UnboundSymbolError: Si un symbole libre n'est pas lié
        DomainError: Base non positive, ln ou sqrt d'un argument non positif
        ZeroDivisionError: Division par zéro
    """
    missing = [name for name in e._free if name not in p]
    if missing:
        raise UnboundSymbolError(f"Symboles non liés: {', '.join(sorted(missing))}")
    return CompiledExpression((e,)).evaluate(p)[0]
