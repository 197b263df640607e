"""
Tests des expressions : analyse, dérivation, substitution, évaluation.
"""
import math

import numpy as np
import pytest

from engine.errors import DomainError, ExpressionSyntaxError, UnboundSymbolError, UnknownFunctionError
from engine.expr import (
    Binary,
    Const,
    additive_terms,
    compile_expression,
    differentiate,
    evaluate,
    max_jet_index,
    parameters_of,
    parse,
    simplify_basic,
    substitute,
    to_string,
)

pytestmark = pytest.mark.unit

CORPUS = [
    "u2 + q*u1^2/u0",
    "exp(k*q*t)*(r*x+s)",
    "s*u0+r*u0*ln(u0)",
    "u0^q*u2+q*u0^(q-1)*u1^2",
    "sin(x)*cosh(t)-tan(x/3)+sqrt(u0)",
    "-u1^2/u0+tanh(u2)*sinh(x)",
    "(c1*x+c2)^(1/(q+1))",
    "2^-x^2",
]

# Domaine sûr : bases et arguments positifs
SAFE = {"t": (0.1, 1.0), "x": (0.1, 1.0), "u0": (0.5, 2.0), "u1": (-1.0, 1.0), "u2": (-1.0, 1.0),
        "q": (1.5, 3.0), "k": (0.2, 1.0), "r": (0.2, 1.0), "s": (0.2, 1.0), "c1": (0.2, 1.0), "c2": (0.5, 1.0)}


def _random_points(names, count=100, seed=0):
    rng = np.random.default_rng(seed)
    return [{n: float(rng.uniform(*SAFE[n])) for n in names} for _ in range(count)]


class TestParse:
    def test_sum_with_free_symbols(self):
        e = parse("u2 + q*u1^2/u0")
        assert isinstance(e, Binary) and e.op == "+"
        assert e.free_symbols == {"u2", "q", "u1", "u0"}

    def test_product_free_symbols(self):
        e = parse("exp(k*q*t)*(r*x+s)")
        assert e.op == "*"
        assert e.free_symbols == {"k", "q", "t", "r", "x", "s"}

    def test_syntax_error_at_end_of_input(self):
        with pytest.raises(ExpressionSyntaxError) as info:
            parse("u2 +")
        assert info.value.offset == 4

    def test_unknown_function(self):
        with pytest.raises(UnknownFunctionError):
            parse("erf(x)")

    def test_empty_source(self):
        with pytest.raises(ExpressionSyntaxError):
            parse("   ")

    def test_jet_cap(self):
        with pytest.raises(ExpressionSyntaxError):
            parse("u10 + u1")

    def test_u_is_alias_of_u0(self):
        assert parse("u") == parse("u0")

    def test_power_is_right_associative(self):
        assert evaluate(parse("2^3^2"), {}) == pytest.approx(512.0)

    def test_unary_minus_below_power(self):
        assert evaluate(parse("-2^2"), {}) == pytest.approx(-4.0)

    @pytest.mark.parametrize("source", CORPUS)
    def test_round_trip(self, source):
        e = parse(source)
        assert parse(to_string(e)) == e

    @pytest.mark.parametrize("source", CORPUS)
    def test_free_symbols_are_identifiers(self, source):
        e = parse(source)
        assert all(name.isidentifier() for name in e.free_symbols)
        for name in e.free_symbols:
            assert name in source or (name == "u0" and "u" in source)


class TestDifferentiate:
    def test_power_rule(self):
        d = differentiate(parse("u1^2"), "u1")
        assert evaluate(d, {"u1": 3.0}) == pytest.approx(6.0)

    def test_symbolic_exponent(self):
        d = differentiate(parse("u0^q"), "u0")
        assert evaluate(d, {"u0": 2.0, "q": 3.0}) == pytest.approx(12.0)

    def test_chain_rule(self):
        d = differentiate(parse("exp(k*q*t)"), "t")
        point = {"k": 0.5, "q": 2.0, "t": 0.3}
        assert evaluate(d, point) == pytest.approx(1.0 * math.exp(0.3))

    def test_absent_variable_gives_zero(self):
        assert differentiate(parse("u2 + q*u1^2/u0"), "x") == Const(0)

    def test_linearity(self):
        e1, e2 = parse("u0^q*u1"), parse("ln(u0)*x")
        combined = differentiate(parse("3") * e1 + e2, "u0")
        separate = parse("3") * differentiate(e1, "u0") + differentiate(e2, "u0")
        for point in _random_points(["u0", "u1", "q", "x"], 20):
            assert evaluate(combined, point) == pytest.approx(evaluate(separate, point), rel=1e-12)

    @pytest.mark.parametrize("source", CORPUS[:7])
    def test_matches_central_difference(self, source):
        e = parse(source)
        names = sorted(e.free_symbols)
        for name in names:
            d = differentiate(e, name)
            for point in _random_points(names, 25, seed=len(name)):
                step = 1e-6
                plus = dict(point, **{name: point[name] + step})
                minus = dict(point, **{name: point[name] - step})
                numeric = (evaluate(e, plus) - evaluate(e, minus)) / (2 * step)
                exact = evaluate(d, point)
                assert abs(exact - numeric) <= 1e-5 * (1 + abs(exact))


class TestSubstituteSimplify:
    def test_empty_bindings_is_identity(self):
        e = parse("u2 + q*u1^2/u0")
        assert substitute(e, {}) is e

    def test_simultaneous_substitution(self):
        e = substitute(parse("u0^q"), {"u0": parse("v^(1/q)")})
        assert e == parse("(v^(1/q))^q")

    def test_zero_annihilation(self):
        e = substitute(parse("u2 + q*u1^2/u0"), {"u1": 0})
        assert simplify_basic(e) == parse("u2")

    def test_identities(self):
        assert simplify_basic(parse("1*(x+0)")) == parse("x")

    def test_folding(self):
        assert simplify_basic(parse("2*3")) == Const(6)

    @pytest.mark.parametrize("source", CORPUS[:7])
    def test_value_preserving(self, source):
        e = parse(source)
        simplified = simplify_basic(e)
        for point in _random_points(sorted(e.free_symbols), 100):
            assert evaluate(simplified, point) == pytest.approx(evaluate(e, point), rel=1e-10, abs=1e-12)


class TestEvaluate:
    def test_direct_arithmetic(self):
        assert evaluate(parse("u2 + q*u1^2/u0"), {"q": 1, "u0": 1, "u1": 2, "u2": 3}) == pytest.approx(7.0)

    def test_fractional_power(self):
        assert evaluate(parse("u0^q"), {"u0": 4, "q": 0.5}) == pytest.approx(2.0)

    def test_log_domain(self):
        with pytest.raises(DomainError):
            evaluate(parse("ln(u0)"), {"u0": 0})

    def test_negative_base(self):
        with pytest.raises(DomainError):
            evaluate(parse("u0^(1/3)"), {"u0": -1.0})

    def test_division_by_zero(self):
        with pytest.raises(ZeroDivisionError):
            evaluate(parse("1/x"), {"x": 0.0})

    def test_unbound_symbol(self):
        with pytest.raises(UnboundSymbolError):
            evaluate(parse("u0 + q"), {"u0": 1.0})

    def test_array_evaluation_marks_domain_errors(self):
        program = compile_expression(parse("ln(x)"), parse("x^2"))
        values = program.evaluate_array({"x": np.array([-1.0, 1.0, math.e])})
        assert np.isnan(values[0][0])
        assert values[0][2] == pytest.approx(1.0)
        assert values[1].tolist() == pytest.approx([1.0, 1.0, math.e ** 2])

    def test_shared_subexpressions_compile_once(self):
        e = parse("exp(x)*exp(x)+exp(x)")
        program = compile_expression(e)
        assert sum(1 for kind, _, _ in program.program if kind == "fn") == 1


class TestHelpers:
    def test_additive_terms_signs(self):
        terms = additive_terms(parse("a - b + c"))
        assert [sign for sign, _ in terms] == [1, -1, 1]

    def test_max_jet_index(self):
        assert max_jet_index(parse("u2 + q*u1^2/u0")) == 2
        assert max_jet_index(parse("x + t")) == -1

    def test_parameters_of(self):
        assert parameters_of(parse("exp(k*q*t)*(r*x+s)+u1")) == {"k", "q", "r", "s"}
