"""
Tests des dérivées totales sur l'espace des jets.
"""
import numpy as np
import pytest

from engine.errors import JetCapError, PreconditionError
from engine.expr import evaluate, parse
from engine.jet import (
    EvolutionEquation,
    jet_domain,
    prolong_rhs,
    sample_jet_points,
    total_t_derivative,
    total_x_derivative,
)
from engine.lde import diffusion_equation, make_rng

pytestmark = pytest.mark.unit

HEAT_LIKE = EvolutionEquation.from_rhs(parse("u0*u2+u1^2"))


def _points(count, order, parameters=None, seed=0):
    rng = np.random.default_rng(seed)
    return [p.as_eval_point() for p in sample_jet_points(rng, count, order, parameters)]


def _close(a, b, rel):
    return abs(a - b) <= rel * (1 + max(abs(a), abs(b)))


class TestEvolutionEquation:
    def test_order_and_parameters_inferred(self):
        eq = EvolutionEquation.from_rhs("u0^q*u2+q*u0^(q-1)*u1^2+s*u0")
        assert eq.order == 2
        assert eq.parameters == ("q", "s")
        assert eq.is_autonomous_in_x

    def test_declared_order_must_match(self):
        with pytest.raises(PreconditionError):
            EvolutionEquation(rhs=parse("u0*u2"), order=3)

    def test_rhs_without_jets_rejected(self):
        with pytest.raises(PreconditionError):
            EvolutionEquation.from_rhs("x+t")

    def test_diffusion_equation_rhs(self):
        eq = diffusion_equation(2, parse("s*u0"))
        point = {"u0": 1.5, "u1": 0.5, "u2": -1.0, "s": 0.3}
        expected = 1.5 ** 2 * -1.0 + 2 * 1.5 * 0.25 + 0.3 * 1.5
        assert evaluate(eq.rhs, point) == pytest.approx(expected)


class TestTotalX:
    def test_definition(self):
        assert total_x_derivative(parse("u1")) == parse("u2")

    def test_chain_rule(self):
        d = total_x_derivative(parse("u0^q"))
        point = {"u0": 2.0, "u1": 0.5, "q": 3.0}
        assert evaluate(d, point) == pytest.approx(3 * 4.0 * 0.5)

    def test_product_rule(self):
        d = total_x_derivative(parse("x*u1"))
        for point in _points(20, 2):
            assert evaluate(d, point) == pytest.approx(point["u1"] + point["x"] * point["u2"])

    def test_cap(self):
        with pytest.raises(JetCapError):
            total_x_derivative(parse("u9"))

    def test_leibniz(self):
        e1, e2 = parse("u0^2*u1"), parse("exp(x)*u2")
        lhs = total_x_derivative(e1 * e2)
        rhs = total_x_derivative(e1) * e2 + e1 * total_x_derivative(e2)
        for point in _points(100, 3):
            assert _close(evaluate(lhs, point), evaluate(rhs, point), 1e-10)


class TestProlongation:
    def test_k_zero_is_rhs(self):
        assert prolong_rhs(HEAT_LIKE, 0) == HEAT_LIKE.rhs

    def test_k_one_value(self):
        value = evaluate(prolong_rhs(HEAT_LIKE, 1), {"u0": 1, "u1": 2, "u2": 3, "u3": 4})
        assert value == pytest.approx(22.0)

    def test_cap(self):
        with pytest.raises(JetCapError):
            prolong_rhs(HEAT_LIKE, 8)


class TestTotalT:
    def test_u0_gives_rhs(self):
        d = total_t_derivative(parse("u0"), HEAT_LIKE)
        for point in _points(10, 2):
            assert evaluate(d, point) == pytest.approx(evaluate(HEAT_LIKE.rhs, point))

    def test_x_is_constant_in_t(self):
        assert evaluate(total_t_derivative(parse("x"), HEAT_LIKE), {}) == 0

    @pytest.mark.parametrize("rhs", ["u0*u2+u1^2", "u0^q*u2+q*u0^(q-1)*u1^2+s*u0+r*u0^(0-q)", "u2/u0-u1^2/u0^2+r*u0*ln(u0)"])
    def test_commutation_on_solutions(self, rhs):
        eq = EvolutionEquation.from_rhs(rhs)
        parameters = {"q": 2.0, "s": 0.3, "r": 0.1}
        for e in (parse("u0"), parse("u1^2/u0"), parse("u2+q*u1^2/u0")):
            dt_dx = total_t_derivative(total_x_derivative(e), eq)
            dx_dt = total_x_derivative(total_t_derivative(e, eq))
            for point in _points(100, 6, parameters, seed=3):
                assert _close(evaluate(dt_dx, point), evaluate(dx_dt, point), 1e-9)


class TestSampling:
    def test_domains(self):
        domain = jet_domain(3)
        assert domain["u0"] == (0.5, 2.0)
        assert domain["u3"] == (-2.0, 2.0)
        assert domain["t"] == (0.0, 1.0) and domain["x"] == (-1.0, 1.0)

    def test_seeded_draws_are_reproducible(self):
        a = sample_jet_points(make_rng(7, "case"), 5, 2)
        b = sample_jet_points(make_rng(7, "case"), 5, 2)
        c = sample_jet_points(make_rng(7, "autre"), 5, 2)
        assert [p.jets for p in a] == [p.jets for p in b]
        assert [p.jets for p in a] != [p.jets for p in c]
