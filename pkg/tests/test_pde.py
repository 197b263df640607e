"""
Tests des résidus de solutions, images conformes, méthode des lignes et dérive.
"""
import numpy as np
import pytest

from engine.catalog import instantiate
from engine.errors import DomainError, PreconditionError, StabilityError
from engine.expr import parse
from engine.jet import EvolutionEquation
from engine.pde import (
    Grid,
    conformal_image,
    constraint_drift,
    max_deviation,
    mol_evolve,
    residual_2d,
    residual_2d_expression,
    residual_exact,
)

HEAT = EvolutionEquation.from_rhs("u2")


@pytest.mark.unit
class TestResidualExact:
    @pytest.mark.parametrize("family_id", ["S1", "S2", "S3", "S4", "S5", "S10"])
    def test_verified_forms(self, catalog, sampler, family_id):
        instance = instantiate(family_id, {}, catalog)
        report = residual_exact(instance.expression, instance.equation, sampler(case_id=family_id), instance.window)
        assert report.passed

    def test_perturbed_solution_fails(self, catalog, sampler):
        instance = instantiate("S1", {}, catalog)
        report = residual_exact(instance.expression + parse("0.01*x"), instance.equation, sampler(), instance.window)
        assert not report.passed

    def test_printed_form_needs_unit_amplitude(self, catalog, sampler):
        family = catalog.solution("S1")
        equation = instantiate("S1", {}, catalog).equation
        params = {"k": 0.7, "s2": 0.5}
        unit = residual_exact(family.printed.expression, equation, sampler(), family.window, {**params, "s1": 1.0})
        doubled = residual_exact(family.printed.expression, equation, sampler(), family.window, {**params, "s1": 2.0})
        assert unit.passed
        assert not doubled.passed

    def test_printed_source_coefficient_fails(self, catalog, sampler):
        instance = instantiate("S2", {}, catalog)
        assert not residual_exact(instance.printed.expression, instance.equation, sampler(), instance.window).passed


@pytest.mark.unit
class TestResidual2D:
    def test_travelling_wave(self, catalog, sampler):
        instance = instantiate("S6", {}, catalog)
        assert residual_2d(instance.expression, "v", sampler(), instance.window).passed

    def test_printed_exponent_sign_fails(self, catalog, sampler):
        instance = instantiate("S6", {}, catalog)
        report = residual_2d(instance.printed.expression, "v", sampler(), instance.window)
        assert not report.passed

    def test_unknown_form(self):
        with pytest.raises(PreconditionError):
            residual_2d_expression(parse("1+x"), "w")

    def test_non_positive_solution(self, sampler):
        with pytest.raises(DomainError):
            residual_2d(parse("0-1-x^2"), "v", sampler())


@pytest.mark.unit
class TestConformal:
    BASE = "1/(1+c*exp(x+y+2*t))"
    WINDOW = {"t": (0.0, 0.5), "x": (0.5, 1.5), "y": (0.5, 1.5)}

    def test_identity_map(self, sampler):
        report = conformal_image(self.BASE, [1, 0], sampler(), self.WINDOW, {"c": 0.5})
        assert report.passed

    def test_square_map(self, sampler):
        report = conformal_image(self.BASE, [1, 0, 0], sampler(), self.WINDOW, {"c": 0.5})
        assert report.passed

    def test_catalog_image_matches_verified_form(self, catalog, sampler):
        instance = instantiate("S9", {}, catalog)
        assert residual_2d(instance.expression, "u", sampler(), instance.window).passed
        assert not residual_2d(instance.printed.expression, "u", sampler(), instance.window).passed

    def test_constant_map_rejected(self, sampler):
        with pytest.raises(PreconditionError):
            conformal_image(self.BASE, [2], sampler(), self.WINDOW, {"c": 0.5})

    def test_critical_point_in_window(self, sampler):
        with pytest.raises(PreconditionError):
            conformal_image(self.BASE, [1, -2 - 2j, 0], sampler(), self.WINDOW, {"c": 0.5})


@pytest.mark.unit
class TestMethodOfLines:
    def test_grid_validation(self):
        with pytest.raises(PreconditionError):
            Grid(0.0, 1.0, 4)
        with pytest.raises(PreconditionError):
            Grid(1.0, 0.0, 11)

    def test_stability_refusal(self):
        grid = Grid(-1.0, 1.0, 21)
        with pytest.raises(StabilityError) as info:
            mol_evolve(HEAT, np.ones(21), grid, dt=0.01)
        assert info.value.required_dt == pytest.approx(0.2 * 0.1 ** 2)

    def test_constant_profile_is_stationary(self):
        history = mol_evolve(HEAT, np.ones(21), Grid(-1.0, 1.0, 21))
        np.testing.assert_allclose(history.final, 1.0, atol=1e-12)
        assert history.boundary == "reflective"

    def test_third_order_rejected(self):
        with pytest.raises(PreconditionError):
            mol_evolve(EvolutionEquation.from_rhs("u3"), np.ones(21), Grid(-1.0, 1.0, 21))

    def test_csv_layout(self):
        history = mol_evolve(HEAT, np.ones(5), Grid(0.0, 1.0, 5, t1=0.01), n_records=2)
        lines = history.to_csv().splitlines()
        assert lines[0] == "t,x,u"
        assert len(lines) == 1 + len(history.times) * 5

    def test_convergence_on_heat_equation(self):
        reference = "exp(0-t)*sin(x)"
        errors = []
        for nx in (11, 21):
            history = mol_evolve(HEAT, reference, Grid(0.0, 1.0, nx), reference=reference)
            assert history.boundary == "dirichlet"
            errors.append(max_deviation(history, reference))
        assert errors[1] < errors[0] / 3

    @pytest.mark.slow
    def test_fine_grid_accuracy(self):
        reference = "exp(0-t)*sin(x)"
        history = mol_evolve(HEAT, reference, Grid(0.0, 1.0, 101), reference=reference)
        assert max_deviation(history, reference) < 1e-5

    @pytest.mark.slow
    def test_very_fine_grid(self):
        reference = "exp(0-t)*sin(x)"
        history = mol_evolve(HEAT, reference, Grid(0.0, 1.0, 401), reference=reference)
        assert max_deviation(history, reference) < 1e-6


@pytest.mark.unit
class TestConstraintDrift:
    def test_preserved_constraint(self):
        report = constraint_drift(HEAT, parse("u2"), "1+0.5*x", Grid(-1.0, 1.0, 41), reference="1+0.5*x")
        assert report.passed
        assert report.boundary == "dirichlet"
        assert report.to_dict()["pass"] is True

    def test_control_with_source_fails(self, catalog):
        instance = instantiate("so-2", {"q": 2, "s": 0.3, "r": 0.1}, catalog)
        report = constraint_drift(instance.equation, parse("u2"), "1+0.5*x", Grid(-1.0, 1.0, 41))
        assert not report.passed
        assert report.growth > 1

    def test_initial_data_must_satisfy_constraint(self):
        with pytest.raises(PreconditionError):
            constraint_drift(HEAT, parse("u2"), "x^2", Grid(-1.0, 1.0, 21))

    def test_order_above_three(self):
        with pytest.raises(PreconditionError):
            constraint_drift(HEAT, parse("u4"), "1", Grid(-1.0, 1.0, 21))
