"""
Tests de l'équation déterminante : résidus, identité, ajustement, relations de branche.
"""
from fractions import Fraction

import numpy as np
import pytest

from engine.catalog import instantiate
from engine.errors import OrderMismatchError, PreconditionError, SingularSamplingError
from engine.expr import Const, compile_expression, parse
from engine.jet import EvolutionEquation, jet_domain, sample_domain
from engine.lde import (
    DeterminingSpec,
    ResidualReport,
    build_residual_diffusion,
    build_residual_general,
    check_identity,
    diffusion_equation,
    fit_b_coefficients,
    make_rng,
    relation_residuals,
    solve_b3_relations,
)

pytestmark = pytest.mark.unit

H_SO2 = parse("u2+2*u1^2/u0")
F_SO2 = parse("0.3*u0-1.2*u0^(0-2)")


class TestGeneralResidual:
    def test_classical_symmetry_translation(self, sampler):
        eq = EvolutionEquation.from_rhs("u0*u2+u1^2")
        residual = build_residual_general(parse("u1"), eq, DeterminingSpec.classical(2))
        assert check_identity(residual, sampler(1e-12)).passed

    @pytest.mark.parametrize("entry_id,params", [
        ("so-1", {"s": 0.4, "r": 0.6}),
        ("so-2", {"q": 2, "s": 0.5, "r": 0.8}),
        ("so-3", {"s": 0.5, "r": 0.3}),
    ])
    def test_classical_symmetry_on_catalog_equations(self, catalog, sampler, entry_id, params):
        eq = instantiate(entry_id, params, catalog).equation
        assert eq.is_autonomous_in_x
        residual = build_residual_general(parse("u1"), eq, DeterminingSpec.classical(2))
        assert check_identity(residual, sampler(1e-12)).passed

    def test_explicit_x_breaks_translation(self, sampler):
        eq = EvolutionEquation.from_rhs("x*u2")
        residual = build_residual_general(parse("u1"), eq, DeterminingSpec.classical(2))
        report = check_identity(residual, sampler(1e-12))
        assert not report.passed
        assert report.max_abs > 0.1

    def test_zero_spec_is_total_t_derivative(self, sampler):
        eq = EvolutionEquation.from_rhs("u0*u2+u1^2")
        spec = DeterminingSpec.general(2, {})
        residual = build_residual_general(parse("u1"), eq, spec)
        expected = parse("3*u1*u2+u0*u3")
        program = compile_expression(residual, expected)
        values = program.evaluate_array(sample_domain(make_rng(0, "zero"), jet_domain(3), 50))
        np.testing.assert_allclose(values[0], values[1], rtol=1e-12, atol=1e-12)

    def test_order_mismatch(self):
        eq = EvolutionEquation.from_rhs("u0*u2")
        with pytest.raises(OrderMismatchError):
            build_residual_general(parse("u1"), eq, DeterminingSpec.classical(3))

    def test_reduction_to_diffusion_form(self):
        coefficients = {(0, 0): 1.0, (1, 0): 1.0, (1, 1): 1.5, (2, 0): 0.5, (2, 1): 1.0, (2, 2): 1.0}
        spec = DeterminingSpec.general(2, coefficients)
        reduced = spec.to_diffusion()
        assert reduced.reduced == pytest.approx((4.0, 3.5, 3.5, 1.0))
        eq = diffusion_equation(2, parse("0.3*u0"))
        general = build_residual_general(H_SO2, eq, spec)
        diffusion = build_residual_diffusion(H_SO2, 2, parse("0.3*u0"), reduced)
        program = compile_expression(general, diffusion)
        values = program.evaluate_array(sample_domain(make_rng(1, "equiv"), jet_domain(4), 100))
        scale = 1 + np.maximum(np.abs(values[0]), np.abs(values[1]))
        assert np.max(np.abs(values[0] - values[1]) / scale) < 1e-10


class TestDiffusionResidual:
    def test_so2_with_expected_coefficients(self, sampler):
        residual = build_residual_diffusion(H_SO2, 2, F_SO2, DeterminingSpec.diffusion(4, 4, 1, 1))
        report = check_identity(residual, sampler(1e-9))
        assert report.passed

    def test_missing_nonlinear_term_fails(self, sampler):
        residual = build_residual_diffusion(parse("u2"), 2, F_SO2, DeterminingSpec.diffusion(4, 4, 1, 1))
        assert check_identity(residual, sampler(1e-8)).max_abs > 1e-2

    def test_q_zero_rejected(self):
        with pytest.raises(PreconditionError):
            build_residual_diffusion(H_SO2, 0, F_SO2, DeterminingSpec.diffusion(1, 1, 1, 1))


class TestCheckIdentity:
    def test_zero_expression(self, sampler):
        report = check_identity(Const(0), sampler())
        assert report.max_abs == 0 and report.passed

    def test_constant_fails(self, sampler):
        report = check_identity(parse("0.001"), sampler(1e-8))
        assert not report.passed
        assert report.max_abs >= report.rms >= 0

    def test_deterministic(self, sampler):
        residual = build_residual_diffusion(parse("u2"), 2, F_SO2, DeterminingSpec.diffusion(4, 4, 1, 1))
        first = check_identity(residual, sampler(seed=11))
        second = check_identity(residual, sampler(seed=11))
        assert first.to_dict() == second.to_dict()

    def test_report_fields(self):
        report = ResidualReport(num_samples=3, max_abs=0.5, rms=0.2, tolerance=1.0, passed=True)
        data = report.to_dict()
        assert data["pass"] is True
        assert data["num_samples"] == 3


class TestFit:
    def test_so2_recovers_printed_coefficients(self, sampler):
        fit = fit_b_coefficients(parse("u2+q*u1^2/u0"), 2, parse("s*u0+r*u0^(0-2)"),
                                 sampler(1e-7), parameters={"q": 2.0, "s": 0.7, "r": 1.3})
        assert fit.coefficients == pytest.approx((4.0, 4.0, 1.0, 1.0), abs=1e-6)
        assert fit.rank == 4 and not fit.degenerate
        assert fit.report.passed

    def test_so1_passes(self, sampler):
        fit = fit_b_coefficients(parse("u2-u1^2/u0"), -1, parse("0.5*u0+0.3*u0*ln(u0)"), sampler(1e-8))
        assert fit.report.passed
        assert fit.report.max_abs < 1e-9

    def test_degenerate_system(self, sampler):
        fit = fit_b_coefficients(parse("u1"), 1, Const(0), sampler(1e-10))
        assert fit.degenerate
        assert fit.rank == 1
        b1, _, b3, _ = fit.coefficients
        assert b1 + b3 == pytest.approx(3.0, abs=1e-9)
        assert b1 == pytest.approx(b3, abs=1e-9)
        assert fit.report.passed

    def test_so3_corrected_coefficient(self, catalog, sampler):
        instance = instantiate("so-3", {"s": 0.5, "r": 0.3}, catalog)
        fit = fit_b_coefficients(instance.corrected_h, Const(instance.q), instance.f, sampler(1e-8))
        assert fit.report.passed
        assert fit.coefficients == pytest.approx((4.0, 2.0, 0.0, 1.0), abs=1e-6)

    def test_so3_printed_coefficient_fails(self, catalog, sampler):
        instance = instantiate("so-3", {"s": 0.5, "r": 0.3}, catalog)
        fit = fit_b_coefficients(instance.h, Const(instance.q), instance.f, sampler(1e-8))
        assert not fit.report.passed
        assert fit.report.max_abs > 1e-3

    def test_refit_is_stable(self, sampler):
        first = fit_b_coefficients(H_SO2, 2, F_SO2, sampler(case_id="a"))
        second = fit_b_coefficients(H_SO2, 2, F_SO2, sampler(case_id="b"))
        assert first.coefficients == pytest.approx(second.coefficients, abs=1e-9)

    def test_identical_points_rejected(self):
        point = {"t": 0.1, "x": 0.2, "u0": 1.0, "u1": 0.5, "u2": -0.3, "u3": 0.1, "u4": 0.2}
        with pytest.raises(SingularSamplingError):
            fit_b_coefficients(H_SO2, 2, F_SO2, points=[point] * 8)

    def test_third_order_entry(self, catalog, sampler):
        instance = instantiate("to-2", {"q": 3, "n": 0.5, "r": 0.7, "m": 0}, catalog)
        fit = fit_b_coefficients(instance.h, Const(instance.q), instance.f, sampler(1e-8))
        assert fit.report.passed


class TestBranchRelations:
    @pytest.mark.parametrize("q", [2, 3, -1, Fraction(-4, 3)])
    def test_roots_satisfy_relations(self, q):
        roots = solve_b3_relations(q)
        q = Fraction(q)
        assert {r.b3 for r in roots} == {Fraction(1), (q + 2) / q}
        for root in roots:
            first, second = relation_residuals(q, root.b2, root.b3)
            assert first == 0 and second == 0
            assert root.consistent

    def test_q_two(self):
        roots = {r.b3: r.b2 for r in solve_b3_relations(2)}
        assert set(roots) == {1, 2}
        assert roots[Fraction(1)] == 4

    def test_q_minus_one(self):
        assert {r.b3 for r in solve_b3_relations(-1)} == {1, -1}

    def test_q_one_leaves_b2_undefined(self):
        roots = solve_b3_relations(1)
        assert all(r.b2_undefined for r in roots)

    def test_q_zero_rejected(self):
        with pytest.raises(PreconditionError):
            solve_b3_relations(0)
