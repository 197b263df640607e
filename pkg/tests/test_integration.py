"""
Tests d'intégration : suites complètes de vérification sur le catalogue livré.
"""
import pytest
from loguru import logger

from utils.metrics import metrics
from utils.report import ERRATUM, FAIL, PASS, Report
from verifiers import (
    CompatVerifier,
    ErrorType,
    LDEVerifier,
    ReductionRunner,
    SolutionVerifier,
    VerificationError,
)

pytestmark = pytest.mark.integration

# Désactiver les logs pendant les tests
logger.remove()


@pytest.fixture
def lde(settings, catalog):
    return LDEVerifier(settings, catalog)


@pytest.fixture
def solutions(settings, catalog):
    return SolutionVerifier(settings, catalog)


@pytest.fixture
def runner(settings, catalog):
    return ReductionRunner(settings, catalog)


def test_all_constraints_satisfy_their_determining_equation(lde, catalog):
    """Chaque contrainte du catalogue passe sur plusieurs tirages de paramètres."""
    cases = lde.process()
    verified = [case for case in cases if case.kind == "lde"]
    assert len(verified) == 3 * len(catalog.constraints)
    assert all(case.passed for case in cases), [case.id for case in cases if not case.passed]
    logger.info(f"Équations déterminantes vérifiées : {len(cases)} cas")


@pytest.mark.parametrize("entry_id", ["so-5", "so-3"])
def test_printed_constraint_is_an_erratum(lde, entry_id):
    """La forme imprimée échoue ; la forme corrigée passe et l'erratum est signalé."""
    cases = lde.process(entries=[entry_id])
    printed = [case for case in cases if case.kind == "lde-printed"]
    assert printed and all(case.status == ERRATUM for case in printed)
    assert all(case.status == PASS for case in cases if case.kind == "lde")
    assert all(case.erratum for case in printed)


def test_lde_details(lde):
    """Les coefficients ajustés et le nombre de points figurent dans le rapport."""
    case = lde.process(entries=["so-2"])[0]
    assert case.id == "so-2#0"
    assert len(case.details["coefficients"]) == 4
    assert case.details["num_samples"] == 100
    assert case.details["expected_b"][0] == pytest.approx(4.0)


def test_unknown_entry_is_invalid_input(lde):
    """Un identifiant inconnu devient une erreur de configuration."""
    with pytest.raises(VerificationError) as info:
        lde.process(entries=["so-42"])
    assert info.value.error_type == ErrorType.INVALID_INPUT
    assert metrics.get_metrics()["verifier.lde.errors{error_type=invalid_input}"]["value"] == 1


def test_all_solution_families(solutions, catalog):
    """Toutes les formes vérifiées passent ; les formes imprimées fautives sont des errata."""
    cases = solutions.process()
    verified = {case.id: case for case in cases if case.kind == "solution"}
    assert set(verified) == {family.id for family in catalog.solutions}
    assert all(case.status == PASS for case in verified.values())
    for case in cases:
        if case.kind == "solution-printed":
            assert case.status in (PASS, ERRATUM)
    assert any(case.kind == "solution-conformal" and case.passed for case in cases)
    logger.info(f"Familles de solutions vérifiées : {len(verified)}")


def test_printed_families_with_erratum(solutions):
    """S1, S2, S5, S6 et S10 : la forme imprimée échoue et l'erratum est documenté."""
    cases = solutions.process(families=["S1", "S2", "S5", "S6", "S10"])
    printed = {case.id: case for case in cases if case.kind == "solution-printed"}
    assert set(printed) == {"S1", "S2", "S5", "S6", "S10"}
    assert all(case.status == ERRATUM for case in printed.values())


def test_metrics_count_cases(solutions):
    """Le compteur d'appels reflète le nombre de cas produits."""
    cases = solutions.process(families=["S3"])
    assert metrics.get_metrics()["verifier.solutions.calls"]["value"] == len(cases)


@pytest.mark.parametrize("key", ["so-2", "so-1", "to-1", "26", "43", "48"])
def test_reductions(runner, key):
    """Chaque représentation se réduit, s'intègre et reproduit sa solution de référence."""
    cases = runner.process(constraint=key, step=1e-3)
    assert cases
    assert all(case.passed for case in cases), [(case.kind, case.max_abs) for case in cases if not case.passed]
    assert any(case.kind == "reduce-oracle" for case in cases)
    logger.info(f"Réduction {key} : {len(cases)} contrôles")


def test_first_integral_and_identity(runner):
    """Le rapport b/c est conservé pour rep-22 ; l'identité de rep-48 est vérifiée."""
    kinds = {case.kind: case for case in runner.process(constraint="to-1", step=1e-3)}
    assert kinds["reduce-first-integral"].passed
    kinds = {case.kind: case for case in runner.process(constraint="48", step=1e-3)}
    assert kinds["reduce-identity"].passed


def test_trajectory_export(runner, tmp_path):
    """La trajectoire est écrite en CSV quand un chemin est donné."""
    target = tmp_path / "trajectory.csv"
    runner.process(constraint="so-2", step=0.01, trajectory_out=target)
    assert target.read_text().startswith("t,c1,c2\n")


def test_short_integration_window(runner):
    """Un t1 plus court que l'intervalle catalogué reste valide."""
    cases = runner.process(constraint="so-2", step=0.01, t1=0.2)
    assert all(case.details["end"] == pytest.approx(0.2) for case in cases if "end" in case.details)


def test_unknown_reduction_key(runner):
    with pytest.raises(VerificationError) as info:
        runner.process(constraint="so-77", step=0.01)
    assert info.value.error_type == ErrorType.INVALID_INPUT


def test_liouville_chain(runner):
    """Les deux contrôles de la chaîne de Liouville passent avec les constantes par défaut."""
    cases = runner.process(constraint="liouville", step=1e-3)
    assert {case.kind for case in cases} == {"liouville-t", "liouville"}
    assert all(case.passed for case in cases)


def test_orthogonality_is_diagnostic(runner):
    """Le contrôle d'orthogonalité est rapporté sans jamais faire échouer la suite."""
    cases = runner.process(constraint="orthogonality", step=1e-3)
    diagnostic = next(case for case in cases if case.kind == "orthogonality")
    assert diagnostic.passed
    assert diagnostic.details["diagnostic"] is True


@pytest.mark.slow
def test_compat_drift_on_default_grid(settings, catalog):
    """Dérive de so-2 et so-5 sur 401 nœuds ; le cas de contrôle de so-2 échoue comme attendu."""
    cases = CompatVerifier(settings, catalog).process(entries=["so-2", "so-5"])
    report = Report(version="test", config={})
    report.extend(cases)
    assert report.all_passed
    assert any(case.kind == "compat-control" for case in cases)


def test_compat_without_drift_data(settings, catalog):
    with pytest.raises(VerificationError):
        CompatVerifier(settings, catalog, nodes=41).process(entries=["so-3"])


def test_failed_case_marks_report(settings, catalog):
    """Un cas en échec fait passer le code de sortie à 1."""
    report = Report(version="test", config={})
    report.extend(LDEVerifier(settings, catalog, draws=1).process(entries=["so-2"]))
    assert report.all_passed
    report.cases[0].status = FAIL
    assert not report.all_passed
    assert report.summary == {"pass": len(report.cases) - 1, "fail": 1}
