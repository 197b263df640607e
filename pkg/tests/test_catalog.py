"""
Tests du catalogue : chargement, instanciation, admissibilité, tirages.
"""
from fractions import Fraction

import pytest

from engine.catalog import (
    ConstraintEntry,
    SolutionFamily,
    draw_parameters,
    dump_catalog,
    instantiate,
    load_catalog,
    window_is_valid,
)
from engine.errors import InadmissibleParameterError, PreconditionError, UnknownEntryError
from engine.expr import evaluate
from engine.lde import make_rng

pytestmark = pytest.mark.unit


class TestLoading:
    def test_counts(self, catalog):
        assert len(catalog.constraints) == 14
        assert len(catalog.solutions) >= 10
        assert len(catalog.representations) == 6

    def test_ids_unique(self, catalog):
        ids = catalog.ids()
        assert len(ids) == len(set(ids))

    def test_every_entry_has_provenance(self, catalog):
        for entry in catalog.constraints + catalog.solutions + catalog.representations:
            assert entry.provenance

    def test_windows_valid(self, catalog):
        assert all(window_is_valid(family.window) for family in catalog.solutions)

    def test_get_dispatches_by_kind(self, catalog):
        assert isinstance(catalog.get("so-2"), ConstraintEntry)
        assert isinstance(catalog.get("S1"), SolutionFamily)

    def test_unknown_id(self, catalog):
        with pytest.raises(UnknownEntryError):
            catalog.get("so-99")
        with pytest.raises(UnknownEntryError):
            catalog.constraint("S1")

    def test_missing_directory(self, tmp_path):
        with pytest.raises(PreconditionError):
            load_catalog(tmp_path / "absent")

    def test_invalid_json_line(self, tmp_path, catalog):
        root = dump_catalog(catalog, tmp_path / "broken")
        with open(root / "solutions.jsonl", "ab") as handle:
            handle.write(b"{pas du json\n")
        with pytest.raises(PreconditionError):
            load_catalog(root)

    def test_dump_then_load(self, tmp_path, catalog):
        reloaded = load_catalog(dump_catalog(catalog, tmp_path / "copy"))
        assert reloaded.ids() == catalog.ids()
        assert [e.to_record() for e in reloaded.constraints] == [e.to_record() for e in catalog.constraints]
        assert [e.to_record() for e in reloaded.solutions] == [e.to_record() for e in catalog.solutions]


class TestInstantiate:
    def test_so2(self, catalog):
        instance = instantiate("so-2", {"q": 2, "s": 0.5, "r": 0.8}, catalog)
        assert instance.q == Fraction(2)
        point = {"u0": 2.0}
        assert evaluate(instance.f, point) == pytest.approx(0.5 * 2 + 0.8 / 4)
        assert instance.corrected_h is None

    @pytest.mark.parametrize("q", [1, -1, 0])
    def test_excluded_q_is_named(self, catalog, q):
        with pytest.raises(InadmissibleParameterError) as info:
            instantiate("so-2", {"q": q, "s": 0.5, "r": 0.8}, catalog)
        assert info.value.constraint == f"q != {q}"

    def test_fixed_q_mismatch(self, catalog):
        with pytest.raises(InadmissibleParameterError) as info:
            instantiate("so-1", {"q": 2, "s": 0.5, "r": 0.3}, catalog)
        assert info.value.constraint == "q = -1"

    def test_fixed_q_default(self, catalog):
        assert instantiate("so-1", {"s": 0.5, "r": 0.3}, catalog).q == Fraction(-1)

    def test_conditional_parameter(self, catalog):
        with pytest.raises(InadmissibleParameterError):
            instantiate("to-2", {"q": 2, "n": 0.5, "r": 0.5, "m": 0.5}, catalog)
        instance = instantiate("to-2", {"q": -2, "n": 0.5, "r": 0.5, "m": 0.5}, catalog)
        assert instance.q == Fraction(-2)

    def test_missing_parameter(self, catalog):
        with pytest.raises(InadmissibleParameterError) as info:
            instantiate("so-2", {"q": 2, "s": 0.5}, catalog)
        assert "r" in info.value.constraint

    @pytest.mark.parametrize("entry_id,params", [
        ("so-5", {"q": 2, "s": 0.3, "r": 0.2}),
        ("so-3", {"s": 0.5, "r": 0.3}),
    ])
    def test_erratum_carries_corrected_h(self, catalog, entry_id, params):
        instance = instantiate(entry_id, params, catalog)
        assert instance.corrected_h is not None
        assert instance.corrected_h != instance.h

    def test_solution_defaults_and_printed(self, catalog):
        instance = instantiate("S1", {}, catalog)
        assert instance.params == {"k": 0.7, "s2": 0.5, "g": 0.3}
        assert instance.equation is not None
        assert instance.printed is not None

    def test_solution_override(self, catalog):
        instance = instantiate("S1", {"k": 0.2}, catalog)
        assert instance.params["k"] == 0.2

    def test_representation_rejected(self, catalog):
        with pytest.raises(PreconditionError):
            instantiate("rep-15", {}, catalog)


class TestDraws:
    def test_every_constraint_draws_admissible(self, catalog):
        rng = make_rng(3, "draws")
        for entry in catalog.constraints:
            for _ in range(3):
                params = draw_parameters(entry, rng)
                instance = instantiate(entry.id, params, catalog)
                assert instance.entry_id == entry.id

    def test_draws_are_seeded(self, catalog):
        entry = catalog.constraint("so-2")
        assert draw_parameters(entry, make_rng(5, "x")) == draw_parameters(entry, make_rng(5, "x"))

    def test_fixed_q_draw(self, catalog):
        params = draw_parameters(catalog.constraint("to-6"), make_rng(0))
        assert params["q"] == Fraction(-3, 2)
