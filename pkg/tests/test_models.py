"""Built-in models, the models file and the reference special-case tests."""

from __future__ import annotations

import numpy as np
import pytest

from habitlens.dynamic import run_test
from habitlens.errors import InputError, TooFewPeriods
from habitlens.hedonic import Technology
from habitlens.models import (ModelSpec, builtin_models, garp_relations, get_model, read_models, run_model,
                              test_garp_goods, test_goods_corollary, test_static_characteristics)
from habitlens.panel import HouseholdPanel
from habitlens.synth import GeneratorConfig, generate_rationalisable, generate_structural_violation


def base_tech(goods) -> Technology:
    rng = np.random.default_rng(0)
    return Technology(rng.uniform(0.1, 2, (4, len(goods))), (), 1, ("sugar", "sodium", "fat", "fibre"),
                      tuple(goods))


class TestBuiltins:
    def test_names_and_shapes(self):
        ms = {m.name: m for m in builtin_models()}
        assert len(ms) == 8
        assert ms["habits_chars"].habit_attributes == ("sugar", "sodium") and ms["habits_chars"].lifecycle
        assert ms["habits_all_goods"].identity and ms["habits_all_goods"].habit_attributes == "all"
        assert not ms["goods_garp"].lifecycle
        assert sum(m.lifecycle for m in ms.values()) == 7

    def test_all_goods_is_identity_with_full_habits(self, tiny_panel):
        tech = get_model("habits_all_goods").technology_for(tiny_panel, None)
        np.testing.assert_array_equal(tech.A, np.eye(2))
        assert tech.J2 == tech.K == tech.J

    def test_chars_model_selects_habits(self, tiny_panel):
        tech = get_model("habits_chars").technology_for(tiny_panel, base_tech(tiny_panel.goods))
        assert tech.habit_rows == (0, 1)
        assert get_model("habits_all_chars").technology_for(tiny_panel, base_tech(tiny_panel.goods)).J2 == 4

    def test_missing_characteristics_named(self, tiny_panel):
        with pytest.raises(InputError, match="'b'"):
            get_model("habits_chars").technology_for(tiny_panel, base_tech(["a", "c"]))

    def test_unknown(self):
        with pytest.raises(KeyError):
            get_model("nope")

    def test_bad_spec(self):
        with pytest.raises(ValueError):
            ModelSpec("x", habit_attributes=("fat",), attributes=("sugar",))
        with pytest.raises(ValueError):
            ModelSpec("x", beta_grid=())


class TestModelsFile:
    def test_read(self, tmp_path):
        f = tmp_path / "m.toml"
        f.write_text('[[model]]\nname = "fat_habits"\nhabit_attributes = ["fat"]\nlags = 2\n'
                     'beta_grid = {start = 0.9, stop = 1.0, step = 0.05}\n'
                     '[[model]]\nname = "g"\nidentity = true\nhabit_attributes = "all"\n')
        ms = read_models(f)
        assert ms[0].beta_grid == (0.9, 0.95, 1.0) and ms[0].lags == 2
        assert ms[1].identity and ms[1].habit_attributes == "all"

    def test_bad_entry(self, tmp_path):
        f = tmp_path / "m.toml"
        f.write_text('[[model]]\nlabel = "no name"\n')
        with pytest.raises(InputError):
            read_models(f)


class TestGoodsCorollary:
    @pytest.mark.parametrize("seed", range(10))
    def test_agrees_with_engine(self, seed):
        rng = np.random.default_rng(seed)
        case = generate_rationalisable(GeneratorConfig(K=4, J=4, J2=4, T=5, seed=seed, identity=True))
        pan = case.panel
        if seed % 2:
            pan = pan.with_prices(pan.P * rng.uniform(0.5, 1.5, pan.P.shape))
        ref = test_goods_corollary(pan)
        eng = run_test(pan, Technology.identity(pan.K, "all"), with_certificate=False)
        assert ref.passed == eng.passed
        assert ref.admissible_betas == eng.admissible_betas

    def test_static_rationalisable_passes(self):
        case = generate_rationalisable(GeneratorConfig(K=4, J=4, J2=0, T=5, seed=3, identity=True, beta_true=1.0))
        assert test_goods_corollary(case.panel).passed

    def test_single_period(self, tiny_panel):
        one = HouseholdPanel.from_arrays("o", tiny_panel.X[:1], tiny_panel.P[:1], tiny_panel.goods)
        with pytest.raises(TooFewPeriods):
            test_goods_corollary(one)


class TestStaticCorollary:
    @pytest.mark.parametrize("seed", range(10))
    def test_agrees_with_engine(self, seed):
        rng = np.random.default_rng(seed)
        case = generate_rationalisable(GeneratorConfig(K=6, J=3, J2=0, T=5, seed=seed, beta_true=1.0))
        pan = case.panel
        if seed % 2:
            pan = pan.with_prices(pan.P * rng.uniform(0.9, 1.1, pan.P.shape))
        ref = test_static_characteristics(pan, case.technology)
        eng = run_test(pan, case.technology, grid=(1.0,), with_certificate=False)
        assert ref.passed == eng.passed

    def test_nc_failure(self):
        case = generate_structural_violation(GeneratorConfig(K=7, J=3, J2=0, T=5, seed=1, beta_true=1.0))
        assert not test_static_characteristics(case.panel, case.technology).passed


class TestGARP:
    def _panel(self, X, P):
        return HouseholdPanel.from_arrays("g", np.array(X, float), np.array(P, float), ("a", "b"))

    def test_identical_bundles(self):
        assert test_garp_goods(self._panel([[1, 2], [1, 2]], [[1, 1], [2, 1]]))

    def test_hand_checked_pair(self):
        # ρ_1'x_1 = 4 < ρ_1'x_2 = 5 and ρ_2'x_2 = 4 < ρ_2'x_1 = 5: no relation either way
        pan = self._panel([[1, 2], [2, 1]], [[2, 1], [1, 2]])
        R0, _ = garp_relations(pan)
        assert not R0[0, 1] and not R0[1, 0]
        assert test_garp_goods(pan)

    def test_warp_violation(self):
        # each bundle was affordable when the other was chosen, and strictly cheaper
        pan = self._panel([[2, 1], [1, 2]], [[2, 1], [1, 2]])
        assert not test_garp_goods(pan)

    def test_missing_prices_skip_pair(self):
        X = [[1, 0], [0, 1]]
        P = [[1, np.nan], [np.nan, 1]]
        pan = HouseholdPanel.from_arrays("g", np.array(X, float), np.array(P), ("a", "b"))
        R0, P0 = garp_relations(pan)
        assert not R0[0, 1] and not R0[1, 0]
        assert test_garp_goods(pan)

    def test_run_model_garp_shape(self, tiny_panel):
        out = run_model(tiny_panel, get_model("goods_garp"))
        assert out.admissible_betas == () and out.ccei is None and out.extra["test"] == "garp"
