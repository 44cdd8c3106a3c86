"""McNemar arithmetic, pass-rate tables and report files."""

from __future__ import annotations

from decimal import Decimal

import pytest
from hypothesis import given, strategies as st
from scipy.stats import binomtest

from habitlens.dynamic import TestOutcome, run_test
from habitlens.errors import NoData
from habitlens.report import (compare, emit_reports, format_p, mcnemar_exact, pass_rate_table, percent,
                              read_outcomes)


def outcome(hid: str, model: str, ok: bool) -> TestOutcome:
    return TestOutcome(hid, model, ok, (1.0,) if ok else (), None, 1.0 if ok else None)


class TestMcNemar:
    def test_table_rows(self):
        p = mcnemar_exact(53, 0)
        assert 2.2e-16 <= p <= 2.3e-16 and p < 1e-15
        assert mcnemar_exact(2, 0) == 0.5
        assert mcnemar_exact(0, 0) == 1.0
        assert format_p(p) == "<1e-15"
        assert format_p(0.5) == "0.500"

    def test_negative(self):
        with pytest.raises(ValueError):
            mcnemar_exact(-1, 2)

    @given(st.integers(0, 60), st.integers(0, 60))
    def test_symmetric_and_matches_binomial(self, a, b):
        p = mcnemar_exact(a, b)
        assert p == mcnemar_exact(b, a)
        assert 0.0 <= p <= 1.0
        if a + b:
            assert p == pytest.approx(binomtest(min(a, b), a + b, 0.5).pvalue, rel=1e-9)

    @given(st.integers(1, 60))
    def test_monotone_in_imbalance(self, n):
        ps = [mcnemar_exact(k, n - k) for k in range(n // 2, n + 1)]
        assert all(x >= y for x, y in zip(ps, ps[1:]))


class TestPassRates:
    def test_percent(self):
        assert percent(1248, 2282) == Decimal("54.69")
        assert percent(0, 7) == Decimal("0.00")
        assert percent(7, 7) == Decimal("100.00")

    def test_half_even(self):
        assert percent(1, 8) == Decimal("12.50")
        assert percent(1, 800) == Decimal("0.12")  # 0.125 rounds to even

    def test_table_and_empty(self):
        outs = [outcome("a", "m", True), outcome("b", "m", False)]
        (r,) = pass_rate_table(outs)
        assert (r.n_pass, r.n, str(r.pct)) == (1, 2, "50.00")
        with pytest.raises(NoData):
            pass_rate_table([])


class TestCompare:
    def test_switchers(self):
        outs = [outcome(h, "m0", ok0) for h, ok0 in zip("abcd", (False, False, True, True))]
        outs += [outcome(h, "m1", ok1) for h, ok1 in zip("abcd", (True, True, True, False))]
        c = compare(outs, "m0", "m1")
        assert (c.n_01, c.n_10, c.switchers, c.n) == (2, 1, 3, 4)
        assert c.pass0_rate == 0.5 and c.pass1_rate == 0.75
        assert c.p_value == mcnemar_exact(2, 1)
        assert str(c.delta_pct) == "-25.00"

    def test_missing_model(self):
        with pytest.raises(NoData):
            compare([outcome("a", "m0", True)], "m0", "m1")


class TestEmit:
    def test_files_idempotent_and_roundtrip(self, tmp_path, rational_case):
        outs = [run_test(rational_case.panel, rational_case.technology, model_id="habits"),
                outcome("x", "habits", False)]
        comps = [compare(outs + [outcome(rational_case.panel.household_id, "other", False),
                                 outcome("x", "other", False)], "habits", "other")]
        a = emit_reports(tmp_path / "a", outs, comps, [], [])
        b = emit_reports(tmp_path / "b", outs, comps, [], [])
        for pa, pb in zip(a, b):
            assert pa.read_bytes() == pb.read_bytes()
        back = read_outcomes(tmp_path / "a" / "outcomes.jsonl")
        assert [o.passed for o in back] == [True, False]
        assert back[0].certificate is not None

    def test_empty_comparisons_header_only(self, tmp_path):
        emit_reports(tmp_path, comparisons=[])
        assert (tmp_path / "mcnemar.csv").read_text().count("\n") == 1

    def test_unwritable(self, tmp_path):
        from habitlens.errors import HabitlensError
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(HabitlensError, match="file"):
            emit_reports(blocker / "sub", comparisons=[])
