"""Period construction, unit values, discounting and CSV ingestion."""

from __future__ import annotations

import datetime as dt
import random

import numpy as np
import pytest
from hypothesis import given, strategies as st

from habitlens.errors import EmptyHousehold, InconsistentRecord, InputError, MissingRate
from habitlens.panel import (DiscountSeries, Excluded, HouseholdPanel, PurchaseEvent, aggregate_period,
                             build_periods, panels_from_events, parse_window, period_count, read_purchases,
                             read_rates, to_present_value, write_purchases)


class TestPeriodCount:
    def test_span_over_gap(self):
        # purchases every 50 days across 300 days
        assert period_count(range(0, 301, 50)) == (300, 50, 6)

    def test_long_gap_gives_one_period(self):
        assert period_count([0, 10, 200, 210]) == (210, 190, 1)

    def test_single_date(self):
        assert period_count([5, 5]) == (0, 0, 0)


class TestAggregatePeriod:
    def test_pooled_unit_value(self, make_event):
        evs = [make_event("h", 0, "a", 2, 4.0), make_event("h", 1, "a", 1, 2.30)]
        x, rho, e = aggregate_period(evs, ["a"])
        assert x[0] == 3
        assert rho[0] == pytest.approx(2.10)
        assert e == pytest.approx(6.30)

    def test_single_event(self, make_event):
        x, rho, _ = aggregate_period([make_event("h", 0, "a", 1, 3.0)], ["a"])
        assert (x[0], rho[0]) == (1, 3.0)

    def test_goods_are_independent(self, make_event):
        evs = [make_event("h", 0, "a", 2, 3.0), make_event("h", 0, "b", 4, 2.0)]
        x, rho, _ = aggregate_period(evs, ["a", "b", "c"])
        np.testing.assert_allclose(x, [2, 4, 0])
        np.testing.assert_allclose(rho[:2], [1.5, 0.5])
        assert np.isnan(rho[2])

    def test_spend_without_units_is_inconsistent(self, make_event):
        with pytest.raises(InconsistentRecord):
            aggregate_period([make_event("h", 0, "a", 0, 3.0)], ["a"])


class TestBuildPeriods:
    def test_bins_and_midpoints(self, make_event):
        evs = [make_event("h", d, "a", 1, 1.0) for d in range(0, 301, 50)]
        pan = build_periods(evs)
        assert isinstance(pan, HouseholdPanel)
        assert pan.T == 6
        # day 300 sits on the closed right edge of the last bin, days 50, 100, ... open new bins
        np.testing.assert_allclose(pan.X[:, 0], [1, 1, 1, 1, 1, 2])
        assert pan.midpoints[0] == dt.date(2021, 1, 26)

    def test_boundary_day_goes_to_later_bin_start(self, make_event):
        # S=100, G=50, T=2: day 50 is the left edge of bin 1
        evs = [make_event("h", 0, "a", 1, 1.0), make_event("h", 50, "a", 1, 1.0),
               make_event("h", 100, "a", 1, 1.0)]
        pan = build_periods(evs, min_T=2)
        np.testing.assert_allclose(pan.X[:, 0], [1, 2])

    def test_excluded_when_too_short(self, make_event):
        evs = [make_event("h", d, "a", 1, 1.0) for d in (0, 10, 200, 210)]
        res = build_periods(evs)
        assert isinstance(res, Excluded)
        assert res.T == 1

    def test_single_date_excluded(self, make_event):
        res = build_periods([make_event("h", 0, "a", 1, 1.0), make_event("h", 0, "b", 1, 1.0)])
        assert isinstance(res, Excluded)

    def test_empty_raises(self):
        with pytest.raises(EmptyHousehold):
            build_periods([])

    def test_mixed_households_rejected(self, make_event):
        with pytest.raises(ValueError):
            build_periods([make_event("h", 0, "a", 1, 1.0), make_event("g", 9, "a", 1, 1.0)])

    @given(st.lists(st.tuples(st.integers(0, 400), st.sampled_from("abcd"), st.integers(1, 5),
                              st.floats(0.1, 20)), min_size=2, max_size=40),
           st.randoms(use_true_random=False))
    def test_permutation_invariant_and_budget_identity(self, rows, rnd):
        day0 = dt.date(2020, 1, 1)
        evs = [PurchaseEvent("h", day0 + dt.timedelta(days=d), g, u, e) for d, g, u, e in rows]
        a = build_periods(evs, min_T=1)
        shuffled = list(evs)
        rnd.shuffle(shuffled)
        b = build_periods(shuffled, min_T=1)
        if isinstance(a, Excluded):
            assert isinstance(b, Excluded)
            return
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_allclose(a.P, b.P, rtol=1e-12, equal_nan=True)
        assert np.all((a.X > 0).sum(axis=1) >= 1)
        recon = np.nansum(np.where(a.X > 0, a.P * a.X, 0.0), axis=1)
        np.testing.assert_allclose(recon, a.expenditure, rtol=1e-9)


class TestPresentValue:
    def _panel(self):
        X = np.array([[1.0], [1.0], [1.0]])
        P = np.array([[2.0], [2.0], [2.0]])
        mids = (dt.date(2020, 1, 15), dt.date(2020, 2, 15), dt.date(2020, 3, 15))
        return HouseholdPanel("h", ("a",), X, P, np.array([2.0, 2.0, 2.0]), mids)

    def test_zero_rates_are_identity(self):
        pan = self._panel()
        series = DiscountSeries({(2020, m): 0.0 for m in (1, 2, 3)})
        out = to_present_value(pan, series)
        np.testing.assert_array_equal(out.P, pan.P)

    def test_flat_one_percent(self):
        series = DiscountSeries({(2020, m): 0.01 for m in (1, 2, 3)})
        assert series.scale((2020, 2)) == pytest.approx(1 / 1.01)
        out = to_present_value(self._panel(), series)
        np.testing.assert_allclose(out.P[:, 0], [2.0, 2.0 / 1.01, 2.0 / 1.01 ** 2])

    def test_missing_month(self):
        series = DiscountSeries({(2020, 1): 0.0, (2020, 3): 0.0})
        with pytest.raises(MissingRate):
            to_present_value(self._panel(), series)


class TestFiles:
    def test_bad_row_reports_line(self, tmp_path):
        f = tmp_path / "p.csv"
        f.write_text("household_id,date,good_id,units,expenditure\nh,2020-01-01,a,1,2\nh,2020-01-02,a,1.5,2\n")
        with pytest.raises(InputError) as err:
            read_purchases(f)
        assert err.value.line == 3
        assert ":3:" in str(err.value)

    def test_bad_header(self, tmp_path):
        f = tmp_path / "p.csv"
        f.write_text("hh,date,good,units,spend\n")
        with pytest.raises(InputError):
            read_purchases(f)

    def test_window_filters(self, tmp_path):
        f = tmp_path / "p.csv"
        f.write_text("household_id,date,good_id,units,expenditure\n"
                     "h,2020-01-01,a,1,2\nh,2020-06-01,a,1,2\n")
        evs = read_purchases(f, parse_window("2020-01-01:2020-03-01"))
        assert len(evs) == 1

    def test_rates(self, tmp_path):
        f = tmp_path / "r.csv"
        f.write_text("month,rate\n2020-01,0.01\n2020-02,0.02\n")
        s = read_rates(f)
        assert s.scale((2020, 2)) == pytest.approx(1 / 1.01)
        f.write_text("month,rate\n2020-13,0.01\n")
        with pytest.raises(InputError):
            read_rates(f)

    def test_write_then_read_round_trip(self, tmp_path, rational_case):
        pan = rational_case.panel
        f = tmp_path / "p.csv"
        write_purchases(f, [pan])
        panels, excluded = panels_from_events(read_purchases(f))
        assert not excluded
        back = panels[0]
        bought = tuple(g for k, g in enumerate(pan.goods) if pan.X[:, k].any())
        assert back.goods == bought  # never-purchased goods leave no events
        ref = pan.select_goods(bought)
        np.testing.assert_array_equal(back.X, ref.X)
        np.testing.assert_allclose(back.P, ref.P, rtol=1e-12, equal_nan=True)

    def test_panels_sorted_and_deterministic(self, tmp_path):
        rows = ["household_id,date,good_id,units,expenditure"]
        rnd = random.Random(0)
        for hid in ("z", "a", "m"):
            for d in range(0, 200, 20):
                rows.append(f"{hid},{(dt.date(2020, 1, 1) + dt.timedelta(days=d)).isoformat()},"
                            f"g{rnd.randint(0, 3)},1,{rnd.uniform(1, 3):.2f}")
        f = tmp_path / "p.csv"
        f.write_text("\n".join(rows) + "\n")
        panels, _ = panels_from_events(read_purchases(f))
        assert [p.household_id for p in panels] == ["a", "m", "z"]
