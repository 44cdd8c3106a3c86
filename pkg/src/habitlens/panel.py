"""Purchase-event ingest, period construction and present-value conversion."""

from __future__ import annotations

import csv
import datetime as dt
import logging
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptyHousehold, InconsistentRecord, InputError, MissingRate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PurchaseEvent:
    household_id: str
    date: dt.date
    good_id: str
    units: float
    expenditure: float

    def __post_init__(self) -> None:
        if self.units < 0 or self.expenditure < 0:
            raise InconsistentRecord(
                f"negative units or expenditure for household {self.household_id}, good {self.good_id}")


@dataclass(frozen=True)
class Excluded:
    """A household dropped by the period filter."""

    household_id: str
    reason: str
    T: int = 0


@dataclass(frozen=True)
class HouseholdPanel:
    """Per-household periods: quantities ``X`` and prices ``P``, both (T, K).

    Prices of goods not bought in a period are NaN in the missing-price
    regime. A panel can also carry full price vectors, in which case inactive
    entries are finite.
    """

    household_id: str
    goods: tuple[str, ...]
    X: np.ndarray
    P: np.ndarray
    expenditure: np.ndarray
    midpoints: tuple[dt.date, ...] | None = None

    def __post_init__(self) -> None:
        X = np.array(self.X, dtype=float)
        P = np.array(self.P, dtype=float)
        if X.ndim != 2 or X.shape != P.shape:
            raise ValueError(f"X and P must be equal-shape (T, K) arrays, got {X.shape} and {P.shape}")
        if len(self.goods) != X.shape[1]:
            raise ValueError("goods length must equal K")
        if np.any(X < 0) or not np.all(np.isfinite(X)):
            raise ValueError("quantities must be finite and nonnegative")
        if np.any(X.sum(axis=1) <= 0):
            raise ValueError("every period needs at least one purchase")
        if np.any(~np.isfinite(P[X > 0])):
            raise ValueError("every purchased good needs a price")
        e = np.array(self.expenditure, dtype=float).reshape(-1)
        if e.shape != (X.shape[0],):
            raise ValueError("expenditure must have one entry per period")
        implied = np.where(X > 0, P * X, 0.0).sum(axis=1)
        if not np.allclose(implied, e, rtol=1e-9, atol=1e-12):
            raise ValueError("recorded expenditure differs from sum of price * quantity")
        for name, arr in (("X", X), ("P", P), ("expenditure", e)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "goods", tuple(self.goods))
        if self.midpoints is not None:
            object.__setattr__(self, "midpoints", tuple(self.midpoints))

    @classmethod
    def from_arrays(cls, household_id: str, X: np.ndarray, P: np.ndarray,
                    goods: Sequence[str] | None = None, missing_prices: bool = True) -> "HouseholdPanel":
        """Build a panel, computing expenditure and (optionally) blanking inactive prices."""
        X = np.asarray(X, dtype=float)
        P = np.array(P, dtype=float)
        if missing_prices:
            P[X <= 0] = np.nan
        e = np.where(X > 0, P * X, 0.0).sum(axis=1)
        g = tuple(goods) if goods is not None else tuple(f"g{k}" for k in range(X.shape[1]))
        return cls(household_id, g, X, P, e)

    @property
    def T(self) -> int:
        return self.X.shape[0]

    @property
    def K(self) -> int:
        return self.X.shape[1]

    def active(self, t: int) -> np.ndarray:
        return np.flatnonzero(self.X[t] > 0)

    @property
    def has_full_prices(self) -> bool:
        return bool(np.all(np.isfinite(self.P)))

    def with_prices(self, P: np.ndarray) -> "HouseholdPanel":
        P = np.asarray(P, dtype=float)
        e = np.where(self.X > 0, P * self.X, 0.0).sum(axis=1)
        return HouseholdPanel(self.household_id, self.goods, self.X, P, e, self.midpoints)

    def select_goods(self, goods: Sequence[str]) -> "HouseholdPanel":
        """Re-index onto ``goods``; goods never bought get zero quantity and no price."""
        pos = {g: i for i, g in enumerate(self.goods)}
        extra = set(self.goods) - set(goods)
        if any(self.X[:, pos[g]].sum() > 0 for g in extra):
            raise ValueError("cannot drop a purchased good")
        X = np.zeros((self.T, len(goods)))
        P = np.full((self.T, len(goods)), np.nan)
        for j, g in enumerate(goods):
            if g in pos:
                X[:, j] = self.X[:, pos[g]]
                P[:, j] = self.P[:, pos[g]]
        return HouseholdPanel(self.household_id, tuple(goods), X, P, self.expenditure, self.midpoints)


@dataclass(frozen=True)
class DiscountSeries:
    """Monthly interest rates keyed by (year, month)."""

    rates: Mapping[tuple[int, int], float]
    start: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        for key, r in self.rates.items():
            if not r > -1:
                raise ValueError(f"rate for {key[0]:04d}-{key[1]:02d} must exceed -1")
        if self.start is None and self.rates:
            object.__setattr__(self, "start", min(self.rates))
        object.__setattr__(self, "rates", dict(self.rates))

    def scale(self, month: tuple[int, int]) -> float:
        """Π_{start <= m < month} (1 + r_m)^{-1}."""
        if self.start is None:
            raise MissingRate("empty discount series")
        y, m = self.start
        out = 1.0
        while (y, m) < month:
            if (y, m) not in self.rates:
                raise MissingRate(f"no rate for month {y:04d}-{m:02d}")
            out /= 1.0 + self.rates[(y, m)]
            y, m = (y + 1, 1) if m == 12 else (y, m + 1)
        return out


def _as_day(d: dt.date | int) -> int:
    return d.toordinal() if isinstance(d, dt.date) else int(d)


def period_count(days: Iterable[dt.date | int]) -> tuple[int, int, int]:
    """Return (S, G, T) for a set of purchase days."""
    u = sorted({_as_day(d) for d in days})
    if len(u) < 2:
        return 0, 0, 0
    S = u[-1] - u[0]
    G = max(b - a for a, b in zip(u, u[1:]))
    return S, G, S // G


def bin_index(day: int, first: int, S: int, T: int) -> int:
    """Left-closed, right-open bins of equal length; the last bin is closed."""
    return min((day - first) * T // S, T - 1)


def aggregate_period(events: Sequence[PurchaseEvent], goods: Sequence[str]) -> tuple[np.ndarray, np.ndarray, float]:
    """Sum units and spend per good; unit value = spend / units."""
    if not events:
        raise ValueError("empty bin")
    pos = {g: i for i, g in enumerate(goods)}
    units = np.zeros(len(goods))
    spend = np.zeros(len(goods))
    for ev in events:
        units[pos[ev.good_id]] += ev.units
        spend[pos[ev.good_id]] += ev.expenditure
    bad = (units <= 0) & (spend > 0)
    if np.any(bad):
        g = goods[int(np.flatnonzero(bad)[0])]
        raise InconsistentRecord(f"positive expenditure with zero units for good {g!r}")
    rho = np.full(len(goods), np.nan)
    act = units > 0
    rho[act] = spend[act] / units[act]
    return units, rho, float(spend[act].sum())


def build_periods(events: Sequence[PurchaseEvent], min_T: int = 3) -> HouseholdPanel | Excluded:
    """Partition a household's purchase span into T = floor(S/G) equal bins."""
    if not events:
        raise EmptyHousehold("no purchase events")
    hh = {ev.household_id for ev in events}
    if len(hh) != 1:
        raise ValueError(f"events from several households: {sorted(hh)[:3]}")
    hid = events[0].household_id
    # zero-unit, zero-spend rows carry no information
    evs = [ev for ev in events if ev.units > 0 or ev.expenditure > 0]
    if not evs:
        raise EmptyHousehold(f"household {hid} has no purchases")
    S, G, T = period_count(ev.date for ev in evs)
    if S == 0:
        return Excluded(hid, "single purchase date", 0)
    if T < min_T:
        return Excluded(hid, f"T={T} below minimum {min_T}", T)
    first = min(_as_day(ev.date) for ev in evs)
    bins: list[list[PurchaseEvent]] = [[] for _ in range(T)]
    for ev in evs:
        bins[bin_index(_as_day(ev.date), first, S, T)].append(ev)
    goods = tuple(sorted({ev.good_id for ev in evs}))
    X = np.zeros((T, len(goods)))
    P = np.full((T, len(goods)), np.nan)
    e = np.zeros(T)
    mids = []
    for t, b in enumerate(bins):
        if not b:  # cannot happen: bin length S/T >= G
            raise AssertionError(f"empty bin {t} for household {hid}")
        X[t], P[t], e[t] = aggregate_period(b, goods)
        if isinstance(evs[0].date, dt.date):
            mids.append(dt.date.fromordinal(first + (2 * t + 1) * S // (2 * T)))
    return HouseholdPanel(hid, goods, X, P, e, tuple(mids) if mids else None)


def to_present_value(panel: HouseholdPanel, series: DiscountSeries) -> HouseholdPanel:
    """Deflate each period's prices to the start of the discount series."""
    if panel.midpoints is None:
        raise ValueError("panel has no period midpoints")
    s = np.array([series.scale((d.year, d.month)) for d in panel.midpoints])
    return HouseholdPanel(panel.household_id, panel.goods, panel.X, panel.P * s[:, None],
                          panel.expenditure * s, panel.midpoints)


def parse_window(text: str | None) -> tuple[dt.date, dt.date] | None:
    if not text:
        return None
    try:
        a, b = text.split(":")
        return dt.date.fromisoformat(a.strip()), dt.date.fromisoformat(b.strip())
    except ValueError as exc:
        raise InputError(f"window must be START:END in ISO dates, got {text!r}") from exc


def read_purchases(path: str | Path, window: tuple[dt.date, dt.date] | None = None) -> list[PurchaseEvent]:
    path = Path(path)
    cols = ["household_id", "date", "good_id", "units", "expenditure"]
    out: list[PurchaseEvent] = []
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise InputError(str(exc), str(path)) from exc
    with fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header[:5] != cols:
            raise InputError(f"header must be {','.join(cols)}", str(path), 1)
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise InputError(f"expected {len(header)} fields, got {len(rec)}", str(path), lineno)
            try:
                day = dt.date.fromisoformat(rec[1].strip())
                units_f = float(rec[3])
                if units_f != int(units_f):
                    raise ValueError(f"units must be an integer, got {rec[3]!r}")
                ev = PurchaseEvent(rec[0].strip(), day, rec[2].strip(), int(units_f), float(rec[4]))
            except (ValueError, InconsistentRecord) as exc:
                raise InputError(str(exc), str(path), lineno) from exc
            if window is not None and not (window[0] <= day <= window[1]):
                continue
            out.append(ev)
    return out


def read_rates(path: str | Path) -> DiscountSeries:
    path = Path(path)
    rates: dict[tuple[int, int], float] = {}
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise InputError(str(exc), str(path)) from exc
    with fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header[:2] != ["month", "rate"]:
            raise InputError("header must be month,rate", str(path), 1)
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            try:
                y, m = rec[0].strip().split("-")
                key = (int(y), int(m))
                if not 1 <= key[1] <= 12:
                    raise ValueError(f"bad month {rec[0]!r}")
                r = float(rec[1])
                if not r > -1:
                    raise ValueError("rate must exceed -1")
            except (ValueError, IndexError) as exc:
                raise InputError(str(exc), str(path), lineno) from exc
            rates[key] = r
    return DiscountSeries(rates)


def panels_from_events(events: Iterable[PurchaseEvent], min_T: int = 3,
                       series: DiscountSeries | None = None) -> tuple[list[HouseholdPanel], list[Excluded]]:
    """Group events by household and build panels, sorted by household id."""
    groups: dict[str, list[PurchaseEvent]] = defaultdict(list)
    for ev in events:
        groups[ev.household_id].append(ev)
    panels: list[HouseholdPanel] = []
    excluded: list[Excluded] = []
    for hid in sorted(groups):
        evs = sorted(groups[hid], key=lambda e: (e.date, e.good_id, e.units, e.expenditure))
        res = build_periods(evs, min_T)
        if isinstance(res, Excluded):
            log.info("excluded household %s: %s", hid, res.reason)
            excluded.append(res)
            continue
        panels.append(to_present_value(res, series) if series is not None else res)
    return panels, excluded


def write_purchases(path: str | Path, panels: Sequence[HouseholdPanel],
                    origin: dt.date = dt.date(2020, 1, 1), period_days: int = 30) -> None:
    """Encode panels as purchase events whose re-binning gives back the same periods.

    Period t is dated ``origin + t * period_days``; one event of the final
    period is moved one period further so the span is T period lengths.
    """
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["household_id", "date", "good_id", "units", "expenditure"])
        for pan in panels:
            rows = []
            T = pan.T
            for t in range(T):
                day = origin + dt.timedelta(days=t * period_days)
                for k in pan.active(t):
                    rows.append([t, day, k, pan.X[t, k]])
            last = [r for r in rows if r[0] == T - 1]
            end = origin + dt.timedelta(days=T * period_days)
            if len(last) >= 2:
                last[0][1] = end
            elif last[0][3] >= 2:
                r = last[0]
                rows.append([r[0], end, r[2], 1.0])
                r[3] -= 1.0
            else:
                raise ValueError(f"household {pan.household_id}: final period must hold two goods or two units")
            for t, day, k, u in sorted(rows, key=lambda r: (r[1], r[2])):
                if u != int(u):
                    raise ValueError("only integer units can be written")
                w.writerow([pan.household_id, day.isoformat(), pan.goods[k], int(u), repr(float(pan.P[t, k] * u))])
