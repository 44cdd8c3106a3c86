"""Paired model comparisons, pass-rate tables and report files."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .dynamic import TestOutcome
from .errors import HabitlensError, InputError, NoData
from .restrict import ModelAggregate, RestrictivenessRow


def mcnemar_exact(n_01: int, n_10: int) -> float:
    """Two-sided exact McNemar p-value, min(1, 2 * P[Bin(n, 1/2) <= min(n_01, n_10)]).

    The tail is summed in exact integer arithmetic before a single rounding.
    """
    if n_01 < 0 or n_10 < 0:
        raise ValueError("counts must be nonnegative")
    n = n_01 + n_10
    if n == 0:
        return 1.0
    k = min(n_01, n_10)
    tail = sum(math.comb(n, i) for i in range(k + 1))
    return float(min(Fraction(1), Fraction(2 * tail, 2**n)))


def percent(count: int, total: int) -> Decimal:
    """100 * count / total rounded half-even to two decimals."""
    if total <= 0:
        raise NoData("no households")
    return (Decimal(100 * count) / Decimal(total)).quantize(Decimal("0.01"), rounding=ROUND_HALF_EVEN)


@dataclass(frozen=True)
class PassRate:
    model_id: str
    n_pass: int
    n: int

    @property
    def rate(self) -> float:
        return self.n_pass / self.n

    @property
    def pct(self) -> Decimal:
        return percent(self.n_pass, self.n)


def _group(outcomes: Iterable[TestOutcome]) -> dict[str, dict[str, bool]]:
    by: dict[str, dict[str, bool]] = {}
    for o in outcomes:
        by.setdefault(o.model_id, {})[o.household_id] = o.passed
    return by


def pass_rate_table(outcomes: Iterable[TestOutcome]) -> list[PassRate]:
    """Per model (in first-seen order): pass count out of households tested."""
    by = _group(outcomes)
    if not by:
        raise NoData("no outcomes to tabulate")
    return [PassRate(m, sum(v.values()), len(v)) for m, v in by.items()]


@dataclass(frozen=True)
class PairedComparison:
    """Baseline model0 against alternative model1 on their common households.

    n_01 counts households failing model0 and passing model1; n_10 the reverse.
    """

    model0: str
    model1: str
    n: int
    n_pass0: int
    n_pass1: int
    n_01: int
    n_10: int
    p_value: float

    @property
    def pass0_rate(self) -> float:
        return self.n_pass0 / self.n

    @property
    def pass1_rate(self) -> float:
        return self.n_pass1 / self.n

    @property
    def switchers(self) -> int:
        return self.n_01 + self.n_10

    @property
    def delta_pct(self) -> Decimal:
        return percent(self.n_pass0, self.n) - percent(self.n_pass1, self.n)

    COLUMNS = ("model0", "model1", "pass0_pct", "pass1_pct", "delta_pct", "n_01", "n_10", "switchers",
               "n", "p_value", "p_display")

    def values(self) -> list:
        return [self.model0, self.model1, str(percent(self.n_pass0, self.n)), str(percent(self.n_pass1, self.n)),
                str(self.delta_pct), self.n_01, self.n_10, self.switchers, self.n, self.p_value,
                format_p(self.p_value)]


def format_p(p: float) -> str:
    if p < 1e-15:
        return "<1e-15"
    if p < 0.001:
        return f"{p:.2e}"
    return f"{p:.3f}"


def compare(outcomes: Iterable[TestOutcome], model0: str, model1: str) -> PairedComparison:
    by = _group(outcomes)
    for m in (model0, model1):
        if m not in by:
            raise NoData(f"no outcomes for model {m!r}")
    common = sorted(set(by[model0]) & set(by[model1]))
    if not common:
        raise NoData(f"models {model0!r} and {model1!r} share no households")
    a = [by[model0][h] for h in common]
    b = [by[model1][h] for h in common]
    n01 = sum(1 for x, y in zip(a, b) if not x and y)
    n10 = sum(1 for x, y in zip(a, b) if x and not y)
    n = len(common)
    return PairedComparison(model0, model1, n, sum(a), sum(b), n01, n10, mcnemar_exact(n01, n10))


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise HabitlensError(f"cannot write {path}: {exc}") from exc


def _csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def pass_rates_csv(rates: Sequence[PassRate], labels: Mapping[str, str] | None = None) -> str:
    labels = labels or {}
    return _csv(("model_id", "label", "n_pass", "n", "pass_pct"),
                ([r.model_id, labels.get(r.model_id, r.model_id), r.n_pass, r.n, str(r.pct)] for r in rates))


def mcnemar_csv(comparisons: Sequence[PairedComparison]) -> str:
    return _csv(PairedComparison.COLUMNS, (c.values() for c in comparisons))


def restrictiveness_csv(rows: Sequence[RestrictivenessRow]) -> str:
    return _csv(RestrictivenessRow.COLUMNS, (r.values() for r in rows))


def restrictiveness_summary_csv(aggs: Sequence[ModelAggregate]) -> str:
    return _csv(ModelAggregate.COLUMNS, (a.values() for a in aggs))


STRUCTURAL_COLUMNS = ("household_id", "model_id", "nc_all_pass", "mean_distance", "distances")


def structural_csv(outcomes: Iterable[TestOutcome]) -> str:
    """One row per (household, model) with per-date distances as a JSON array."""
    rows = []
    for o in outcomes:
        s = o.structural
        if s is None:
            continue
        rows.append([o.household_id, o.model_id, s.nc_all_pass, s.household_distance,
                     json.dumps(list(s.distances))])
    return _csv(STRUCTURAL_COLUMNS, rows)


def outcomes_jsonl(outcomes: Iterable[TestOutcome], with_certificate: bool = True) -> str:
    return "".join(json.dumps(o.to_dict(with_certificate), allow_nan=False) + "\n" for o in outcomes)


def read_outcomes(path: str | Path) -> list[TestOutcome]:
    path = Path(path)
    out = []
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise InputError(str(exc), str(path)) from exc
    for i, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            out.append(TestOutcome.from_dict(json.loads(line)))
        except (ValueError, KeyError, TypeError) as exc:
            raise InputError(f"bad outcome record: {exc}", str(path), i) from exc
    return out


def emit_reports(out_dir: str | Path, outcomes: Sequence[TestOutcome] | None = None,
                 comparisons: Sequence[PairedComparison] | None = None,
                 restrictiveness: Sequence[RestrictivenessRow] | None = None,
                 aggregates: Sequence[ModelAggregate] | None = None,
                 labels: Mapping[str, str] | None = None) -> list[Path]:
    """Write whichever report files have inputs; returns the paths written."""
    out = Path(out_dir)
    written = []
    if outcomes is not None:
        p = out / "outcomes.jsonl"
        _write(p, outcomes_jsonl(outcomes))
        written.append(p)
        p = out / "pass_rates.csv"
        _write(p, pass_rates_csv(pass_rate_table(outcomes), labels) if outcomes else
               pass_rates_csv([], labels))
        written.append(p)
        p = out / "structural.csv"
        _write(p, structural_csv(outcomes))
        written.append(p)
    if comparisons is not None:
        p = out / "mcnemar.csv"
        _write(p, mcnemar_csv(comparisons))
        written.append(p)
    if restrictiveness is not None:
        p = out / "restrictiveness.csv"
        _write(p, restrictiveness_csv(restrictiveness))
        written.append(p)
    if aggregates is not None:
        p = out / "restrictiveness_summary.csv"
        _write(p, restrictiveness_summary_csv(aggregates))
        written.append(p)
    return written
