"""Command-line driver: ``habitlens {test,compare,restrict,synth,report}``.

Settings resolve as command-line flag, then ``habitlens.toml`` (top-level keys
apply to every command, a ``[command]`` table overrides them), then the
built-in default. Exit codes: 0 success, 1 internal error, 2 input error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

from . import __version__
from .dynamic import MODES, default_grid
from .errors import CannotViolate, GeneratorStuck, HabitlensError, InputError, NoData
from .hedonic import Technology, read_technology
from .models import ModelSpec, builtin_models, read_models, run_model
from .panel import HouseholdPanel, panels_from_events, parse_window, read_purchases, read_rates, write_purchases
from .report import compare, emit_reports, mcnemar_csv, read_outcomes
from .restrict import PerturbConfig, restrictiveness_report
from .synth import (GeneratorConfig, generate_behavioural_violation, generate_rationalisable,
                    generate_structural_violation, make_technology)

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

log = logging.getLogger("habitlens")

CONFIG_NAME = "habitlens.toml"

DEFAULTS: dict[str, object] = {
    "min_periods": 3,
    "window": None,
    "nominal": False,
    "rates": None,
    "characteristics": None,
    "technology": None,
    "models": None,
    "models_file": None,
    "grid": None,
    "mode": None,
    "jobs": 1,
    "certificates": True,
    "draws": 10000,
    "seed": 0,
    "price_band": "0.8:1.2",
    "alpha": 1.0,
    "expenditure_match": "per_period",
    "households": 1,
    "K": 6,
    "J": 3,
    "J2": 2,
    "T": 6,
    "beta": 0.98,
    "delta": 0.1,
    "baseline": None,
    "alt": None,
}


class _Settings:
    """Flag > config > default lookup for one command."""

    def __init__(self, args: argparse.Namespace, config: dict):
        self.args = args
        self.config = config

    def __getattr__(self, name: str):
        v = getattr(self.args, name, None)
        if v is not None:
            return v
        if name in self.config:
            return self.config[name]
        return DEFAULTS.get(name)


def load_config(path: str | None, command: str) -> dict:
    if path is None:
        if not Path(CONFIG_NAME).is_file():
            return {}
        path = CONFIG_NAME
    try:
        data = tomllib.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(str(exc), path) from exc
    except tomllib.TOMLDecodeError as exc:
        raise InputError(f"invalid TOML: {exc}", path) from exc
    out = {k: v for k, v in data.items() if not isinstance(v, dict)}
    out.update(data.get(command, {}))
    return out


def parse_grid(text: str | Sequence[float] | None) -> tuple[float, ...]:
    """``start:stop:step`` (inclusive) or a comma list; None gives the default grid."""
    if text is None:
        return default_grid()
    if not isinstance(text, str):
        vals = tuple(float(b) for b in text)
    else:
        try:
            if ":" in text:
                a, b, c = (float(v) for v in text.split(":"))
                if c <= 0 or b < a:
                    raise ValueError("need start <= stop and a positive step")
                n = int(round((b - a) / c)) + 1
                vals = tuple(round(a + i * c, 10) for i in range(n))
            else:
                vals = tuple(float(v) for v in text.split(",") if v.strip())
        except ValueError as exc:
            raise InputError(f"bad beta grid {text!r}: {exc}") from exc
    if not vals or any(not 0 < b <= 1 for b in vals):
        raise InputError(f"beta grid must be non-empty with values in (0, 1], got {text!r}")
    return vals


def _pair(text: str, what: str) -> tuple[float, float]:
    try:
        a, b = (float(v) for v in str(text).split(":"))
    except ValueError as exc:
        raise InputError(f"{what} must look like LO:HI, got {text!r}") from exc
    return a, b


# ---------------------------------------------------------------------------
# shared ingest


def load_panels(s: _Settings) -> list[HouseholdPanel]:
    window = parse_window(s.window)
    events = read_purchases(s.purchases, window)
    if not events:
        raise NoData(f"{s.purchases}: no purchase events in the sample window")
    series = None
    if s.rates and not s.nominal:
        series = read_rates(s.rates)
    elif not s.nominal:
        log.info("no rates file given; prices stay nominal")
    panels, excluded = panels_from_events(events, int(s.min_periods), series)
    log.info("%d households kept, %d excluded", len(panels), len(excluded))
    if not panels:
        raise NoData("every household was excluded by the period filter")
    return panels


def load_base(s: _Settings) -> Technology | None:
    if s.characteristics is None:
        if s.technology is not None:
            raise InputError("--technology needs --characteristics")
        return None
    return read_technology(s.characteristics, s.technology)


def _configured_model(s: _Settings, grid: tuple[float, ...]) -> ModelSpec | None:
    if s.technology is None:
        return None
    try:
        cfg = json.loads(Path(s.technology).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(str(exc), str(s.technology)) from exc
    habits = cfg.get("habit_attributes", [])
    return ModelSpec("configured", "Configured technology", habits if habits == "all" else tuple(habits),
                     attributes=cfg.get("attributes"), lags=int(cfg.get("lags", 1)), beta_grid=grid)


def select_models(s: _Settings, base: Technology | None, lifecycle_only: bool = False) -> list[ModelSpec]:
    grid = parse_grid(s.grid) if s.grid is not None else None
    if s.models_file:
        pool = read_models(s.models_file)
    else:
        pool = builtin_models(grid)
        conf = _configured_model(s, grid or default_grid())
        if conf is not None:
            pool.append(conf)
    if s.models:
        names = [m.strip() for m in s.models.split(",")] if isinstance(s.models, str) else list(s.models)
        by = {m.name: m for m in pool}
        unknown = [n for n in names if n not in by]
        if unknown:
            raise InputError(f"unknown model(s) {unknown}; known: {sorted(by)}")
        chosen = [by[n] for n in names]
    elif s.models_file:
        chosen = pool
    else:
        attrs = set(base.attributes or ()) if base is not None else set()
        chosen = []
        for m in pool:
            if not m.identity:
                if base is None:
                    continue
                need = set(m.attributes or ()) | (set() if m.habit_attributes == "all" else set(m.habit_attributes))
                if not need <= attrs:
                    log.warning("skipping model %s: attributes %s not in characteristics", m.name,
                                sorted(need - attrs))
                    continue
            chosen.append(m)
    for m in chosen:
        if not m.identity and base is None:
            raise InputError(f"model {m.name} needs --characteristics")
    changes = {}
    if grid is not None:
        changes["beta_grid"] = grid
    if s.mode is not None:
        if s.mode not in MODES:
            raise InputError(f"mode must be one of {MODES}")
        changes["mode"] = s.mode
    if changes:
        chosen = [dataclasses.replace(m, **changes) for m in chosen]
    if lifecycle_only:
        chosen = [m for m in chosen if m.lifecycle]
    if not chosen:
        raise InputError("no models selected")
    return chosen


def _check_coverage(panels: Sequence[HouseholdPanel], models: Sequence[ModelSpec], base: Technology | None,
                    char_path: str | None) -> None:
    # fail fast, before any worker starts, when a purchased good has no characteristics
    if base is None or base.goods is None or not any(not m.identity for m in models):
        return
    known = set(base.goods)
    for p in panels:
        for g in p.goods:
            if g not in known:
                raise InputError(f"no characteristics for good_id {g!r} (household {p.household_id})",
                                 char_path)


def _test_household(task) -> list:
    panel, models, base, certificates = task
    return [run_model(panel, m, base, with_certificate=certificates) for m in models]


# ---------------------------------------------------------------------------
# commands


def cmd_test(s: _Settings) -> int:
    panels = load_panels(s)
    base = load_base(s)
    models = select_models(s, base)
    _check_coverage(panels, models, base, s.characteristics)
    tasks = [(p, models, base, bool(s.certificates)) for p in panels]
    jobs = int(s.jobs)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            chunks = list(ex.map(_test_household, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        chunks = [_test_household(t) for t in tasks]
    outcomes = [o for c in chunks for o in c]
    labels = {m.name: m.display for m in models}
    out = Path(s.out)
    emit_reports(out, outcomes=outcomes, labels=labels)
    for m in models:
        rs = [o for o in outcomes if o.model_id == m.name]
        n_pass = sum(o.passed for o in rs)
        nc_fail = sum(1 for o in rs if o.structural is not None and not o.structural.nc_all_pass)
        print(f"{m.name}: {n_pass}/{len(rs)} pass ({100 * n_pass / len(rs):.2f}%), "
              f"{nc_fail} fail the spanning condition")
    print(f"wrote {out}")
    return 0


def _comparisons(outcomes, baseline: str | None, alts) -> list:
    models = list(dict.fromkeys(o.model_id for o in outcomes))
    if not models:
        raise NoData("no outcomes")
    if baseline is None:
        baseline = "habits_chars" if "habits_chars" in models else models[0]
    if baseline not in models:
        raise InputError(f"baseline model {baseline!r} not in outcomes")
    if alts:
        alts = [a.strip() for a in alts.split(",")] if isinstance(alts, str) else list(alts)
    else:
        alts = [m for m in models if m != baseline]
    return [compare(outcomes, baseline, a) for a in alts]


def _print_comparisons(comps) -> None:
    for c in comps:
        v = dict(zip(c.COLUMNS, c.values()))
        print(f"{v['model0']} vs {v['model1']}: pass {v['pass0_pct']}% / {v['pass1_pct']}%, "
              f"delta {v['delta_pct']}, switchers {v['switchers']} ({v['n_01']}+{v['n_10']}), "
              f"p {v['p_display']}")


def cmd_compare(s: _Settings) -> int:
    run = Path(s.run)
    outcomes = read_outcomes(run / "outcomes.jsonl" if run.is_dir() else run)
    comps = _comparisons(outcomes, s.baseline, s.alt)
    out = Path(s.out) if s.out else (run if run.is_dir() else run.parent)
    emit_reports(out, comparisons=comps)
    _print_comparisons(comps)
    return 0


def _known_labels(run: Path) -> dict[str, str]:
    """Built-in labels, overridden by any labels an earlier pass_rates.csv recorded."""
    labels = {m.name: m.display for m in builtin_models()}
    prev = run / "pass_rates.csv"
    if prev.is_file():
        with prev.open(newline="") as fh:
            labels.update({r["model_id"]: r["label"] for r in csv.DictReader(fh) if r.get("label")})
    return labels


def cmd_report(s: _Settings) -> int:
    run = Path(s.run or s.out)
    src = run / "outcomes.jsonl"
    if not src.is_file():
        raise NoData(f"{run}: no outcomes.jsonl; run `habitlens test --out {run}` first")
    outcomes = read_outcomes(src)
    if not outcomes:
        raise NoData(f"{src}: no outcomes")
    comps = _comparisons(outcomes, s.baseline, s.alt) if len({o.model_id for o in outcomes}) > 1 else []
    out = Path(s.out)
    emit_reports(out, outcomes=outcomes, labels=_known_labels(run))
    (out / "mcnemar.csv").write_text(mcnemar_csv(comps))
    _print_comparisons(comps)
    print(f"wrote {out}")
    return 0


def cmd_restrict(s: _Settings) -> int:
    panels = load_panels(s)
    base = load_base(s)
    models = select_models(s, base, lifecycle_only=True)
    _check_coverage(panels, models, base, s.characteristics)
    try:
        cfg = PerturbConfig(int(s.draws), _pair(s.price_band, "--price-band"), float(s.alpha), int(s.seed),
                            s.expenditure_match)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    rows, aggs = restrictiveness_report(panels, models, cfg, base, int(s.jobs))
    out = Path(s.out)
    emit_reports(out, restrictiveness=rows, aggregates=aggs)
    for a in aggs:
        print(f"{a.model_id}: mean q_dist {a.q_dist_mean:.3f}, Pr(q_dist<0.05) {a.q_dist_below_05:.3f}, "
              f"mean q_ccei {a.q_ccei_mean:.3f}")
    print(f"wrote {out}")
    return 0


def cmd_synth(s: _Settings) -> int:
    profile = s.profile
    n = int(s.households)
    if n < 1:
        raise InputError("--households must be >= 1")
    J, J2 = int(s.J), int(s.J2)
    try:
        base_cfg = GeneratorConfig(K=int(s.K), J=J, J2=J2, T=int(s.T), beta_true=float(s.beta), seed=int(s.seed),
                                   habit_rows=tuple(range(J2)))
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    tech = make_technology(base_cfg, constant_habits=(profile == "behavfail"))
    panels = []
    for i in range(n):
        cfg = dataclasses.replace(base_cfg, seed=int(s.seed) * 1_000_003 + i, household_id=f"h{i:05d}")
        try:
            if profile == "pass":
                case = generate_rationalisable(cfg, tech)
            elif profile == "structfail":
                case = generate_structural_violation(cfg, float(s.delta), tech=tech)
            else:
                case = generate_behavioural_violation(cfg, tech=tech)
        except CannotViolate as exc:
            raise InputError(str(exc)) from exc
        panels.append(case.panel)
    out = Path(s.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_purchases(out, panels)
    char = out.parent / "characteristics.csv"
    with char.open("w") as fh:
        fh.write("good_id," + ",".join(tech.attributes) + "\n")
        for k, g in enumerate(tech.goods):
            fh.write(g + "," + ",".join(repr(float(v)) for v in tech.A[:, k]) + "\n")
    spec = {"attributes": list(tech.attributes),
            "habit_attributes": [tech.attributes[r] for r in tech.habit_rows],
            "lags": tech.lags, "matrix_source": char.name}
    (out.parent / "technology.json").write_text(json.dumps(spec, indent=2) + "\n")
    print(f"wrote {n} {profile} household(s) to {out}, {char} and {out.parent / 'technology.json'}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _ingest_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--purchases", required=True, help="purchases.csv (household_id,date,good_id,units,expenditure)")
    p.add_argument("--characteristics", help="characteristics.csv (good_id then attribute columns)")
    p.add_argument("--technology", help="technology.json (attributes, habit_attributes, lags)")
    p.add_argument("--rates", help="rates.csv (month,rate) for present-value prices")
    p.add_argument("--nominal", action="store_const", const=True, default=None, help="skip discounting")
    p.add_argument("--window", help="sample window START:END in ISO dates")
    p.add_argument("--min-periods", type=int, help="drop households with fewer periods (default 3)")


def _model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--models", help="comma-separated model ids (default: every applicable built-in)")
    p.add_argument("--models-file", help="TOML file with [[model]] tables")
    p.add_argument("--grid", help="beta grid as START:STOP:STEP or a comma list (default 0.95:1:0.001)")
    p.add_argument("--mode", choices=MODES, help="price regime for every model")
    p.add_argument("--jobs", type=int, help="worker processes (default 1)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="habitlens", description="Revealed-preference tests for habits over "
                                 "characteristics on household purchase panels.")
    ap.add_argument("--version", action="version", version=f"habitlens {__version__}")
    ap.add_argument("--config", help=f"TOML config file (default ./{CONFIG_NAME} if present)")
    ap.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = ap.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="classify every household under every model")
    _ingest_flags(t)
    _model_flags(t)
    t.add_argument("--no-certificates", dest="certificates", action="store_const", const=False, default=None,
                   help="leave certificates out of outcomes.jsonl")
    t.add_argument("--out", required=True, help="output directory")

    c = sub.add_parser("compare", help="exact McNemar comparisons between models of a test run")
    c.add_argument("--run", required=True, help="run directory or outcomes.jsonl")
    c.add_argument("--baseline", help="model0 (default habits_chars if present)")
    c.add_argument("--alt", help="comma-separated alternative models (default: all others)")
    c.add_argument("--out", help="directory for mcnemar.csv (default: the run directory)")

    r = sub.add_parser("restrict", help="perturbation-based restrictiveness quantiles")
    _ingest_flags(r)
    _model_flags(r)
    r.add_argument("--draws", type=int, help="simulated datasets per household (default 10000)")
    r.add_argument("--seed", type=int, help="64-bit seed (default 0)")
    r.add_argument("--price-band", help="LO:HI factors on the observed price range (default 0.8:1.2)")
    r.add_argument("--alpha", type=float, help="Dirichlet concentration (default 1)")
    r.add_argument("--expenditure-match", choices=("per_period", "total"), help="default per_period")
    r.add_argument("--out", required=True, help="output directory")

    y = sub.add_parser("synth", help="write synthetic panels with known ground truth")
    y.add_argument("--profile", required=True, choices=("pass", "structfail", "behavfail"))
    y.add_argument("--seed", type=int, help="generator seed (default 0)")
    y.add_argument("--out", required=True, help="purchases CSV path; characteristics.csv and technology.json "
                   "go next to it")
    y.add_argument("--households", type=int, help="number of households (default 1)")
    y.add_argument("--K", type=int, help="goods (default 6)")
    y.add_argument("--J", type=int, help="characteristics (default 3)")
    y.add_argument("--J2", type=int, help="habit-forming characteristics, the first J2 (default 2)")
    y.add_argument("--T", type=int, help="periods (default 6)")
    y.add_argument("--beta", type=float, help="true discount factor (default 0.98)")
    y.add_argument("--delta", type=float, help="structfail off-span size (default 0.1)")

    p = sub.add_parser("report", help="rebuild pass-rate and comparison tables from a run directory")
    p.add_argument("--out", required=True, help="run directory (reads outcomes.jsonl, writes tables)")
    p.add_argument("--run", help="read outcomes from this directory instead of --out")
    p.add_argument("--baseline", help="model0 for comparisons (default habits_chars if present)")
    p.add_argument("--alt", help="comma-separated alternative models")
    return ap


COMMANDS = {"test": cmd_test, "compare": cmd_compare, "restrict": cmd_restrict, "synth": cmd_synth,
            "report": cmd_report}


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = _Settings(args, load_config(args.config, args.command))
        return COMMANDS[args.command](settings)
    except GeneratorStuck as exc:
        print(f"habitlens: error: {exc}", file=sys.stderr)
        return 1
    except HabitlensError as exc:
        print(f"habitlens: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - last-resort guard for the exit-code contract
        log.debug("internal error", exc_info=True)
        print(f"habitlens: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
