"""Locally perturbed environments and quantile-based restrictiveness measures."""

from __future__ import annotations

import hashlib
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dynamic import MISSING, CCEI_TOL, HouseholdLP, ccei_from_lp
from .hedonic import Technology
from .models import ModelSpec
from .panel import HouseholdPanel
from .structural import structural_verdict

log = logging.getLogger(__name__)

_TOTAL_STREAM = 2**32 - 1  # stream id for the joint draw in "total" matching


@dataclass(frozen=True)
class PerturbConfig:
    M: int = 10000
    price_band: tuple[float, float] = (0.8, 1.2)
    dirichlet_alpha: float = 1.0
    seed: int = 0
    expenditure_match: str = "per_period"

    def __post_init__(self) -> None:
        if self.M < 1:
            raise ValueError("M must be >= 1")
        lo, hi = self.price_band
        if not 0 < lo <= hi:
            raise ValueError("price band needs 0 < lo_factor <= hi_factor")
        if not self.dirichlet_alpha > 0:
            raise ValueError("dirichlet_alpha must be positive")
        if self.expenditure_match not in ("per_period", "total"):
            raise ValueError("expenditure_match must be per_period or total")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def household_key(household_id: str) -> int:
    return int.from_bytes(hashlib.blake2b(household_id.encode(), digest_size=8).digest(), "little")


def _stream(cfg: PerturbConfig, household_id: str, draw_index: int, period: int) -> np.random.Generator:
    ss = np.random.SeedSequence([cfg.seed, household_key(household_id), draw_index, period])
    return np.random.Generator(np.random.Philox(ss))


def _shares(rng: np.random.Generator, n: int, alpha: float) -> np.ndarray:
    for _ in range(100):
        s = rng.dirichlet(np.full(n, alpha))
        if np.all(s > 0):
            return s
    raise RuntimeError("Dirichlet draw kept underflowing; increase dirichlet_alpha")


def price_bands(panel: HouseholdPanel, cfg: PerturbConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-good [lo * min observed price, hi * max observed price]."""
    act = panel.X > 0
    P = np.where(act, panel.P, np.nan)
    with np.errstate(all="ignore"):
        lo = np.nanmin(np.where(act, P, np.inf), axis=0)
        hi = np.nanmax(np.where(act, P, -np.inf), axis=0)
    return lo * cfg.price_band[0], hi * cfg.price_band[1]


def perturb(panel: HouseholdPanel, cfg: PerturbConfig, draw_index: int) -> HouseholdPanel:
    """One simulated panel with the observed zero pattern and matched expenditure."""
    lo, hi = price_bands(panel, cfg)
    act = panel.X > 0
    T, K = panel.X.shape
    P = np.full((T, K), np.nan)
    X = np.zeros((T, K))
    for t in range(T):
        a = np.flatnonzero(act[t])
        rng = _stream(cfg, panel.household_id, draw_index, t)
        P[t, a] = rng.uniform(lo[a], hi[a])
        if cfg.expenditure_match == "per_period":
            X[t, a] = _shares(rng, a.size, cfg.dirichlet_alpha) * panel.expenditure[t] / P[t, a]
    if cfg.expenditure_match == "total":
        rng = _stream(cfg, panel.household_id, draw_index, _TOTAL_STREAM)
        cells = np.flatnonzero(act.ravel())
        s = _shares(rng, cells.size, cfg.dirichlet_alpha)
        total = float(panel.expenditure.sum())
        Xf = X.ravel()
        Xf[cells] = s * total / P.ravel()[cells]
        X = Xf.reshape(T, K)
    e = np.where(act, P * X, 0.0).sum(axis=1)
    return HouseholdPanel(panel.household_id, panel.goods, X, P, e, panel.midpoints)


def quantile_dist(d_obs: float, d_sims: Sequence[float]) -> float:
    d = np.asarray(d_sims, dtype=float)
    if d.size == 0:
        raise ValueError("no simulated distances")
    return float(np.count_nonzero(d <= d_obs)) / d.size


def quantile_ccei(ccei_obs: float | None, ccei_sims: Sequence[float | None],
                  conditional: bool = False) -> float:
    """Share of sims with CCEI >= observed.

    Sims whose CCEI is undefined (structural failure) never count as "at least
    as efficient"; they stay in the denominator unless ``conditional``.
    NaN when the observed CCEI is itself undefined or nothing is left.
    """
    if len(ccei_sims) == 0:
        raise ValueError("no simulated CCEI values")
    if ccei_obs is None:
        return math.nan
    defined = [c for c in ccei_sims if c is not None]
    denom = len(defined) if conditional else len(ccei_sims)
    if denom == 0:
        return math.nan
    return sum(1 for c in defined if c >= ccei_obs) / denom


@dataclass(frozen=True)
class RestrictivenessRow:
    household_id: str
    model_id: str
    d_obs: float
    d_sim_mean: float
    ccei_obs: float | None
    ccei_sim_mean: float
    q_dist: float
    q_ccei: float
    q_ccei_cond: float
    n_sim: int
    n_ccei_defined: int

    COLUMNS = ("household_id", "model_id", "d_obs", "d_sim_mean", "ccei_obs", "ccei_sim_mean",
               "q_dist", "q_ccei", "q_ccei_cond", "n_sim", "n_ccei_defined")

    def values(self) -> list:
        return [getattr(self, c) for c in self.COLUMNS]


@dataclass(frozen=True)
class ModelAggregate:
    model_id: str
    n_households: int
    d_obs_mean: float
    d_sim_mean: float
    ccei_obs_mean: float
    ccei_sim_mean: float
    q_dist_mean: float
    q_dist_below_05: float
    q_ccei_mean: float
    q_ccei_below_05: float

    COLUMNS = ("model_id", "n_households", "d_obs_mean", "d_sim_mean", "ccei_obs_mean", "ccei_sim_mean",
               "q_dist_mean", "q_dist_below_05", "q_ccei_mean", "q_ccei_below_05")

    def values(self) -> list:
        return [getattr(self, c) for c in self.COLUMNS]


def _nanmean(xs: Sequence[float | None]) -> float:
    v = [x for x in xs if x is not None and not math.isnan(x)]
    return float(np.mean(v)) if v else math.nan


def _structure_key(tech: Technology) -> bytes:
    # the distance and the spanning verdict depend on A and the lag count only
    return tech.A.tobytes() + bytes([tech.lags])


def household_restrictiveness(panel: HouseholdPanel, models: Sequence[ModelSpec], cfg: PerturbConfig,
                              base: Technology | None = None) -> list[RestrictivenessRow]:
    """Rows for one household across lifecycle models (GARP models are skipped)."""
    specs = [m for m in models if m.lifecycle]
    techs = [m.technology_for(panel, base) for m in specs]

    def evaluate(p: HouseholdPanel, cache: dict) -> list[tuple[float, float | None]]:
        out = []
        for spec, tech in zip(specs, techs):
            key = _structure_key(tech)
            if key not in cache:
                cache[key] = structural_verdict(p, tech)
            sv = cache[key]
            c = None
            if sv.nc_all_pass or spec.mode != MISSING:
                c = ccei_from_lp(HouseholdLP(p, tech, spec.mode), spec.beta_grid, CCEI_TOL)
            out.append((sv.household_distance, c))
        return out

    obs = evaluate(panel, {})
    sims: list[list[tuple[float, float | None]]] = []
    for j in range(cfg.M):
        sims.append(evaluate(perturb(panel, cfg, j), {}))
    rows = []
    for i, spec in enumerate(specs):
        d_obs, c_obs = obs[i]
        d_s = [s[i][0] for s in sims]
        c_s = [s[i][1] for s in sims]
        defined = [c for c in c_s if c is not None]
        rows.append(RestrictivenessRow(
            panel.household_id, spec.name, d_obs, float(np.mean(d_s)), c_obs,
            float(np.mean(defined)) if defined else math.nan,
            quantile_dist(d_obs, d_s), quantile_ccei(c_obs, c_s), quantile_ccei(c_obs, c_s, conditional=True),
            cfg.M, len(defined)))
    return rows


def _worker(args) -> list[RestrictivenessRow]:
    panel, models, cfg, base = args
    return household_restrictiveness(panel, models, cfg, base)


def aggregate(rows: Sequence[RestrictivenessRow]) -> list[ModelAggregate]:
    order: list[str] = []
    by: dict[str, list[RestrictivenessRow]] = {}
    for r in rows:
        if r.model_id not in by:
            order.append(r.model_id)
            by[r.model_id] = []
        by[r.model_id].append(r)
    out = []
    for m in order:
        rs = by[m]
        qd = [r.q_dist for r in rs]
        qc = [r.q_ccei for r in rs if not math.isnan(r.q_ccei)]
        out.append(ModelAggregate(
            m, len(rs), _nanmean([r.d_obs for r in rs]), _nanmean([r.d_sim_mean for r in rs]),
            _nanmean([r.ccei_obs for r in rs]), _nanmean([r.ccei_sim_mean for r in rs]),
            float(np.mean(qd)), float(np.mean([q < 0.05 for q in qd])),
            float(np.mean(qc)) if qc else math.nan,
            float(np.mean([q < 0.05 for q in qc])) if qc else math.nan))
    return out


def restrictiveness_report(panels: Sequence[HouseholdPanel], models: Sequence[ModelSpec], cfg: PerturbConfig,
                           base: Technology | None = None, jobs: int = 1
                           ) -> tuple[list[RestrictivenessRow], list[ModelAggregate]]:
    """Per-household rows (sorted by household, then model order) plus per-model aggregates."""
    panels = sorted(panels, key=lambda p: p.household_id)
    tasks = [(p, list(models), cfg, base) for p in panels]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            chunks = list(ex.map(_worker, tasks))  # map keeps submission order
    else:
        chunks = [_worker(t) for t in tasks]
    rows = [r for c in chunks for r in c]
    return rows, aggregate(rows)
