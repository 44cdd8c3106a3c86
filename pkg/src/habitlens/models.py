"""Named model specifications and independent reference tests for the nested special cases."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .dynamic import MISSING, MODES, TestOutcome, default_grid, run_test
from .errors import InputError, TooFewPeriods
from .hedonic import Technology
from .panel import HouseholdPanel
from .structural import StructuralVerdict, evaluated_dates, retained_dates

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib


@dataclass(frozen=True)
class ModelSpec:
    """A named test configuration.

    ``attributes`` selects rows of the characteristics table (None keeps all);
    ``habit_attributes`` is a tuple of names or "all". ``identity`` replaces
    the technology by A = I over the household's goods. Non-lifecycle models
    run classical GARP instead of the dynamic system.
    """

    name: str
    label: str = ""
    habit_attributes: tuple[str, ...] | str = ()
    attributes: tuple[str, ...] | None = None
    identity: bool = False
    lags: int = 1
    lifecycle: bool = True
    beta_grid: tuple[float, ...] = field(default_factory=default_grid)
    mode: str = MISSING

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("model name must be non-empty")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.lags < 1:
            raise ValueError("lags must be >= 1")
        if not self.beta_grid or any(not 0 < b <= 1 for b in self.beta_grid):
            raise ValueError("beta grid must be non-empty with values in (0, 1]")
        if isinstance(self.habit_attributes, str) and self.habit_attributes != "all":
            object.__setattr__(self, "habit_attributes", (self.habit_attributes,))
        elif not isinstance(self.habit_attributes, str):
            object.__setattr__(self, "habit_attributes", tuple(self.habit_attributes))
        if self.attributes is not None:
            object.__setattr__(self, "attributes", tuple(self.attributes))
            if not isinstance(self.habit_attributes, str):
                extra = set(self.habit_attributes) - set(self.attributes)
                if extra:
                    raise ValueError(f"habit attributes {sorted(extra)} are not model attributes")
        object.__setattr__(self, "beta_grid", tuple(float(b) for b in self.beta_grid))

    @property
    def display(self) -> str:
        return self.label or self.name

    def technology_for(self, panel: HouseholdPanel, base: Technology | None) -> Technology:
        """Technology whose columns follow ``panel.goods``."""
        if self.identity:
            habit = "all" if self.habit_attributes == "all" else (
                [panel.goods.index(g) for g in self.habit_attributes if g in panel.goods])
            return Technology.identity(panel.K, habit, self.lags, panel.goods)
        if base is None:
            raise InputError(f"model {self.name} needs a characteristics table")
        names = list(base.attributes) if base.attributes is not None else [f"attr_{j}" for j in range(base.J)]
        attrs = list(self.attributes) if self.attributes is not None else names
        missing = [a for a in attrs if a not in names]
        if missing:
            raise InputError(f"model {self.name}: unknown attributes {missing}")
        habits = attrs if self.habit_attributes == "all" else list(self.habit_attributes)
        unknown = [h for h in habits if h not in attrs]
        if unknown:
            raise InputError(f"model {self.name}: unknown habit attributes {unknown}")
        if base.goods is None:
            if base.K != panel.K:
                raise InputError("technology has no good ids and a different good count")
            cols = list(range(panel.K))
        else:
            pos = {g: i for i, g in enumerate(base.goods)}
            absent = [g for g in panel.goods if g not in pos]
            if absent:
                raise InputError(f"no characteristics for good_id {absent[0]!r}")
            cols = [pos[g] for g in panel.goods]
        rows = [names.index(a) for a in attrs]
        A = base.A[np.ix_(rows, cols)]
        return Technology(A, tuple(attrs.index(h) for h in habits), self.lags, tuple(attrs), tuple(panel.goods))


def builtin_models(beta_grid: Sequence[float] | None = None) -> list[ModelSpec]:
    """The seven lifecycle models plus goods GARP, with stable ids."""
    g = tuple(default_grid() if beta_grid is None else beta_grid)
    return [
        ModelSpec("habits_chars", "Habits-over-characteristics", ("sugar", "sodium"), beta_grid=g),
        ModelSpec("habits_sugar", "Habits-over-sugar", ("sugar",), beta_grid=g),
        ModelSpec("habits_sodium", "Habits-over-sodium", ("sodium",), beta_grid=g),
        ModelSpec("habits_all_chars", "Habits-over-all-characteristics", "all", beta_grid=g),
        ModelSpec("static_chars", "Characteristics (no habits)", (), beta_grid=g),
        ModelSpec("habits_all_goods", "Habits-over-all-goods", "all", identity=True, beta_grid=g),
        ModelSpec("goods_static", "Goods (no habits)", (), identity=True, beta_grid=g),
        ModelSpec("goods_garp", "Goods (no habits) (GARP)", (), identity=True, lifecycle=False, beta_grid=g),
    ]


def get_model(name: str, models: Sequence[ModelSpec] | None = None) -> ModelSpec:
    for m in models if models is not None else builtin_models():
        if m.name == name:
            return m
    raise KeyError(f"unknown model {name!r}")


def _grid_from_toml(v) -> tuple[float, ...]:
    if isinstance(v, dict):
        start, stop, step = float(v["start"]), float(v["stop"]), float(v["step"])
        n = int(round((stop - start) / step)) + 1
        return tuple(round(start + i * step, 10) for i in range(n))
    return tuple(float(b) for b in v)


def read_models(path: str | Path) -> list[ModelSpec]:
    """Parse ``[[model]]`` tables from a TOML file."""
    try:
        data = tomllib.loads(Path(path).read_text())
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise InputError(str(exc), str(path)) from exc
    out = []
    for i, m in enumerate(data.get("model", [])):
        try:
            kw = dict(
                name=m["name"],
                label=m.get("label", ""),
                habit_attributes=m.get("habit_attributes", ()),
                attributes=m.get("attributes"),
                identity=bool(m.get("identity", False)),
                lags=int(m.get("lags", 1)),
                lifecycle=bool(m.get("lifecycle", True)),
                mode=m.get("mode", MISSING),
            )
            if "beta_grid" in m:
                kw["beta_grid"] = _grid_from_toml(m["beta_grid"])
            out.append(ModelSpec(**kw))
        except (KeyError, ValueError, TypeError) as exc:
            raise InputError(f"model entry {i}: {exc}", str(path)) from exc
    return out


def run_model(panel: HouseholdPanel, spec: ModelSpec, base: Technology | None = None,
              with_certificate: bool = True, with_ccei: bool = True) -> TestOutcome:
    tech = spec.technology_for(panel, base)
    if not spec.lifecycle:
        ok = test_garp_goods(panel)
        return TestOutcome(panel.household_id, spec.name, ok, (), None, None, None, spec.mode,
                           {"test": "garp"})
    out = run_test(panel, tech, spec.beta_grid, spec.mode, spec.name, with_ccei, with_certificate)
    return out


# ---------------------------------------------------------------------------
# reference implementations of the nested special cases


def _lp_feasible(A_ub, b_ub, A_eq, b_eq, n: int) -> bool:
    res = linprog(np.zeros(n),
                  A_ub=np.asarray(A_ub) if len(A_ub) else None, b_ub=np.asarray(b_ub) if len(b_ub) else None,
                  A_eq=np.asarray(A_eq) if len(A_eq) else None, b_eq=np.asarray(b_eq) if len(b_eq) else None,
                  bounds=[(None, None)] * n, method="highs")
    if res.status not in (0, 2):
        raise RuntimeError(f"reference LP failed: {res.message}")
    return res.status == 0


def _goods_corollary_at(X: np.ndarray, P: np.ndarray, habit: list[int], beta: float) -> bool:
    """One-lag habits over goods, with habit prices split into ρ^{a,0} + ρ^{a,1}."""
    T, K = X.shape
    dates = list(range(1, T))          # retained
    interior = set(range(1, T - 1))    # pricing equalities
    H = len(habit)
    # variable index: V_t, then free parts of ρ^0_t, then ρ^{a,1}_t
    idx: dict[tuple, int] = {}

    def var(key: tuple) -> int:
        if key not in idx:
            idx[key] = len(idx)
        return idx[key]

    for t in dates:
        var(("V", t))
        for h in range(H):
            var(("r1", t, h))
    hpos = {k: h for h, k in enumerate(habit)}

    def coord(t: int, j: int) -> tuple[float, dict[int, float]]:
        """Undiscounted-free affine form of coordinate j of [ρ^0_t; ρ^{a,1}_t] (discounted)."""
        if j >= K:
            return 0.0, {var(("r1", t, j - K)): 1.0}
        k = j
        if t in interior and X[t, k] > 0:
            if k in hpos:
                # ρ_t^k = ρ^{a,0,k}_t + ρ^{a,1,k}_{t+1}
                return P[t, k], {var(("r1", t + 1, hpos[k])): -1.0}
            return P[t, k], {}
        return 0.0, {var(("r0", t, k)): 1.0}

    xbar = {t: np.concatenate([X[t], X[t - 1, habit]]) for t in dates}
    rows: list[tuple[dict[int, float], float]] = []
    for s, t in itertools.permutations(dates, 2):
        w = beta ** -t  # date 0 is undiscounted
        diff = xbar[s] - xbar[t]
        coef: dict[int, float] = {var(("V", s)): 1.0}
        coef[var(("V", t))] = coef.get(var(("V", t)), 0.0) - 1.0
        rhs = 0.0
        for j in np.flatnonzero(diff):
            c, lin = coord(t, int(j))
            rhs += w * c * diff[j]
            for v, a in lin.items():
                coef[v] = coef.get(v, 0.0) - w * a * diff[j]
        rows.append((coef, rhs))
    n = len(idx)
    A_ub = np.zeros((len(rows), n))
    b_ub = np.zeros(len(rows))
    for i, (coef, rhs) in enumerate(rows):
        for v, a in coef.items():
            A_ub[i, v] += a
        b_ub[i] = rhs
    return _lp_feasible(A_ub, b_ub, [], [], n)


def test_goods_corollary(panel: HouseholdPanel, beta_grid: Sequence[float] | None = None,
                         habit_goods: str | Sequence[int] = "all") -> TestOutcome:
    """Habits over goods (A = identity, one lag) written out directly in price splits.

    Coordinates pinned by the pricing identities are substituted as
    constants instead of being imposed as equality rows.
    """
    if panel.T < 3:
        raise TooFewPeriods("need T >= 3")
    grid = tuple(default_grid() if beta_grid is None else beta_grid)
    habit = list(range(panel.K)) if habit_goods == "all" else sorted(int(k) for k in habit_goods)
    X = np.asarray(panel.X)
    act = X > 0
    P = np.where(act, panel.P, 0.0) / float(np.mean(panel.P[act]))
    adm = tuple(b for b in grid if _goods_corollary_at(X, P, habit, b))
    ev = tuple(evaluated_dates(panel.T, 1))
    sv = StructuralVerdict(ev, (True,) * len(ev), (0.0,) * len(ev))
    return TestOutcome(panel.household_id, "goods_corollary", bool(adm), adm, sv, 1.0 if adm else None)


test_goods_corollary.__test__ = False  # type: ignore[attr-defined]


def test_static_characteristics(panel: HouseholdPanel, tech: Technology, mode: str = MISSING,
                                tol: float = 1e-7) -> TestOutcome:
    """Intertemporally separable characteristics model at β = 1.

    At each interior date the shadow price is written π_t = θ_t + N_t w_t,
    with θ_t a least-squares particular solution of B_t'π = ρ_t⁺ and N_t a
    null-space basis, so the pricing equalities never enter the LP.
    """
    if panel.T < 3:
        raise TooFewPeriods("need T >= 3")
    if panel.K != tech.K:
        raise ValueError("panel and technology disagree on K")
    A = tech.A
    X = np.asarray(panel.X)
    act = X > 0
    P = np.array(panel.P) / float(np.mean(panel.P[act]))
    T = panel.T
    dates = list(retained_dates(T, 1))
    interior = list(evaluated_dates(T, 1))
    J = A.shape[0]

    nc, dist = [], []
    param: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for t in interior:
        a = np.flatnonzero(act[t])
        Bt = A[:, a].T
        rho = P[t, a]
        theta, *_ = np.linalg.lstsq(Bt, rho, rcond=None)
        r = np.linalg.norm(Bt @ theta - rho) / np.linalg.norm(rho)
        dist.append(float(r))
        nc.append(bool(r <= tol))
        _, s, Vt = np.linalg.svd(Bt)
        rank = int(np.sum(s > 1e-10 * s[0])) if s.size else 0
        param[t] = (theta, Vt[rank:].T)
    sv = StructuralVerdict(tuple(interior), tuple(nc), tuple(dist))
    if not all(nc):
        return TestOutcome(panel.household_id, "static_corollary", False, (), sv, None)

    # variables: V_t for retained dates, w_t for interior dates, π_t for the rest
    offs: dict[tuple, int] = {}
    n = 0
    for t in dates:
        offs[("V", t)] = n
        n += 1
    for t in dates:
        width = param[t][1].shape[1] if t in param else J
        offs[("p", t)] = n
        n += width

    def pi_affine(t: int) -> tuple[np.ndarray, np.ndarray]:
        """π_t = c + M @ v[block]."""
        if t in param:
            return param[t]
        return np.zeros(J), np.eye(J)

    Z = X @ A.T
    A_ub, b_ub = [], []
    for s, t in itertools.permutations(dates, 2):
        c, M = pi_affine(t)
        dz = Z[s] - Z[t]
        row = np.zeros(n)
        row[offs[("V", s)]] += 1.0
        row[offs[("V", t)]] -= 1.0
        o = offs[("p", t)]
        row[o:o + M.shape[1]] -= dz @ M
        A_ub.append(row)
        b_ub.append(float(c @ dz))
    if mode != MISSING:
        for t in interior:
            c, M = param[t]
            o = offs[("p", t)]
            for k in np.flatnonzero(~act[t] & np.isfinite(P[t])):
                row = np.zeros(n)
                row[o:o + M.shape[1]] = A[:, k] @ M
                A_ub.append(row)
                b_ub.append(P[t, k] - A[:, k] @ c)
    ok = _lp_feasible(A_ub, b_ub, [], [], n)
    return TestOutcome(panel.household_id, "static_corollary", ok, (1.0,) if ok else (), sv, 1.0 if ok else None)


test_static_characteristics.__test__ = False  # type: ignore[attr-defined]


def garp_relations(panel: HouseholdPanel) -> tuple[np.ndarray, np.ndarray]:
    """Direct (R0) and strict (P0) revealed-preference relations over all dates.

    R0[t, s] iff ρ_t'x_t >= ρ_t'x_s; a pair is skipped when some good bought
    at s has no period-t price.
    """
    X = np.asarray(panel.X)
    P = np.asarray(panel.P)
    T = panel.T
    R0 = np.zeros((T, T), dtype=bool)
    P0 = np.zeros((T, T), dtype=bool)
    for t in range(T):
        own = float(np.nansum(P[t] * X[t]))
        for s in range(T):
            sup = X[s] > 0
            if not np.all(np.isfinite(P[t, sup])):
                continue
            other = float(P[t, sup] @ X[s, sup])
            tol = 1e-12 * max(own, other, 1.0)
            R0[t, s] = own >= other - tol
            P0[t, s] = own > other + tol
    return R0, P0


def test_garp_goods(panel: HouseholdPanel) -> bool:
    """Classical GARP: no t R* s with s P0 t."""
    R0, P0 = garp_relations(panel)
    R = R0.copy()
    np.fill_diagonal(R, True)
    for k in range(panel.T):
        R |= R[:, [k]] & R[[k], :]
    return not bool(np.any(R & P0.T))


test_garp_goods.__test__ = False  # type: ignore[attr-defined]
