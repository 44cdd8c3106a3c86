"""Dynamic revealed-preference engine: LP feasibility, admissible β, CCEI, certificates.

Dates are 0-based throughout. With L lags the retained dates are L..T-1
(the augmented bundle needs L observed lags) and the pricing equalities sit
on L..T-1-L. For one lag this is the usual "equalities on 2..T-1,
inequalities on 2..T" in 1-based terms.

Variables are undiscounted, π̃_t = β^{-t}(π^0_t, π^1_t, ..., π^L_t), so the
Afriat rows do not depend on β. The equalities become

    B_t' p0_t + Σ_l β^l (B^a_t)' pl^l_{t+l} = β^{-t} ρ_t⁺,

and only their right-hand sides and habit coefficients move with β. One
HiGHS model per household is therefore re-used across the whole grid.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linprog

from .errors import TooFewPeriods
from .hedonic import Technology, augmented_path
from .lp import INF, LinearSystem
from .panel import HouseholdPanel
from .structural import RANK_TOL, StructuralVerdict, evaluated_dates, retained_dates, structural_verdict

log = logging.getLogger(__name__)

MISSING = "missing_prices"
FULL = "full_prices"
MODES = (MISSING, FULL)
CCEI_TOL = 1e-4


def default_grid() -> tuple[float, ...]:
    """β ∈ {0.950, 0.951, ..., 1.000}."""
    return tuple(round(0.95 + 0.001 * i, 3) for i in range(51))


@dataclass(frozen=True)
class Certificate:
    """Witness of rationalisability at one β (original price units).

    ``pi0[i]`` and ``pi_lag[i]`` are the discounted shadow prices at retained
    date ``dates[i]``; ``pi_lag[i, l-1]`` is the price of the l-th lag of the
    habit block. Continuation prices beyond the sample are zero.
    """

    beta: float
    dates: tuple[int, ...]
    V: np.ndarray
    pi0: np.ndarray
    pi_lag: np.ndarray
    z_tilde: np.ndarray
    terminal_pi_lag: np.ndarray

    @property
    def pi_tilde(self) -> np.ndarray:
        n = len(self.dates)
        disc = self.beta ** -np.asarray(self.dates, dtype=float)
        stacked = np.hstack([self.pi0, self.pi_lag.reshape(n, -1)])
        return stacked * disc[:, None]

    def afriat_violation(self) -> float:
        """max over pairs of V_s - V_t - π̃_t'(z̃_s - z̃_t), scaled by max |V|, |π̃ z̃|."""
        pt = self.pi_tilde
        Z = self.z_tilde
        # M[s, t] = V_s - V_t - π̃_t'(z̃_s - z̃_t)
        M = self.V[:, None] - self.V[None, :] - (Z @ pt.T - np.sum(pt * Z, axis=1)[None, :])
        scale = max(1.0, float(np.max(np.abs(self.V))), float(np.max(np.abs(pt * Z).sum(axis=1))))
        return float(max(0.0, M.max())) / scale

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "dates": list(self.dates),
            "V": self.V.tolist(),
            "pi0": self.pi0.tolist(),
            "pi_lag": self.pi_lag.tolist(),
            "z_tilde": self.z_tilde.tolist(),
            "terminal_pi_lag": self.terminal_pi_lag.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Certificate":
        pl = np.asarray(d["pi_lag"], dtype=float)
        term = np.asarray(d["terminal_pi_lag"], dtype=float)
        n = len(d["dates"])
        if pl.size == 0:
            pl = pl.reshape(n, term.shape[0] if term.ndim == 2 else 0, 0)
        return cls(float(d["beta"]), tuple(d["dates"]), np.asarray(d["V"], float),
                   np.asarray(d["pi0"], float).reshape(n, -1), pl,
                   np.asarray(d["z_tilde"], float).reshape(n, -1), term)


def pricing_residual(cert: Certificate, panel: HouseholdPanel, tech: Technology,
                     mode: str = MISSING) -> float:
    """Largest relative violation of the pricing equalities (and full-price inequalities)."""
    L = tech.lags
    pos = {t: i for i, t in enumerate(cert.dates)}
    Aa = tech.A_habit
    worst = 0.0
    scale = float(np.nanmax(np.abs(panel.P)))
    for t in evaluated_dates(panel.T, L):
        lhs = tech.A.T @ cert.pi0[pos[t]]
        for l in range(1, L + 1):
            lhs = lhs + Aa.T @ cert.pi_lag[pos[t + l], l - 1]
        act = panel.X[t] > 0
        worst = max(worst, float(np.max(np.abs(lhs[act] - panel.P[t, act]))) / scale)
        if mode == FULL:
            ina = (~act) & np.isfinite(panel.P[t])
            if ina.any():
                worst = max(worst, float(np.max(lhs[ina] - panel.P[t, ina], initial=0.0)) / scale)
    return worst


def reconstruct_utility(cert: Certificate) -> Callable[[np.ndarray], float]:
    """Afriat envelope u(z̃) = min_t V_t + π̃_t'(z̃ - z̃_t)."""
    V = cert.V.copy()
    P = cert.pi_tilde
    Z = cert.z_tilde
    offs = V - np.sum(P * Z, axis=1)

    def u(z: np.ndarray) -> float:
        z = np.asarray(z, dtype=float)
        return float(np.min(offs + P @ z))

    return u


@dataclass(frozen=True)
class TestOutcome:
    """Classification of one household under one model."""

    __test__ = False  # not a pytest class

    household_id: str
    model_id: str
    passed: bool
    admissible_betas: tuple[float, ...]
    structural: StructuralVerdict | None
    ccei: float | None
    certificate: Certificate | None = None
    mode: str = MISSING
    extra: dict = field(default_factory=dict)

    def to_dict(self, with_certificate: bool = True) -> dict:
        s = self.structural
        d = {
            "household_id": self.household_id,
            "model_id": self.model_id,
            "pass": self.passed,
            "admissible_betas": list(self.admissible_betas),
            "mean_distance": s.household_distance if s is not None else None,
            "nc_all_pass": s.nc_all_pass if s is not None else None,
            "ccei": self.ccei,
            "mode": self.mode,
            "structural": s.to_dict() if s is not None else None,
        }
        if with_certificate:
            d["certificate"] = self.certificate.to_dict() if self.certificate is not None else None
        if self.extra:
            d["extra"] = dict(self.extra)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TestOutcome":
        s = d.get("structural")
        sv = None
        if s is not None:
            sv = StructuralVerdict(tuple(s["dates"]), tuple(s["nc_pass"]), tuple(s["distances"]))
        c = d.get("certificate")
        return cls(d["household_id"], d["model_id"], bool(d["pass"]), tuple(d["admissible_betas"]), sv,
                   d["ccei"], Certificate.from_dict(c) if c else None, d.get("mode", MISSING),
                   dict(d.get("extra", {})))


class HouseholdLP:
    """The feasibility system for one (panel, technology, mode).

    Goods never purchased (or never priced, in full-price mode) are dropped,
    then characteristic rows with no loading on the remaining goods; their
    shadow prices are unrestricted and reported as zero. Prices are scaled
    to mean active price one and each characteristic row of A to max-abs one.
    """

    def __init__(self, panel: HouseholdPanel, tech: Technology, mode: str = MISSING,
                 nonneg: bool = False, minimise_norm: bool = False, slack_column: bool = False):
        if minimise_norm and slack_column:
            raise ValueError("minimise_norm and slack_column are exclusive")
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if panel.K != tech.K:
            raise ValueError(f"panel has {panel.K} goods but technology has {tech.K}")
        L = tech.lags
        if panel.T < 2 * L + 1:
            raise TooFewPeriods(f"T={panel.T} is too short for {L} lag(s); need T >= {2 * L + 1}")
        self.panel, self.tech, self.mode = panel, tech, mode
        self.nonneg, self.minimise_norm, self.slack_column = nonneg, minimise_norm, slack_column
        self._slack_lp: HouseholdLP | None = None
        T = panel.T
        self.R = list(retained_dates(T, L))
        self.E = list(evaluated_dates(T, L))
        X = panel.X
        act = X > 0
        keep_goods = act.any(axis=0)
        if mode == FULL:
            keep_goods |= np.isfinite(panel.P[self.E]).any(axis=0)
        self.goods = np.flatnonzero(keep_goods)
        A = tech.A[:, self.goods]
        self.rows = np.flatnonzero(np.any(A != 0, axis=1))
        hpos = [i for i, r in enumerate(tech.habit_rows) if r in set(self.rows.tolist())]
        self.habit_keep = np.array(hpos, dtype=int)  # positions within tech.habit_rows
        row_pos = {r: i for i, r in enumerate(self.rows)}
        self.habit_local = np.array([row_pos[tech.habit_rows[i]] for i in hpos], dtype=int)
        A = A[self.rows]
        self.row_scale = np.max(np.abs(A), axis=1) if A.size else np.ones(0)
        A = A / self.row_scale[:, None]
        self.Ar = A
        self.Jr = A.shape[0]
        self.J2r = self.habit_local.size
        Aa = A[self.habit_local]

        act_prices = panel.P[act]
        self.price_scale = float(np.mean(act_prices))
        self.P = panel.P[:, self.goods] / self.price_scale
        Xg = X[:, self.goods]
        self.e = np.where(Xg > 0, self.P * Xg, 0.0).sum(axis=1)

        # augmented bundles in scaled coordinates
        Z = Xg @ A.T
        Za = Xg @ Aa.T
        self.Z = np.hstack([Z[L:]] + [Za[L - l:T - l] for l in range(1, L + 1)])
        self.D = self.Jr + L * self.J2r
        self.block = 1 + self.D
        nR = len(self.R)
        self.n_base = nR * self.block

        rows_i: list[np.ndarray] = []
        cols_j: list[np.ndarray] = []
        vals: list[np.ndarray] = []
        lo: list[float] = []
        hi: list[float] = []
        r = 0
        # Afriat rows: V_s - V_t - π̃_t'(z̃_s - z̃_t) <= slack_t
        self.l1_rows: list[int] = []
        self.l1_t: list[int] = []
        for si, ti in itertools.permutations(range(nR), 2):
            diff = self.Z[si] - self.Z[ti]
            nz = np.flatnonzero(diff)
            rows_i.append(np.full(2 + nz.size, r))
            cols_j.append(np.concatenate([[si * self.block, ti * self.block], ti * self.block + 1 + nz]))
            vals.append(np.concatenate([[1.0, -1.0], -diff[nz]]))
            lo.append(-INF)
            hi.append(0.0)
            self.l1_rows.append(r)
            self.l1_t.append(self.R[ti])
            r += 1
        # pricing rows at evaluated dates
        self.eq_rows: list[int] = []
        self.eq_meta: list[tuple[int, int, bool]] = []  # (date, local good, is_equality)
        self.habit_entries: list[tuple[int, int, int, float]] = []  # (row, col, lag, base value)
        rpos = {t: i for i, t in enumerate(self.R)}
        for t in self.E:
            it = rpos[t]
            for k in range(self.goods.size):
                price = self.P[t, k]
                is_act = Xg[t, k] > 0
                if not is_act and not (mode == FULL and np.isfinite(price)):
                    continue
                a = A[:, k]
                nz = np.flatnonzero(a)
                ri = [np.full(nz.size, r)]
                cj = [it * self.block + 1 + nz]
                vv = [a[nz]]
                for l in range(1, L + 1):
                    base = (it + l) * self.block + 1 + self.Jr + (l - 1) * self.J2r
                    ah = Aa[:, k]
                    hz = np.flatnonzero(ah)
                    ri.append(np.full(hz.size, r))
                    cj.append(base + hz)
                    vv.append(ah[hz])
                    for h in hz:
                        self.habit_entries.append((r, int(base + h), l, float(ah[h])))
                rows_i.extend(ri)
                cols_j.extend(cj)
                vals.extend(vv)
                lo.append(0.0)
                hi.append(0.0)
                self.eq_rows.append(r)
                self.eq_meta.append((t, k, bool(is_act)))
                r += 1
        n_cols = self.n_base
        col_lower = np.full(n_cols, -INF)
        if nonneg:
            for i in range(nR):
                col_lower[i * self.block + 1:(i + 1) * self.block] = 0.0
        cost = None
        if slack_column:
            # slack u = 1 - e: Afriat rows read ... <= e_t u_t with u_t = β^{-t} u, minimise u
            u = n_cols
            self._ut_col = {t: u + 1 + i for i, t in enumerate(self.R)}
            for rr, t in zip(self.l1_rows, self.l1_t):
                rows_i.append(np.array([rr]))
                cols_j.append(np.array([self._ut_col[t]]))
                vals.append(np.array([-self.e[t]]))
            self.link_rows = []
            for t in self.R:
                rows_i.append(np.array([r, r]))
                cols_j.append(np.array([self._ut_col[t], u]))
                vals.append(np.array([1.0, -1.0]))
                lo.append(0.0)
                hi.append(0.0)
                self.link_rows.append(r)
                r += 1
            n_cols += 1 + nR
            col_lower = np.concatenate([col_lower, [0.0], np.full(nR, -INF)])
            cost = np.zeros(n_cols)
            cost[u] = 1.0
        if minimise_norm:
            # |w_j| <= s_j for every V and π variable, minimise Σ s_j
            aux0 = n_cols
            for j in range(self.n_base):
                for sign in (1.0, -1.0):
                    rows_i.append(np.array([r, r]))
                    cols_j.append(np.array([j, aux0 + j]))
                    vals.append(np.array([sign, -1.0]))
                    lo.append(-INF)
                    hi.append(0.0)
                    r += 1
            n_cols += self.n_base
            col_lower = np.concatenate([col_lower, np.zeros(self.n_base)])
            cost = np.concatenate([np.zeros(self.n_base), np.ones(self.n_base)])
        self.sys = LinearSystem(
            n_cols,
            np.concatenate(rows_i) if rows_i else np.zeros(0, int),
            np.concatenate(cols_j) if cols_j else np.zeros(0, int),
            np.concatenate(vals) if vals else np.zeros(0),
            lo, hi, col_lower=col_lower, cost=cost,
        )
        self._beta: float | None = None
        self._eff: float | None = 1.0
        self._eq_price = np.array([self.P[t, k] for t, k, _ in self.eq_meta])
        self._eq_t = np.array([t for t, _, _ in self.eq_meta], dtype=float)
        self._eq_isact = np.array([b for _, _, b in self.eq_meta], dtype=bool)
        self._l1_t = np.array(self.l1_t, dtype=float)
        self._l1_e = np.array([self.e[t] for t in self.l1_t])
        # coefficients that move with β: habit loadings β^l a, and the slack column -β^{-t} e_t
        var_r = [int(r) for r, _, _, _ in self.habit_entries]
        var_c = [int(c) for _, c, _, _ in self.habit_entries]
        base = [v for _, _, _, v in self.habit_entries]
        power = [float(l) for _, _, l, _ in self.habit_entries]
        if slack_column:
            var_r += [int(r) for r in self.link_rows]
            var_c += [self.n_base] * nR
            base += [-1.0] * nR
            power += [-float(t) for t in self.R]
        self._var_r, self._var_c = var_r, var_c
        self._var_base = np.array(base)
        self._var_pow = np.array(power)
        self._var_slots = self.sys.slots(var_r, var_c) if var_r else None

    def _set(self, beta: float, efficiency: float | None) -> None:
        if not 0.0 < beta <= 1.0:
            raise ValueError(f"beta must lie in (0, 1], got {beta}")
        if beta != self._beta:
            if self._var_r:
                self.sys.set_coefficients(self._var_r, self._var_c, self._var_base * beta ** self._var_pow,
                                          self._var_slots)
            if self.eq_rows:
                rhs = beta ** (-self._eq_t) * self._eq_price
                lower = np.where(self._eq_isact, rhs, -INF)
                self.sys.set_row_bounds(self.eq_rows, lower, rhs)
        if self.slack_column:
            efficiency = 1.0  # the slack column carries the relaxation; Afriat row bounds stay at 0
            self._beta, self._eff = beta, efficiency
            return
        if (beta != self._beta or efficiency != self._eff) and self.l1_rows:
            if efficiency is None:
                up = np.full(len(self.l1_rows), INF)
            else:
                up = (1.0 - efficiency) * beta ** (-self._l1_t) * self._l1_e
            self.sys.set_row_bounds(self.l1_rows, np.full(len(self.l1_rows), -INF), up)
        self._beta, self._eff = beta, efficiency

    def min_slack(self, beta: float) -> float | None:
        """Smallest u = 1 - e making the relaxed system feasible at ``beta``; None if none does."""
        lp = self._slack_lp
        if lp is None:
            lp = self if self.slack_column else HouseholdLP(self.panel, self.tech, self.mode, self.nonneg,
                                                            slack_column=True)
            self._slack_lp = lp
        lp._set(beta, 1.0)
        res = lp.sys.solve()
        return max(0.0, res.objective) if res.feasible else None

    def solve(self, beta: float, efficiency: float | None = 1.0) -> np.ndarray | None:
        """Solution vector (scaled units) or None; ``efficiency=None`` drops the Afriat rows."""
        self._set(beta, efficiency)
        res = self.sys.solve()
        return res.x if res.feasible else None

    def feasible(self, beta: float, efficiency: float | None = 1.0) -> bool:
        return self.solve(beta, efficiency) is not None

    def certificate(self, beta: float, x: np.ndarray) -> Certificate:
        tech = self.tech
        L, J, J2 = tech.lags, tech.J, tech.J2
        nR = len(self.R)
        blk = x[: self.n_base].reshape(nR, self.block)
        c = self.price_scale
        V = blk[:, 0] * c
        p0 = np.zeros((nR, J))
        p0[:, self.rows] = blk[:, 1:1 + self.Jr] * c / self.row_scale[None, :]
        pl = np.zeros((nR, L, J2))
        hscale = self.row_scale[self.habit_local]
        for l in range(L):
            seg = blk[:, 1 + self.Jr + l * self.J2r: 1 + self.Jr + (l + 1) * self.J2r]
            pl[:, l, self.habit_keep] = seg * c / hscale[None, :]
        disc = beta ** np.asarray(self.R, dtype=float)
        Z = augmented_path(tech, self.panel.X)
        return Certificate(beta, tuple(self.R), V, p0 * disc[:, None], pl * disc[:, None, None], Z,
                           np.zeros((L, J2)))


def _check_beta(beta: float) -> None:
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"beta must lie in (0, 1], got {beta}")


def feasible_at_beta(panel: HouseholdPanel, tech: Technology, beta: float, mode: str = MISSING,
                     nonneg: bool = False, minimise_norm: bool = True) -> Certificate | None:
    """Certificate at ``beta`` or None when the system is infeasible."""
    _check_beta(beta)
    lp = HouseholdLP(panel, tech, mode, nonneg, minimise_norm)
    x = lp.solve(beta)
    return lp.certificate(beta, x) if x is not None else None


def _nc_screen(panel: HouseholdPanel, tech: Technology) -> StructuralVerdict:
    return structural_verdict(panel, tech, RANK_TOL)


def admissible_beta_set(panel: HouseholdPanel, tech: Technology, grid: Sequence[float] | None = None,
                        mode: str = MISSING, nonneg: bool = False,
                        _lp: HouseholdLP | None = None) -> tuple[float, ...]:
    grid = tuple(default_grid() if grid is None else grid)
    if not grid:
        raise ValueError("empty beta grid")
    for b in grid:
        _check_beta(b)
    lp = _lp if _lp is not None else HouseholdLP(panel, tech, mode, nonneg)
    return tuple(b for b in grid if lp.feasible(b))


def ccei_from_lp(lp: HouseholdLP, grid: Sequence[float], tol: float = CCEI_TOL, exact_checked: bool = False,
                 method: str = "lp") -> float | None:
    """max over β in ``grid`` of the largest efficiency e keeping the relaxed system feasible.

    ``method="lp"`` minimises the slack u = 1 - e directly, one LP per β.
    ``method="bisect"`` bisects e to ``tol`` per β, skipping β that cannot
    beat the running best. ``exact_checked`` means the caller already knows
    that e = 1 fails at every β.
    """
    if method not in ("lp", "bisect"):
        raise ValueError("method must be 'lp' or 'bisect'")
    if not exact_checked:
        for b in grid:
            if lp.feasible(b, 1.0):
                return 1.0
    best: float | None = None
    if method == "lp":
        for b in grid:
            u = lp.min_slack(b)
            if u is not None:
                e = max(0.0, 1.0 - u)
                best = e if best is None else max(best, e)
        if best is not None and exact_checked:
            best = min(best, 1.0 - tol * 1e-3)  # e = 1 is known to fail; keep round-off below 1
        return best
    for b in grid:
        if best is None:
            if lp.solve(b, efficiency=None) is None:
                continue  # pricing equalities fail at this β
            best = 0.0
            if not lp.feasible(b, 0.0):
                continue
            lo = 0.0
        else:
            probe = min(1.0, best + tol)
            if not lp.feasible(b, probe):
                continue
            lo = probe
        hi = 1.0
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if lp.feasible(b, mid):
                lo = mid
            else:
                hi = mid
        best = lo if best is None else max(best, lo)
    return best


def ccei(panel: HouseholdPanel, tech: Technology, grid: Sequence[float] | None = None,
         mode: str = MISSING, tol: float = CCEI_TOL, nonneg: bool = False,
         _lp: HouseholdLP | None = None, method: str = "lp") -> float | None:
    """Largest e with the (1 - e)-relaxed Afriat rows feasible at some β in ``grid``.

    Returns None when the pricing equalities fail at every β (not applicable),
    1.0 when the exact system is feasible, and otherwise the LP optimum
    (``method="lp"``) or a bisection estimate within ``tol``.
    """
    grid = tuple(default_grid() if grid is None else grid)
    if panel.T < 2 * tech.lags + 1:
        raise TooFewPeriods(f"T={panel.T} is too short for {tech.lags} lag(s)")
    if mode == MISSING and not _nc_screen(panel, tech).nc_all_pass:
        return None
    lp = _lp if _lp is not None else HouseholdLP(panel, tech, mode, nonneg)
    return ccei_from_lp(lp, grid, tol, method=method)


def run_test(panel: HouseholdPanel, tech: Technology, grid: Sequence[float] | None = None,
             mode: str = MISSING, model_id: str = "", with_ccei: bool = True,
             with_certificate: bool = True, nonneg: bool = False, ccei_tol: float = CCEI_TOL) -> TestOutcome:
    """Full classification: structural screen, admissible β set, certificate, CCEI."""
    grid = tuple(default_grid() if grid is None else grid)
    sv = _nc_screen(panel, tech)
    if mode == MISSING and not sv.nc_all_pass:
        # equalities decouple by date, so a spanning failure rules out every β
        return TestOutcome(panel.household_id, model_id, False, (), sv, None, None, mode)
    lp = HouseholdLP(panel, tech, mode, nonneg)
    adm = admissible_beta_set(panel, tech, grid, mode, nonneg, _lp=lp)
    cert = None
    if adm:
        if with_certificate:
            cert = feasible_at_beta(panel, tech, adm[0], mode, nonneg, minimise_norm=True)
        value: float | None = 1.0
    elif with_ccei:
        value = ccei_from_lp(lp, grid, ccei_tol, exact_checked=True)
    else:
        value = None
    return TestOutcome(panel.household_id, model_id, bool(adm), adm, sv, value, cert, mode)


def check_cycles_bruteforce(pis: Sequence[np.ndarray], zs: Sequence[np.ndarray], max_len: int | None = None,
                            tol: float = 0.0) -> bool:
    """True iff Σ_m π̃_{t_m}'(z̃_{t_{m+1}} - z̃_{t_m}) >= -tol around every cycle.

    Only simple cycles are enumerated; a closed walk with repeats splits into
    simple cycles that are no longer, so nothing is lost.
    """
    P = np.asarray(pis, dtype=float)
    Z = np.asarray(zs, dtype=float)
    if P.shape[0] != Z.shape[0]:
        raise ValueError("pis and zs must have equal length")
    if P.ndim == 1:
        P, Z = P[:, None], Z[:, None]
    n = P.shape[0]
    if n < 2:
        return True
    max_len = n if max_len is None else min(max_len, n)
    # W[t, s] = π̃_t'(z̃_s - z̃_t)
    W = P @ Z.T - np.sum(P * Z, axis=1)[:, None]
    for k in range(2, max_len + 1):
        for combo in itertools.combinations(range(n), k):
            first, rest = combo[0], combo[1:]
            for perm in itertools.permutations(rest):
                cyc = (first,) + perm
                total = sum(W[cyc[i], cyc[(i + 1) % k]] for i in range(k))
                if total < -tol:
                    return False
    return True


def afriat_feasible(pis: Sequence[np.ndarray], zs: Sequence[np.ndarray]) -> bool:
    """LP feasibility of V_s - V_t <= π̃_t'(z̃_s - z̃_t) for fixed π̃, z̃."""
    P = np.asarray(pis, dtype=float)
    Z = np.asarray(zs, dtype=float)
    if P.ndim == 1:
        P, Z = P[:, None], Z[:, None]
    n = P.shape[0]
    if n < 2:
        return True
    W = P @ Z.T - np.sum(P * Z, axis=1)[:, None]
    rows, cols, vals, up = [], [], [], []
    r = 0
    for s, t in itertools.permutations(range(n), 2):
        rows += [r, r]
        cols += [s, t]
        vals += [1.0, -1.0]
        up.append(W[t, s])
        r += 1
    sys = LinearSystem(n, rows, cols, vals, np.full(r, -INF), up)
    return sys.solve().feasible


def one_lag_feasible(panel: HouseholdPanel, tech: Technology, beta: float, mode: str = MISSING) -> bool:
    """Plain transcription of the one-lag system in discounted shadow prices.

    Kept as a cross-check on the general L-lag builder: dense matrices, no
    goods or row restriction, no row scaling, scipy's HiGHS interface.
    """
    if tech.lags != 1:
        raise ValueError("one_lag_feasible needs a one-lag technology")
    _check_beta(beta)
    T = panel.T
    if T < 3:
        raise TooFewPeriods("need T >= 3")
    J, J2 = tech.J, tech.J2
    A, Aa = tech.A, tech.A_habit
    c = float(np.mean(panel.P[panel.X > 0]))
    P = panel.P / c
    dates = list(range(1, T))
    n = len(dates)
    width = 1 + J + J2  # V, π^0, π^1 per date
    nv = n * width
    Z = np.array([np.concatenate([A @ panel.X[t], Aa @ panel.X[t - 1]]) for t in dates])

    def col(i: int, part: str) -> int:
        return i * width + {"V": 0, "p0": 1, "p1": 1 + J}[part]

    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for si, ti in itertools.permutations(range(n), 2):
        row = np.zeros(nv)
        row[col(si, "V")] += 1.0
        row[col(ti, "V")] -= 1.0
        w = beta ** -(dates[ti])
        row[col(ti, "p0"):col(ti, "p0") + J + J2] -= w * (Z[si] - Z[ti])
        A_ub.append(row)
        b_ub.append(0.0)
    for i, t in enumerate(dates[:-1]):
        for k in range(panel.K):
            active = panel.X[t, k] > 0
            if not active and not (mode == FULL and np.isfinite(P[t, k])):
                continue
            row = np.zeros(nv)
            row[col(i, "p0"):col(i, "p0") + J] = A[:, k]
            row[col(i + 1, "p1"):col(i + 1, "p1") + J2] = Aa[:, k]
            (A_eq if active else A_ub).append(row)
            (b_eq if active else b_ub).append(P[t, k])
    res = linprog(np.zeros(nv), A_ub=np.array(A_ub) if A_ub else None, b_ub=b_ub or None,
                  A_eq=np.array(A_eq) if A_eq else None, b_eq=b_eq or None,
                  bounds=[(None, None)] * nv, method="highs")
    return res.status == 0
