"""Structural margin: price spanning (rank) condition and distance to the hedonic manifold."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePrices, NoExactSolution, TooFewPeriods
from .hedonic import ActiveSlice, Technology, active_slice
from .panel import HouseholdPanel

RANK_TOL = 1e-8


def retained_dates(T: int, lags: int = 1) -> range:
    """0-based dates whose augmented bundle is fully observed."""
    return range(lags, T)


def evaluated_dates(T: int, lags: int = 1) -> range:
    """0-based dates carrying pricing equalities.

    The first ``lags`` dates lack an observed habit stock and the last ``lags``
    dates lack observed continuation prices, so both ends are dropped. For one
    lag this is dates 2..T-1 in 1-based terms.
    """
    return range(lags, T - lags)


def _rank(M: np.ndarray, tol: float) -> int:
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


def _normalised(B: np.ndarray, rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    smax = np.linalg.norm(B, 2)
    nr = np.linalg.norm(rho)
    Bn = B / smax if smax > 0 else B
    rn = rho / nr if nr > 0 else rho
    return Bn, rn


def rank_condition(sl: ActiveSlice, tol: float = RANK_TOL) -> bool:
    """rank([B̃ | ρ⁺]) == rank(B̃), after scaling B̃ and ρ⁺ to unit size."""
    Bn, rn = _normalised(sl.B_tilde, sl.rho)
    return _rank(np.column_stack([Bn, rn]), tol) == _rank(Bn, tol)


def _projection_basis(M: np.ndarray, tol: float) -> np.ndarray:
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return U[:, :0]
    return U[:, s > tol * s[0]]


def distance_to_manifold(sl: ActiveSlice, tol: float = RANK_TOL) -> float:
    """Relative residual ‖ρ − Pρ‖ / ‖ρ‖ of projecting ρ⁺ onto col(B_t').

    col(B̃_t) = col(B_t') so only B_t' is used; this makes the number
    independent of the habit partition bit for bit. Values at or below
    ``tol`` are returned as 0, so d_t == 0 exactly when prices are spanned.
    """
    nr = np.linalg.norm(sl.rho)
    if nr == 0.0:
        raise DegeneratePrices("active prices are all zero")
    r = sl.rho / nr
    U = _projection_basis(sl.B.T, tol)
    resid = r - U @ (U.T @ r)
    d = float(min(1.0, np.linalg.norm(resid)))
    # round-off residue on the manifold is reported as an exact zero
    return 0.0 if d <= tol else d


def solve_shadow_prices(sl: ActiveSlice, tol: float = RANK_TOL) -> np.ndarray:
    """Minimum-norm θ with B̃ θ = ρ⁺; other solutions differ by null(B̃)."""
    if not rank_condition(sl, tol):
        raise NoExactSolution("prices are not spanned by the active technology")
    return np.linalg.pinv(sl.B_tilde, rcond=tol) @ sl.rho


def null_space(M: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    _, s, Vt = np.linalg.svd(M)
    r = int(np.count_nonzero(s > tol * s[0])) if s.size and s[0] > 0 else 0
    return Vt[r:].T


@dataclass(frozen=True)
class StructuralVerdict:
    """Per evaluated date: spanning verdict and distance (0-based dates)."""

    dates: tuple[int, ...]
    nc_pass: tuple[bool, ...]
    distances: tuple[float, ...]

    @property
    def nc_all_pass(self) -> bool:
        return all(self.nc_pass)

    @property
    def household_distance(self) -> float:
        return float(np.mean(self.distances)) if self.distances else 0.0

    @property
    def failing_dates(self) -> tuple[int, ...]:
        return tuple(t for t, ok in zip(self.dates, self.nc_pass) if not ok)

    def to_dict(self) -> dict:
        return {
            "dates": list(self.dates),
            "nc_pass": list(self.nc_pass),
            "distances": list(self.distances),
            "nc_all_pass": self.nc_all_pass,
            "mean_distance": self.household_distance,
        }


def structural_verdict(panel: HouseholdPanel, tech: Technology, tol: float = RANK_TOL) -> StructuralVerdict:
    if panel.K != tech.K:
        raise ValueError(f"panel has {panel.K} goods, technology {tech.K}")
    if panel.T < 2 * tech.lags + 1:
        raise TooFewPeriods(f"T={panel.T} leaves no evaluated date with {tech.lags} lag(s)")
    dates, ok, dist = [], [], []
    for t in evaluated_dates(panel.T, tech.lags):
        sl = active_slice(tech, panel.X[t], panel.P[t])
        dates.append(t)
        ok.append(rank_condition(sl, tol))
        dist.append(distance_to_manifold(sl, tol))
    return StructuralVerdict(tuple(dates), tuple(ok), tuple(dist))
