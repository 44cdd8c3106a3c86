"""Synthetic panels with known ground truth.

Rationalisable panels come from a concave quadratic felicity
u(z̃) = b'z̃ - ½ z̃'Q z̃ whose gradient π̃_t = b - Q z̃_t is cyclically
monotone, priced forward through the pricing equalities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamic import Certificate, admissible_beta_set, default_grid
from .errors import CannotViolate, GeneratorStuck
from .hedonic import Technology
from .panel import HouseholdPanel
from .structural import evaluated_dates, structural_verdict

ATTRIBUTE_NAMES = ("sugar", "sodium", "calories", "protein", "fibre", "fat", "carbs", "satfat")

_KIND = {"pass": 1, "structural": 2, "behavioural": 3, "technology": 4}


def attribute_names(J: int) -> tuple[str, ...]:
    return tuple(ATTRIBUTE_NAMES[j] if j < len(ATTRIBUTE_NAMES) else f"attr_{j}" for j in range(J))


def good_names(K: int) -> tuple[str, ...]:
    w = max(3, len(str(K - 1)))
    return tuple(f"g{k:0{w}d}" for k in range(K))


@dataclass(frozen=True)
class GeneratorConfig:
    K: int = 6
    J: int = 3
    J2: int = 1
    L: int = 1
    T: int = 6
    beta_true: float = 0.98
    seed: int = 0
    q_scale: float = 0.02
    sparsity: int = 3
    identity: bool = False
    full_prices: bool = False
    max_units: int = 4
    max_tries: int = 500
    household_id: str | None = None
    habit_rows: tuple[int, ...] | None = None
    Q: np.ndarray | None = field(default=None, compare=False)
    b: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.identity and self.J != self.K:
            raise ValueError("identity technology needs J == K")
        if not 0 <= self.J2 <= self.J:
            raise ValueError("need 0 <= J2 <= J")
        if self.L < 1 or self.T < 2 * self.L + 1:
            raise ValueError(f"need L >= 1 and T >= {2 * self.L + 1}")
        if not 0 < self.beta_true <= 1:
            raise ValueError("beta_true must lie in (0, 1]")
        if self.sparsity < 1 or self.max_units < 1:
            raise ValueError("sparsity and max_units must be positive")
        if self.habit_rows is not None:
            object.__setattr__(self, "habit_rows", tuple(int(r) for r in self.habit_rows))
            hr = self.habit_rows
            if len(hr) != self.J2 or len(set(hr)) != len(hr) or any(not 0 <= r < self.J for r in hr):
                raise ValueError(f"habit_rows must be {self.J2} distinct indices below J={self.J}")
        D = self.J + self.L * self.J2
        if self.Q is not None:
            Q = np.asarray(self.Q, dtype=float)
            if Q.shape != (D, D) or not np.allclose(Q, Q.T):
                raise ValueError(f"Q must be a symmetric {D}x{D} matrix")
            if np.linalg.eigvalsh(Q).min() < -1e-10:
                raise ValueError("Q must be positive semidefinite")
        if self.b is not None and np.asarray(self.b).shape != (D,):
            raise ValueError(f"b must have length {D}")

    @property
    def hid(self) -> str:
        return self.household_id if self.household_id is not None else f"synth{self.seed}"


@dataclass(frozen=True)
class SynthCase:
    """A generated panel together with the technology it was priced under."""

    panel: HouseholdPanel
    technology: Technology
    certificate: Certificate | None = None
    injected_dates: tuple[int, ...] = ()


def _rng(cfg: GeneratorConfig, kind: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, _KIND[kind]])))


def make_technology(cfg: GeneratorConfig, rng: np.random.Generator | None = None,
                    constant_habits: bool = False) -> Technology:
    """Random technology for ``cfg``; habit rows are drawn unless ``cfg.habit_rows`` fixes them.

    ``constant_habits`` makes every habit row constant across goods, which the
    behavioural generator relies on.
    """
    if rng is None:
        rng = _rng(cfg, "technology")
    goods = good_names(cfg.K)
    n = cfg.K if cfg.identity else cfg.J
    if cfg.habit_rows is not None:
        rows = tuple(sorted(cfg.habit_rows))
    else:
        rows = tuple(sorted(rng.choice(n, cfg.J2, replace=False).tolist()))
    if cfg.identity:
        return Technology(np.eye(cfg.K), rows, cfg.L, goods, goods)
    A = rng.uniform(0.1, 2.0, size=(cfg.J, cfg.K))
    if constant_habits:
        for r in rows:
            A[r, :] = rng.uniform(0.5, 1.5)
    return Technology(A, rows, cfg.L, attribute_names(cfg.J), goods)


def _check_tech(cfg: GeneratorConfig, tech: Technology) -> None:
    if (tech.J, tech.K, tech.J2, tech.lags) != (cfg.J, cfg.K, cfg.J2, cfg.L):
        raise ValueError("technology dimensions do not match the generator config")


def _bundle(rng: np.random.Generator, K: int, size: int, units: int | None, max_units: int) -> np.ndarray:
    x = np.zeros(K)
    goods = rng.choice(K, size, replace=False)
    if units is None:
        x[goods] = rng.integers(1, max_units + 1, size=size)
    else:
        x[goods] = 1 + rng.multinomial(units - size, np.full(size, 1.0 / size))
    return x


def _quantities(cfg: GeneratorConfig, rng: np.random.Generator, force: dict[int, int],
                total_units: int | None = None) -> np.ndarray:
    """(T + L, K) quantities; the first L rows are unobserved burn-in."""
    L, T, K = cfg.L, cfg.T, cfg.K
    X = np.zeros((T + L, K))
    for i in range(T + L):
        t = i - L
        size = force.get(t, int(rng.integers(1, min(cfg.sparsity, K) + 1)))
        X[i] = _bundle(rng, K, size, total_units, cfg.max_units)
    last = X[-1]
    if total_units is None and np.count_nonzero(last) == 1 and last.max() < 2:
        last[last > 0] = 2.0  # the CSV encoding needs two units or two goods in the last period
    return X


def _aug(tech: Technology, Xf: np.ndarray, L: int) -> np.ndarray:
    """z̃_t for t = 0..T-1 from the burn-in-extended quantity array."""
    T = Xf.shape[0] - L
    Z = Xf @ tech.A.T
    Za = Xf @ tech.A_habit.T
    return np.hstack([Z[L:]] + [Za[L - l:L - l + T] for l in range(1, L + 1)])


def _utility(cfg: GeneratorConfig, rng: np.random.Generator, D: int) -> tuple[np.ndarray, np.ndarray]:
    if cfg.Q is not None:
        Q = np.asarray(cfg.Q, dtype=float)
    else:
        M = rng.normal(size=(D, D))
        Q = cfg.q_scale * (M @ M.T) / D
    if cfg.b is not None:
        b = np.asarray(cfg.b, dtype=float)
    else:
        b = np.concatenate([rng.uniform(0.5, 1.5, cfg.J), rng.uniform(-0.2, 0.2, D - cfg.J)])
    return Q, b


def _prices(tech: Technology, pi_t: np.ndarray, beta: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Discounted shadow prices and full price vectors from undiscounted π̃ (T, D).

    Continuation prices beyond the last period are zero.
    """
    T = pi_t.shape[0]
    J, J2, L = tech.J, tech.J2, tech.lags
    disc = beta ** np.arange(T, dtype=float)
    pi = pi_t * disc[:, None]
    p0 = pi[:, :J]
    pl = pi[:, J:].reshape(T, L, J2)
    P = p0 @ tech.A
    Aa = tech.A_habit
    for t in range(T):
        for l in range(1, L + 1):
            if t + l < T:
                P[t] += pl[t + l, l - 1] @ Aa
    return p0, pl, P


def _assemble(cfg: GeneratorConfig, rng: np.random.Generator, tech: Technology, Xf: np.ndarray,
              pi_t: np.ndarray) -> HouseholdPanel | None:
    L = cfg.L
    X = Xf[L:]
    _, _, P = _prices(tech, pi_t, cfg.beta_true)
    act = X > 0
    if np.any(P[act] <= 0):
        return None
    if cfg.full_prices:
        slack = rng.uniform(0.05, 0.5, size=P.shape) * float(np.mean(P[act]))
        P = np.where(act, P, P + slack)
        if np.any(P <= 0):
            return None
        return HouseholdPanel.from_arrays(cfg.hid, X, P, tech.goods, missing_prices=False)
    return HouseholdPanel.from_arrays(cfg.hid, X, P, tech.goods, missing_prices=True)


def _rationalisable(cfg: GeneratorConfig, rng: np.random.Generator, tech: Technology,
                    force: dict[int, int]) -> SynthCase:
    L, T = cfg.L, cfg.T
    D = tech.aug_dim
    for attempt in range(cfg.max_tries):
        if attempt % 50 == 0:
            # a utility whose gradient prices some good negatively is hopeless; redraw it
            Q, b = _utility(cfg, rng, D)
        Xf = _quantities(cfg, rng, force)
        Zt = _aug(tech, Xf, L)
        pi_t = b - Zt @ Q
        panel = _assemble(cfg, rng, tech, Xf, pi_t)
        if panel is None:
            continue
        V = Zt @ b - 0.5 * np.einsum("ti,ij,tj->t", Zt, Q, Zt)
        p0, pl, _ = _prices(tech, pi_t, cfg.beta_true)
        R = list(range(L, T))
        cert = Certificate(cfg.beta_true, tuple(R), V[R], p0[R], pl[R], Zt[R], np.zeros((L, tech.J2)))
        return SynthCase(panel, tech, cert)
    raise GeneratorStuck(f"no panel with positive prices after {cfg.max_tries} draws; shrink q_scale")


def generate_rationalisable(cfg: GeneratorConfig, tech: Technology | None = None) -> SynthCase:
    """Panel rationalised at ``cfg.beta_true`` together with its witness."""
    rng = _rng(cfg, "pass")
    if tech is None:
        tech = make_technology(cfg, rng)
    _check_tech(cfg, tech)
    return _rationalisable(cfg, rng, tech, {})


def generate_structural_violation(cfg: GeneratorConfig, delta: float = 0.1,
                                  inject_dates: tuple[int, ...] | None = None,
                                  tech: Technology | None = None) -> SynthCase:
    """Rationalisable panel with an off-span price component of relative size ``delta``.

    At each injected (0-based, evaluated) date the active set is widened past
    J goods so that col(B_t') is a proper subspace, then ρ_t⁺ gets a unit
    orthogonal direction times δ‖ρ_t⁺‖. The distance there is δ/√(1+δ²).
    """
    if cfg.identity or cfg.K <= cfg.J:
        raise CannotViolate("the price span is the whole space when every good is its own characteristic")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    rng = _rng(cfg, "structural")
    ev = list(evaluated_dates(cfg.T, cfg.L))
    if inject_dates is None:
        inject_dates = (int(rng.choice(ev)),)
    bad = [t for t in inject_dates if t not in ev]
    if bad:
        raise ValueError(f"injected dates {bad} are not evaluated dates {ev}")
    width = min(cfg.K, max(cfg.J + 1, cfg.sparsity))
    force = {t: width for t in inject_dates}
    if tech is None:
        tech = make_technology(cfg, rng)
    _check_tech(cfg, tech)
    for _ in range(cfg.max_tries):
        case = _rationalisable(cfg, rng, tech, force)
        P = np.array(case.panel.P)
        ok = True
        for t in inject_dates:
            act = case.panel.active(t)
            Bt = tech.A[:, act].T
            U, s, _ = np.linalg.svd(Bt, full_matrices=False)
            U = U[:, s > 1e-8 * s[0]]
            g = rng.normal(size=act.size)
            u = g - U @ (U.T @ g)
            nu = np.linalg.norm(u)
            if nu < 1e-6:
                ok = False
                break
            rho = P[t, act]
            P[t, act] = rho + delta * np.linalg.norm(rho) * u / nu
        if not ok or np.any(P[case.panel.X > 0] <= 0):
            continue
        panel = case.panel.with_prices(P)
        return SynthCase(panel, tech, None, tuple(sorted(inject_dates)))
    raise GeneratorStuck("could not inject a structural violation with positive prices")


def generate_behavioural_violation(cfg: GeneratorConfig, grid: tuple[float, ...] | None = None,
                                   tech: Technology | None = None) -> SynthCase:
    """Spanning prices that admit no coherent shadow prices at any β in ``grid``.

    Habit rows of A are constant across goods and every period holds the same
    number of units, so habit content never changes. Dates 1 and 2 (0-based)
    buy enough goods to pin the non-habit shadow prices, which are then
    tilted so that π̃ rises along the direction z̃ moves: a negative 2-cycle.
    The result is checked with the engine and redrawn if it still passes.
    """
    if cfg.L != 1:
        raise ValueError("the behavioural generator supports one lag")
    if cfg.T < 4:
        raise ValueError("need T >= 4 so that two evaluated dates exist")
    J1 = cfg.J - cfg.J2
    if J1 == 0 or (cfg.identity and cfg.J2 > 0) or cfg.K < J1 + (cfg.J2 > 0):
        raise CannotViolate("need a non-habit characteristic and enough goods to pin its price")
    grid = default_grid() if grid is None else tuple(grid)
    rng = _rng(cfg, "behavioural")
    if tech is None:
        tech = make_technology(cfg, rng, constant_habits=True)
    _check_tech(cfg, tech)
    for r in tech.habit_rows:
        if np.ptp(tech.A[r]) > 0:
            raise ValueError("habit rows of the technology must be constant across goods")
    a, b_ = 1, 2
    width = min(cfg.K, cfg.J + 1)
    N = max(width, cfg.sparsity) + 2
    D = tech.aug_dim
    nonhabit = np.array([j for j in range(cfg.J) if j not in tech.habit_rows])
    for _ in range(cfg.max_tries):
        Q, b = _utility(cfg, rng, D)
        Xf = _quantities(cfg, rng, {a: width, b_: width}, total_units=N)
        Zt = _aug(tech, Xf, 1)
        d = Zt[b_, nonhabit] - Zt[a, nonhabit]
        nd = np.linalg.norm(d)
        if nd < 0.1:
            continue
        pi_t = b - Zt @ Q
        pa = pi_t[a, nonhabit]
        gamma = 0.3 * abs(pa @ d) / nd ** 2 + 0.1 * np.linalg.norm(pa) / nd
        pi_t[b_, nonhabit] = pa + gamma * d
        panel = _assemble(cfg, rng, tech, Xf, pi_t)
        if panel is None:
            continue
        if not structural_verdict(panel, tech).nc_all_pass:
            continue
        if admissible_beta_set(panel, tech, grid):
            continue
        return SynthCase(panel, tech, None, (a, b_))
    raise GeneratorStuck("could not build a verified behavioural violation")
