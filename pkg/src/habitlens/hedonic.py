"""Goods-to-characteristics technology and the augmented (habit-lag) objects."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InputError, MissingActivePrice


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Technology:
    """Linear technology z = A x with an ordered habit partition.

    ``habit_rows`` lists 0-based row indices of ``A``; lagged habit blocks are
    laid out in exactly that order everywhere (so it fixes the coordinate
    convention of the lagged shadow prices).
    """

    A: np.ndarray
    habit_rows: tuple[int, ...] = ()
    lags: int = 1
    attributes: tuple[str, ...] | None = None
    goods: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
            raise ValueError(f"A must be a non-empty 2-D matrix, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise ValueError("A has non-finite entries")
        rows = tuple(int(r) for r in self.habit_rows)
        if len(set(rows)) != len(rows):
            raise ValueError("habit_rows must be distinct")
        if any(r < 0 or r >= A.shape[0] for r in rows):
            raise ValueError(f"habit_rows out of range for J={A.shape[0]}")
        if self.lags < 1:
            raise ValueError("lags must be >= 1")
        if self.attributes is not None and len(self.attributes) != A.shape[0]:
            raise ValueError("attributes length must equal J")
        if self.goods is not None and len(self.goods) != A.shape[1]:
            raise ValueError("goods length must equal K")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "habit_rows", rows)
        if self.attributes is not None:
            object.__setattr__(self, "attributes", tuple(self.attributes))
        if self.goods is not None:
            object.__setattr__(self, "goods", tuple(self.goods))

    @property
    def J(self) -> int:
        return self.A.shape[0]

    @property
    def K(self) -> int:
        return self.A.shape[1]

    @property
    def J2(self) -> int:
        return len(self.habit_rows)

    @property
    def A_habit(self) -> np.ndarray:
        return self.A[list(self.habit_rows), :]

    @property
    def aug_dim(self) -> int:
        """Length of an augmented bundle, J + L*J2."""
        return self.J + self.lags * self.J2

    @property
    def is_identity(self) -> bool:
        return self.J == self.K and bool(np.array_equal(self.A, np.eye(self.K)))

    @classmethod
    def identity(cls, K: int, habit: str | Sequence[int] = "none", lags: int = 1,
                 goods: Sequence[str] | None = None) -> "Technology":
        """Goods technology A = I_K; ``habit`` is "all", "none" or explicit rows."""
        if habit == "all":
            rows: tuple[int, ...] = tuple(range(K))
        elif habit == "none":
            rows = ()
        else:
            rows = tuple(habit)  # type: ignore[arg-type]
        g = tuple(goods) if goods is not None else None
        return cls(np.eye(K), rows, lags, attributes=g, goods=g)

    def with_habits(self, habit_rows: Sequence[int], lags: int | None = None) -> "Technology":
        return Technology(self.A, tuple(habit_rows), self.lags if lags is None else lags,
                          self.attributes, self.goods)

    def restrict_goods(self, cols: Sequence[int]) -> "Technology":
        """Technology over a subset of goods (columns), keeping every row."""
        cols = list(cols)
        goods = tuple(self.goods[c] for c in cols) if self.goods is not None else None
        return Technology(self.A[:, cols], self.habit_rows, self.lags, self.attributes, goods)


@dataclass(frozen=True)
class AugmentedBundle:
    """z̃_t = (z_t, z^a_{t-1}, ..., z^a_{t-L}) with z_t kept in the row order of A."""

    z: np.ndarray
    z_a_lags: np.ndarray
    habit_rows: tuple[int, ...] = field(default=())

    @property
    def z_a(self) -> np.ndarray:
        return self.z[list(self.habit_rows)]

    @property
    def z_c(self) -> np.ndarray:
        mask = np.ones(self.z.shape[0], dtype=bool)
        mask[list(self.habit_rows)] = False
        return self.z[mask]

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.z, self.z_a_lags.reshape(-1)])


@dataclass(frozen=True)
class ActiveSlice:
    """Technology restricted to the goods purchased in one period."""

    goods: np.ndarray
    B: np.ndarray
    B_habit: np.ndarray
    B_tilde: np.ndarray
    rho: np.ndarray

    @property
    def K_active(self) -> int:
        return self.goods.shape[0]


def build_augmented_matrix(tech: Technology) -> np.ndarray:
    """Block matrix Ã with Ã x̃ = z̃ for x̃ = (x_t, x_{t-1}, ..., x_{t-L})."""
    J, K, J2, L = tech.J, tech.K, tech.J2, tech.lags
    out = np.zeros((J + L * J2, (L + 1) * K))
    out[:J, :K] = tech.A
    Aa = tech.A_habit
    for l in range(1, L + 1):
        r0 = J + (l - 1) * J2
        out[r0:r0 + J2, l * K:(l + 1) * K] = Aa
    return out


def characteristics(tech: Technology, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (tech.K,):
        raise ValueError(f"bundle has shape {x.shape}, expected ({tech.K},)")
    return tech.A @ x


def augmented_bundle(tech: Technology, x_hist: Sequence[np.ndarray]) -> AugmentedBundle:
    """Build z̃ from ``x_hist = [x_t, x_{t-1}, ..., x_{t-L}]``."""
    if len(x_hist) != tech.lags + 1:
        raise ValueError(f"need {tech.lags + 1} bundles (current plus lags), got {len(x_hist)}")
    z = characteristics(tech, x_hist[0])
    Aa = tech.A_habit
    lags = np.array([Aa @ np.asarray(x, dtype=float) for x in x_hist[1:]]).reshape(tech.lags, tech.J2)
    return AugmentedBundle(z, lags, tech.habit_rows)


def augmented_path(tech: Technology, X: np.ndarray) -> np.ndarray:
    """Rows z̃_t for t = L..T-1 of a (T, K) quantity array, shape (T-L, J+L*J2)."""
    X = np.asarray(X, dtype=float)
    T, L = X.shape[0], tech.lags
    Z = X @ tech.A.T
    Za = X @ tech.A_habit.T
    blocks = [Z[L:]]
    for l in range(1, L + 1):
        blocks.append(Za[L - l:T - l])
    return np.hstack(blocks)


def active_slice(tech: Technology, x: np.ndarray, rho: np.ndarray) -> ActiveSlice:
    x = np.asarray(x, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if x.shape != (tech.K,) or rho.shape != (tech.K,):
        raise ValueError("x and rho must be K-vectors")
    goods = np.flatnonzero(x > 0)
    if goods.size == 0:
        raise ValueError("period has no purchased goods")
    rho_plus = rho[goods]
    bad = goods[~np.isfinite(rho_plus)]
    if bad.size:
        raise MissingActivePrice(f"no price for purchased good index {int(bad[0])}")
    B = tech.A[:, goods]
    Ba = tech.A_habit[:, goods]
    B_tilde = np.hstack([B.T] + [Ba.T] * tech.lags)
    return ActiveSlice(goods, B, Ba, B_tilde, rho_plus)


def read_technology(char_path: str | Path, config_path: str | Path | None = None,
                    goods: Sequence[str] | None = None) -> Technology:
    """Assemble A from characteristics.csv (one row per good) and technology.json.

    If ``goods`` is given, columns follow that order and every listed good must
    have a characteristics row.
    """
    char_path = Path(char_path)
    cfg: dict = {}
    if config_path is not None:
        try:
            cfg = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(str(exc), str(config_path)) from exc
    rows: dict[str, list[float]] = {}
    try:
        with char_path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header or header[0].strip() != "good_id" or len(header) < 2:
                raise InputError("header must start with good_id followed by attributes", str(char_path), 1)
            names = [h.strip() for h in header[1:]]
            for lineno, rec in enumerate(reader, start=2):
                if not rec or all(not c.strip() for c in rec):
                    continue
                if len(rec) != len(header):
                    raise InputError(f"expected {len(header)} fields, got {len(rec)}", str(char_path), lineno)
                gid = rec[0].strip()
                if gid in rows:
                    raise InputError(f"duplicate good_id {gid!r}", str(char_path), lineno)
                try:
                    rows[gid] = [float(v) for v in rec[1:]]
                except ValueError as exc:
                    raise InputError(f"non-numeric attribute: {exc}", str(char_path), lineno) from exc
    except OSError as exc:
        raise InputError(str(exc), str(char_path)) from exc

    attrs = list(cfg.get("attributes", names))
    missing = [a for a in attrs if a not in names]
    if missing:
        raise InputError(f"attributes not in characteristics file: {missing}", str(char_path))
    idx = [names.index(a) for a in attrs]
    habit_names = cfg.get("habit_attributes", [])
    if habit_names == "all":
        habit_names = attrs
    unknown = [h for h in habit_names if h not in attrs]
    if unknown:
        raise InputError(f"habit attributes not in attribute list: {unknown}", str(config_path))
    habit_rows = tuple(attrs.index(h) for h in habit_names)
    order = list(goods) if goods is not None else sorted(rows)
    absent = [g for g in order if g not in rows]
    if absent:
        raise InputError(f"no characteristics for good_id {absent[0]!r}", str(char_path))
    A = np.array([[rows[g][i] for i in idx] for g in order], dtype=float).T.reshape(len(idx), len(order))
    return Technology(A, habit_rows, int(cfg.get("lags", 1)), tuple(attrs), tuple(order))
