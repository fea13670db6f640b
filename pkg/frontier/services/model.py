"""Domain types shared by every analysis: problems, objectives and dominance.

The order cone is always the nonnegative orthant.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .config import Tolerances, resolve
from .errors import BilevelError, DimensionError


def as_matrix(data, name: str, cols: Optional[int] = None) -> np.ndarray:
    arr = np.array(data, dtype=float)
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, cols or 0)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be a matrix")
    if cols is not None and arr.shape[1] != cols:
        raise DimensionError(f"{name} has {arr.shape[1]} columns, expected {cols}")
    arr.setflags(write=False)
    return arr


def as_vector(data, name: str, size: Optional[int] = None) -> np.ndarray:
    arr = np.array(data, dtype=float).reshape(-1)
    if size is not None and arr.size != size:
        raise DimensionError(f"{name} has length {arr.size}, expected {size}")
    arr.setflags(write=False)
    return arr


class EfficiencyKind(str, Enum):
    PARETO = "eff"
    WEAK_PARETO = "weff"

    @classmethod
    def parse(cls, value) -> "EfficiencyKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise BilevelError(f"Unknown efficiency kind '{value}' (use eff or weff)", code="KIND")


@dataclass(frozen=True)
class Weight:
    alpha: np.ndarray

    def __post_init__(self):
        alpha = as_vector(self.alpha, "alpha")
        if alpha.size == 0:
            raise DimensionError("alpha must be nonempty")
        if np.any(alpha < -1e-12) or abs(float(alpha.sum()) - 1.0) > 1e-9:
            raise BilevelError(f"alpha={alpha.tolist()} is not in the unit simplex", code="WEIGHT")
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def normalized(cls, raw: Sequence[float]) -> "Weight":
        arr = np.maximum(np.asarray(raw, dtype=float), 0.0)
        return cls(arr / arr.sum())

    def tolist(self) -> List[float]:
        return self.alpha.tolist()


@dataclass(frozen=True)
class LinearLowerLevel:
    """f(x, y) = C y + D x + e over Y(x) = {y : A x + B y <= d}."""

    C: np.ndarray
    A: np.ndarray
    B: np.ndarray
    d: np.ndarray
    D: Optional[np.ndarray] = None
    e: Optional[np.ndarray] = None

    def __post_init__(self):
        C = as_matrix(self.C, "lower.C")
        B = as_matrix(self.B, "lower.B", cols=C.shape[1])
        k = B.shape[0]
        A = as_matrix(self.A, "lower.A")
        if A.shape[0] != k:
            raise DimensionError(f"lower.A has {A.shape[0]} rows, expected {k}")
        d = as_vector(self.d, "lower.d", k)
        n = A.shape[1]
        D = as_matrix(np.zeros((C.shape[0], n)) if self.D is None else self.D, "lower.D", cols=n)
        if D.shape[0] != C.shape[0]:
            raise DimensionError(f"lower.D has {D.shape[0]} rows, expected {C.shape[0]}")
        e = as_vector(np.zeros(C.shape[0]) if self.e is None else self.e, "lower.e", C.shape[0])
        for name, value in (("C", C), ("A", A), ("B", B), ("d", d), ("D", D), ("e", e)):
            object.__setattr__(self, name, value)

    @property
    def q(self) -> int:
        return self.C.shape[0]

    @property
    def m(self) -> int:
        return self.C.shape[1]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def k(self) -> int:
        return self.B.shape[0]

    def shift(self, x) -> np.ndarray:
        return self.D @ np.asarray(x, dtype=float) + self.e

    def objective(self, x, y) -> np.ndarray:
        return self.C @ np.asarray(y, dtype=float) + self.shift(x)

    def constraint_values(self, x, y) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=float) + self.B @ np.asarray(y, dtype=float) - self.d


def is_pure_linear_form(lower: LinearLowerLevel) -> bool:
    return not np.any(lower.D) and not np.any(lower.e)


@dataclass(frozen=True)
class QuadraticComponent:
    """F_k(z) = 1/2 z'Qz + c'z + b with z = (x, y)."""

    Q: np.ndarray
    c: np.ndarray
    b: float = 0.0

    def __post_init__(self):
        c = as_vector(self.c, "upper.F.c")
        Q = as_matrix(self.Q, "upper.F.Q", cols=c.size)
        if Q.shape[0] != c.size:
            raise DimensionError(f"upper.F.Q must be {c.size}x{c.size}")
        if not np.allclose(Q, Q.T, atol=1e-12):
            raise DimensionError("upper.F.Q must be symmetric")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "b", float(self.b))

    @classmethod
    def linear(cls, c: Sequence[float], b: float = 0.0) -> "QuadraticComponent":
        size = len(c)
        return cls(np.zeros((size, size)), c, b)

    def value(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.Q @ z + self.c @ z + self.b)

    def gradient(self, z) -> np.ndarray:
        return self.Q @ np.asarray(z, dtype=float) + self.c


@dataclass(frozen=True)
class UpperObjective:
    components: Tuple[QuadraticComponent, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise DimensionError("upper.F needs at least one component")
        size = comps[0].c.size
        if any(comp.c.size != size for comp in comps):
            raise DimensionError("upper.F components disagree on n + m")
        object.__setattr__(self, "components", comps)

    @property
    def p(self) -> int:
        return len(self.components)

    @property
    def size(self) -> int:
        return self.components[0].c.size

    def values(self, x, y) -> np.ndarray:
        z = np.concatenate([np.asarray(x, dtype=float), np.asarray(y, dtype=float)])
        return np.array([comp.value(z) for comp in self.components])

    def jacobian(self, x, y) -> np.ndarray:
        z = np.concatenate([np.asarray(x, dtype=float), np.asarray(y, dtype=float)])
        return np.vstack([comp.gradient(z) for comp in self.components])


@dataclass(frozen=True)
class AffineSystem:
    """G(x) = Gmat x - h; the feasible set is {x : G(x) <= 0}."""

    G: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        G = as_matrix(self.G, "X.G")
        h = as_vector(self.h, "X.h", G.shape[0])
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "h", h)

    @property
    def r(self) -> int:
        return self.G.shape[0]

    def values(self, x) -> np.ndarray:
        return self.G @ np.asarray(x, dtype=float) - self.h

    def jacobian(self) -> np.ndarray:
        return self.G


@dataclass(frozen=True)
class BilevelProblem:
    upper_objective: UpperObjective
    upper_set: AffineSystem
    lower: LinearLowerLevel
    name: str = field(default="", compare=False)

    def __post_init__(self):
        n, m = self.lower.n, self.lower.m
        if self.upper_set.G.shape[1] != n:
            raise DimensionError(f"X.G has {self.upper_set.G.shape[1]} columns, expected n={n}")
        if self.upper_objective.size != n + m:
            raise DimensionError(f"upper.F acts on {self.upper_objective.size} variables, expected n+m={n + m}")

    @property
    def n(self) -> int:
        return self.lower.n

    @property
    def m(self) -> int:
        return self.lower.m

    @property
    def p(self) -> int:
        return self.upper_objective.p

    @property
    def q(self) -> int:
        return self.lower.q

    def upper_values(self, x, y) -> np.ndarray:
        return self.upper_objective.values(x, y)

    def upper_jacobian(self, x, y) -> np.ndarray:
        return self.upper_objective.jacobian(x, y)

    def G_values(self, x) -> np.ndarray:
        return self.upper_set.values(x)

    def lower_values(self, x, y) -> np.ndarray:
        return self.lower.constraint_values(x, y)


def dominates(u, v, kind: EfficiencyKind = EfficiencyKind.PARETO, tol: Optional[Tolerances] = None) -> bool:
    """u dominates v: v - u in R^q_+ minus {0} (Pareto) or in int R^q_+ (weak)."""
    u = np.asarray(u, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    if u.size != v.size:
        raise DimensionError(f"cannot compare vectors of length {u.size} and {v.size}")
    tau = resolve(tol).dom
    if EfficiencyKind.parse(kind) is EfficiencyKind.WEAK_PARETO:
        return bool(np.all(u < v - tau))
    return bool(np.all(u <= v + tau) and np.any(u < v - tau))


def _dominated_mask_sweep(P: np.ndarray, weak: bool) -> np.ndarray:
    # exact (tau = 0) sort-and-sweep for q <= 2
    N, q = P.shape
    if q == 1:
        return P[:, 0] > P[:, 0].min()
    order = np.lexsort((P[:, 1], P[:, 0]))
    dominated = np.zeros(N, dtype=bool)
    prev_min = np.inf
    i = 0
    while i < N:
        j = i
        x0 = P[order[i], 0]
        while j < N and P[order[j], 0] == x0:
            j += 1
        group = order[i:j]
        g1 = P[group, 1]
        if weak:
            dominated[group] = prev_min < g1
        else:
            dominated[group] = (prev_min <= g1) | (g1.min() < g1)
        prev_min = min(prev_min, float(g1.min()))
        i = j
    return dominated


def _dominated_mask_pairwise(P: np.ndarray, weak: bool, tau: float) -> np.ndarray:
    N = P.shape[0]
    dominated = np.zeros(N, dtype=bool)
    block = max(1, int(4_000_000 // max(N * P.shape[1], 1)))
    for start in range(0, N, block):
        V = P[start:start + block][:, None, :]
        if weak:
            hit = np.all(P[None, :, :] < V - tau, axis=2)
        else:
            hit = np.all(P[None, :, :] <= V + tau, axis=2) & np.any(P[None, :, :] < V - tau, axis=2)
        dominated[start:start + block] = hit.any(axis=1)
    return dominated


def efficient_mask(points, kind: EfficiencyKind = EfficiencyKind.PARETO, tol: Optional[Tolerances] = None) -> np.ndarray:
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if P.shape[0] == 0:
        raise BilevelError("cannot filter an empty point set", code="EMPTY")
    weak = EfficiencyKind.parse(kind) is EfficiencyKind.WEAK_PARETO
    tau = resolve(tol).dom
    if tau == 0 and P.shape[1] <= 2:
        return ~_dominated_mask_sweep(P, weak)
    return ~_dominated_mask_pairwise(P, weak, tau)


def eff_filter(points: Iterable, kind: EfficiencyKind = EfficiencyKind.PARETO, tol: Optional[Tolerances] = None) -> List[np.ndarray]:
    """Points of a finite set not dominated by any other, in input order."""
    P = [np.asarray(p, dtype=float).reshape(-1) for p in points]
    if not P:
        raise BilevelError("cannot filter an empty point set", code="EMPTY")
    if len({p.size for p in P}) != 1:
        raise DimensionError("points have mixed lengths")
    mask = efficient_mask(np.vstack(P), kind, tol)
    return [p for p, keep in zip(P, mask) if keep]
