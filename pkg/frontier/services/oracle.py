"""Brute-force grid ground truth.

Nothing here calls the exact pareto module; the only shared piece is the
dominance filter from model.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .config import Tolerances, resolve, setting_int
from .errors import BilevelError, DimensionError, SizeGuardError
from .model import BilevelProblem, EfficiencyKind, LinearLowerLevel, efficient_mask
from .polyhedra import Polyhedron, bounding_box

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridSpec:
    lower: np.ndarray
    upper: np.ndarray
    step: float

    def __post_init__(self):
        lower = np.array(self.lower, dtype=float).reshape(-1)
        upper = np.array(self.upper, dtype=float).reshape(-1)
        if lower.size != upper.size or lower.size == 0:
            raise DimensionError("grid bounds must be nonempty vectors of equal length")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise BilevelError("grid bounds must be finite", code="GRID")
        if np.any(upper < lower):
            raise BilevelError("grid upper bounds must not be below lower bounds", code="GRID")
        step = float(self.step)
        if not step > 0:
            raise BilevelError("grid step must be positive", code="GRID")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "step", step)

    @property
    def dim(self) -> int:
        return self.lower.size

    def axis_counts(self) -> np.ndarray:
        return np.floor((self.upper - self.lower) / self.step + 1e-9).astype(int) + 1

    @property
    def count(self) -> int:
        return int(np.prod(self.axis_counts().astype(float)))

    def axes(self) -> List[np.ndarray]:
        return [lo + self.step * np.arange(n) for lo, n in zip(self.lower, self.axis_counts())]

    def points(self, cap: Optional[int] = None) -> np.ndarray:
        cap = cap or setting_int("BILEVEL_GRID_CAP", 10_000_000)
        if self.count > cap:
            raise SizeGuardError(f"grid has {self.count} points, cap is {cap}")
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, self.dim)

    def split(self, first: int) -> Tuple["GridSpec", "GridSpec"]:
        return (
            GridSpec(self.lower[:first], self.upper[:first], self.step),
            GridSpec(self.lower[first:], self.upper[first:], self.step),
        )


def _lower_of(problem) -> LinearLowerLevel:
    return problem.lower if isinstance(problem, BilevelProblem) else problem


def _warn_if_clipped(ll: LinearLowerLevel, x: np.ndarray, grid: GridSpec, tol: Tolerances) -> None:
    P = Polyhedron(ll.B, ll.d - ll.A @ x)
    try:
        lo, hi = bounding_box(P, tol)
    except BilevelError as exc:
        logger.warning("Grid may not cover Y(x) at x=%s: %s", x.tolist(), exc.message)
        return
    if np.any(lo < grid.lower - grid.step) or np.any(hi > grid.upper + grid.step):
        logger.warning("Grid box clips Y(x) at x=%s (Y spans %s to %s)", x.tolist(), lo.tolist(), hi.tolist())


def feasible_grid_images(problem, x, grid: GridSpec, tol: Optional[Tolerances] = None,
                         warn: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    """Feasible grid points of Y(x) and their lower-level images."""
    tol = resolve(tol)
    ll = _lower_of(problem)
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != ll.n:
        raise DimensionError(f"x has length {x.size}, expected {ll.n}")
    if grid.dim != ll.m:
        raise DimensionError(f"grid has dimension {grid.dim}, expected m={ll.m}")
    if warn:
        _warn_if_clipped(ll, x, grid, tol)
    Y = grid.points()
    rhs = ll.d - ll.A @ x
    feasible = np.all(Y @ ll.B.T <= rhs + tol.feas, axis=1)
    Y = Y[feasible]
    return Y, Y @ ll.C.T + ll.shift(x)


def grid_front(problem, x, grid: GridSpec, kind: EfficiencyKind = EfficiencyKind.PARETO,
               tol: Optional[Tolerances] = None) -> np.ndarray:
    """Efficient images of the feasible grid points, one row per point."""
    _, Z = feasible_grid_images(problem, x, grid, tol)
    if Z.shape[0] == 0:
        logger.warning("No feasible grid point at x=%s", np.asarray(x).tolist())
        return Z
    return Z[efficient_mask(Z, kind, tol)]


@dataclass(frozen=True)
class DominationResult:
    holds: bool
    witness: Optional[np.ndarray] = None
    slack: float = 0.0

    def __bool__(self) -> bool:
        return self.holds


def dominated_from_below(images, front, slack: float = 0.0) -> DominationResult:
    """Every image point v has a front point u with u <= v + slack."""
    Z = np.atleast_2d(np.asarray(images, dtype=float))
    F = np.atleast_2d(np.asarray(front, dtype=float))
    if Z.size == 0:
        return DominationResult(True, slack=slack)
    if F.size == 0:
        return DominationResult(False, witness=Z[0], slack=slack)
    for start in range(0, Z.shape[0], 2048):
        block = Z[start:start + 2048]
        covered = np.all(F[None, :, :] <= block[:, None, :] + slack, axis=2).any(axis=1)
        if not covered.all():
            return DominationResult(False, witness=block[int(np.argmin(covered))], slack=slack)
    return DominationResult(True, slack=slack)


def grid_domination_check(problem, x, grid: GridSpec, tol: Optional[Tolerances] = None) -> DominationResult:
    ll = _lower_of(problem)
    _, Z = feasible_grid_images(ll, x, grid, tol)
    if Z.shape[0] == 0:
        logger.warning("No feasible grid point at x=%s", np.asarray(x).tolist())
        return DominationResult(True)
    front = Z[efficient_mask(Z, EfficiencyKind.PARETO, tol)]
    slack = 2.0 * grid.step * (1.0 + float(np.max(np.sum(np.abs(ll.C), axis=1))))
    return dominated_from_below(Z, front, slack)


def _efficient_pairs_at(problem: BilevelProblem, x: np.ndarray, y_grid: GridSpec, kind, threshold: float,
                        tol: Tolerances) -> List[Tuple[np.ndarray, np.ndarray]]:
    Y, Z = feasible_grid_images(problem, x, y_grid, tol, warn=False)
    if Z.shape[0] == 0:
        return []
    front = Z[efficient_mask(Z, kind, tol)]
    gaps = np.min(np.linalg.norm(Z[:, None, :] - front[None, :, :], axis=2), axis=1)
    return [(x, y) for y in Y[gaps <= threshold]]


def grid_bilevel_efficient(problem: BilevelProblem, grid: GridSpec,
                           kind: EfficiencyKind = EfficiencyKind.PARETO,
                           threshold: float = 0.0, tol: Optional[Tolerances] = None) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Grid pairs (x, y) with x in X and f(x, y) on the grid front, filtered on F."""
    tol = resolve(tol)
    if grid.dim != problem.n + problem.m:
        raise DimensionError(f"grid has dimension {grid.dim}, expected n+m={problem.n + problem.m}")
    x_grid, y_grid = grid.split(problem.n)
    xs = x_grid.points()
    xs = xs[np.all(xs @ problem.upper_set.G.T - problem.upper_set.h <= tol.feas, axis=1)]
    if xs.shape[0] == 0:
        logger.warning("No grid point lies in X")
        return []
    y_grid.points()  # cap check before fanning out

    results: List[List[Tuple[np.ndarray, np.ndarray]]] = [[] for _ in range(xs.shape[0])]
    workers = max(1, setting_int("BILEVEL_MAX_WORKERS", 4))
    with ThreadPoolExecutor(max_workers=min(workers, xs.shape[0])) as executor:
        futures = {
            executor.submit(_efficient_pairs_at, problem, x, y_grid, kind, threshold, tol): i
            for i, x in enumerate(xs)
        }
        for future in as_completed(futures):
            results[futures[future]] = future.result()
    pairs = [pair for chunk in results for pair in chunk]
    if not pairs:
        return []
    values = np.vstack([problem.upper_values(x, y) for x, y in pairs])
    keep = efficient_mask(values, kind, tol)
    return [pair for pair, flag in zip(pairs, keep) if flag]


def hausdorff(a, b) -> float:
    A = np.atleast_2d(np.asarray(a, dtype=float))
    B = np.atleast_2d(np.asarray(b, dtype=float))
    if A.size == 0 or B.size == 0:
        return float("inf")
    D = np.linalg.norm(A[:, None, :] - B[None, :, :], axis=2)
    return float(max(D.min(axis=1).max(), D.min(axis=0).max()))
