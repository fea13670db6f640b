"""Constraint-qualification checkers and the GVFCQ verdict.

GVFCQ itself is never tested. A verdict is always derived through one of the
sufficient routes below, and every route that rests on sampled points says so
in its report.

    Linear CQ ----> UWSM ----> LUWSM ----> GVFCQ
    NonLinear CQ -/              ^
    R-regularity ----------------+
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import Tolerances, resolve, setting_int
from .errors import (
    BilevelError,
    InfeasibleCandidateError,
    InfeasibleError,
    VacuousCriterionError,
    VacuousSampleError,
)
from .model import BilevelProblem, EfficiencyKind, is_pure_linear_form
from .oracle import GridSpec
from .pareto import LowerLevelSolution, efficient_set, feasible_set, frontier_map, solve_lower_level
from .polyhedra import LpStatus, Polyhedron, is_bounded, least_distance, lp_solve, nnls_min_norm, vertex_enumerate

logger = logging.getLogger(__name__)

CHAIN_LINEAR = ("Linear CQ", "UWSM", "LUWSM", "GVFCQ")
CHAIN_NONLINEAR = ("NonLinear CQ", "UWSM", "LUWSM", "GVFCQ")
CHAIN_UWSM = ("UWSM (sampled)", "LUWSM", "GVFCQ")
CHAIN_RREG = ("R-regularity (sampled)", "LUWSM", "GVFCQ")


class Verdict(str, Enum):
    CERTIFIED_SUFFICIENT = "certified_sufficient"
    SAMPLE_CONSISTENT = "sample_consistent"
    VIOLATED = "violated"
    NOT_CERTIFIED = "not_certified"

    @property
    def positive(self) -> bool:
        return self in (Verdict.CERTIFIED_SUFFICIENT, Verdict.SAMPLE_CONSISTENT)


@dataclass(frozen=True)
class SampledRegion:
    """Box around a point of gph Y, sampled on a grid of step h."""

    x_lower: np.ndarray
    x_upper: np.ndarray
    y_lower: np.ndarray
    y_upper: np.ndarray
    step: float
    cap: Optional[int] = None

    @property
    def x_grid(self) -> GridSpec:
        return GridSpec(self.x_lower, self.x_upper, self.step)

    @property
    def y_grid(self) -> GridSpec:
        return GridSpec(self.y_lower, self.y_upper, self.step)

    def x_points(self) -> np.ndarray:
        return self.x_grid.points(self.cap)

    def y_points(self) -> np.ndarray:
        return self.y_grid.points(self.cap)

    def as_dict(self) -> dict:
        return {
            "x_box": [np.asarray(self.x_lower).tolist(), np.asarray(self.x_upper).tolist()],
            "y_box": [np.asarray(self.y_lower).tolist(), np.asarray(self.y_upper).tolist()],
            "h": self.step,
        }


@dataclass(frozen=True)
class CqReport:
    condition: str
    verdict: Verdict
    estimate: Dict[str, Optional[float]] = field(default_factory=dict)
    witness: Optional[dict] = None
    chain: Tuple[str, ...] = ()
    notes: Tuple[str, ...] = ()
    sample_size: int = 0

    def as_dict(self) -> dict:
        return {
            "condition": self.condition,
            "verdict": self.verdict.value,
            "estimate": dict(self.estimate),
            "witness": self.witness,
            "chain": " → ".join(self.chain) if self.chain else None,
            "notes": list(self.notes),
            "sample_size": self.sample_size,
        }


@dataclass(frozen=True)
class CqConfig:
    xs: Tuple[np.ndarray, ...] = ()
    region: Optional[SampledRegion] = None
    check_linear: bool = True
    sample_uwsm: bool = True
    sample_rreg: bool = True
    nonlinear_lambda: Optional[float] = None
    weight_grid: int = 5


def _sweep(fn: Callable, items: Sequence) -> List:
    """Apply fn over items on a thread pool; results come back in input order."""
    if not items:
        return []
    workers = max(1, min(setting_int("BILEVEL_MAX_WORKERS", 4), len(items)))
    results: List = [None] * len(items)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = {executor.submit(fn, item): i for i, item in enumerate(items)}
        for future in as_completed(futures):
            results[futures[future]] = future.result()
    return results


def _solution_or_none(problem: BilevelProblem, x: np.ndarray, tol: Tolerances) -> Optional[LowerLevelSolution]:
    try:
        return solve_lower_level(problem.lower, x, EfficiencyKind.PARETO, tol)
    except InfeasibleError:
        return None


def _in_X(problem: BilevelProblem, xs: np.ndarray, tol: Tolerances) -> np.ndarray:
    return np.all(xs @ problem.upper_set.G.T - problem.upper_set.h <= tol.feas, axis=1)


# --- UWSM ---------------------------------------------------------------------


def _uwsm_ratios(problem: BilevelProblem, x: np.ndarray, Y: np.ndarray, tol: Tolerances,
                 solution: Optional[LowerLevelSolution] = None):
    """Ratios d(f, Phi) / d(y, S) at feasible y outside S(x); NaN elsewhere."""
    ll = problem.lower
    ratios = np.full(Y.shape[0], np.nan)
    solution = solution or _solution_or_none(problem, x, tol)
    if solution is None:
        return ratios
    feasible = np.all(Y @ ll.B.T <= ll.d - ll.A @ x + tol.feas, axis=1)
    if not feasible.any():
        return ratios
    Yf = Y[feasible]
    dist_s = solution.efficient.distances(Yf, tol)
    dist_phi = solution.front.distances(Yf @ ll.C.T + ll.shift(x), tol)
    outside = dist_s > tol.face
    values = np.full(Yf.shape[0], np.nan)
    values[outside] = dist_phi[outside] / dist_s[outside]
    ratios[feasible] = values
    return ratios


def uwsm_ratio(problem: BilevelProblem, x, y, tol: Optional[Tolerances] = None) -> Optional[float]:
    """The sampled UWSM ratio at one point, or None when it is undefined there."""
    tol = resolve(tol)
    ratio = _uwsm_ratios(problem, np.asarray(x, dtype=float), np.atleast_2d(np.asarray(y, dtype=float)), tol)[0]
    return None if np.isnan(ratio) else float(ratio)


def estimate_uwsm_lambda(problem: BilevelProblem, region: SampledRegion, tol: Optional[Tolerances] = None) -> CqReport:
    tol = resolve(tol)
    xs = region.x_points()
    xs = xs[_in_X(problem, xs, tol)]
    Y = region.y_points()

    def evaluate(x):
        ratios = _uwsm_ratios(problem, x, Y, tol)
        if np.all(np.isnan(ratios)):
            return 0, None
        i = int(np.nanargmin(ratios))
        return int(np.count_nonzero(~np.isnan(ratios))), (float(ratios[i]), x, Y[i])

    results = _sweep(evaluate, list(xs))
    count = sum(n for n, _ in results)
    if count == 0:
        logger.warning("Sampled region holds no point of gph Y outside gph S")
        raise VacuousSampleError("no sampled (x, y) with y in Y(x) outside S(x)")
    best = None
    for _, item in results:
        if item is not None and (best is None or item[0] < best[0]):
            best = item
    value, x_best, y_best = best
    verdict = Verdict.SAMPLE_CONSISTENT if value > tol.pos else Verdict.VIOLATED
    return CqReport(
        condition="UWSM",
        verdict=verdict,
        estimate={"lambda": value},
        witness={"x": x_best, "y": y_best, "ratio": value},
        chain=CHAIN_UWSM,
        notes=(f"infimum over {count} sampled points, h={region.step}", "Euclidean norms"),
        sample_size=count,
    )


# --- Linear CQ ------------------------------------------------------------------


def _x_set_bounded(problem: BilevelProblem, tol: Tolerances) -> Optional[bool]:
    P = Polyhedron(problem.upper_set.G, problem.upper_set.h) if problem.upper_set.r else None
    if P is None:
        return False
    try:
        return is_bounded(P, tol)
    except InfeasibleError:
        return None


def check_linear_uwsm(problem: BilevelProblem, xs: Sequence, tol: Optional[Tolerances] = None) -> CqReport:
    """Uniform bound k and positivity delta of alpha'Cy over S(x), on sampled x."""
    tol = resolve(tol)
    xs = [np.asarray(x, dtype=float).reshape(-1) for x in xs]
    if not xs:
        raise VacuousSampleError("linear CQ check needs at least one sampled x")
    C = problem.lower.C

    def evaluate(x):
        V = efficient_set(problem.lower, x, tol).vertices
        norms = np.linalg.norm(V, axis=1)
        values = V @ C.T
        i, j = np.unravel_index(int(np.argmin(values)), values.shape)
        return float(norms.max()), float(values[i, j]), x, V[i], int(j)

    results = _sweep(evaluate, xs)
    k_hat = max(r[0] for r in results)
    worst = min(results, key=lambda r: r[1])
    delta_hat = worst[1]
    notes = [f"premises checked on {len(xs)} sampled x"]
    bounded = _x_set_bounded(problem, tol)
    if bounded is False:
        notes.append("sampled X")
    elif bounded is None:
        notes.append("X is empty")
    verdict = Verdict.CERTIFIED_SUFFICIENT if delta_hat > tol.pos else Verdict.VIOLATED
    return CqReport(
        condition="Linear CQ",
        verdict=verdict,
        estimate={"delta": delta_hat, "k": k_hat},
        witness={"x": worst[2], "y": worst[3], "component": worst[4], "value": delta_hat},
        chain=CHAIN_LINEAR,
        notes=tuple(notes),
        sample_size=len(xs),
    )


# --- strong domination ----------------------------------------------------------


def _face_reaches_below(face: np.ndarray, v: np.ndarray, tau: float) -> bool:
    """Some point of conv(face) is <= v + tau componentwise (points and segments)."""
    if face.shape[0] != 2:
        return bool(np.any(np.all(face <= v + tau, axis=1)))
    a, b = face
    lo, hi = 0.0, 1.0
    for ai, bi, vi in zip(a, b, v + tau):
        slope = bi - ai
        if abs(slope) < 1e-15:
            if ai > vi:
                return False
            continue
        bound = (vi - ai) / slope
        if slope > 0:
            hi = min(hi, bound)
        else:
            lo = max(lo, bound)
    return lo <= hi


def check_strong_domination(problem: BilevelProblem, x, tol: Optional[Tolerances] = None) -> CqReport:
    tol = resolve(tol)
    ll = problem.lower
    x = np.asarray(x, dtype=float).reshape(-1)
    P = feasible_set(ll, x)
    if not is_bounded(P, tol):
        return CqReport(
            condition="strong domination",
            verdict=Verdict.NOT_CERTIFIED,
            estimate={"bounded": 0.0},
            chain=("bounded Y(x)", "strong domination"),
            notes=("premise 'bounded' fails: Y(x) is unbounded",),
        )
    V = np.vstack(vertex_enumerate(P, tol))
    images = V @ ll.C.T + ll.shift(x)
    front = frontier_map(ll, x, EfficiencyKind.PARETO, tol)
    tau = tol.dom + tol.face
    for v, y in zip(images, V):
        if not any(_face_reaches_below(face.vertices, v, tau) for face in front.faces):
            return CqReport(
                condition="strong domination",
                verdict=Verdict.VIOLATED,
                witness={"x": x, "y": y, "image": v},
                chain=("bounded Y(x)", "strong domination"),
                sample_size=V.shape[0],
            )
    notes = ["checked on all image vertices"]
    verdict = Verdict.CERTIFIED_SUFFICIENT
    if front.approximate:
        notes.append("front is a grid approximation")
        verdict = Verdict.SAMPLE_CONSISTENT
    return CqReport(
        condition="strong domination",
        verdict=verdict,
        estimate={"bounded": 1.0, "vertices": float(V.shape[0])},
        chain=("bounded Y(x)", "strong domination"),
        notes=tuple(notes),
        sample_size=V.shape[0],
    )


# --- NonLinear CQ ---------------------------------------------------------------


def simplex_grid(size: int, points_per_axis: int) -> np.ndarray:
    """Points of the unit simplex in R^size whose coordinates are multiples of 1/(g-1)."""
    parts = max(1, points_per_axis - 1)
    rows = []
    for bars in combinations(range(parts + size - 1), size - 1):
        edges = (-1,) + bars + (parts + size - 1,)
        rows.append([edges[i + 1] - edges[i] - 1 for i in range(size)])
    return np.array(rows, dtype=float) / parts


def check_nonlinear_cq(problem: BilevelProblem, x, y, lam: float, weight_grid: int = 5,
                       tol: Optional[Tolerances] = None) -> CqReport:
    """Sampled check of ||C'y* + N(y; Y(x))|| >= 1/lam over front normal directions."""
    tol = resolve(tol)
    if not lam > 0:
        raise BilevelError("lambda must be positive", code="LAMBDA")
    if weight_grid < 2:
        raise BilevelError("weight grid needs at least 2 points per axis", code="WEIGHT_GRID")
    ll = problem.lower
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    g = problem.lower_values(x, y)
    if np.any(g > tol.feas):
        raise InfeasibleCandidateError("y is not in Y(x)", violated_g=np.flatnonzero(g > tol.feas).tolist())
    solution = solve_lower_level(ll, x, EfficiencyKind.PARETO, tol)
    if solution.efficient.distances([y], tol)[0] <= tol.face:
        raise VacuousCriterionError("criterion vacuous at efficient points")

    B_act = ll.B[np.abs(g) <= tol.act]
    f = ll.objective(x, y)
    bound = 1.0 / lam
    best = None
    directions = 0
    for z in solution.front.vertices:
        active = np.flatnonzero(f >= z - tol.act)
        if active.size == 0:
            continue
        for mu in simplex_grid(active.size, weight_grid):
            y_star = np.zeros(ll.q)
            y_star[active] = mu
            nu, value = nnls_min_norm(B_act.T, ll.C.T @ y_star, tol)
            directions += 1
            if best is None or value < best[0]:
                best = (value, z, y_star, nu)
    if best is None:
        return CqReport(
            condition="NonLinear CQ",
            verdict=Verdict.SAMPLE_CONSISTENT,
            estimate={"min_norm": None, "bound": bound},
            chain=CHAIN_NONLINEAR,
            notes=("no normal direction at the sampled front vertices",),
        )
    value, z, y_star, nu = best
    verdict = Verdict.VIOLATED if value < bound - tol.pos else Verdict.SAMPLE_CONSISTENT
    return CqReport(
        condition="NonLinear CQ",
        verdict=verdict,
        estimate={"min_norm": value, "bound": bound},
        witness={"x": x, "y": y, "z": z, "y_star": y_star, "nu": nu, "norm": value},
        chain=CHAIN_NONLINEAR,
        notes=("sampled at front vertices", f"weight grid {weight_grid}"),
        sample_size=directions,
    )


# --- R-regularity ---------------------------------------------------------------


def _rreg_ratios(problem: BilevelProblem, x: np.ndarray, Y: np.ndarray, tol: Tolerances,
                 solution: Optional[LowerLevelSolution] = None):
    """Per-point ratio d(y,S)/max(d(f,Phi), d((x,y), gph Y)); NaN if skipped, inf if violated."""
    ll = problem.lower
    ratios = np.full(Y.shape[0], np.nan)
    solution = solution or _solution_or_none(problem, x, tol)
    if solution is None:
        return ratios
    numer = solution.efficient.distances(Y, tol)
    dist_phi = solution.front.distances(Y @ ll.C.T + ll.shift(x), tol)
    dist_gph = np.zeros(Y.shape[0])
    infeasible = np.flatnonzero(np.any(Y @ ll.B.T > ll.d - ll.A @ x + tol.feas, axis=1))
    if infeasible.size:
        graph = Polyhedron(np.hstack([ll.A, ll.B]), ll.d)
        for i in infeasible:
            dist_gph[i] = least_distance(graph, np.concatenate([x, Y[i]]), tol)[1]
    denom = np.maximum(dist_phi, dist_gph)
    zero = denom <= tol.face
    ratios[~zero] = numer[~zero] / denom[~zero]
    ratios[zero & (numer > tol.pos)] = np.inf
    return ratios


def rreg_ratio(problem: BilevelProblem, x, y, tol: Optional[Tolerances] = None) -> Optional[float]:
    tol = resolve(tol)
    ratio = _rreg_ratios(problem, np.asarray(x, dtype=float), np.atleast_2d(np.asarray(y, dtype=float)), tol)[0]
    return None if np.isnan(ratio) else float(ratio)


def estimate_rreg_sigma(problem: BilevelProblem, region: SampledRegion, tol: Optional[Tolerances] = None) -> CqReport:
    tol = resolve(tol)
    xs = list(region.x_points())
    Y = region.y_points()

    def evaluate(x):
        ratios = _rreg_ratios(problem, x, Y, tol)
        if np.all(np.isnan(ratios)):
            return 0, None
        i = int(np.nanargmax(ratios))
        return int(np.count_nonzero(~np.isnan(ratios))), (float(ratios[i]), x, Y[i])

    results = _sweep(evaluate, xs)
    count = sum(n for n, _ in results)
    if count == 0:
        logger.warning("Sampled region holds no point with a defined R-regularity ratio")
        raise VacuousSampleError("no sampled (x, y) off the solution graph")
    best = None
    for _, item in results:
        if item is not None and (best is None or item[0] > best[0]):
            best = item
    value, x_best, y_best = best
    verdict = Verdict.SAMPLE_CONSISTENT if np.isfinite(value) else Verdict.VIOLATED
    return CqReport(
        condition="R-regularity",
        verdict=verdict,
        estimate={"sigma": value},
        witness={"x": x_best, "y": y_best, "ratio": value},
        chain=CHAIN_RREG,
        notes=(f"supremum over {count} sampled points, h={region.step}", "0/0 samples skipped"),
        sample_size=count,
    )


# --- MFCQ -----------------------------------------------------------------------


def mfcq_margin(rows, tol: Optional[Tolerances] = None) -> float:
    """max t with a.d <= -t over unit-normalized rows a, |d|_inf <= 1, t <= 1."""
    tol = resolve(tol)
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.size == 0 or rows.shape[0] == 0:
        return 1.0
    norms = np.linalg.norm(rows, axis=1)
    if np.any(norms == 0):
        return 0.0
    rows = rows / norms[:, None]
    s = rows.shape[1]
    eye = np.eye(s)
    M = np.vstack([
        np.hstack([rows, np.ones((rows.shape[0], 1))]),
        np.hstack([eye, np.zeros((s, 1))]),
        np.hstack([-eye, np.zeros((s, 1))]),
        np.concatenate([np.zeros(s), [1.0]])[None, :],
    ])
    b = np.concatenate([np.zeros(rows.shape[0]), np.ones(2 * s), [1.0]])
    cost = np.zeros(s + 1)
    cost[-1] = -1.0
    outcome = lp_solve(cost, Polyhedron(M, b), tol)
    if outcome.status is not LpStatus.OPTIMAL:
        return 0.0
    return -outcome.value


def upper_active_rows(problem: BilevelProblem, x, tol: Tolerances) -> np.ndarray:
    return np.flatnonzero(np.abs(problem.G_values(x)) <= tol.act)


def lower_active_rows(problem: BilevelProblem, x, y, tol: Tolerances) -> np.ndarray:
    return np.flatnonzero(np.abs(problem.lower_values(x, y)) <= tol.act)


def check_upper_mfcq(problem: BilevelProblem, x, tol: Optional[Tolerances] = None) -> bool:
    tol = resolve(tol)
    active = upper_active_rows(problem, np.asarray(x, dtype=float), tol)
    return mfcq_margin(problem.upper_set.G[active], tol) > tol.pos


def check_lower_mfcq(problem: BilevelProblem, x, y, tol: Optional[Tolerances] = None) -> bool:
    tol = resolve(tol)
    active = lower_active_rows(problem, np.asarray(x, dtype=float), np.asarray(y, dtype=float), tol)
    return mfcq_margin(problem.lower.B[active], tol) > tol.pos


# --- GVFCQ ----------------------------------------------------------------------


def _vacuous(condition: str, chain: Tuple[str, ...], exc: BilevelError) -> CqReport:
    return CqReport(condition, Verdict.SAMPLE_CONSISTENT, chain=chain, notes=("vacuous", exc.message))


def gvfcq_verdict(problem: BilevelProblem, x, y, config: Optional[CqConfig] = None,
                  tol: Optional[Tolerances] = None) -> CqReport:
    """Combine the sufficient routes into one verdict; sub-check errors become notes."""
    tol = resolve(tol)
    config = config or CqConfig()
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    reports: List[CqReport] = []
    notes: List[str] = []

    if config.check_linear:
        if is_pure_linear_form(problem.lower):
            try:
                reports.append(check_linear_uwsm(problem, list(config.xs) or [x], tol))
            except BilevelError as exc:
                notes.append(f"Linear CQ: {exc.message}")
        else:
            notes.append("Linear CQ not applicable: lower objective has D x + e terms")

    if config.region is not None and config.sample_uwsm:
        try:
            reports.append(estimate_uwsm_lambda(problem, config.region, tol))
        except VacuousSampleError as exc:
            reports.append(_vacuous("UWSM", CHAIN_UWSM, exc))
        except BilevelError as exc:
            notes.append(f"UWSM: {exc.message}")

    if config.region is not None and config.sample_rreg:
        try:
            reports.append(estimate_rreg_sigma(problem, config.region, tol))
        except VacuousSampleError as exc:
            reports.append(_vacuous("R-regularity", CHAIN_RREG, exc))
        except BilevelError as exc:
            notes.append(f"R-regularity: {exc.message}")

    if config.nonlinear_lambda is not None:
        try:
            reports.append(check_nonlinear_cq(problem, x, y, config.nonlinear_lambda, config.weight_grid, tol))
        except BilevelError as exc:
            notes.append(f"NonLinear CQ: {exc.message}")

    for report in reports:
        if report.condition == "Linear CQ" and report.verdict is Verdict.VIOLATED:
            notes.append(f"Linear CQ premise fails (delta={report.estimate.get('delta')})")

    certified = [r for r in reports if r.verdict is Verdict.CERTIFIED_SUFFICIENT]
    violated = [r for r in reports if r.verdict is Verdict.VIOLATED and r.condition != "Linear CQ"]
    consistent = [r for r in reports if r.verdict is Verdict.SAMPLE_CONSISTENT]
    if certified:
        lead, verdict = certified[0], Verdict.CERTIFIED_SUFFICIENT
    elif violated:
        lead, verdict = violated[0], Verdict.VIOLATED
    elif consistent:
        lead, verdict = consistent[0], Verdict.SAMPLE_CONSISTENT
    else:
        lead, verdict = None, Verdict.NOT_CERTIFIED
        notes.append("no sufficient condition could be established")

    return CqReport(
        condition="GVFCQ",
        verdict=verdict,
        estimate={r.condition: _headline(r) for r in reports},
        witness=lead.witness if lead is not None and verdict is Verdict.VIOLATED else None,
        chain=lead.chain if lead is not None else (),
        notes=tuple(notes) + tuple(f"{r.condition}: {r.verdict.value}" for r in reports),
        sample_size=sum(r.sample_size for r in reports),
    )


def _headline(report: CqReport) -> Optional[float]:
    for key in ("delta", "lambda", "sigma", "min_norm"):
        if key in report.estimate:
            return report.estimate[key]
    return None
