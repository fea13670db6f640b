"""KKT-type stationarity at a candidate (x, y) of the bilevel problem.

Unknowns are ordered (w*, v*, u, v, w). Multipliers of inactive rows are
eliminated before assembly, so complementarity holds by construction.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .config import Tolerances, resolve, setting_int
from .cq import check_lower_mfcq, check_upper_mfcq
from .errors import BilevelError, DimensionError, InfeasibleCandidateError
from .model import BilevelProblem
from .pareto import is_efficient_point
from .polyhedra import LpStatus, Polyhedron, lp_solve, verify_farkas

logger = logging.getLogger(__name__)

BLOCKS = ("w_star", "v_star", "u", "v", "w")


class StationarityStatus(str, Enum):
    STATIONARY = "stationary"
    NOT_STATIONARY = "not_stationary"


@dataclass(frozen=True)
class ActiveSets:
    I_G: Tuple[int, ...]
    I_g: Tuple[int, ...]
    G_values: np.ndarray
    g_values: np.ndarray
    near_G: Tuple[int, ...] = ()
    near_g: Tuple[int, ...] = ()

    def widened(self) -> "ActiveSets":
        return replace(
            self,
            I_G=tuple(sorted(set(self.I_G) | set(self.near_G))),
            I_g=tuple(sorted(set(self.I_g) | set(self.near_g))),
            near_G=(),
            near_g=(),
        )

    def as_dict(self) -> dict:
        return {
            "I_G": list(self.I_G),
            "I_g": list(self.I_g),
            "near_G": list(self.near_G),
            "near_g": list(self.near_g),
            "G_values": self.G_values,
            "g_values": self.g_values,
        }


@dataclass(frozen=True)
class KktSystem:
    """E z = f with z >= 0 on the sign-constrained unknowns."""

    E: np.ndarray
    f: np.ndarray
    signed: np.ndarray
    blocks: Dict[str, slice]
    labels: Tuple[str, ...]
    active: ActiveSets
    form: str = "kkt"

    @property
    def unknowns(self) -> int:
        return self.E.shape[1]

    def polyhedron(self) -> Polyhedron:
        sign_rows = -np.eye(self.unknowns)[self.signed]
        return Polyhedron(
            np.vstack([self.E, -self.E, sign_rows]),
            np.concatenate([self.f, -self.f, np.zeros(sign_rows.shape[0])]),
        )


@dataclass(frozen=True)
class StationarityCertificate:
    status: StationarityStatus
    w_star: Optional[np.ndarray] = None
    v_star: Optional[np.ndarray] = None
    u: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    w: Optional[np.ndarray] = None
    farkas: Optional[np.ndarray] = None
    active: Optional[ActiveSets] = None
    system: Optional[KktSystem] = field(default=None, compare=False, repr=False)
    form: str = "kkt"
    flags: Tuple[str, ...] = ()
    notes: Tuple[str, ...] = ()

    @property
    def stationary(self) -> bool:
        return self.status is StationarityStatus.STATIONARY

    def farkas_verified(self, tol: Optional[float] = None) -> bool:
        if self.farkas is None or self.system is None:
            return False
        return verify_farkas(self.system.polyhedron(), self.farkas, tol)

    def as_dict(self) -> dict:
        return {
            "status": self.status.value,
            "form": self.form,
            "w_star": self.w_star,
            "v_star": self.v_star,
            "u": self.u,
            "v": self.v,
            "w": self.w,
            "farkas": self.farkas,
            "active": self.active.as_dict() if self.active else None,
            "flags": list(self.flags),
            "notes": list(self.notes),
        }


def _point(problem: BilevelProblem, x, y) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.size != problem.n or y.size != problem.m:
        raise DimensionError(f"candidate must be in R^{problem.n} x R^{problem.m}")
    return x, y


def detect_active_sets(problem: BilevelProblem, x, y, tol: Optional[Tolerances] = None) -> ActiveSets:
    tol = resolve(tol)
    x, y = _point(problem, x, y)
    G = problem.G_values(x)
    g = problem.lower_values(x, y)
    bad_G = np.flatnonzero(G > tol.feas)
    bad_g = np.flatnonzero(g > tol.feas)
    if bad_G.size or bad_g.size:
        raise InfeasibleCandidateError(
            f"candidate violates G rows {bad_G.tolist()} and g rows {bad_g.tolist()}",
            violated_G=bad_G.tolist(),
            violated_g=bad_g.tolist(),
        )

    def near(values: np.ndarray) -> Tuple[int, ...]:
        mag = np.abs(values)
        return tuple(int(i) for i in np.flatnonzero((mag > tol.act) & (mag <= 10 * tol.act)))

    return ActiveSets(
        I_G=tuple(int(i) for i in np.flatnonzero(np.abs(G) <= tol.act)),
        I_g=tuple(int(i) for i in np.flatnonzero(np.abs(g) <= tol.act)),
        G_values=G,
        g_values=g,
        near_G=near(G),
        near_g=near(g),
    )


def _upper_jacobian(problem: BilevelProblem, x, y, jacobian) -> np.ndarray:
    if jacobian is None:
        return problem.upper_jacobian(x, y)
    J = np.asarray(jacobian, dtype=float)
    if J.shape != (problem.p, problem.n + problem.m):
        raise DimensionError(f"upper Jacobian must be {problem.p}x{problem.n + problem.m}")
    return J


def _layout(problem: BilevelProblem, active: ActiveSets) -> Tuple[Dict[str, slice], np.ndarray]:
    sizes = (problem.p, problem.q, len(active.I_G), len(active.I_g), len(active.I_g))
    blocks: Dict[str, slice] = {}
    start = 0
    for name, size in zip(BLOCKS, sizes):
        blocks[name] = slice(start, start + size)
        start += size
    signed = np.ones(start, dtype=bool)
    signed[blocks["v_star"]] = False
    return blocks, signed


def assemble_kkt(problem: BilevelProblem, x, y, active: ActiveSets, jacobian=None) -> KktSystem:
    """Equalities of the stationarity system with forced zeros removed.

    rows 0..m-1      -C'v* + B_I'v = 0
    next n rows      dxF'w* + G_I'u + A_I'(v + w) = 0
    next m rows      dyF'w* + B_I'(v + w) = 0
    last row         sum(w*) = 1
    """
    x, y = _point(problem, x, y)
    J = _upper_jacobian(problem, x, y, jacobian)
    n, m = problem.n, problem.m
    ll = problem.lower
    G_act = problem.upper_set.G[list(active.I_G)]
    A_act = ll.A[list(active.I_g)]
    B_act = ll.B[list(active.I_g)]
    blocks, signed = _layout(problem, active)

    E = np.zeros((2 * m + n + 1, signed.size))
    r1, rx, ry = slice(0, m), slice(m, m + n), slice(m + n, 2 * m + n)
    E[r1, blocks["v_star"]] = -ll.C.T
    E[r1, blocks["v"]] = B_act.T
    E[rx, blocks["w_star"]] = J[:, :n].T
    E[rx, blocks["u"]] = G_act.T
    E[rx, blocks["v"]] = A_act.T
    E[rx, blocks["w"]] = A_act.T
    E[ry, blocks["w_star"]] = J[:, n:].T
    E[ry, blocks["v"]] = B_act.T
    E[ry, blocks["w"]] = B_act.T
    E[-1, blocks["w_star"]] = 1.0
    f = np.zeros(E.shape[0])
    f[-1] = 1.0
    labels = (
        tuple(f"lower_stationarity[{i}]" for i in range(m))
        + tuple(f"upper_x[{i}]" for i in range(n))
        + tuple(f"upper_y[{i}]" for i in range(m))
        + ("normalization",)
    )
    return KktSystem(E, f, signed, blocks, labels, active, "kkt")


def assemble_coderivative(problem: BilevelProblem, x, y, active: ActiveSets, jacobian=None) -> KktSystem:
    """The coderivative inclusion with both D*Y terms expanded through active rows.

    rows 0..m-1      B_I'v - C'v* = 0                 (v generates D*Y at -C'v*)
    next m rows      B_I'w + dyF'w* + C'v* = 0        (w generates D*Y at the rest)
    next n rows      dxF'w* + G_I'u + A_I'(v + w) = 0
    last row         sum(w*) = 1
    """
    x, y = _point(problem, x, y)
    J = _upper_jacobian(problem, x, y, jacobian)
    n, m = problem.n, problem.m
    ll = problem.lower
    G_act = problem.upper_set.G[list(active.I_G)]
    A_act = ll.A[list(active.I_g)]
    B_act = ll.B[list(active.I_g)]
    blocks, signed = _layout(problem, active)

    E = np.zeros((2 * m + n + 1, signed.size))
    r1, r2, rx = slice(0, m), slice(m, 2 * m), slice(2 * m, 2 * m + n)
    E[r1, blocks["v"]] = B_act.T
    E[r1, blocks["v_star"]] = -ll.C.T
    E[r2, blocks["w"]] = B_act.T
    E[r2, blocks["w_star"]] = J[:, n:].T
    E[r2, blocks["v_star"]] = ll.C.T
    E[rx, blocks["w_star"]] = J[:, :n].T
    E[rx, blocks["u"]] = G_act.T
    E[rx, blocks["v"]] = A_act.T
    E[rx, blocks["w"]] = A_act.T
    E[-1, blocks["w_star"]] = 1.0
    f = np.zeros(E.shape[0])
    f[-1] = 1.0
    labels = (
        tuple(f"coderivative_first[{i}]" for i in range(m))
        + tuple(f"coderivative_second[{i}]" for i in range(m))
        + tuple(f"upper_x[{i}]" for i in range(n))
        + ("normalization",)
    )
    return KktSystem(E, f, signed, blocks, labels, active, "coderivative")


def _select(system: KktSystem, tol: Tolerances) -> Optional[np.ndarray]:
    """Canonical solution: most balanced w*, then smallest v and |v*|."""
    N = system.unknowns
    w_idx = np.arange(N)[system.blocks["w_star"]]
    vs_idx = np.arange(N)[system.blocks["v_star"]]
    v_idx = np.arange(N)[system.blocks["v"]]
    p, q = w_idx.size, vs_idx.size
    total = N + 1 + q
    t_col = N
    s_cols = np.arange(N + 1, total)

    E = np.zeros((system.E.shape[0], total))
    E[:, :N] = system.E
    rows = [E, -E]
    rhs = [system.f, -system.f]
    sign = np.zeros((int(system.signed.sum()), total))
    sign[np.arange(sign.shape[0]), np.flatnonzero(system.signed)] = -1.0
    rows.append(sign)
    rhs.append(np.zeros(sign.shape[0]))
    balance = np.zeros((p, total))
    balance[np.arange(p), w_idx] = -1.0
    balance[:, t_col] = -1.0
    rows.append(balance)
    rhs.append(np.full(p, -1.0 / p))
    for sgn in (1.0, -1.0):
        absval = np.zeros((q, total))
        absval[np.arange(q), vs_idx] = sgn
        absval[np.arange(q), s_cols] = -1.0
        rows.append(absval)
        rhs.append(np.zeros(q))

    cost = np.zeros(total)
    cost[t_col] = 1.0
    cost[v_idx] = 1.0
    cost[s_cols] = 1.0
    outcome = lp_solve(cost, Polyhedron(np.vstack(rows), np.concatenate(rhs)), tol)
    return outcome.z[:N] if outcome.status is LpStatus.OPTIMAL else None


def _expand(problem: BilevelProblem, system: KktSystem, z: np.ndarray) -> Dict[str, np.ndarray]:
    active = system.active
    out = {
        "w_star": z[system.blocks["w_star"]].copy(),
        "v_star": z[system.blocks["v_star"]].copy(),
        "u": np.zeros(problem.upper_set.r),
        "v": np.zeros(problem.lower.k),
        "w": np.zeros(problem.lower.k),
    }
    out["u"][list(active.I_G)] = z[system.blocks["u"]]
    out["v"][list(active.I_g)] = z[system.blocks["v"]]
    out["w"][list(active.I_g)] = z[system.blocks["w"]]
    for name in ("w_star", "u", "v", "w"):
        out[name] = np.maximum(out[name], 0.0)
    return out


def _solve_system(problem: BilevelProblem, system: KktSystem, tol: Tolerances) -> StationarityCertificate:
    P = system.polyhedron()
    outcome = lp_solve(np.zeros(system.unknowns), P, tol)
    if outcome.status is LpStatus.INFEASIBLE:
        return StationarityCertificate(
            StationarityStatus.NOT_STATIONARY,
            farkas=outcome.farkas,
            active=system.active,
            system=system,
            form=system.form,
        )
    z = _select(system, tol)
    if z is None:
        z = outcome.z
    return StationarityCertificate(
        StationarityStatus.STATIONARY,
        active=system.active,
        system=system,
        form=system.form,
        **_expand(problem, system, z),
    )


def _sensitivity(problem, x, y, active, assemble, jacobian, base, tol) -> Tuple[str, ...]:
    if not (active.near_G or active.near_g):
        return ()
    wide = active.widened()
    other = _solve_system(problem, assemble(problem, x, y, wide, jacobian), tol)
    message = (
        f"near-active rows G{list(active.near_G)} g{list(active.near_g)}: "
        f"{base.status.value} without them, {other.status.value} with them"
    )
    logger.warning("Active-set sensitivity at x=%s y=%s: %s", x.tolist(), y.tolist(), message)
    return (message,)


def certify(problem: BilevelProblem, x, y, tol: Optional[Tolerances] = None, jacobian=None) -> StationarityCertificate:
    """Stationary with multipliers, or NotStationary with a Farkas vector."""
    tol = resolve(tol)
    x, y = _point(problem, x, y)
    active = detect_active_sets(problem, x, y, tol)
    cert = _solve_system(problem, assemble_kkt(problem, x, y, active, jacobian), tol)
    notes = _sensitivity(problem, x, y, active, assemble_kkt, jacobian, cert, tol)
    return replace(cert, notes=notes) if notes else cert


def check_coderivative_form(problem: BilevelProblem, x, y, tol: Optional[Tolerances] = None,
                            jacobian=None) -> StationarityCertificate:
    tol = resolve(tol)
    x, y = _point(problem, x, y)
    active = detect_active_sets(problem, x, y, tol)
    cert = _solve_system(problem, assemble_coderivative(problem, x, y, active, jacobian), tol)
    flags = []
    if not check_upper_mfcq(problem, x, tol):
        flags.append("upper-level regularity fails")
    if not check_lower_mfcq(problem, x, y, tol):
        flags.append("lower-level regularity fails")
    if flags:
        flags.append("formula not guaranteed")
    notes = _sensitivity(problem, x, y, active, assemble_coderivative, jacobian, cert, tol)
    return replace(cert, flags=tuple(flags), notes=notes)


def certify_many(problem: BilevelProblem, candidates: Sequence[Tuple], tol: Optional[Tolerances] = None,
                 coderivative: bool = False) -> List[Union[StationarityCertificate, BilevelError]]:
    """Certify each (x, y); infeasible candidates come back as their error."""
    tol = resolve(tol)
    run = check_coderivative_form if coderivative else certify

    def one(candidate):
        x, y = candidate
        try:
            return run(problem, x, y, tol)
        except BilevelError as exc:
            return exc

    if not candidates:
        return []
    results: List = [None] * len(candidates)
    workers = max(1, min(setting_int("BILEVEL_MAX_WORKERS", 4), len(candidates)))
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = {executor.submit(one, c): i for i, c in enumerate(candidates)}
        for future in as_completed(futures):
            results[futures[future]] = future.result()
    return results


def residuals(problem: BilevelProblem, x, y, cert: StationarityCertificate, jacobian=None) -> Dict[str, float]:
    """Independent residuals of a Stationary certificate, on full-size multipliers."""
    if cert.status is not StationarityStatus.STATIONARY:
        raise BilevelError("residuals are defined for Stationary certificates only", code="NOT_STATIONARY")
    x, y = _point(problem, x, y)
    J = _upper_jacobian(problem, x, y, jacobian)
    ll = problem.lower
    n = problem.n
    w_star, v_star, u, v, w = (np.asarray(getattr(cert, name), dtype=float) for name in BLOCKS)
    G = problem.G_values(x)
    g = problem.lower_values(x, y)
    lower = -ll.C.T @ v_star + ll.B.T @ v
    upper_x = J[:, :n].T @ w_star + problem.upper_set.G.T @ u + ll.A.T @ (v + w)
    upper_y = J[:, n:].T @ w_star + ll.B.T @ (v + w)
    signs = np.concatenate([w_star, u, v, w])

    def sup(values: np.ndarray) -> float:
        return float(np.max(np.abs(values), initial=0.0))

    return {
        "lower_stationarity": sup(lower),
        "upper_stationarity": max(sup(upper_x), sup(upper_y)),
        "complementarity_G": sup(u * G),
        "complementarity_v": sup(v * g),
        "complementarity_w": sup(w * g),
        "normalization": abs(float(w_star.sum()) - 1.0),
        "sign": float(max(0.0, -signs.min(initial=0.0))),
    }


@dataclass(frozen=True)
class CoderivativeMembership:
    member: bool
    v: Optional[np.ndarray] = None
    regular: bool = True
    v_star: Optional[np.ndarray] = None
    w: Optional[np.ndarray] = None


def coderivative_Y_member(problem: BilevelProblem, x, y, y_star, x_star_query,
                          tol: Optional[Tolerances] = None) -> CoderivativeMembership:
    """Is x* in D*Y(x, y)(y*) = {A'v : -y* = B'v, v >= 0 on active rows}?"""
    tol = resolve(tol)
    x, y = _point(problem, x, y)
    y_star = np.asarray(y_star, dtype=float).reshape(-1)
    query = np.asarray(x_star_query, dtype=float).reshape(-1)
    if y_star.size != problem.m or query.size != problem.n:
        raise DimensionError("y* must be in R^m and the query in R^n")
    active = detect_active_sets(problem, x, y, tol)
    regular = check_lower_mfcq(problem, x, y, tol)
    if not regular:
        logger.warning("Lower-level regularity fails at x=%s y=%s; coderivative formula not guaranteed",
                       x.tolist(), y.tolist())
    rows = list(active.I_g)
    ll = problem.lower
    if not rows:
        member = bool(np.all(np.abs(y_star) <= tol.cert) and np.all(np.abs(query) <= tol.cert))
        return CoderivativeMembership(member, np.zeros(ll.k) if member else None, regular)
    E = np.vstack([ll.B[rows].T, ll.A[rows].T])
    f = np.concatenate([-y_star, query])
    k = len(rows)
    P = Polyhedron(np.vstack([E, -E, -np.eye(k)]), np.concatenate([f, -f, np.zeros(k)]))
    outcome = lp_solve(np.ones(k), P, tol)
    if outcome.status is not LpStatus.OPTIMAL:
        return CoderivativeMembership(False, None, regular)
    v = np.zeros(ll.k)
    v[rows] = np.maximum(outcome.z, 0.0)
    return CoderivativeMembership(True, v, regular)


@dataclass(frozen=True)
class EstimateCheck:
    holds: bool
    witness: Optional[np.ndarray] = None

    def __bool__(self) -> bool:
        return self.holds

    def as_dict(self) -> dict:
        return {"holds": self.holds, "witness": None if self.witness is None else self.witness.tolist()}


def _require_solution(problem: BilevelProblem, x: np.ndarray, y: np.ndarray, tol: Tolerances) -> ActiveSets:
    active = detect_active_sets(problem, x, y, tol)
    if not is_efficient_point(problem.lower, x, y, tol=tol):
        raise BilevelError(f"y={y.tolist()} is not an efficient solution of the lower level at x={x.tolist()}")
    return active


def coderivative_frontier_member(problem: BilevelProblem, x, y, z_star, x_star_query,
                                 tol: Optional[Tolerances] = None) -> CoderivativeMembership:
    """Is x* in D'z* + D*Y(x, y)(C'z*)?

    That set is the outer estimate of D*Phi(x, f(x, y))(z*) under strong
    domination. (x, y) must lie on gph S.
    """
    tol = resolve(tol)
    x, y = _point(problem, x, y)
    z_star = np.asarray(z_star, dtype=float).reshape(-1)
    query = np.asarray(x_star_query, dtype=float).reshape(-1)
    if z_star.size != problem.q or query.size != problem.n:
        raise DimensionError("z* must be in R^q and the query in R^n")
    _require_solution(problem, x, y, tol)
    ll = problem.lower
    return coderivative_Y_member(problem, x, y, ll.C.T @ z_star, query - ll.D.T @ z_star, tol)


def _estimate_columns(problem: BilevelProblem, active: ActiveSets, with_upper: bool = False):
    """Columns (v*, a, b[, u]) of the D*S estimate.

    a generates D*Y at -C'v* (the frontier term), b generates D*Y at y* + C'v*.
    Rows of E:  B_I'a - C'v* = 0  then  B_I'b + C'v* = -y*.
    x* = X z, and U z = G_I'u when the upper rows are included.
    """
    ll = problem.lower
    rows, upper = list(active.I_g), list(active.I_G)
    q, k, m = ll.q, len(rows), problem.m
    r = len(upper) if with_upper else 0
    cols = q + 2 * k + r
    a, b = slice(q, q + k), slice(q + k, q + 2 * k)
    E = np.zeros((2 * m, cols))
    E[:m, :q] = -ll.C.T
    E[:m, a] = ll.B[rows].T
    E[m:, :q] = ll.C.T
    E[m:, b] = ll.B[rows].T
    X = np.zeros((problem.n, cols))
    X[:, a] = ll.A[rows].T
    X[:, b] = ll.A[rows].T
    U = np.zeros((problem.n, cols))
    if r:
        U[:, q + 2 * k:] = problem.upper_set.G[upper].T
    signed = np.zeros(cols, dtype=bool)
    signed[q:] = True
    return E, X, U, signed


def _equality_polyhedron(E: np.ndarray, f: np.ndarray, signed: np.ndarray,
                         bound: Optional[float] = None) -> Polyhedron:
    cols = E.shape[1]
    eye = np.eye(cols)
    blocks = [E, -E, -eye[signed]]
    rhs = [f, -f, np.zeros(int(signed.sum()))]
    if bound is not None:
        blocks += [eye, -eye[~signed]]
        rhs += [np.full(cols, bound), np.full(int((~signed).sum()), bound)]
    return Polyhedron(np.vstack(blocks), np.concatenate(rhs))


def coderivative_S_member(problem: BilevelProblem, x, y, y_star, x_star_query,
                          tol: Optional[Tolerances] = None) -> CoderivativeMembership:
    """Is x* in the outer estimate of D*S(x, y)(y*)?

    The estimate is the union over v* in R^q of
    D'v* + D*Phi(x, f(x, y))(-v*) + D*Y(x, y)(y* + C'v*), with D*Phi replaced
    by its own outer estimate; the D terms cancel. It is valid where GVFCQ
    holds. The witness carries v*, v (frontier term) and w (the other D*Y term).
    """
    tol = resolve(tol)
    x, y = _point(problem, x, y)
    y_star = np.asarray(y_star, dtype=float).reshape(-1)
    query = np.asarray(x_star_query, dtype=float).reshape(-1)
    if y_star.size != problem.m or query.size != problem.n:
        raise DimensionError("y* must be in R^m and the query in R^n")
    active = _require_solution(problem, x, y, tol)
    regular = check_lower_mfcq(problem, x, y, tol)
    E, X, _, signed = _estimate_columns(problem, active)
    f = np.concatenate([np.zeros(problem.m), -y_star, query])
    outcome = lp_solve(signed.astype(float), _equality_polyhedron(np.vstack([E, X]), f, signed), tol)
    if outcome.status is not LpStatus.OPTIMAL:
        return CoderivativeMembership(False, None, regular)
    ll = problem.lower
    rows, q, k = list(active.I_g), ll.q, len(active.I_g)
    v = np.zeros(ll.k)
    v[rows] = np.maximum(outcome.z[q:q + k], 0.0)
    w = np.zeros(ll.k)
    w[rows] = np.maximum(outcome.z[q + k:q + 2 * k], 0.0)
    return CoderivativeMembership(True, v, regular, v_star=outcome.z[:q], w=w)


def _nonzero_direction(E: np.ndarray, X: np.ndarray, signed: np.ndarray, tol: Tolerances) -> EstimateCheck:
    """Search the box-normalized cone {z : E z = 0} for a z with X z != 0."""
    P = _equality_polyhedron(E, np.zeros(E.shape[0]), signed, bound=1.0)
    for i in range(X.shape[0]):
        for sign in (1.0, -1.0):
            outcome = lp_solve(-sign * X[i], P, tol)
            if outcome.optimal and -outcome.value > tol.cert:
                return EstimateCheck(False, X @ outcome.z)
    return EstimateCheck(True)


def check_solution_map_lipschitz(problem: BilevelProblem, x, y, tol: Optional[Tolerances] = None) -> EstimateCheck:
    """Holds when the outer estimate of D*S(x, y)(0) is {0}.

    By the coderivative criterion S is then Lipschitz-like around (x, y),
    provided GVFCQ holds there. A failing check returns a nonzero x* of the
    estimate; S itself may still be Lipschitz-like.
    """
    tol = resolve(tol)
    x, y = _point(problem, x, y)
    active = _require_solution(problem, x, y, tol)
    E, X, _, signed = _estimate_columns(problem, active)
    return _nonzero_direction(E, X, signed, tol)


def check_limiting_qualification(problem: BilevelProblem, x, y, tol: Optional[Tolerances] = None) -> EstimateCheck:
    """D*S(x, y)(0) meets -N(x; X) only at 0, tested on the outer estimate of D*S."""
    tol = resolve(tol)
    x, y = _point(problem, x, y)
    active = _require_solution(problem, x, y, tol)
    if not active.I_G:
        return EstimateCheck(True)
    E, X, U, signed = _estimate_columns(problem, active, with_upper=True)
    return _nonzero_direction(np.vstack([E, X + U]), X, signed, tol)
