"""Polyhedral kernel: dense simplex, vertices, projections and least squares.

Everything here works on small dense numpy arrays. The LP solver is a
two-phase tableau simplex with Bland's rule, so identical input always walks
the same pivot sequence.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from typing import List, Optional, Tuple

import numpy as np

from .config import Tolerances, resolve, setting_int
from .errors import (
    DimensionError,
    InfeasibleError,
    IterationLimitError,
    SizeGuardError,
    UnboundedError,
)
from .model import as_matrix, as_vector

logger = logging.getLogger(__name__)

PIVOT_EPS = 1e-11


@dataclass(frozen=True)
class Polyhedron:
    """{z in R^s : M z <= b}. Rows may be redundant; P may be empty."""

    M: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        M = np.array(self.M, dtype=float)
        if M.ndim == 1:
            M = M.reshape(0, M.size) if M.size == 0 else M.reshape(1, -1)
        M = as_matrix(M, "M")
        if M.shape[1] < 1:
            raise DimensionError("a polyhedron needs at least one coordinate")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "b", as_vector(self.b, "b", M.shape[0]))

    @property
    def s(self) -> int:
        return self.M.shape[1]

    @property
    def r(self) -> int:
        return self.M.shape[0]

    @classmethod
    def box(cls, lower, upper) -> "Polyhedron":
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        eye = np.eye(lower.size)
        return cls(np.vstack([eye, -eye]), np.concatenate([upper, -lower]))

    def with_rows(self, M_extra, b_extra) -> "Polyhedron":
        M_extra = np.atleast_2d(np.asarray(M_extra, dtype=float))
        return Polyhedron(np.vstack([self.M, M_extra]), np.concatenate([self.b, np.ravel(b_extra)]))

    def slack(self, z) -> np.ndarray:
        return self.b - self.M @ np.asarray(z, dtype=float)

    def contains(self, z, tol: Optional[float] = None) -> bool:
        tau = resolve(None).feas if tol is None else tol
        return bool(np.all(self.slack(z) >= -tau))

    def is_empty(self, tol: Optional[Tolerances] = None) -> bool:
        return lp_solve(np.zeros(self.s), self, tol).status is LpStatus.INFEASIBLE


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    UNBOUNDED = "unbounded"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class LpOutcome:
    status: LpStatus
    z: Optional[np.ndarray] = None
    value: Optional[float] = None
    basis: Tuple[int, ...] = ()
    ray: Optional[np.ndarray] = None
    farkas: Optional[np.ndarray] = None
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL

    def as_dict(self) -> dict:
        return {
            "status": self.status.value,
            "z": self.z,
            "value": self.value,
            "basis": list(self.basis),
            "ray": self.ray,
            "farkas": self.farkas,
            "iterations": self.iterations,
        }


@dataclass(frozen=True)
class VPolytope:
    vertices: np.ndarray
    label: str = field(default="", compare=False)

    def __post_init__(self):
        V = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        if V.shape[0] == 0 or V.size == 0:
            raise DimensionError("a V-polytope needs at least one vertex")
        V = V.copy()
        V.setflags(write=False)
        object.__setattr__(self, "vertices", V)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    def __len__(self) -> int:
        return self.vertices.shape[0]

    def tolist(self) -> List[List[float]]:
        return self.vertices.tolist()

    def mapped(self, matrix, offset=None) -> "VPolytope":
        image = self.vertices @ np.asarray(matrix, dtype=float).T
        if offset is not None:
            image = image + np.asarray(offset, dtype=float)
        return VPolytope(image)


# --- simplex ------------------------------------------------------------------


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    factor = T[:, col].copy()
    factor[row] = 0.0
    T -= np.outer(factor, T[row])


def _run_simplex(T: np.ndarray, basis: np.ndarray, allowed: np.ndarray, tol: float, max_iter: int):
    """Bland's rule on a tableau whose last row holds reduced costs and -value."""
    iterations = 0
    rows = T.shape[0] - 1
    while True:
        reduced = T[-1, :-1]
        entering = np.flatnonzero(allowed & (reduced < -tol))
        if entering.size == 0:
            return LpStatus.OPTIMAL, None, iterations
        j = int(entering[0])
        column = T[:rows, j]
        positive = column > PIVOT_EPS
        if not positive.any():
            return LpStatus.UNBOUNDED, j, iterations
        ratios = np.full(rows, np.inf)
        ratios[positive] = T[:rows, -1][positive] / column[positive]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + 1e-12 * (1.0 + abs(best)))
        i = int(ties[np.argmin(basis[ties])])
        if iterations >= max_iter:
            raise IterationLimitError(f"simplex did not terminate within {max_iter} pivots")
        _pivot(T, i, j)
        basis[i] = j
        iterations += 1


def lp_solve(c, P: Polyhedron, tol: Optional[Tolerances] = None, max_iter: Optional[int] = None) -> LpOutcome:
    """Minimize c'z over P; z is free and split as z = z+ - z-."""
    tol = resolve(tol)
    c = np.asarray(c, dtype=float).reshape(-1)
    if c.size != P.s:
        raise DimensionError(f"cost has length {c.size}, polyhedron has dimension {P.s}")
    max_iter = max_iter or setting_int("BILEVEL_LP_MAX_ITER", 5000)
    s, r = P.s, P.r
    sigma = np.where(P.b < 0, -1.0, 1.0)
    n_orig = 2 * s + r
    n_total = n_orig + r

    T = np.zeros((r + 1, n_total + 1))
    T[:r, :s] = sigma[:, None] * P.M
    T[:r, s:2 * s] = -sigma[:, None] * P.M
    T[:r, 2 * s:n_orig] = np.diag(sigma)
    T[:r, n_orig:n_total] = np.eye(r)
    T[:r, -1] = sigma * P.b
    T[-1, :n_orig] = -T[:r, :n_orig].sum(axis=0)
    T[-1, -1] = -T[:r, -1].sum()
    basis = np.arange(n_orig, n_total)
    allowed = np.arange(n_total) < n_orig

    _, _, it1 = _run_simplex(T, basis, allowed, tol.opt, max_iter)
    infeasibility = -T[-1, -1]
    if infeasibility > tol.feas * max(1.0, float(np.max(np.abs(P.b), initial=0.0))):
        y = 1.0 - T[-1, n_orig:n_total]
        farkas = np.maximum(-sigma * y, 0.0)
        farkas = farkas / farkas.max()
        return LpOutcome(LpStatus.INFEASIBLE, farkas=farkas, iterations=it1)

    for i in range(r):
        if basis[i] >= n_orig:
            candidates = np.flatnonzero(np.abs(T[i, :n_orig]) > 1e-9)
            if candidates.size:
                _pivot(T, i, int(candidates[0]))
                basis[i] = int(candidates[0])

    cost = np.concatenate([c, -c, np.zeros(2 * r)])
    T[-1, :-1] = cost
    T[-1, -1] = 0.0
    for i in range(r):
        T[-1] -= cost[basis[i]] * T[i]
    status, entering, it2 = _run_simplex(T, basis, allowed, tol.opt, max_iter)

    if status is LpStatus.UNBOUNDED:
        direction = np.zeros(n_total)
        direction[entering] = 1.0
        direction[basis] = -T[:r, entering]
        ray = direction[:s] - direction[s:2 * s]
        ray = ray / np.max(np.abs(ray))
        return LpOutcome(LpStatus.UNBOUNDED, ray=ray, iterations=it1 + it2)

    values = np.zeros(n_total)
    values[basis] = T[:r, -1]
    z = values[:s] - values[s:2 * s]
    return LpOutcome(
        LpStatus.OPTIMAL,
        z=z,
        value=float(c @ z),
        basis=tuple(int(j) for j in basis),
        iterations=it1 + it2,
    )


def verify_farkas(P: Polyhedron, lam, tol: Optional[float] = None) -> bool:
    """lam >= 0, lam'M = 0 and lam'b < 0, after scaling lam to unit max."""
    tau = resolve(None).cert if tol is None else tol
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if lam.size != P.r or not lam.size or np.any(lam < -tau):
        return False
    scale = np.max(np.abs(lam))
    if scale == 0:
        return False
    lam = lam / scale
    return bool(np.max(np.abs(lam @ P.M), initial=0.0) <= tau and lam @ P.b < 0)


def verify_ray(c, P: Polyhedron, ray, tol: Optional[float] = None) -> bool:
    tau = resolve(None).cert if tol is None else tol
    ray = np.asarray(ray, dtype=float).reshape(-1)
    if ray.size != P.s:
        return False
    return bool(np.all(P.M @ ray <= tau) and np.asarray(c, dtype=float) @ ray < 0)


def _require_optimal(outcome: LpOutcome, what: str) -> LpOutcome:
    if outcome.status is LpStatus.INFEASIBLE:
        raise InfeasibleError(f"{what}: polyhedron is empty", farkas=outcome.farkas)
    if outcome.status is LpStatus.UNBOUNDED:
        raise UnboundedError(f"{what}: objective is unbounded", ray=outcome.ray)
    return outcome


def is_bounded(P: Polyhedron, tol: Optional[Tolerances] = None) -> bool:
    """True iff the recession cone {Mz <= 0} is {0}. Raises on empty P."""
    tol = resolve(tol)
    feasible = lp_solve(np.zeros(P.s), P, tol)
    if feasible.status is LpStatus.INFEASIBLE:
        raise InfeasibleError("boundedness probe: polyhedron is empty", farkas=feasible.farkas)
    eye = np.eye(P.s)
    cone = Polyhedron(np.vstack([P.M, eye, -eye]), np.concatenate([np.zeros(P.r), np.ones(2 * P.s)]))
    for i in range(P.s):
        for sign in (1.0, -1.0):
            out = _require_optimal(lp_solve(-sign * eye[i], cone, tol), "recession probe")
            if -out.value > tol.feas:
                return False
    return True


def bounding_box(P: Polyhedron, tol: Optional[Tolerances] = None) -> Tuple[np.ndarray, np.ndarray]:
    tol = resolve(tol)
    lower = np.empty(P.s)
    upper = np.empty(P.s)
    eye = np.eye(P.s)
    for i in range(P.s):
        lower[i] = _require_optimal(lp_solve(eye[i], P, tol), "bounding box").value
        upper[i] = -_require_optimal(lp_solve(-eye[i], P, tol), "bounding box").value
    return lower, upper


def vertex_enumerate(P: Polyhedron, tol: Optional[Tolerances] = None) -> List[np.ndarray]:
    """All vertices of a bounded P, sorted lexicographically.

    Brute force over s-subsets of rows; guarded by BILEVEL_VERTEX_MAX_DIM and
    BILEVEL_VERTEX_MAX_ROWS.
    """
    tol = resolve(tol)
    max_dim = setting_int("BILEVEL_VERTEX_MAX_DIM", 6)
    max_rows = setting_int("BILEVEL_VERTEX_MAX_ROWS", 24)
    if P.s > max_dim or P.r > max_rows:
        raise SizeGuardError(
            f"vertex enumeration limited to s <= {max_dim}, r <= {max_rows} (got s={P.s}, r={P.r})"
        )
    if not is_bounded(P, tol):
        raise UnboundedError("vertex enumeration needs a bounded polyhedron")

    subsets = np.array(list(combinations(range(P.r), P.s)), dtype=int)
    mats = P.M[subsets]
    rhs = P.b[subsets]
    sv = np.linalg.svd(mats, compute_uv=False)
    regular = sv[:, -1] > 1e-10 * np.maximum(1.0, sv[:, 0])
    if not regular.any():
        raise UnboundedError("no vertex found although the polyhedron is bounded")
    points = np.linalg.solve(mats[regular], rhs[regular][..., None])[..., 0]
    residual = points @ P.M.T - P.b
    scale = 1.0 + np.abs(P.b) + np.abs(points) @ np.abs(P.M).T
    feasible = np.all(residual <= tol.feas * scale, axis=1)

    kept: List[np.ndarray] = []
    for point in points[feasible]:
        if any(np.max(np.abs(point - other)) <= tol.vert for other in kept):
            continue
        kept.append(point)
    if not kept:
        raise InfeasibleError("no feasible vertex found")
    stacked = np.vstack(kept)
    order = np.lexsort(stacked.T[::-1])
    return [stacked[i] for i in order]


def optimal_face(c, P: Polyhedron, tol: Optional[Tolerances] = None) -> VPolytope:
    """Vertices of P within tau_face of the LP minimum of c'z."""
    tol = resolve(tol)
    c = np.asarray(c, dtype=float).reshape(-1)
    outcome = _require_optimal(lp_solve(c, P, tol), "optimal face")
    vertices = vertex_enumerate(P, tol)
    return _face_from_vertices(c, outcome.value, vertices, tol)


def _face_from_vertices(c, value: float, vertices: List[np.ndarray], tol: Tolerances) -> VPolytope:
    V = np.vstack(vertices)
    values = V @ c
    face = V[values <= value + tol.face]
    if face.shape[0] == 0:
        face = V[[int(np.argmin(values))]]
    return VPolytope(face)


# --- projection and least squares ---------------------------------------------


def _project_simplex(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    cond = u - css / idx > 0
    rho = idx[cond][-1]
    theta = css[cond][-1] / rho
    return np.maximum(v - theta, 0.0)


def _simplex_gap(gram: np.ndarray, vp: np.ndarray, mu: np.ndarray) -> float:
    grad = gram @ mu - vp
    return float(grad @ mu - grad.min())


def _polish(V: np.ndarray, p: np.ndarray, mu: np.ndarray) -> Optional[np.ndarray]:
    support = np.flatnonzero(mu > 1e-12)
    if support.size == 0:
        return None
    Vs = V[support]
    k = support.size
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = Vs @ Vs.T
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    rhs = np.concatenate([Vs @ p, [1.0]])
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0][:k]
    if np.any(sol < -1e-12):
        return None
    out = np.zeros_like(mu)
    out[support] = np.maximum(sol, 0.0)
    total = out.sum()
    return out / total if total > 0 else None


def project_vpolytope(p, V: VPolytope, tol: Optional[Tolerances] = None) -> Tuple[np.ndarray, float]:
    """Nearest point of conv(V) to p and its Euclidean distance.

    Accelerated projected gradient over the simplex of convex coefficients,
    polished on the final support and certified with the Frank-Wolfe gap.
    """
    tol = resolve(tol)
    p = np.asarray(p, dtype=float).reshape(-1)
    pts = V.vertices
    if p.size != pts.shape[1]:
        raise DimensionError(f"point has length {p.size}, polytope lives in R^{pts.shape[1]}")
    gaps = np.linalg.norm(pts - p, axis=1)
    nearest = int(np.argmin(gaps))
    if pts.shape[0] == 1 or gaps[nearest] <= tol.proj:
        return pts[nearest].copy(), float(gaps[nearest])

    gram = pts @ pts.T
    vp = pts @ p
    lipschitz = float(np.linalg.eigvalsh(gram)[-1])
    scale = max(1.0, float(np.max(np.abs(pts))), float(np.max(np.abs(p)))) ** 2
    gap_tol = tol.proj * scale
    max_iter = setting_int("BILEVEL_PROJ_MAX_ITER", 5000)

    mu = np.zeros(pts.shape[0])
    mu[nearest] = 1.0
    y, t = mu.copy(), 1.0
    gap = _simplex_gap(gram, vp, mu)
    for it in range(max_iter):
        if gap <= gap_tol:
            break
        mu_next = _project_simplex(y - (gram @ y - vp) / lipschitz)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = mu_next + ((t - 1.0) / t_next) * (mu_next - mu)
        mu, t = mu_next, t_next
        if it % 10 == 9:
            polished = _polish(pts, p, mu)
            if polished is not None and _simplex_gap(gram, vp, polished) <= gap_tol:
                mu = polished
            gap = _simplex_gap(gram, vp, mu)

    polished = _polish(pts, p, mu)
    if polished is not None and _simplex_gap(gram, vp, polished) <= _simplex_gap(gram, vp, mu):
        mu = polished
    gap = _simplex_gap(gram, vp, mu)
    if gap > gap_tol:
        logger.warning("Projection gap %.3e above %.3e after %s iterations", gap, gap_tol, max_iter)
    projection = mu @ pts
    return projection, float(np.linalg.norm(projection - p))


def _nnls(A: np.ndarray, b: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    """Lawson-Hanson active set for min ||Ax - b|| subject to x >= 0."""
    n = A.shape[1]
    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    blocked = np.zeros(n, dtype=bool)
    iterations = 0
    while True:
        w = A.T @ (b - A @ x)
        candidates = ~passive & ~blocked & (w > tol)
        if not candidates.any():
            return x
        j = int(np.flatnonzero(candidates)[np.argmax(w[candidates])])
        passive[j] = True
        first = True
        while True:
            iterations += 1
            if iterations > max_iter:
                raise IterationLimitError(f"NNLS did not converge within {max_iter} iterations")
            z = np.zeros(n)
            z[passive] = np.linalg.lstsq(A[:, passive], b, rcond=None)[0]
            if np.all(z[passive] > 0):
                x = z
                blocked[:] = False
                break
            if first and z[j] <= 0:
                passive[j] = False
                blocked[j] = True
                break
            first = False
            mask = passive & (z <= 0)
            denom = x[mask] - z[mask]
            alpha = float(np.min(np.where(denom > 0, x[mask] / np.where(denom > 0, denom, 1.0), 0.0)))
            x = x + alpha * (z - x)
            passive &= x > 1e-15
            x[~passive] = 0.0


def nnls_min_norm(Mcols, q0, tol: Optional[Tolerances] = None) -> Tuple[np.ndarray, float]:
    """min over nu >= 0 of ||q0 + Mcols nu||."""
    tol = resolve(tol)
    q0 = np.asarray(q0, dtype=float).reshape(-1)
    M = np.asarray(Mcols, dtype=float)
    if M.size == 0:
        return np.zeros(0), float(np.linalg.norm(q0))
    M = M.reshape(q0.size, -1)
    scale = max(1.0, float(np.max(np.abs(M))) * max(1.0, float(np.linalg.norm(q0))))
    nu = _nnls(M, -q0, tol.nnls * scale, setting_int("BILEVEL_NNLS_MAX_ITER", 500))
    return nu, float(np.linalg.norm(q0 + M @ nu))


def least_distance(P: Polyhedron, w0, tol: Optional[Tolerances] = None) -> Tuple[np.ndarray, float]:
    """Nearest point of P to w0 by least-distance programming via NNLS."""
    tol = resolve(tol)
    w0 = np.asarray(w0, dtype=float).reshape(-1)
    if w0.size != P.s:
        raise DimensionError(f"point has length {w0.size}, polyhedron has dimension {P.s}")
    if P.r == 0 or P.contains(w0, tol.feas):
        return w0.copy(), 0.0
    G = -P.M
    h = P.M @ w0 - P.b
    E = np.vstack([G.T, h[None, :]])
    f = np.zeros(P.s + 1)
    f[-1] = 1.0
    u, _ = nnls_min_norm(E, -f, tol)
    residual = E @ u - f
    if np.linalg.norm(residual) <= tol.nnls or residual[-1] == 0:
        raise InfeasibleError("least-distance problem has an empty feasible set")
    step = -residual[:-1] / residual[-1]
    return w0 + step, float(np.linalg.norm(step))
