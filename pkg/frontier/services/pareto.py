"""Frontier map and efficient-solution set of the linear lower level.

For q = 2 the supported extreme points of the image are found by dichotomic
weight search: start from the two lexicographic corners and keep inserting the
point that minimizes the weight normal to a chord until no chord improves.
Linear problems have no unsupported efficient points, so the chain of chords
that survive is the whole front.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .config import Tolerances, resolve, setting_float
from .errors import InfeasibleError, UnboundedError, UnsupportedError
from .model import EfficiencyKind, LinearLowerLevel, Weight
from .oracle import GridSpec, grid_front
from .polyhedra import (
    LpStatus,
    Polyhedron,
    VPolytope,
    bounding_box,
    is_bounded,
    lp_solve,
    project_vpolytope,
    vertex_enumerate,
)

logger = logging.getLogger(__name__)


def feasible_set(ll: LinearLowerLevel, x) -> Polyhedron:
    x = np.asarray(x, dtype=float).reshape(-1)
    return Polyhedron(ll.B, ll.d - ll.A @ x)


def _face_distances(faces: Sequence[VPolytope], points: np.ndarray, tol: Tolerances) -> np.ndarray:
    P = np.atleast_2d(np.asarray(points, dtype=float))
    best = np.full(P.shape[0], np.inf)
    for face in faces:
        V = face.vertices
        if len(face) == 1:
            dist = np.linalg.norm(P - V[0], axis=1)
        elif len(face) == 2:
            a, b = V
            direction = b - a
            length = float(direction @ direction)
            t = np.clip((P - a) @ direction / length, 0.0, 1.0) if length > 0 else np.zeros(P.shape[0])
            dist = np.linalg.norm(P - (a + t[:, None] * direction), axis=1)
        else:
            dist = np.array([project_vpolytope(p, face, tol)[1] for p in P])
        best = np.minimum(best, dist)
    return best


def _unique_rows(blocks: Sequence[np.ndarray], tol: float) -> np.ndarray:
    kept: List[np.ndarray] = []
    for block in blocks:
        for row in block:
            if not any(np.max(np.abs(row - other)) <= tol for other in kept):
                kept.append(row)
    return np.vstack(kept)


@dataclass(frozen=True)
class ParetoFront:
    kind: EfficiencyKind
    faces: Tuple[VPolytope, ...]
    weights: Tuple[Weight, ...] = ()
    approximate: bool = False
    shift: Optional[np.ndarray] = field(default=None, compare=False)

    @property
    def q(self) -> int:
        return self.faces[0].dim

    @property
    def vertices(self) -> np.ndarray:
        return _unique_rows([face.vertices for face in self.faces], resolve(None).vert)

    @property
    def value(self) -> Optional[float]:
        if self.q != 1:
            return None
        return float(self.vertices[:, 0].min())

    def distances(self, Z, tol: Optional[Tolerances] = None) -> np.ndarray:
        return _face_distances(self.faces, Z, resolve(tol))

    def as_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "approximate": self.approximate,
            "vertices": self.vertices,
            "faces": [face.tolist() for face in self.faces],
            "weights": [w.tolist() for w in self.weights],
        }


@dataclass(frozen=True)
class EfficientSet:
    faces: Tuple[VPolytope, ...]
    weights: Tuple[Weight, ...]

    @property
    def vertices(self) -> np.ndarray:
        return _unique_rows([face.vertices for face in self.faces], resolve(None).vert)

    def distances(self, Y, tol: Optional[Tolerances] = None) -> np.ndarray:
        return _face_distances(self.faces, Y, resolve(tol))

    def as_dict(self) -> dict:
        return {
            "vertices": self.vertices,
            "faces": [face.tolist() for face in self.faces],
            "weights": [w.tolist() for w in self.weights],
        }


@dataclass
class _Dichotomy:
    vertices: np.ndarray
    images: np.ndarray
    chain: List[int]
    chord_weights: List[np.ndarray]
    corner_faces: Tuple[np.ndarray, np.ndarray]


def _checked_polyhedron(ll: LinearLowerLevel, x, tol: Tolerances) -> Polyhedron:
    P = feasible_set(ll, x)
    if not is_bounded(P, tol):
        raise UnboundedError(f"Y(x) is unbounded at x={np.asarray(x, dtype=float).tolist()}")
    return P


def _solve(c, P: Polyhedron, tol: Tolerances) -> float:
    outcome = lp_solve(c, P, tol)
    if outcome.status is LpStatus.INFEASIBLE:
        raise InfeasibleError("lower-level LP is infeasible", farkas=outcome.farkas)
    if outcome.status is LpStatus.UNBOUNDED:
        raise UnboundedError("lower-level LP is unbounded", ray=outcome.ray)
    return outcome.value


def _lex_corner(P: Polyhedron, C: np.ndarray, images: np.ndarray, first: int, tol: Tolerances) -> np.ndarray:
    """Vertex indices minimizing objective `first`, then the other one."""
    second = 1 - first
    v1 = _solve(C[first], P, tol)
    slack = tol.opt * max(1.0, abs(v1))
    v2 = _solve(C[second], P.with_rows(C[first], v1 + slack), tol)
    mask = (images[:, first] <= v1 + tol.face) & (images[:, second] <= v2 + tol.face)
    if not mask.any():
        mask = images[:, first] <= images[:, first].min() + tol.face
        mask &= images[:, second] <= images[mask, second].min() + tol.face
    return np.flatnonzero(mask)


def _pick(images: np.ndarray, idx: np.ndarray, weight: np.ndarray) -> int:
    scores = images[idx] @ weight
    best = idx[scores <= scores.min() + 1e-12 * (1.0 + abs(scores.min()))]
    return int(best[np.lexsort(images[best].T[::-1])[0]])


def _dichotomy(ll: LinearLowerLevel, P: Polyhedron, tol: Tolerances) -> _Dichotomy:
    V = np.vstack(vertex_enumerate(P, tol))
    images = V @ ll.C.T
    left_face = _lex_corner(P, ll.C, images, 0, tol)
    right_face = _lex_corner(P, ll.C, images, 1, tol)
    left = _pick(images, left_face, np.array([1.0, 0.0]))
    right = _pick(images, right_face, np.array([0.0, 1.0]))
    everything = np.arange(V.shape[0])

    if np.max(np.abs(images[left] - images[right])) <= tol.vert:
        return _Dichotomy(V, images, [left], [np.array([0.5, 0.5])], (left_face, right_face))

    chain: List[int] = [left]
    weights: List[np.ndarray] = []

    def explore(i: int, j: int) -> None:
        zl, zr = images[i], images[j]
        normal = np.array([zl[1] - zr[1], zr[0] - zl[0]])
        normal = normal / normal.sum()
        value = _solve(normal @ ll.C, P, tol)
        bound = normal @ zl
        k = _pick(images, everything, normal)
        fresh = (np.max(np.abs(images[k] - zl)) > tol.vert) and (np.max(np.abs(images[k] - zr)) > tol.vert)
        if value < bound - tol.opt * max(1.0, abs(bound)) and fresh:
            explore(i, k)
            explore(k, j)
        else:
            chain.append(j)
            weights.append(normal)

    explore(left, right)
    return _Dichotomy(V, images, chain, weights, (left_face, right_face))


def _flat_extensions(ll: LinearLowerLevel, P: Polyhedron, dich: _Dichotomy, tol: Tolerances):
    """Weakly efficient flats: vertical at the left end, horizontal at the right end."""
    C = ll.C
    zl = dich.images[dich.chain[0]]
    zr = dich.images[dich.chain[-1]]
    out = []
    top = -_solve(-C[1], P.with_rows(C[0], zl[0] + tol.opt * max(1.0, abs(zl[0]))), tol)
    if top > zl[1] + tol.face:
        out.append(("left", np.array([[zl[0], top], zl]), np.array([1.0, 0.0])))
    far = -_solve(-C[0], P.with_rows(C[1], zr[1] + tol.opt * max(1.0, abs(zr[1]))), tol)
    if far > zr[0] + tol.face:
        out.append(("right", np.array([zr, [far, zr[1]]]), np.array([0.0, 1.0])))
    return out


def _approximate_front(ll: LinearLowerLevel, x, P: Polyhedron, kind: EfficiencyKind, tol: Tolerances) -> ParetoFront:
    step = setting_float("BILEVEL_ORACLE_STEP", 0.05)
    lower, upper = bounding_box(P, tol)
    logger.warning("q=%s has no exact front; using a grid of step %s", ll.q, step)
    points = grid_front(ll, x, GridSpec(lower, upper, step), kind, tol)
    if points.shape[0] == 0:
        raise InfeasibleError("grid front is empty; decrease BILEVEL_ORACLE_STEP")
    return ParetoFront(kind, tuple(VPolytope(p) for p in points), (), approximate=True, shift=ll.shift(x))


def _front_from(ll: LinearLowerLevel, P: Polyhedron, dich: _Dichotomy, kind: EfficiencyKind,
                shift: np.ndarray, tol: Tolerances) -> ParetoFront:
    chain = dich.images[dich.chain]
    if len(dich.chain) == 1:
        faces = [chain[:1]]
    else:
        faces = [chain[i:i + 2] for i in range(len(dich.chain) - 1)]
    weights = list(dich.chord_weights)
    if kind is EfficiencyKind.WEAK_PARETO:
        for side, segment, weight in _flat_extensions(ll, P, dich, tol):
            if side == "left":
                faces.insert(0, segment)
                weights.insert(0, weight)
            else:
                faces.append(segment)
                weights.append(weight)
    return ParetoFront(
        kind,
        tuple(VPolytope(face + shift) for face in faces),
        tuple(Weight(w) for w in weights),
        shift=shift,
    )


def _drop_subsumed(faces: List[np.ndarray], weights: List[np.ndarray], tol: float):
    def covered(small: np.ndarray, big: np.ndarray) -> bool:
        return all(np.any(np.max(np.abs(big - row), axis=1) <= tol) for row in small)

    keep: List[int] = []
    for i, face in enumerate(faces):
        subsumed = False
        for j, other in enumerate(faces):
            if i == j or not covered(face, other):
                continue
            if not covered(other, face) or j < i:
                subsumed = True
                break
        if not subsumed:
            keep.append(i)
    return [faces[i] for i in keep], [weights[i] for i in keep]


def _efficient_from(ll: LinearLowerLevel, P: Polyhedron, dich: _Dichotomy, tol: Tolerances) -> EfficientSet:
    V, images = dich.vertices, dich.images
    faces: List[np.ndarray] = []
    weights: List[np.ndarray] = []
    for weight in dich.chord_weights:
        value = _solve(weight @ ll.C, P, tol)
        faces.append(V[images @ weight <= value + tol.face])
        weights.append(weight)
    # corner faces come from the lexicographic filter; their weights are labels
    eps = tol.lex
    for corner, weight in zip(dich.corner_faces, (np.array([1.0 - eps, eps]), np.array([eps, 1.0 - eps]))):
        faces.append(V[corner])
        weights.append(weight)
    faces, weights = _drop_subsumed(faces, weights, tol.vert)
    return EfficientSet(tuple(VPolytope(f) for f in faces), tuple(Weight(w) for w in weights))


def _scalar_parts(ll: LinearLowerLevel, P: Polyhedron, shift: np.ndarray, kind: EfficiencyKind,
                  tol: Tolerances) -> Tuple[ParetoFront, EfficientSet]:
    value = _solve(ll.C[0], P, tol)
    front = ParetoFront(kind, (VPolytope(np.array([[value]]) + shift),), (Weight([1.0]),), shift=shift)
    V = np.vstack(vertex_enumerate(P, tol))
    face = V[V @ ll.C[0] <= value + tol.face]
    return front, EfficientSet((VPolytope(face),), (Weight([1.0]),))


def frontier_map(ll: LinearLowerLevel, x, kind: EfficiencyKind = EfficiencyKind.PARETO,
                 tol: Optional[Tolerances] = None, allow_approximate: bool = True) -> ParetoFront:
    """Phi(x), the (weakly) efficient images of Y(x) shifted by Dx + e."""
    tol = resolve(tol)
    kind = EfficiencyKind.parse(kind)
    x = np.asarray(x, dtype=float).reshape(-1)
    P = _checked_polyhedron(ll, x, tol)
    shift = ll.shift(x)
    if ll.q >= 3:
        if not allow_approximate:
            raise UnsupportedError(f"exact fronts need q <= 2 (got q={ll.q})")
        return _approximate_front(ll, x, P, kind, tol)
    if ll.q == 1:
        value = _solve(ll.C[0], P, tol)
        return ParetoFront(kind, (VPolytope(np.array([[value]]) + shift),), (Weight([1.0]),), shift=shift)
    return _front_from(ll, P, _dichotomy(ll, P, tol), kind, shift, tol)


def efficient_set(ll: LinearLowerLevel, x, tol: Optional[Tolerances] = None) -> EfficientSet:
    """S(x) as the union of optimal faces S_alpha(x) over the search weights."""
    return solve_lower_level(ll, x, EfficiencyKind.PARETO, tol).efficient


@dataclass(frozen=True)
class LowerLevelSolution:
    front: ParetoFront
    efficient: EfficientSet


def solve_lower_level(ll: LinearLowerLevel, x, kind: EfficiencyKind = EfficiencyKind.PARETO,
                      tol: Optional[Tolerances] = None) -> LowerLevelSolution:
    """Front and efficient set from a single vertex enumeration and weight search."""
    tol = resolve(tol)
    kind = EfficiencyKind.parse(kind)
    x = np.asarray(x, dtype=float).reshape(-1)
    if ll.q >= 3:
        raise UnsupportedError(f"exact efficient sets need q <= 2 (got q={ll.q})")
    P = _checked_polyhedron(ll, x, tol)
    shift = ll.shift(x)
    if ll.q == 1:
        return LowerLevelSolution(*_scalar_parts(ll, P, shift, kind, tol))
    dich = _dichotomy(ll, P, tol)
    return LowerLevelSolution(_front_from(ll, P, dich, kind, shift, tol), _efficient_from(ll, P, dich, tol))


def distance_to_front(ll: LinearLowerLevel, x, z, kind: EfficiencyKind = EfficiencyKind.PARETO,
                      tol: Optional[Tolerances] = None) -> float:
    return float(frontier_map(ll, x, kind, tol).distances([z], tol)[0])


def distance_to_solution_set(ll: LinearLowerLevel, x, y, tol: Optional[Tolerances] = None) -> float:
    return float(efficient_set(ll, x, tol).distances([y], tol)[0])


def is_efficient_point(ll: LinearLowerLevel, x, y, kind: EfficiencyKind = EfficiencyKind.PARETO,
                       threshold: Optional[float] = None, tol: Optional[Tolerances] = None) -> bool:
    tol = resolve(tol)
    threshold = tol.face if threshold is None else threshold
    y = np.asarray(y, dtype=float).reshape(-1)
    if not feasible_set(ll, x).contains(y, tol.feas):
        return False
    return distance_to_front(ll, x, ll.objective(x, y), kind, tol) <= threshold
