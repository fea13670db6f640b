from __future__ import annotations

import numpy as np
from django.conf import settings

from frontier.services.errors import InfeasibleError
from frontier.services.model import (
    AffineSystem,
    BilevelProblem,
    LinearLowerLevel,
    QuadraticComponent,
    UpperObjective,
)
from frontier.services.pareto import feasible_set
from frontier.services.polyhedra import is_bounded
from frontier.services.problemfile import load

EXAMPLE_PATH = settings.BASE_DIR / "problems" / "box_example.json"

C = [[2, 0], [0, 1]]
A = [[0, 0], [0, 0], [0, 0], [0, 0], [-1, 0], [0, -1]]
B = [[1, 0], [-1, 0], [0, 2], [0, -1], [1, 0], [0, 1]]
D = [4, -1, 6, -2, 0, 0]


def box_example_lower() -> LinearLowerLevel:
    return LinearLowerLevel(C=C, A=A, B=B, d=D)


def box_example_problem() -> BilevelProblem:
    return BilevelProblem(
        upper_objective=UpperObjective((
            QuadraticComponent.linear([1, 0, 1, 0]),
            QuadraticComponent.linear([0, 1, 0, 1]),
        )),
        upper_set=AffineSystem([[-1, 0], [0, -1]], [-4, -3]),
        lower=box_example_lower(),
        name="box example",
    )


def box_example_document():
    return load(EXAMPLE_PATH)


def box_lower(C, lower, upper, extra_B=None, extra_d=None) -> LinearLowerLevel:
    """Lower level with x in R^1 playing no role and Y a box cut by extra rows."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    m = lower.size
    eye = np.eye(m)
    B = np.vstack([eye, -eye])
    d = np.concatenate([upper, -lower])
    if extra_B is not None:
        B = np.vstack([B, np.atleast_2d(extra_B)])
        d = np.concatenate([d, np.ravel(extra_d)])
    return LinearLowerLevel(C=C, A=np.zeros((B.shape[0], 1)), B=B, d=d)


def random_bounded_lower(rng: np.random.Generator, m: int, q: int = 2, max_rows: int = 8) -> LinearLowerLevel:
    """Random integer instance with 0 in Y(0); unbounded draws are discarded."""
    while True:
        rows = int(rng.integers(m + 1, max_rows + 1))
        B = rng.integers(-3, 4, size=(rows, m)).astype(float)
        d = rng.integers(0, 4, size=rows).astype(float)
        C = rng.integers(-3, 4, size=(q, m)).astype(float)
        ll = LinearLowerLevel(C=C, A=np.zeros((rows, 1)), B=B, d=d)
        try:
            if is_bounded(feasible_set(ll, [0.0])):
                return ll
        except InfeasibleError:
            continue


def scalar_problem(A, B, d, C, G, h, c=(1, 1)) -> BilevelProblem:
    """n = m = 1 with the linear upper objective c'(x, y)."""
    return BilevelProblem(
        upper_objective=UpperObjective((QuadraticComponent.linear(list(c)),)),
        upper_set=AffineSystem(G, h),
        lower=LinearLowerLevel(C=C, A=A, B=B, d=d),
    )


def tracking_problem() -> BilevelProblem:
    """Y(x) = [x, 10], f = y, so S(x) = {x}; X = {x <= 5}."""
    return scalar_problem(A=[[1], [0]], B=[[-1], [1]], d=[0, 10], C=[[1]], G=[[1]], h=[5])


def pinched_problem(G) -> BilevelProblem:
    """Y(x) = [0, x], f = -y; Y is empty for x < 0 and S(0) = {0}."""
    return scalar_problem(A=[[0], [-1]], B=[[-1], [1]], d=[0, 0], C=[[-1]], G=G, h=[0])


def floor_problem() -> BilevelProblem:
    """Y(x) = [x, 10], f = y and F = y over X = {x >= 1}; the optimum is (1, 1)."""
    return scalar_problem(A=[[1], [0]], B=[[-1], [1]], d=[0, 10], C=[[1]], G=[[-1]], h=[-1], c=(0, 1))


def as_problem(ll: LinearLowerLevel) -> BilevelProblem:
    """Wrap a lower level with a zero upper objective and X = R^n."""
    return BilevelProblem(
        upper_objective=UpperObjective((QuadraticComponent.linear(np.zeros(ll.n + ll.m)),)),
        upper_set=AffineSystem(np.zeros((1, ll.n)), [0.0]),
        lower=ll,
    )


def integral_cut_box(rng: np.random.Generator) -> LinearLowerLevel:
    """Integer box cut by y1 + y2 >= c with f = diag(c1, c2) y, c_i in {1, 2}.

    The constraint matrix is totally unimodular, so every vertex is integral.
    """
    lower = rng.integers(-2, 1, size=2)
    upper = lower + rng.integers(1, 4, size=2)
    cut = int(rng.integers(lower.sum() - 1, upper.sum() + 1))
    C = np.diag(rng.integers(1, 3, size=2).astype(float))
    return box_lower(C, lower, upper, extra_B=[[-1, -1]], extra_d=[-cut])
