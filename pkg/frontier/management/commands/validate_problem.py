from __future__ import annotations

from typing import Any, Dict, List

import numpy as np
from django.core.management.base import BaseCommand, CommandError

from frontier.services.config import get_tolerances
from frontier.services.cq import check_lower_mfcq, check_upper_mfcq
from frontier.services.errors import BilevelError, InfeasibleError
from frontier.services.pareto import feasible_set
from frontier.services.polyhedra import LpStatus, Polyhedron, is_bounded, lp_solve
from frontier.services.problemfile import ProblemDocument, load
from frontier.services.reports import build_report, dumps_report

from .bilevel import exit_code_for, parse_tolerance_flags


def _sample_xs(doc: ProblemDocument, tol) -> List[np.ndarray]:
    """Candidate x's, else the sampling box centre, else any point of X."""
    if doc.candidates:
        return [x for x, _ in doc.candidates]
    if doc.region is not None:
        return [(doc.region.x_lower + doc.region.x_upper) / 2.0]
    problem = doc.problem
    if problem.upper_set.r == 0:
        return [np.zeros(problem.n)]
    outcome = lp_solve(np.zeros(problem.n), Polyhedron(problem.upper_set.G, problem.upper_set.h), tol)
    return [outcome.z] if outcome.status is LpStatus.OPTIMAL else []


def probe(doc: ProblemDocument, tol) -> Dict[str, Any]:
    problem = doc.problem
    warnings: List[str] = []
    xs = _sample_xs(doc, tol)
    if not xs:
        warnings.append("X is empty")
    bounded = bool(xs)
    for x in xs:
        try:
            if not is_bounded(feasible_set(problem.lower, x), tol):
                bounded = False
                warnings.append(f"Y(x) is unbounded at x={x.tolist()}")
        except InfeasibleError:
            bounded = False
            warnings.append(f"Y(x) is empty at x={x.tolist()}")
        if np.all(problem.G_values(x) <= tol.feas) and not check_upper_mfcq(problem, x, tol):
            warnings.append(f"upper-level regularity fails at x={x.tolist()}")
    for x, y in doc.candidates:
        if np.any(problem.G_values(x) > tol.feas):
            warnings.append(f"candidate x={x.tolist()} is not in X")
        elif np.any(problem.lower_values(x, y) > tol.feas):
            warnings.append(f"candidate y={y.tolist()} is not in Y(x) at x={x.tolist()}")
        elif not check_lower_mfcq(problem, x, y, tol):
            warnings.append(f"lower-level regularity fails at x={x.tolist()} y={y.tolist()}")
    if problem.q <= 2:
        path = f"q={problem.q} exact path available"
    else:
        path = f"q={problem.q} exact path unavailable, fronts use the grid approximation"
        warnings.append(path)
    state = "bounded" if bounded else "not bounded everywhere"
    return {
        "dims": {"n": problem.n, "m": problem.m, "p": problem.p, "q": problem.q, "k": problem.lower.k,
                 "r": problem.upper_set.r},
        "sampled_x": xs,
        "bounded": bounded,
        "exact_path": problem.q <= 2,
        "warnings": warnings,
        "summary": f"valid; Y(x) {state} at sampled x; {path}",
    }


class Command(BaseCommand):
    help = "Check a problem file without running analyses"

    def add_arguments(self, parser):
        parser.add_argument("problem", help="Path to a problem JSON file")
        parser.add_argument("--json", action="store_true", dest="as_json")
        parser.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE")

    def handle(self, *args, **options):
        tol = None
        try:
            tol = get_tolerances(parse_tolerance_flags(options.get("tol")))
            doc = load(options["problem"])
            diagnostics = probe(doc, tol)
        except BilevelError as exc:
            code = exit_code_for(exc)
            if options.get("as_json"):
                report = build_report(
                    "validate", problem=options["problem"], tolerances=tol, status="error", exit_code=code,
                    results={"diagnostics": {"code": exc.code, "message": exc.message,
                                             "key_path": getattr(exc, "key_path", None)}},
                )
                self.stdout.write(dumps_report(report))
            raise CommandError(exc.message, returncode=code)

        if options.get("as_json"):
            report = build_report(
                "validate", problem=options["problem"], sha256=doc.sha256, tolerances=tol,
                status="valid", results={"diagnostics": diagnostics},
            )
            self.stdout.write(dumps_report(report))
            return
        for warning in diagnostics["warnings"]:
            self.stderr.write(self.style.WARNING(f"warning: {warning}"))
        self.stdout.write(self.style.SUCCESS(diagnostics["summary"]))
