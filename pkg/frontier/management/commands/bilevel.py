from __future__ import annotations

import logging
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from django.core.management.base import BaseCommand, CommandError

from frontier.services.config import Tolerances, get_tolerances, setting_float
from frontier.services.cq import (
    CqConfig,
    CqReport,
    Verdict,
    check_strong_domination,
    estimate_rreg_sigma,
    estimate_uwsm_lambda,
    gvfcq_verdict,
    lower_active_rows,
    mfcq_margin,
    upper_active_rows,
)
from frontier.services.errors import (
    BilevelError,
    InfeasibleCandidateError,
    InfeasibleError,
    IterationLimitError,
    ProblemFileError,
    UnboundedError,
)
from frontier.services.model import EfficiencyKind
from frontier.services.oracle import GridSpec, grid_bilevel_efficient, grid_front
from frontier.services.pareto import feasible_set, frontier_map, solve_lower_level
from frontier.services.polyhedra import bounding_box
from frontier.services.problemfile import ProblemDocument, load, parse_vector
from frontier.services.reports import build_report, dumps_report, fmt_vector, jsonable
from frontier.services.stationarity import certify, certify_many, check_coderivative_form, residuals

logger = logging.getLogger(__name__)

COMMANDS = (
    "front",
    "solset",
    "uwsm",
    "rreg",
    "domination",
    "mfcq",
    "gvfcq",
    "stationarity",
    "oracle-front",
    "oracle-bilevel",
)

Outcome = Tuple[str, int, Dict[str, Any]]


def parse_tolerance_flags(items: List[str]) -> Dict[str, str]:
    overrides = {}
    for item in items or []:
        name, sep, value = item.partition("=")
        if not sep or not name:
            raise ProblemFileError(f"'{item}' is not of the form name=value", key_path="--tol")
        overrides[name.strip()] = value.strip()
    return overrides


def exit_code_for(exc: BilevelError) -> int:
    return 3 if isinstance(exc, IterationLimitError) else 2


def _diagnostics(exc: BilevelError) -> Dict[str, Any]:
    out: Dict[str, Any] = {"code": exc.code, "message": exc.message}
    if isinstance(exc, ProblemFileError):
        out["key_path"] = exc.key_path
    if isinstance(exc, InfeasibleCandidateError):
        out["violated_G"] = exc.violated_G
        out["violated_g"] = exc.violated_g
    if isinstance(exc, InfeasibleError) and exc.farkas is not None:
        out["farkas"] = exc.farkas
    if isinstance(exc, UnboundedError) and exc.ray is not None:
        out["ray"] = exc.ray
    return out


def _verdict_exit(verdict: Verdict) -> int:
    return 0 if verdict.positive else 1


def _require(value, flag: str, analysis: str):
    if value is None:
        raise ProblemFileError(f"is required for '{analysis}'", key_path=flag)
    return value


def _region(doc: ProblemDocument, analysis: str):
    if doc.region is None:
        raise ProblemFileError(f"a sampling block is required for '{analysis}'", key_path="sampling")
    return doc.region


def _grid_dict(grid: GridSpec) -> Dict[str, Any]:
    return {"lower": grid.lower, "upper": grid.upper, "step": grid.step, "count": grid.count}


class Command(BaseCommand):
    help = "Run a bilevel analysis on a problem file"

    def add_arguments(self, parser):
        parser.add_argument("analysis", choices=COMMANDS)
        parser.add_argument("problem", help="Path to a problem JSON file")
        parser.add_argument("--x", help="Upper-level point, comma-separated")
        parser.add_argument("--y", help="Lower-level point, comma-separated")
        parser.add_argument("--kind", choices=[k.value for k in EfficiencyKind], default=EfficiencyKind.PARETO.value)
        parser.add_argument("--coderivative-form", action="store_true", dest="coderivative")
        parser.add_argument("--lambda", type=float, dest="lam", help="Modulus for the nonlinear CQ check")
        parser.add_argument("--weight-grid", type=int, default=5, dest="weight_grid")
        parser.add_argument("--h", type=float, dest="step", help="Grid step for the oracle commands")
        parser.add_argument("--json", action="store_true", dest="as_json")
        parser.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE")
        parser.add_argument("--seed", type=int)

    def handle(self, *args, **options):
        analysis = options["analysis"]
        flags = {
            "coderivative_form": bool(options.get("coderivative")),
            "lambda": options.get("lam"),
            "weight_grid": options.get("weight_grid"),
            "h": options.get("step"),
        }
        common = {
            "problem": options["problem"],
            "kind": options["kind"],
            "flags": flags,
            "seed": options.get("seed"),
        }
        tol: Optional[Tolerances] = None
        x = y = None
        sha256 = None
        error: Optional[BilevelError] = None
        try:
            tol = get_tolerances(parse_tolerance_flags(options.get("tol")))
            doc = load(options["problem"])
            sha256 = doc.sha256
            if options.get("x") is not None:
                x = parse_vector(options["x"], doc.problem.n, "x")
            if options.get("y") is not None:
                y = parse_vector(options["y"], doc.problem.m, "y")
            runner = getattr(self, "_run_" + analysis.replace("-", "_"))
            status, exit_code, results = runner(doc, x, y, tol, options)
        except BilevelError as exc:
            logger.debug("bilevel %s failed: %s", analysis, exc.message)
            error = exc
            status, exit_code, results = "error", exit_code_for(exc), {"diagnostics": _diagnostics(exc)}

        report = build_report(
            analysis, sha256=sha256, x=x, y=y, tolerances=tol,
            status=status, exit_code=exit_code, results=results, **common,
        )
        if options.get("as_json"):
            self.stdout.write(dumps_report(report))
        elif error is None:
            self._render(jsonable(report))

        if error is not None:
            raise CommandError(error.message, returncode=exit_code)
        if exit_code:
            raise CommandError(f"{analysis}: {status}", returncode=exit_code)

    # --- analyses -------------------------------------------------------------

    def _run_front(self, doc, x, y, tol, options) -> Outcome:
        x = _require(x, "--x", "front")
        front = frontier_map(doc.problem.lower, x, options["kind"], tol)
        return "ok", 0, {"front": front}

    def _run_solset(self, doc, x, y, tol, options) -> Outcome:
        x = _require(x, "--x", "solset")
        solution = solve_lower_level(doc.problem.lower, x, options["kind"], tol)
        return "ok", 0, {"front": solution.front, "efficient_set": solution.efficient}

    def _run_uwsm(self, doc, x, y, tol, options) -> Outcome:
        report = estimate_uwsm_lambda(doc.problem, _region(doc, "uwsm"), tol)
        return report.verdict.value, _verdict_exit(report.verdict), {"reports": [report]}

    def _run_rreg(self, doc, x, y, tol, options) -> Outcome:
        report = estimate_rreg_sigma(doc.problem, _region(doc, "rreg"), tol)
        return report.verdict.value, _verdict_exit(report.verdict), {"reports": [report]}

    def _run_domination(self, doc, x, y, tol, options) -> Outcome:
        report = check_strong_domination(doc.problem, _require(x, "--x", "domination"), tol)
        return report.verdict.value, _verdict_exit(report.verdict), {"reports": [report]}

    def _run_mfcq(self, doc, x, y, tol, options) -> Outcome:
        problem = doc.problem
        x = _require(x, "--x", "mfcq")
        G = problem.G_values(x)
        if np.any(G > tol.feas):
            raise InfeasibleCandidateError("x is not in X", violated_G=np.flatnonzero(G > tol.feas).tolist())
        reports = [self._mfcq_report("upper MFCQ", problem.upper_set.G, upper_active_rows(problem, x, tol), tol)]
        if y is not None:
            g = problem.lower_values(x, y)
            if np.any(g > tol.feas):
                raise InfeasibleCandidateError("y is not in Y(x)", violated_g=np.flatnonzero(g > tol.feas).tolist())
            reports.append(
                self._mfcq_report("lower MFCQ", problem.lower.B, lower_active_rows(problem, x, y, tol), tol)
            )
        failed = [r for r in reports if r.verdict is Verdict.VIOLATED]
        verdict = Verdict.VIOLATED if failed else Verdict.CERTIFIED_SUFFICIENT
        return verdict.value, _verdict_exit(verdict), {"reports": reports}

    @staticmethod
    def _mfcq_report(condition: str, matrix: np.ndarray, active: np.ndarray, tol: Tolerances) -> CqReport:
        margin = mfcq_margin(matrix[active], tol)
        return CqReport(
            condition=condition,
            verdict=Verdict.CERTIFIED_SUFFICIENT if margin > tol.pos else Verdict.VIOLATED,
            estimate={"margin": margin},
            notes=(f"active rows {active.tolist()}",),
            sample_size=int(active.size),
        )

    def _run_gvfcq(self, doc, x, y, tol, options) -> Outcome:
        x = _require(x, "--x", "gvfcq")
        y = _require(y, "--y", "gvfcq")
        config = CqConfig(
            xs=(x,),
            region=doc.region,
            nonlinear_lambda=options.get("lam"),
            weight_grid=options.get("weight_grid") or 5,
        )
        report = gvfcq_verdict(doc.problem, x, y, config, tol)
        return report.verdict.value, _verdict_exit(report.verdict), {"reports": [report]}

    def _run_stationarity(self, doc, x, y, tol, options) -> Outcome:
        problem = doc.problem
        coderivative = bool(options.get("coderivative"))
        if x is None and y is None:
            return self._certify_candidates(doc, tol, coderivative)
        x = _require(x, "--x", "stationarity")
        y = _require(y, "--y", "stationarity")
        run = check_coderivative_form if coderivative else certify
        cert = run(problem, x, y, tol)
        entry = self._certificate_entry(problem, x, y, cert, tol)
        return cert.status.value, 0 if cert.stationary else 1, {"certificate": entry}

    @staticmethod
    def _certificate_entry(problem, x, y, cert, tol) -> Dict[str, Any]:
        entry = cert.as_dict()
        entry["x"], entry["y"] = x, y
        if cert.stationary:
            entry["residuals"] = residuals(problem, x, y, cert)
            entry["farkas_verified"] = None
        else:
            entry["residuals"] = None
            entry["farkas_verified"] = cert.farkas_verified(tol.cert)
        return entry

    def _certify_candidates(self, doc, tol, coderivative: bool) -> Outcome:
        if not doc.candidates:
            raise ProblemFileError("no --x/--y given and the file lists no candidates", key_path="candidates")
        results = certify_many(doc.problem, list(doc.candidates), tol, coderivative=coderivative)
        entries = []
        errors = not_stationary = 0
        for (x, y), result in zip(doc.candidates, results):
            if isinstance(result, BilevelError):
                errors += 1
                entries.append({"x": x, "y": y, "status": "error", "error": _diagnostics(result)})
                continue
            if not result.stationary:
                not_stationary += 1
            entries.append(self._certificate_entry(doc.problem, x, y, result, tol))
        if errors:
            return "error", 2, {"certificates": entries}
        if not_stationary:
            return "not_stationary", 1, {"certificates": entries}
        return "stationary", 0, {"certificates": entries}

    def _run_oracle_front(self, doc, x, y, tol, options) -> Outcome:
        problem = doc.problem
        x = _require(x, "--x", "oracle-front")
        if doc.region is not None:
            lower, upper = doc.region.y_lower, doc.region.y_upper
            step = options.get("step") or doc.region.step
        else:
            lower, upper = bounding_box(feasible_set(problem.lower, x), tol)
            step = options.get("step") or setting_float("BILEVEL_ORACLE_STEP", 0.05)
        grid = GridSpec(lower, upper, step)
        points = grid_front(problem, x, grid, options["kind"], tol)
        oracle = {"grid": _grid_dict(grid), "points": points, "size": int(points.shape[0])}
        return "ok", 0, {"oracle": oracle}

    def _run_oracle_bilevel(self, doc, x, y, tol, options) -> Outcome:
        problem = doc.problem
        region = _region(doc, "oracle-bilevel")
        grid = GridSpec(
            np.concatenate([region.x_lower, region.y_lower]),
            np.concatenate([region.x_upper, region.y_upper]),
            options.get("step") or region.step,
        )
        pairs = grid_bilevel_efficient(problem, grid, options["kind"], tol=tol)
        oracle = {
            "grid": _grid_dict(grid),
            "pairs": [{"x": px, "y": py, "F": problem.upper_values(px, py)} for px, py in pairs],
            "size": len(pairs),
        }
        return "ok", 0, {"oracle": oracle}

    # --- text output ----------------------------------------------------------

    def _render(self, report: Dict[str, Any]) -> None:
        results = report["results"]
        inputs = report["inputs"]
        self.stdout.write(self.style.MIGRATE_HEADING(f"{report['command']} on {inputs['problem']}"))
        if inputs["x"] is not None:
            self.stdout.write(f"  x = {fmt_vector(inputs['x'])}")
        if inputs["y"] is not None:
            self.stdout.write(f"  y = {fmt_vector(inputs['y'])}")

        if results["front"] is not None:
            front = results["front"]
            label = "Frontier" + (" (grid approximation)" if front["approximate"] else "")
            self.stdout.write(f"{label}, kind {front['kind']}: {len(front['vertices'])} vertices")
            for vertex in front["vertices"]:
                self.stdout.write(f"  {fmt_vector(vertex)}")
        if results["efficient_set"] is not None:
            eff = results["efficient_set"]
            self.stdout.write(f"Efficient set: {len(eff['faces'])} faces, {len(eff['vertices'])} vertices")
            for vertex in eff["vertices"]:
                self.stdout.write(f"  {fmt_vector(vertex)}")
        for item in results["reports"] or []:
            self._render_cq(item)
        if results["certificate"] is not None:
            self._render_certificate(results["certificate"])
        for entry in results["certificates"] or []:
            self._render_certificate(entry)
        if results["oracle"] is not None:
            self._render_oracle(results["oracle"])

        style = self.style.SUCCESS if report["exit_code"] == 0 else self.style.WARNING
        self.stdout.write(style(f"Status: {report['status']}"))

    def _render_cq(self, item: Dict[str, Any]) -> None:
        self.stdout.write(f"{item['condition']}: {item['verdict']}")
        for key, value in sorted(item["estimate"].items()):
            self.stdout.write(f"  {key} = {_scalar(value)}")
        if item["chain"]:
            self.stdout.write(f"  chain: {item['chain']}")
        for key, value in sorted((item["witness"] or {}).items()):
            self.stdout.write(f"  witness {key} = {fmt_vector(value)}")
        for note in item["notes"]:
            self.stdout.write(f"  note: {note}")

    def _render_certificate(self, cert: Dict[str, Any]) -> None:
        head = f"Candidate x={fmt_vector(cert['x'])} y={fmt_vector(cert['y'])}: {cert['status']}"
        if cert["status"] == "error":
            self.stdout.write(self.style.ERROR(f"{head} ({cert['error']['message']})"))
            return
        self.stdout.write(head)
        if cert["status"] == "stationary":
            for label, key in (("w*", "w_star"), ("v*", "v_star"), ("u", "u"), ("v", "v"), ("w", "w")):
                self.stdout.write(f"  {label} = {fmt_vector(cert[key])}")
            worst = max(cert["residuals"].values(), default=0.0)
            self.stdout.write(f"  max residual = {_scalar(worst)}")
        else:
            self.stdout.write(f"  Farkas vector = {fmt_vector(cert['farkas'])}")
            self.stdout.write(f"  verified: {cert['farkas_verified']}")
        active = cert.get("active") or {}
        if active:
            self.stdout.write(f"  active I_G = {active['I_G']}, I_g = {active['I_g']}")
        for flag in cert["flags"]:
            self.stdout.write(self.style.WARNING(f"  flag: {flag}"))
        for note in cert["notes"]:
            self.stdout.write(f"  note: {note}")

    def _render_oracle(self, oracle: Dict[str, Any]) -> None:
        grid = oracle["grid"]
        self.stdout.write(f"Grid oracle: step {grid['step']}, {grid['count']} grid points, {oracle['size']} kept")
        for point in oracle.get("points") or []:
            self.stdout.write(f"  {fmt_vector(point)}")
        for pair in oracle.get("pairs") or []:
            self.stdout.write(f"  x={fmt_vector(pair['x'])} y={fmt_vector(pair['y'])} F={fmt_vector(pair['F'])}")


def _scalar(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return "-" if value is None else str(value)
