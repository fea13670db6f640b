import copy
import json
import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, override_settings

from frontier.management.commands.example_problem import BOX_EXAMPLE, example_text
from frontier.services.reports import RESULT_KEYS

from .helpers import EXAMPLE_PATH

PROBLEM = str(EXAMPLE_PATH)
REPORT_KEYS = {"command", "version", "inputs", "tolerances", "seed", "status", "exit_code", "results"}


def run(*args):
    out, err = StringIO(), StringIO()
    call_command(*args, stdout=out, stderr=err, no_color=True)
    return out.getvalue()


def run_failing(test, *args):
    out, err = StringIO(), StringIO()
    with test.assertRaises(CommandError) as ctx:
        call_command(*args, stdout=out, stderr=err, no_color=True)
    return ctx.exception, out.getvalue()


class BilevelTextOutputTests(SimpleTestCase):
    def test_front(self):
        output = run("bilevel", "front", PROBLEM, "--x", "4,3")
        self.assertIn("Frontier, kind eff: 1 vertices", output)
        self.assertIn("  (2, 2)", output)
        self.assertIn("Status: ok", output)

    def test_solset(self):
        output = run("bilevel", "solset", PROBLEM, "--x", "4,3")
        self.assertIn("Efficient set: 1 faces, 1 vertices", output)
        self.assertIn("  (1, 2)", output)

    def test_stationary_candidate(self):
        output = run("bilevel", "stationarity", PROBLEM, "--x", "4,3", "--y", "1,2")
        self.assertIn("Candidate x=(4, 3) y=(1, 2): stationary", output)
        self.assertIn("w* = (0.5, 0.5)", output)
        self.assertIn("u = (0.5, 0.5)", output)
        self.assertIn("active I_G = [0, 1], I_g = [1, 3]", output)

    def test_coderivative_form(self):
        output = run("bilevel", "stationarity", PROBLEM, "--x", "4,3", "--y", "1,2", "--coderivative-form")
        self.assertIn("w* = (0.5, 0.5)", output)

    def test_not_stationary_candidate(self):
        error, output = run_failing(self, "bilevel", "stationarity", PROBLEM, "--x", "5,4", "--y", "1,2")
        self.assertEqual(error.returncode, 1)
        self.assertIn("Farkas vector", output)
        self.assertIn("verified: True", output)
        self.assertIn("Status: not_stationary", output)

    def test_file_candidates(self):
        error, output = run_failing(self, "bilevel", "stationarity", PROBLEM)
        self.assertEqual(error.returncode, 1)
        self.assertIn("Candidate x=(4, 3) y=(1, 2): stationary", output)
        self.assertIn("Candidate x=(5, 4) y=(1, 2): not_stationary", output)

    def test_sampled_conditions(self):
        self.assertIn("UWSM: sample_consistent", run("bilevel", "uwsm", PROBLEM))
        self.assertIn("R-regularity: sample_consistent", run("bilevel", "rreg", PROBLEM))

    def test_certified_conditions(self):
        self.assertIn("strong domination: certified_sufficient", run("bilevel", "domination", PROBLEM, "--x", "4,3"))
        output = run("bilevel", "mfcq", PROBLEM, "--x", "4,3", "--y", "1,2")
        self.assertIn("upper MFCQ: certified_sufficient", output)
        self.assertIn("lower MFCQ: certified_sufficient", output)
        output = run("bilevel", "gvfcq", PROBLEM, "--x", "4,3", "--y", "1,2")
        self.assertIn("GVFCQ: certified_sufficient", output)
        self.assertIn("chain: Linear CQ → UWSM → LUWSM → GVFCQ", output)

    def test_nonlinear_violation_is_outranked_by_linear_certificate(self):
        output = run("bilevel", "gvfcq", PROBLEM, "--x", "4,3", "--y", "4,3", "--lambda", "1", "--weight-grid", "6")
        self.assertIn("GVFCQ: certified_sufficient", output)
        self.assertIn("note: NonLinear CQ: violated", output)

    def test_oracles(self):
        self.assertIn("  (2, 2)", run("bilevel", "oracle-front", PROBLEM, "--x", "4,3"))
        output = run("bilevel", "oracle-bilevel", PROBLEM, "--h", "0.5")
        self.assertIn("x=(4, 3) y=(1, 2) F=(5, 5)", output)
        self.assertIn("1 kept", output)


class BilevelJsonTests(SimpleTestCase):
    def load_report(self, *args):
        return json.loads(run("bilevel", *args, "--json"))

    def test_schema(self):
        cases = [
            ("front", PROBLEM, "--x", "4,3"),
            ("uwsm", PROBLEM),
            ("stationarity", PROBLEM, "--x", "4,3", "--y", "1,2"),
            ("oracle-front", PROBLEM, "--x", "4,3"),
        ]
        for args in cases:
            report = self.load_report(*args)
            self.assertEqual(set(report), REPORT_KEYS, args[0])
            self.assertEqual(set(report["results"]), set(RESULT_KEYS), args[0])
            self.assertEqual(report["command"], args[0])
            self.assertEqual(report["exit_code"], 0)
            self.assertEqual(report["tolerances"]["feas"], 1e-9)

    def test_values(self):
        report = self.load_report("stationarity", PROBLEM, "--x", "4,3", "--y", "1,2", "--seed", "7")
        cert = report["results"]["certificate"]
        self.assertEqual(report["status"], "stationary")
        self.assertEqual(report["seed"], 7)
        self.assertEqual(report["inputs"]["x"], [4.0, 3.0])
        self.assertAlmostEqual(cert["w_star"][0], 0.5)
        self.assertLessEqual(max(cert["residuals"].values()), 1e-8)
        self.assertEqual(len(report["inputs"]["sha256"]), 64)

    def test_reruns_are_identical(self):
        args = ("bilevel", "gvfcq", PROBLEM, "--x", "4,3", "--y", "1,2", "--json")
        self.assertEqual(run(*args), run(*args))

    def test_tolerance_override_is_reported(self):
        report = self.load_report("front", PROBLEM, "--x", "4,3", "--tol", "face=1e-6")
        self.assertEqual(report["tolerances"]["face"], 1e-6)

    def test_error_report(self):
        error, output = run_failing(self, "bilevel", "front", PROBLEM, "--json")
        self.assertEqual(error.returncode, 2)
        report = json.loads(output)
        self.assertEqual(report["status"], "error")
        self.assertEqual(report["exit_code"], 2)
        self.assertEqual(report["results"]["diagnostics"]["key_path"], "--x")
        self.assertIsNone(report["results"]["front"])


class BilevelErrorTests(SimpleTestCase):
    def write_problem(self, tmp, data):
        path = Path(tmp) / "problem.json"
        path.write_text(json.dumps(data), encoding="utf-8")
        return str(path)

    def test_bad_problem_file(self):
        data = copy.deepcopy(BOX_EXAMPLE)
        data["lower"]["B"] = data["lower"]["B"][:5]
        with tempfile.TemporaryDirectory() as tmp:
            error, _ = run_failing(self, "bilevel", "front", self.write_problem(tmp, data), "--x", "4,3")
        self.assertEqual(error.returncode, 2)
        self.assertIn("lower.B", str(error))

    def test_infeasible_candidate(self):
        error, _ = run_failing(self, "bilevel", "stationarity", PROBLEM, "--x", "3,3", "--y", "1,2")
        self.assertEqual(error.returncode, 2)

    def test_wrong_vector_length(self):
        error, _ = run_failing(self, "bilevel", "front", PROBLEM, "--x", "4,3,1")
        self.assertEqual(error.returncode, 2)
        self.assertIn("--x", str(error))

    def test_bad_tolerance(self):
        error, _ = run_failing(self, "bilevel", "front", PROBLEM, "--x", "4,3", "--tol", "bogus=1")
        self.assertEqual(error.returncode, 2)
        error, _ = run_failing(self, "bilevel", "front", PROBLEM, "--x", "4,3", "--tol", "feas")
        self.assertEqual(error.returncode, 2)

    @override_settings(BILEVEL_LP_MAX_ITER=1)
    def test_iteration_limit(self):
        error, _ = run_failing(self, "bilevel", "front", PROBLEM, "--x", "4,3")
        self.assertEqual(error.returncode, 3)

    def test_missing_sampling_block(self):
        data = copy.deepcopy(BOX_EXAMPLE)
        del data["sampling"]
        with tempfile.TemporaryDirectory() as tmp:
            error, _ = run_failing(self, "bilevel", "uwsm", self.write_problem(tmp, data))
        self.assertEqual(error.returncode, 2)
        self.assertIn("sampling", str(error))


class ValidateProblemTests(SimpleTestCase):
    def test_summary(self):
        output = run("validate_problem", PROBLEM)
        self.assertIn("valid; Y(x) bounded at sampled x; q=2 exact path available", output)

    def test_json(self):
        report = json.loads(run("validate_problem", PROBLEM, "--json"))
        self.assertEqual(report["status"], "valid")
        self.assertEqual(report["results"]["diagnostics"]["dims"]["k"], 6)

    def test_invalid_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "broken.json"
            path.write_text("[]", encoding="utf-8")
            error, _ = run_failing(self, "validate_problem", str(path))
        self.assertEqual(error.returncode, 2)

    def test_unbounded_lower_level_warns(self):
        data = copy.deepcopy(BOX_EXAMPLE)
        data["lower"]["A"] = data["lower"]["A"][:4]
        data["lower"]["B"] = [[-1, 0], [0, -1], [-1, 0], [0, -1]]
        data["lower"]["d"] = [-1, -2, -1, -2]
        err = StringIO()
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "open.json"
            path.write_text(json.dumps(data), encoding="utf-8")
            call_command("validate_problem", str(path), stdout=StringIO(), stderr=err, no_color=True)
        self.assertIn("Y(x) is unbounded", err.getvalue())


class ExampleProblemTests(SimpleTestCase):
    def test_prints_to_stdout(self):
        self.assertEqual(run("example_problem"), example_text())

    def test_writes_and_refuses_to_overwrite(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "example.json"
            run("example_problem", str(path))
            self.assertEqual(path.read_text(encoding="utf-8"), example_text())
            error, _ = run_failing(self, "example_problem", str(path))
            self.assertEqual(error.returncode, 2)
            run("example_problem", str(path), "--force")

