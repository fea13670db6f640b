import numpy as np
from django.test import SimpleTestCase

from frontier.services.cq import (
    CHAIN_LINEAR,
    CHAIN_NONLINEAR,
    CHAIN_UWSM,
    CqConfig,
    SampledRegion,
    Verdict,
    check_linear_uwsm,
    check_lower_mfcq,
    check_nonlinear_cq,
    check_strong_domination,
    check_upper_mfcq,
    estimate_rreg_sigma,
    estimate_uwsm_lambda,
    gvfcq_verdict,
    mfcq_margin,
    rreg_ratio,
    simplex_grid,
    uwsm_ratio,
)
from frontier.services.errors import VacuousCriterionError, VacuousSampleError
from frontier.services.model import AffineSystem, BilevelProblem, LinearLowerLevel, QuadraticComponent, UpperObjective
from frontier.services.oracle import GridSpec, grid_domination_check

from .helpers import box_example_problem


def region(x_lower, x_upper, y_lower, y_upper, step) -> SampledRegion:
    return SampledRegion(
        np.array(x_lower, dtype=float), np.array(x_upper, dtype=float),
        np.array(y_lower, dtype=float), np.array(y_upper, dtype=float), step,
    )


class LinearCqTests(SimpleTestCase):
    def test_delta_and_k(self):
        rng = np.random.default_rng(1)
        xs = np.column_stack([rng.uniform(4, 6, 25), rng.uniform(3, 5, 25)])
        report = check_linear_uwsm(box_example_problem(), xs)
        self.assertIs(report.verdict, Verdict.CERTIFIED_SUFFICIENT)
        self.assertAlmostEqual(report.estimate["delta"], 2.0, delta=1e-9)
        self.assertAlmostEqual(report.estimate["k"], np.sqrt(5), delta=1e-9)
        self.assertEqual(report.chain, CHAIN_LINEAR)
        self.assertEqual(report.as_dict()["chain"], "Linear CQ → UWSM → LUWSM → GVFCQ")

    def test_needs_samples(self):
        with self.assertRaises(VacuousSampleError):
            check_linear_uwsm(box_example_problem(), [])


class UwsmTests(SimpleTestCase):
    def test_pointwise_ratio(self):
        problem = box_example_problem()
        self.assertAlmostEqual(uwsm_ratio(problem, [4, 3], [2, 2]), 2.0)
        self.assertAlmostEqual(uwsm_ratio(problem, [4, 3], [1, 3]), 1.0)
        self.assertIsNone(uwsm_ratio(problem, [4, 3], [1, 2]))
        self.assertIsNone(uwsm_ratio(problem, [4, 3], [0, 2]))

    def test_modulus_on_fine_grid(self):
        report = estimate_uwsm_lambda(box_example_problem(), region([4, 3], [4.1, 3.1], [1, 2], [4, 3], 0.01))
        self.assertIs(report.verdict, Verdict.SAMPLE_CONSISTENT)
        self.assertGreaterEqual(report.estimate["lambda"], 0.95)
        self.assertLessEqual(report.estimate["lambda"], 1.0 + 1e-12)
        witness = report.witness
        self.assertAlmostEqual(uwsm_ratio(box_example_problem(), witness["x"], witness["y"]), witness["ratio"])
        self.assertEqual(report.chain, CHAIN_UWSM)

    def test_full_x_box_on_a_coarse_grid(self):
        report = estimate_uwsm_lambda(box_example_problem(), region([4, 3], [6, 5], [1, 2], [4, 3], 0.1))
        self.assertIs(report.verdict, Verdict.SAMPLE_CONSISTENT)
        self.assertGreaterEqual(report.estimate["lambda"], 0.95)
        self.assertLessEqual(report.estimate["lambda"], 1.0 + 1e-9)

    def test_uwsm_and_rreg_moduli_are_reciprocal(self):
        problem = box_example_problem()
        sampled = region([4, 3], [6, 5], [1, 2], [4, 3], 0.25)
        lam = estimate_uwsm_lambda(problem, sampled).estimate["lambda"]
        sigma = estimate_rreg_sigma(problem, sampled).estimate["sigma"]
        self.assertGreaterEqual(lam * sigma, 0.9)
        self.assertLessEqual(lam * sigma, 1.1)

    def test_vacuous_region(self):
        with self.assertRaises(VacuousSampleError):
            estimate_uwsm_lambda(box_example_problem(), region([4, 3], [4, 3], [1, 2], [1, 2], 0.5))

    def test_grid_refinement_does_not_raise_the_estimate(self):
        problem = box_example_problem()
        coarse = region([4, 3], [4.4, 3.4], [1.1, 2], [4, 3], 0.4)
        fine = region([4, 3], [4.4, 3.4], [1.1, 2], [4, 3], 0.2)
        lam_coarse = estimate_uwsm_lambda(problem, coarse).estimate["lambda"]
        lam_fine = estimate_uwsm_lambda(problem, fine).estimate["lambda"]
        self.assertLessEqual(lam_fine, lam_coarse + 1e-12)
        sigma_coarse = estimate_rreg_sigma(problem, coarse).estimate["sigma"]
        sigma_fine = estimate_rreg_sigma(problem, fine).estimate["sigma"]
        self.assertGreaterEqual(sigma_fine, sigma_coarse - 1e-12)


class RRegularityTests(SimpleTestCase):
    def test_sigma_on_box_example(self):
        report = estimate_rreg_sigma(box_example_problem(), region([4, 3], [4.5, 3.5], [1, 2], [4, 3], 0.25))
        self.assertIs(report.verdict, Verdict.SAMPLE_CONSISTENT)
        self.assertAlmostEqual(report.estimate["sigma"], 1.0)

    def test_infeasible_point_uses_graph_distance(self):
        self.assertAlmostEqual(rreg_ratio(box_example_problem(), [4, 3], [0.5, 2]), 0.5, places=7)

    def test_points_on_the_solution_graph_are_skipped(self):
        self.assertIsNone(rreg_ratio(box_example_problem(), [4, 3], [1, 2]))


class StrongDominationTests(SimpleTestCase):
    def test_certified_and_agrees_with_grid(self):
        problem = box_example_problem()
        rng = np.random.default_rng(4)
        for x in np.column_stack([rng.uniform(4, 6, 10), rng.uniform(3, 5, 10)]):
            report = check_strong_domination(problem, x)
            self.assertIs(report.verdict, Verdict.CERTIFIED_SUFFICIENT)
            self.assertTrue(grid_domination_check(problem, x, GridSpec([1, 2], [4, 3], 0.1)).holds)

    def test_unbounded_lower_level_is_not_certified(self):
        problem = BilevelProblem(
            upper_objective=UpperObjective((QuadraticComponent.linear([1, 1]),)),
            upper_set=AffineSystem([[-1]], [0]),
            lower=LinearLowerLevel(C=[[1]], A=[[0]], B=[[-1]], d=[0]),
        )
        report = check_strong_domination(problem, [1])
        self.assertIs(report.verdict, Verdict.NOT_CERTIFIED)
        self.assertIn("bounded", report.notes[0])


class NonlinearCqTests(SimpleTestCase):
    def test_simplex_grid(self):
        np.testing.assert_allclose(simplex_grid(2, 2), [[0, 1], [1, 0]])
        grid = simplex_grid(3, 3)
        self.assertEqual(grid.shape, (6, 3))
        np.testing.assert_allclose(grid.sum(axis=1), 1.0)

    def test_coarse_weights_are_consistent(self):
        """Weights e1 and e2 only: the smallest ||C'y* + B_I'nu|| is ||C'e2|| = 1 = 1/lambda."""
        report = check_nonlinear_cq(box_example_problem(), [4, 3], [4, 3], lam=1.0, weight_grid=2)
        self.assertIs(report.verdict, Verdict.SAMPLE_CONSISTENT)
        self.assertAlmostEqual(report.estimate["min_norm"], 1.0)

    def test_fine_weights_find_the_violation(self):
        """The condition asks ||C'y* + B_I'nu|| >= 1/lambda for nu >= 0 and unit-sum y* >= 0.

        The active rows at y = (4, 3) only add nonnegative directions, so the
        minimum is min sqrt(4a^2 + b^2) over a + b = 1: sqrt(0.8) at y* = (0.2, 0.8).
        """
        report = check_nonlinear_cq(box_example_problem(), [4, 3], [4, 3], lam=1.0, weight_grid=6)
        self.assertIs(report.verdict, Verdict.VIOLATED)
        self.assertAlmostEqual(report.estimate["min_norm"], np.sqrt(0.8))
        np.testing.assert_allclose(report.witness["y_star"], [0.2, 0.8])
        self.assertEqual(report.chain, CHAIN_NONLINEAR)

    def test_larger_modulus_passes(self):
        report = check_nonlinear_cq(box_example_problem(), [4, 3], [4, 3], lam=1.25, weight_grid=6)
        self.assertIs(report.verdict, Verdict.SAMPLE_CONSISTENT)

    def test_vacuous_at_efficient_points(self):
        with self.assertRaises(VacuousCriterionError):
            check_nonlinear_cq(box_example_problem(), [4, 3], [1, 2], lam=1.0)


class MfcqTests(SimpleTestCase):
    def test_margin(self):
        self.assertAlmostEqual(mfcq_margin([[-1, 0], [0, -1]]), 1.0)
        self.assertAlmostEqual(mfcq_margin([[1, 0], [-1, 0]]), 0.0)
        self.assertEqual(mfcq_margin(np.zeros((0, 2))), 1.0)
        self.assertEqual(mfcq_margin([[0, 0]]), 0.0)

    def test_margin_is_scale_invariant(self):
        self.assertAlmostEqual(mfcq_margin([[-1, 1], [0, -1]]), mfcq_margin([[-100, 100], [0, -0.01]]))

    def test_box_example_example(self):
        problem = box_example_problem()
        self.assertTrue(check_upper_mfcq(problem, [4, 3]))
        self.assertTrue(check_lower_mfcq(problem, [4, 3], [1, 2]))
        self.assertFalse(check_lower_mfcq(problem, [1, 3], [1, 2]))


class GvfcqTests(SimpleTestCase):
    def setUp(self):
        self.problem = box_example_problem()
        self.region = region([4, 3], [4.5, 3.5], [1, 2], [4, 3], 0.25)

    def test_linear_route_certifies(self):
        report = gvfcq_verdict(self.problem, [4, 3], [1, 2], CqConfig(xs=(np.array([4.0, 3.0]),), region=self.region))
        self.assertIs(report.verdict, Verdict.CERTIFIED_SUFFICIENT)
        self.assertEqual(report.chain, CHAIN_LINEAR)
        self.assertIn("Linear CQ", report.estimate)

    def test_sampled_route(self):
        config = CqConfig(region=self.region, check_linear=False)
        report = gvfcq_verdict(self.problem, [4, 3], [1, 2], config)
        self.assertIs(report.verdict, Verdict.SAMPLE_CONSISTENT)
        self.assertEqual(report.chain, CHAIN_UWSM)

    def test_no_evidence(self):
        report = gvfcq_verdict(self.problem, [4, 3], [1, 2], CqConfig(check_linear=False))
        self.assertIs(report.verdict, Verdict.NOT_CERTIFIED)

    def test_nonlinear_violation_surfaces(self):
        config = CqConfig(check_linear=False, nonlinear_lambda=1.0, weight_grid=6)
        report = gvfcq_verdict(self.problem, [4, 3], [4, 3], config)
        self.assertIs(report.verdict, Verdict.VIOLATED)
        self.assertIsNotNone(report.witness)

    def test_vacuous_samples_are_reported(self):
        config = CqConfig(region=region([4, 3], [4, 3], [1, 2], [1, 2], 0.5), check_linear=False)
        report = gvfcq_verdict(self.problem, [4, 3], [1, 2], config)
        self.assertIs(report.verdict, Verdict.SAMPLE_CONSISTENT)
        self.assertIn("UWSM: sample_consistent", report.notes)
