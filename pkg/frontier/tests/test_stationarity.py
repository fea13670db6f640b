from dataclasses import replace

import numpy as np
from django.test import SimpleTestCase

from frontier.services.errors import BilevelError, InfeasibleCandidateError
from frontier.services.model import LinearLowerLevel
from frontier.services.stationarity import (
    StationarityStatus,
    assemble_kkt,
    certify,
    certify_many,
    check_coderivative_form,
    check_limiting_qualification,
    check_solution_map_lipschitz,
    coderivative_frontier_member,
    coderivative_S_member,
    coderivative_Y_member,
    detect_active_sets,
    residuals,
)

from .helpers import box_example_problem, floor_problem, pinched_problem, tracking_problem

POSITIVE = ([4, 3], [1, 2])
NEGATIVE = ([5, 4], [1, 2])


class CertifyTests(SimpleTestCase):
    def setUp(self):
        self.problem = box_example_problem()

    def test_positive_certificate(self):
        cert = certify(self.problem, *POSITIVE)
        self.assertIs(cert.status, StationarityStatus.STATIONARY)
        np.testing.assert_allclose(cert.w_star, [0.5, 0.5], atol=1e-8)
        np.testing.assert_allclose(cert.v_star, [0, 0], atol=1e-8)
        np.testing.assert_allclose(cert.u, [0.5, 0.5], atol=1e-8)
        np.testing.assert_allclose(cert.v, np.zeros(6), atol=1e-8)
        np.testing.assert_allclose(cert.w, [0, 0.5, 0, 0.5, 0, 0], atol=1e-8)
        self.assertIsNone(cert.farkas)

    def test_positive_residuals(self):
        cert = certify(self.problem, *POSITIVE)
        for name, value in residuals(self.problem, *POSITIVE, cert).items():
            self.assertLessEqual(value, 1e-8, name)

    def test_negative_certificate(self):
        cert = certify(self.problem, *NEGATIVE)
        self.assertIs(cert.status, StationarityStatus.NOT_STATIONARY)
        self.assertEqual(cert.active.I_G, ())
        self.assertIsNotNone(cert.farkas)
        self.assertTrue(cert.farkas_verified(1e-8))
        with self.assertRaises(BilevelError):
            residuals(self.problem, *NEGATIVE, cert)

    def test_certificate_as_dict(self):
        payload = certify(self.problem, *POSITIVE).as_dict()
        self.assertEqual(payload["status"], "stationary")
        self.assertEqual(payload["form"], "kkt")
        self.assertEqual(payload["active"]["I_G"], [0, 1])

    def test_infeasible_candidate(self):
        with self.assertRaises(InfeasibleCandidateError) as ctx:
            certify(self.problem, [3, 3], [1, 2])
        self.assertEqual(ctx.exception.violated_G, [0])
        with self.assertRaises(InfeasibleCandidateError) as ctx:
            certify(self.problem, [4, 3], [0, 2])
        self.assertEqual(ctx.exception.violated_g, [1])

    def test_supplied_jacobian(self):
        J = self.problem.upper_jacobian(*POSITIVE)
        cert = certify(self.problem, *POSITIVE, jacobian=J)
        self.assertTrue(cert.stationary)


class ActiveSetTests(SimpleTestCase):
    def test_box_example_active_sets(self):
        active = detect_active_sets(box_example_problem(), *POSITIVE)
        self.assertEqual(active.I_G, (0, 1))
        self.assertEqual(active.I_g, (1, 3))
        self.assertEqual(active.near_g, ())

    def test_near_active_rows_are_reported(self):
        active = detect_active_sets(box_example_problem(), [4, 3], [1 + 5e-7, 2])
        self.assertEqual(active.I_g, (3,))
        self.assertEqual(active.near_g, (1,))
        self.assertEqual(active.widened().I_g, (1, 3))

    def test_sensitivity_note_is_logged(self):
        with self.assertLogs("frontier", level="WARNING"):
            cert = certify(box_example_problem(), [4, 3], [1 + 5e-7, 2])
        self.assertTrue(cert.notes)


class AssembleKktTests(SimpleTestCase):
    def test_layout_and_known_solution(self):
        problem = box_example_problem()
        system = assemble_kkt(problem, *POSITIVE, detect_active_sets(problem, *POSITIVE))
        self.assertEqual(system.E.shape, (7, 10))
        self.assertEqual(system.labels[-1], "normalization")
        self.assertFalse(system.signed[system.blocks["v_star"]].any())
        z = np.zeros(system.unknowns)
        z[system.blocks["w_star"]] = 0.5
        z[system.blocks["u"]] = 0.5
        z[system.blocks["w"]] = 0.5
        np.testing.assert_allclose(system.E @ z, system.f, atol=1e-12)


class CoderivativeFormTests(SimpleTestCase):
    def test_forms_agree_on_random_candidates(self):
        problem = box_example_problem()
        rng = np.random.default_rng(21)
        ys = [np.array([a, b]) for a in (1.0, 2.5, 4.0) for b in (2.0, 2.5, 3.0)]
        for _ in range(50):
            on_edge = rng.integers(0, 2, size=2)
            x = np.array([4.0, 3.0]) + 2.0 * rng.uniform(size=2) * on_edge
            y = ys[int(rng.integers(len(ys)))]
            kkt = certify(problem, x, y)
            coderivative = check_coderivative_form(problem, x, y)
            self.assertEqual(kkt.status, coderivative.status, (x.tolist(), y.tolist()))

    def test_coderivative_positive_case(self):
        cert = check_coderivative_form(box_example_problem(), *POSITIVE)
        self.assertIs(cert.status, StationarityStatus.STATIONARY)
        self.assertEqual(cert.form, "coderivative")
        self.assertEqual(cert.flags, ())

    def test_membership(self):
        problem = box_example_problem()
        inside = coderivative_Y_member(problem, *POSITIVE, [1, 1], [0, 0])
        self.assertTrue(inside.member)
        np.testing.assert_allclose(inside.v, [0, 1, 0, 1, 0, 0], atol=1e-8)
        self.assertTrue(inside.regular)
        self.assertFalse(coderivative_Y_member(problem, *POSITIVE, [-1, 0], [0, 0]).member)
        self.assertFalse(coderivative_Y_member(problem, *POSITIVE, [1, 1], [1, 0]).member)


class CoderivativeEstimateTests(SimpleTestCase):
    def test_frontier_estimate_on_box_example(self):
        problem = box_example_problem()
        inside = coderivative_frontier_member(problem, *POSITIVE, [1, 1], [0, 0])
        self.assertTrue(inside.member)
        np.testing.assert_allclose(inside.v, [0, 2, 0, 1, 0, 0], atol=1e-8)
        self.assertFalse(coderivative_frontier_member(problem, *POSITIVE, [1, 1], [1, 0]).member)
        self.assertFalse(coderivative_frontier_member(problem, *POSITIVE, [-1, 0], [0, 0]).member)

    def test_frontier_estimate_tracks_the_lower_bound(self):
        problem = tracking_problem()
        self.assertTrue(coderivative_frontier_member(problem, [2], [2], [1], [1]).member)
        self.assertFalse(coderivative_frontier_member(problem, [2], [2], [1], [0]).member)

    def test_solution_map_estimate_on_box_example(self):
        problem = box_example_problem()
        inside = coderivative_S_member(problem, *POSITIVE, [1, 1], [0, 0])
        self.assertTrue(inside.member)
        self.assertEqual(inside.v_star.shape, (2,))
        self.assertFalse(coderivative_S_member(problem, *POSITIVE, [1, 1], [1, 0]).member)
        self.assertFalse(coderivative_S_member(problem, *POSITIVE, [-1, 0], [0, 0]).member)

    def test_solution_map_estimate_of_the_identity_map(self):
        problem = tracking_problem()
        self.assertTrue(coderivative_S_member(problem, [2], [2], [1], [1]).member)
        self.assertFalse(coderivative_S_member(problem, [2], [2], [1], [0]).member)

    def test_estimates_need_a_lower_level_solution(self):
        with self.assertRaises(BilevelError):
            coderivative_frontier_member(box_example_problem(), [4, 3], [2, 2], [1, 1], [0, 0])
        with self.assertRaises(BilevelError):
            check_solution_map_lipschitz(box_example_problem(), [4, 3], [2, 2])

    def test_lipschitz_criterion(self):
        self.assertTrue(check_solution_map_lipschitz(box_example_problem(), *POSITIVE))
        self.assertTrue(check_solution_map_lipschitz(tracking_problem(), [2], [2]))
        pinched = check_solution_map_lipschitz(pinched_problem([[-1]]), [0], [0])
        self.assertFalse(pinched)
        self.assertLess(pinched.witness[0], 0)

    def test_limiting_qualification(self):
        self.assertTrue(check_limiting_qualification(box_example_problem(), *POSITIVE))
        self.assertTrue(check_limiting_qualification(pinched_problem([[-1]]), [0], [0]))
        blocked = check_limiting_qualification(pinched_problem([[1]]), [0], [0])
        self.assertFalse(blocked)
        self.assertLess(blocked.witness[0], 0)


class InvarianceTests(SimpleTestCase):
    def test_row_rescaling_keeps_the_status(self):
        problem = box_example_problem()
        S = np.diag([2.0, 0.5, 3.0, 1.5, 4.0, 0.25])
        ll = problem.lower
        scaled = replace(problem, lower=LinearLowerLevel(C=ll.C, A=S @ ll.A, B=S @ ll.B, d=S @ ll.d))
        rng = np.random.default_rng(5)
        candidates = [POSITIVE, NEGATIVE]
        for _ in range(20):
            x = np.array([4.0, 3.0]) + rng.integers(0, 3, size=2) * 0.5
            y = np.array([rng.choice([1.0, 2.5, 4.0]), rng.choice([2.0, 2.5, 3.0])])
            candidates.append((x, y))
        for x, y in candidates:
            self.assertIs(certify(scaled, x, y).status, certify(problem, x, y).status, (list(x), list(y)))

    def test_single_objective_levels_give_classical_kkt(self):
        problem = floor_problem()
        cert = certify(problem, [1], [1])
        self.assertIs(cert.status, StationarityStatus.STATIONARY)
        np.testing.assert_allclose(cert.w_star, [1.0], atol=1e-8)
        np.testing.assert_allclose(cert.u, [1.0], atol=1e-8)
        self.assertAlmostEqual(float(cert.v[0] + cert.w[0]), 1.0, delta=1e-8)
        np.testing.assert_allclose(cert.v_star, [-cert.v[0]], atol=1e-8)
        self.assertIs(certify(problem, [2], [2]).status, StationarityStatus.NOT_STATIONARY)


class CertifyManyTests(SimpleTestCase):
    def test_results_keep_candidate_order(self):
        results = certify_many(box_example_problem(), [POSITIVE, NEGATIVE, ([3, 3], [1, 2])])
        self.assertEqual(len(results), 3)
        self.assertIs(results[0].status, StationarityStatus.STATIONARY)
        self.assertIs(results[1].status, StationarityStatus.NOT_STATIONARY)
        self.assertIsInstance(results[2], InfeasibleCandidateError)

    def test_empty(self):
        self.assertEqual(certify_many(box_example_problem(), []), [])
