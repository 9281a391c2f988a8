import unittest
import logging
import itertools
import math

import numpy as np
from scipy.special import logsumexp

from modules.calibration import (
    AnnotatedFrame,
    FrameAssignment,
    associate_frame,
    closed_form_params,
    coordinate_ascent,
    initial_params,
    log_likelihood,
    solve_kappa,
)
from modules.directional import FovSpec, VmfParams, bessel_ratio, sample_uniform_fov, vmf_sample
from modules.geometry import angles_to_doa
from modules.sim import generate_calibration_frames
from utils.errors import InvalidInputError


logging.basicConfig(
    level=logging.WARN, format=f"%(asctime)s.%(msecs)03d %(levelname)s:%(message)s",
    datefmt="%d-%b-%y %H:%M:%S",
)
logger = logging.getLogger(__name__)

FOV = FovSpec(math.radians(69.0), math.radians(42.27))


def gradient(frames, assignments, pd, kappa, lambda_c):
    clutter = detections = objects = 0
    dot_sum = 0.0
    for f, a in zip(frames, assignments):
        objects += f.truth_doas.shape[0]
        for j, label in enumerate(a.labels):
            if label == 0:
                clutter += 1
            else:
                detections += 1
                dot_sum += float(f.measured_doas[j] @ f.truth_doas[label - 1])
    d_lambda = clutter / lambda_c - len(frames)
    d_pd = detections / pd - (objects - detections) / (1.0 - pd)
    d_kappa = detections * (1.0 / kappa - 1.0 / math.tanh(kappa)) + dot_sum
    return d_lambda, d_pd, d_kappa


class TestCalibration(unittest.TestCase):
    def test_solve_kappa_inverts_bessel_ratio(self):
        for kappa in (0.5, 5.0, 50.0, 700.0, 5000.0):
            self.assertAlmostEqual(kappa, solve_kappa(bessel_ratio(kappa)), delta=kappa * 1e-6)
        with self.assertRaises(InvalidInputError):
            solve_kappa(1.0)
        with self.assertRaises(InvalidInputError):
            solve_kappa(0.0)

    def test_associate_frame(self):
        y = angles_to_doa(np.array([0.0, 0.2]), np.array([0.0, -0.1]))
        z = np.vstack([angles_to_doa(0.201, -0.1), angles_to_doa(-0.3, 0.25)])
        frame = AnnotatedFrame(y, z, FOV)
        a = associate_frame(frame, 0.9, 700.0, 5.0)
        self.assertEqual(
            (2, 0),
            a.labels,
        )
        self.assertEqual(1, a.clutter_count())
        self.assertEqual(1, a.detection_count())
        with self.assertRaises(InvalidInputError):
            associate_frame(frame, 1.0, 700.0, 5.0)
        with self.assertRaises(InvalidInputError):
            associate_frame(frame, 0.9, 700.0, 0.0)

    def test_associate_frame_matches_enumeration(self):
        rng = np.random.default_rng(21)
        pd, kappa, lam = 0.9, 200.0, 3.0
        for _ in range(20):
            truth = sample_uniform_fov(FOV, 3, rng)
            near = np.vstack([vmf_sample(VmfParams(tuple(y), kappa), 1, rng) for y in truth[:2]])
            z = np.vstack([near, sample_uniform_fov(FOV, 3, rng)])
            frame = AnnotatedFrame(truth, z[rng.permutation(5)], FOV)
            best, best_labels = -math.inf, None
            for labels in itertools.product(range(4), repeat=5):
                objects = [a for a in labels if a > 0]
                if len(objects) != len(set(objects)):
                    continue
                value = log_likelihood([frame], [FrameAssignment(labels)], pd, kappa, lam)
                if value > best:
                    best, best_labels = value, labels
            got = associate_frame(frame, pd, kappa, lam)
            self.assertEqual(best_labels, got.labels)
            self.assertAlmostEqual(best, log_likelihood([frame], [got], pd, kappa, lam), places=9)

    def test_log_likelihood_by_hand(self):
        mu = angles_to_doa(0.1, -0.05)
        frame = AnnotatedFrame(mu.reshape(1, 3), mu.reshape(1, 3), FOV)
        pd, kappa, lam = 0.8, 700.0, 2.5
        expected = math.log(pd) + (math.log(2.0 * kappa) - math.log1p(-math.exp(-2.0 * kappa))) - lam
        self.assertAlmostEqual(expected, log_likelihood([frame], [FrameAssignment((1,))], pd, kappa, lam), places=9)

        y = angles_to_doa(np.array([0.0, 0.3]), np.array([0.0, 0.1]))
        z = np.vstack([angles_to_doa(0.01, 0.02), angles_to_doa(-0.4, 0.2)])
        frames = [AnnotatedFrame(y, z, FOV), AnnotatedFrame(y[:1], np.zeros((0, 3)), FOV)]
        assignments = [FrameAssignment((1, 0)), FrameAssignment(())]
        pd, kappa, lam = 0.7, 10.0, 2.0
        u = FOV.fx * math.sin(FOV.fy / 2.0) / (2.0 * math.pi)
        expected = (
            math.log(lam / u)
            + math.log(pd)
            + math.log(kappa / math.sinh(kappa))
            + kappa * float(z[0] @ y[0])
            + math.log(1.0 - pd)
            + math.log(1.0 - pd)
            - 2.0 * lam
        )
        self.assertAlmostEqual(expected, log_likelihood(frames, assignments, pd, kappa, lam), places=9)
        empty = AnnotatedFrame(np.zeros((0, 3)), np.zeros((0, 3)), FOV)
        self.assertEqual(0.0, log_likelihood([empty], [FrameAssignment(())], 0.9, 700.0, 0.0))

    def test_labelled_likelihood_is_a_lower_bound(self):
        rng = np.random.default_rng(22)
        pd, kappa, lam = 0.85, 50.0, 1.5
        u = FOV.fx * math.sin(FOV.fy / 2.0) / (2.0 * math.pi)
        for _ in range(10):
            y = sample_uniform_fov(FOV, 2, rng)
            z = np.vstack([vmf_sample(VmfParams(tuple(y[0]), kappa), 1, rng), sample_uniform_fov(FOV, 1, rng)])
            frame = AnnotatedFrame(y, z, FOV)
            # set likelihood: sum over every way of splitting z into clutter and one measurement per object
            total = 0.0
            values = []
            for labels in itertools.product(range(3), repeat=2):
                objects = [a for a in labels if a > 0]
                if len(objects) != len(set(objects)):
                    continue
                term = math.exp(-lam)
                for j, a in enumerate(labels):
                    if a == 0:
                        term *= lam / u
                    else:
                        term *= pd * kappa / math.sinh(kappa) * math.exp(kappa * float(z[j] @ y[a - 1]))
                term *= (1.0 - pd) ** (2 - len(objects))
                total += term
                values.append(log_likelihood([frame], [FrameAssignment(labels)], pd, kappa, lam))
            self.assertEqual(7, len(values))
            self.assertAlmostEqual(math.log(total), float(logsumexp(values)), places=9)
            best = log_likelihood([frame], [associate_frame(frame, pd, kappa, lam)], pd, kappa, lam)
            self.assertAlmostEqual(max(values), best, places=9)
            self.assertLessEqual(best, math.log(total))

    def test_bisection_matches_approximation(self):
        for r_bar in (0.9, 0.92, 0.95, 0.99, 0.999, 0.9999):
            approx = 1.0 / (1.0 - r_bar)
            self.assertLess(abs(solve_kappa(r_bar) - approx), 0.01 * approx)
        self.assertGreater(abs(solve_kappa(0.5) - 2.0), 0.02 * 2.0)


    def test_associate_empty_frame(self):
        frame = AnnotatedFrame(np.zeros((0, 3)), np.zeros((0, 3)), FOV)
        self.assertEqual((), associate_frame(frame, 0.9, 700.0, 5.0).labels)

    def test_frame_assignment_validation(self):
        with self.assertRaises(InvalidInputError):
            FrameAssignment((1, 1, 0))
        with self.assertRaises(InvalidInputError):
            AnnotatedFrame(np.array([[1.0, 1.0, 0.0]]), np.zeros((0, 3)), FOV)

    def test_closed_form_is_stationary(self):
        for seed in range(50):
            rng = np.random.default_rng(seed)
            frames = generate_calibration_frames(4, 200, 0.9, 700.0, 5.0, FOV, rng)
            assignments = [associate_frame(f, 0.9, 700.0, 5.0) for f in frames]
            cf = closed_form_params(frames, assignments)
            for g in gradient(frames, assignments, cf.pd, cf.kappa, cf.lambda_c):
                self.assertLess(abs(g), 1e-6)
            base = log_likelihood(frames, assignments, cf.pd, cf.kappa, cf.lambda_c)
            for pd, kappa, lam in ((cf.pd * 0.99, cf.kappa, cf.lambda_c), (cf.pd, cf.kappa * 1.05, cf.lambda_c), (cf.pd, cf.kappa, cf.lambda_c * 1.1)):
                self.assertLess(log_likelihood(frames, assignments, pd, kappa, lam), base)
            self.assertAlmostEqual(1.0 / (1.0 - cf.r_bar), cf.kappa_approx, places=6)

    def test_closed_form_errors(self):
        frame = AnnotatedFrame(angles_to_doa(np.array([0.0]), np.array([0.0])), angles_to_doa(np.array([0.1]), np.array([0.1])), FOV)
        with self.assertRaises(InvalidInputError):
            closed_form_params([frame], [FrameAssignment((0,))])
        with self.assertRaises(InvalidInputError):
            closed_form_params([], [])

    def test_initial_params(self):
        frames = generate_calibration_frames(3, 20, 0.9, 700.0, 2.0, FOV, np.random.default_rng(0))
        pd, kappa, lam = initial_params(frames)
        self.assertEqual(0.9, pd)
        self.assertEqual(20.0, kappa)
        self.assertGreaterEqual(lam, 0.5)

    def test_recovers_parameters(self):
        successes = 0
        for seed in range(20):
            rng = np.random.default_rng(100 + seed)
            frames = generate_calibration_frames(4, 500, 0.9, 700.0, 5.0, FOV, rng)
            result = coordinate_ascent(frames, logger=logger)
            ok = (
                abs(result.pd - 0.9) <= 0.03
                and abs(result.kappa - 700.0) <= 0.15 * 700.0
                and abs(result.lambda_c - 5.0) <= 0.5
            )
            successes += int(ok)
            trace = result.trace
            self.assertTrue(all(b >= a - 1e-9 * (1.0 + abs(a)) for a, b in zip(trace, trace[1:])))
            self.assertEqual(500, len(result.assignments))
            self.assertEqual(result.iterations, len(trace))
        self.assertGreaterEqual(successes, 18)

    def test_clean_data(self):
        frames = generate_calibration_frames(3, 100, 1.0, 700.0, 0.0, FOV, np.random.default_rng(7))
        result = coordinate_ascent(frames)
        self.assertGreaterEqual(result.pd, 0.99)
        self.assertLessEqual(result.lambda_c, 1e-3)
        doc = result.to_dict()
        self.assertEqual(
            ["pd", "kappa", "lambda_c", "lower_bound", "iterations", "lower_bound_trace", "diagnostic", "assignments"],
            list(doc.keys()),
        )

    def test_no_frames(self):
        with self.assertRaises(InvalidInputError):
            coordinate_ascent([])
