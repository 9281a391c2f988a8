import unittest
import logging
import contextlib
import io
import json
import os
import tempfile

import numpy as np

import tracker_app
from artifacts.file_parser import FrameFileParser
from artifacts.parsers.detection_file import detection_record, parse_detections, write_detections
from artifacts.parsers.estimate_file import parse_estimates, read_csv, write_estimates
from artifacts.parsers.truth_file import parse_truth, write_truth
from modules import sim
from modules.tpmbm import EstimatedTrajectory, Frame
from utils.errors import InputFileError, InvalidInputError
from utils.utils import (
    DEFAULT_RUN_CONFIG,
    apply_overrides,
    chunk_list,
    obj_cp,
    read_run_config,
    ts_to_utc,
    validate_run_config,
    write_run_config,
)
from views.command_views import (
    DIAGNOSTIC_COLUMNS,
    GOSPA_FILE,
    SUMMARY_FILE,
    cmd_calibrate,
    cmd_evaluate,
    cmd_simulate,
    cmd_track,
)


logging.basicConfig(
    level=logging.WARN, format=f"%(asctime)s.%(msecs)03d %(levelname)s:%(message)s",
    datefmt="%d-%b-%y %H:%M:%S",
)
logger = logging.getLogger(__name__)

IMAGE = [1920, 1080]


def write_config(directory, steps=101, seed=0):
    config = obj_cp(DEFAULT_RUN_CONFIG)
    config["scenario"]["steps"] = steps
    config["scenario"]["seed"] = seed
    path = os.path.join(directory, "config.json")
    write_run_config(config, path, logger)
    return path


def write_lines(path, records):
    with open(path, "w") as f:
        for r in records:
            f.write(r if isinstance(r, str) else json.dumps(r))
            f.write("\n")


def box_record(frame, drone, boxes):
    return {
        "frame": frame,
        "time_s": frame / 6.0,
        "drone": drone,
        "quat": [1.0, 0.0, 0.0, 0.0],
        "fov_deg": [69.0, 42.27],
        "image_px": IMAGE,
        "boxes": boxes,
    }


class TestFrameFiles(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = self.tmp.name

    def tearDown(self):
        self.tmp.cleanup()

    def test_simulate_writes_files(self):
        config_path = write_config(self.dir)
        out = os.path.join(self.dir, "sim")
        result = cmd_simulate(config_path, out, logger)
        self.assertEqual(0, result["exit_code"])
        self.assertEqual(101, result["response"]["frames"])
        with open(result["response"]["detections"]) as f:
            first = f.read()
        self.assertEqual(101, len(first.strip().split("\n")))
        with open(result["response"]["truth"]) as f:
            self.assertEqual(101, len(f.read().strip().split("\n")))
        cmd_simulate(config_path, out, logger)
        with open(result["response"]["detections"]) as f:
            self.assertEqual(first, f.read())

    def test_detection_round_trip(self):
        frames, _ = sim.generate(sim.ScenarioConfig(steps=8, seed=2))
        times = [f.step / 6.0 for f in frames]
        a = os.path.join(self.dir, "a.jsonl")
        b = os.path.join(self.dir, "b.jsonl")
        write_detections(a, frames, times, logger)
        parsed, parsed_times = parse_detections(a, logger)
        write_detections(b, parsed, parsed_times, logger)
        again, _ = parse_detections(b, logger)
        self.assertEqual(times, parsed_times)
        for f, p, q in zip(frames, parsed, again):
            self.assertEqual(f.step, q.step)
            np.testing.assert_array_equal(f.measurements, p.measurements)
            np.testing.assert_array_equal(p.measurements, q.measurements)
            np.testing.assert_allclose(f.pose.position_local, q.pose.position_local)
            np.testing.assert_allclose(f.pose.fov, q.pose.fov, atol=1e-9)
        with self.assertRaises(InvalidInputError):
            write_detections(b, frames, times[:-1], logger)

    def test_parse_error_reports_line(self):
        good = box_record(0, {"local_xyz_m": [0.0, 0.0, -25.0]}, [])
        bad = box_record(1, {"local_xyz_m": [0.0, 0.0, -25.0]}, [])
        bad["image_px"] = [1921, 1080]
        path = os.path.join(self.dir, "bad.jsonl")
        write_lines(path, [good, bad])
        with self.assertRaises(InputFileError) as ctx:
            parse_detections(path, logger)
        self.assertEqual(2, ctx.exception.line_no)
        result = cmd_track(path, write_config(self.dir), os.path.join(self.dir, "out"), logger)
        self.assertEqual(2, result["exit_code"])
        self.assertIn(f"{path}:2:", result["response"])

    def test_parse_errors(self):
        drone = {"local_xyz_m": [0.0, 0.0, -25.0]}
        cases = [
            "{not json",
            {**box_record(0, drone, []), "doas": []},
            {**box_record(0, {"lat_deg": 1.0}, [])},
            {**box_record(0, drone, [[1.0, 1.0, 0.0, 4.0]])},
        ]
        good = box_record(0, drone, [])
        for n, case in enumerate(cases):
            path = os.path.join(self.dir, f"case{n}.jsonl")
            write_lines(path, [good if n == 0 else case, case if n == 0 else good])
            with self.assertRaises(InputFileError):
                parse_detections(path, logger)
        path = os.path.join(self.dir, "order.jsonl")
        write_lines(path, [box_record(3, drone, []), box_record(3, drone, [])])
        with self.assertRaises(InputFileError) as ctx:
            parse_detections(path, logger)
        self.assertEqual(2, ctx.exception.line_no)

    def test_box_at_image_centre(self):
        box = [IMAGE[0] / 2 - 5.0, IMAGE[1] / 2 - 5.0, 10.0, 10.0]
        path = os.path.join(self.dir, "boxes.jsonl")
        write_lines(path, [box_record(0, {"local_xyz_m": [0.0, 0.0, -25.0]}, [box])])
        frames, times = parse_detections(path, logger)
        np.testing.assert_allclose(frames[0].measurements, [[1.0, 0.0, 0.0]], atol=1e-12)
        self.assertEqual([0.0], times)

    def test_geodetic_pose(self):
        path = os.path.join(self.dir, "geo.jsonl")
        write_lines(path, [
            box_record(0, {"lat_deg": 59.4, "lon_deg": 17.9, "alt_m": 25.0}, []),
            box_record(1, {"lat_deg": 59.4001, "lon_deg": 17.9, "alt_m": 25.0}, []),
        ])
        frames, _ = parse_detections(path, logger)
        np.testing.assert_allclose(frames[0].pose.position_local, [0.0, 0.0, -25.0], atol=1e-6)
        x, y, z = frames[1].pose.position_local
        self.assertAlmostEqual(0.0, x, delta=1e-3)
        self.assertAlmostEqual(11.1, y, delta=0.1)
        self.assertAlmostEqual(-25.0, z, delta=0.05)
        mixed = os.path.join(self.dir, "mixed.jsonl")
        write_lines(mixed, [
            box_record(0, {"lat_deg": 59.4, "lon_deg": 17.9, "alt_m": 25.0}, []),
            box_record(1, {"local_xyz_m": [0.0, 0.0, -25.0]}, []),
        ])
        with self.assertRaises(InputFileError):
            parse_detections(mixed, logger)

    def test_utc_times(self):
        drone = {"local_xyz_m": [0.0, 0.0, -25.0]}
        records = [box_record(k, drone, []) for k in range(2)]
        for r, utc in zip(records, ["2024-05-01T10:00:00Z", "2024-05-01T10:00:00.5Z"]):
            del r["time_s"]
            r["utc"] = utc
        path = os.path.join(self.dir, "utc.jsonl")
        write_lines(path, records)
        _, times = parse_detections(path, logger)
        self.assertEqual([0.0, 0.5], times)

    def test_file_identification(self):
        frames, _ = sim.generate(sim.ScenarioConfig(steps=3, seed=1))
        det = os.path.join(self.dir, "det.jsonl")
        truth = os.path.join(self.dir, "truth.jsonl")
        write_detections(det, frames, [0.0, 1.0, 2.0], logger)
        write_truth(truth, frames, logger)
        parser = FrameFileParser(logger)
        info, _ = parser.parse_file(det)
        self.assertEqual("Detection Frame File", info["file_type"])
        info, parsed = parser.parse_file(truth)
        self.assertEqual("Ground Truth File", info["file_type"])
        self.assertEqual([0, 1, 2], [t.step for t in parsed])
        with self.assertRaises(InputFileError):
            parser.parse_file(truth, expected="Detection Frame File")
        with self.assertRaises(InputFileError):
            parser.parse_file(os.path.join(self.dir, "missing.jsonl"))

    def test_truth_errors(self):
        path = os.path.join(self.dir, "truth.jsonl")
        write_lines(path, [
            {"frame": 0, "objects": [{"id": 1, "state": [0.0, 0.0, 0.0, 0.0]}]},
            {"frame": 1, "objects": [{"id": 1, "state": [0.0, 0.0, 0.0, 0.0]}, {"id": 1, "state": [1.0, 0.0, 0.0, 0.0]}]},
        ])
        with self.assertRaises(InputFileError) as ctx:
            parse_truth(path, logger)
        self.assertEqual(2, ctx.exception.line_no)

    def test_estimate_file(self):
        states = np.array([[1.0, 0.1, 2.0, 0.2], [3.0, 0.3, 4.0, 0.4]])
        path = os.path.join(self.dir, "est.json")
        write_estimates(path, [EstimatedTrajectory("0-0", 4, 5, states)], logger)
        with open(path) as f:
            doc = json.loads(f.read())
        self.assertEqual([1.0, 2.0, 0.1, 0.2], doc["trajectories"][0]["states"][0])
        parsed = parse_estimates(path, logger)
        self.assertEqual(("0-0", 4, 5), (parsed[0].label, parsed[0].birth_step, parsed[0].end_step))
        np.testing.assert_array_equal(states, parsed[0].states)
        doc["trajectories"][0]["end_step"] = 9
        with open(path, "w") as f:
            f.write(json.dumps(doc))
        with self.assertRaises(InputFileError):
            parse_estimates(path, logger)


class TestCommands(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = self.tmp.name

    def tearDown(self):
        self.tmp.cleanup()

    def _simulate(self, steps=101, seed=0):
        result = cmd_simulate(write_config(self.dir, steps, seed), os.path.join(self.dir, "sim"), logger)
        self.assertEqual(0, result["exit_code"])
        return result["response"]

    def test_track_empty_measurements(self):
        pose = sim.scenario_pose(sim.default_scenario())
        path = os.path.join(self.dir, "empty.jsonl")
        write_lines(path, [detection_record(Frame(k, pose), k / 6.0) for k in range(5)])
        out = os.path.join(self.dir, "track")
        result = cmd_track(path, write_config(self.dir), out, logger)
        self.assertEqual(0, result["exit_code"])
        self.assertEqual(0, result["response"]["trajectories"])
        self.assertEqual([], parse_estimates(result["response"]["estimates"], logger))
        diagnostics = read_csv(result["response"]["diagnostics"])
        self.assertEqual(DIAGNOSTIC_COLUMNS, list(diagnostics.columns))
        self.assertEqual([0, 1, 2, 3, 4], list(diagnostics["step"]))

    def test_track_short_run(self):
        files = self._simulate(steps=15)
        result = cmd_track(files["detections"], os.path.join(self.dir, "config.json"), os.path.join(self.dir, "track"), logger)
        self.assertEqual(0, result["exit_code"])
        estimates = parse_estimates(result["response"]["estimates"], logger)
        self.assertGreaterEqual(len(estimates), 1)
        truth = parse_truth(files["truth"], logger)
        last = truth[-1].positions
        ending = [e for e in estimates if e.end_step == 14]
        distances = [np.min(np.hypot(last[:, 0] - e.states[-1, 0], last[:, 1] - e.states[-1, 2])) for e in ending]
        self.assertLess(min(distances), 3.0)

    def test_evaluate(self):
        files = self._simulate()
        _, truths = sim.generate(sim.default_scenario())
        est_path = os.path.join(self.dir, "exact.json")
        exact = [EstimatedTrajectory(f"{t.id}", t.birth_step, t.end_step, t.states) for t in truths]
        write_estimates(est_path, exact, logger)
        result = cmd_evaluate(files["truth"], est_path, os.path.join(self.dir, "eval0"), logger)
        self.assertEqual(0, result["exit_code"])
        self.assertEqual(0.0, result["response"]["total"])
        self.assertEqual(101, result["response"]["steps"])

        shifted = [EstimatedTrajectory(e.label, e.birth_step, e.end_step, e.states + np.array([1.0, 0.0, 0.0, 0.0])) for e in exact]
        write_estimates(est_path, shifted, logger)
        out = os.path.join(self.dir, "eval1")
        result = cmd_evaluate(files["truth"], est_path, out, logger)
        self.assertEqual(0, result["exit_code"])
        rows = read_csv(os.path.join(out, GOSPA_FILE))
        self.assertEqual(101, len(rows))
        counts = np.array([len(t.ids) for t in parse_truth(files["truth"], logger)])
        np.testing.assert_allclose(np.sqrt(counts), rows["total"].to_numpy(), atol=1e-9)
        rms = float(np.sqrt(np.mean(rows["total"].to_numpy() ** 2)))
        with open(os.path.join(out, SUMMARY_FILE)) as f:
            summary = json.loads(f.read())
        self.assertAlmostEqual(rms, summary["total"], places=9)
        self.assertAlmostEqual(summary["total"], summary["localization"], places=9)

    def test_evaluate_out_of_range(self):
        files = self._simulate(steps=5)
        est_path = os.path.join(self.dir, "late.json")
        write_estimates(est_path, [EstimatedTrajectory("x", 3, 8, np.zeros((6, 4)))], logger)
        result = cmd_evaluate(files["truth"], est_path, os.path.join(self.dir, "eval"), logger)
        self.assertEqual(2, result["exit_code"])

    def test_calibrate(self):
        files = self._simulate()
        out = os.path.join(self.dir, "cal", "calibration.json")
        result = cmd_calibrate(files["detections"], files["truth"], out, logger)
        self.assertEqual(0, result["exit_code"])
        report = result["response"]
        self.assertGreater(report["pd"], 0.7)
        self.assertLessEqual(report["pd"], 1.0)
        self.assertGreater(report["kappa"], 100.0)
        with open(out) as f:
            doc = json.loads(f.read())
        self.assertEqual(101, len(doc["assignments"]))

    def test_calibrate_mismatched_frames(self):
        files = self._simulate(steps=10)
        frames, _ = sim.generate(sim.ScenarioConfig(steps=5))
        truth = os.path.join(self.dir, "short_truth.jsonl")
        write_truth(truth, frames, logger)
        result = cmd_calibrate(files["detections"], truth, os.path.join(self.dir, "cal.json"), logger)
        self.assertEqual(2, result["exit_code"])

    def test_main(self):
        config_path = write_config(self.dir, steps=4)
        out = os.path.join(self.dir, "cli")
        stdout = io.StringIO()
        with contextlib.redirect_stdout(stdout):
            code = tracker_app.main(["simulate", "--config", config_path, "--out", out, "--seed", "3"])
        self.assertEqual(0, code)
        self.assertEqual(4, json.loads(stdout.getvalue())["frames"])
        stderr = io.StringIO()
        with contextlib.redirect_stderr(stderr):
            code = tracker_app.main(["track", os.path.join(self.dir, "missing.jsonl"), "--config", config_path, "--out", out])
        self.assertEqual(2, code)


class TestRunConfig(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = self.tmp.name

    def tearDown(self):
        self.tmp.cleanup()

    def test_default_is_valid(self):
        self.assertTrue(validate_run_config(obj_cp(DEFAULT_RUN_CONFIG)))

    def test_validation_lists_every_error(self):
        config = obj_cp(DEFAULT_RUN_CONFIG)
        config["filter"]["L"] = 0
        config["sensor"]["colour"] = "red"
        del config["gospa"]["c"]
        with self.assertRaises(InvalidInputError) as ctx:
            validate_run_config(config)
        message = f"{ctx.exception}"
        self.assertIn("filter.L", message)
        self.assertIn("sensor.colour", message)
        self.assertIn("gospa.c", message)

    def test_read_merges_partial_file(self):
        path = os.path.join(self.dir, "partial.json")
        with open(path, "w") as f:
            f.write(json.dumps({"sensor": {"kappa": 100.0}}))
        config = read_run_config(path, logger)
        self.assertEqual(100.0, config["sensor"]["kappa"])
        self.assertEqual(0.9, config["sensor"]["pd"])

    def test_read_rejects_missing_or_broken_file(self):
        with self.assertLogs(logger, level="ERROR"):
            with self.assertRaises(InvalidInputError):
                read_run_config(os.path.join(self.dir, "missing.json"), logger)
        broken = os.path.join(self.dir, "broken.json")
        with open(broken, "w") as f:
            f.write('{"filter": {"L": 3')
        with self.assertLogs(logger, level="ERROR"):
            with self.assertRaises(InvalidInputError):
                read_run_config(broken, logger)
        listed = os.path.join(self.dir, "list.json")
        with open(listed, "w") as f:
            f.write("[1, 2]")
        with self.assertRaises(InvalidInputError):
            read_run_config(listed, logger)

    def test_bad_config_exits_with_code_2(self):
        truncated = os.path.join(self.dir, "truncated.json")
        with open(truncated, "w") as f:
            f.write('{"scenario": {"steps": 4')
        bad_value = os.path.join(self.dir, "bad_value.json")
        with open(bad_value, "w") as f:
            f.write(json.dumps({"filter": {"L": 0}}))
        for path in (truncated, os.path.join(self.dir, "missing.json"), bad_value):
            result = cmd_simulate(path, os.path.join(self.dir, "out"), logger)
            self.assertEqual(2, result["exit_code"])
        self.assertFalse(os.path.exists(os.path.join(self.dir, "out")))
        stderr = io.StringIO()
        with contextlib.redirect_stderr(stderr):
            code = tracker_app.main(["simulate", "--config", truncated, "--out", os.path.join(self.dir, "cli")])
        self.assertEqual(2, code)

    def test_overrides(self):
        config = obj_cp(DEFAULT_RUN_CONFIG)
        out = apply_overrides(config, {"mode": "pmbm", "lscan": 3, "likelihood": "l0", "seed": 7, "gospa_c": None})
        self.assertEqual(
            ("PMBM", 3, "L0", 7, 3.0),
            (out["filter"]["mode"], out["filter"]["L"], out["filter"]["likelihood"], out["scenario"]["seed"], out["gospa"]["c"]),
        )
        self.assertEqual("TPMBM", config["filter"]["mode"])

    def test_chunk_list(self):
        self.assertEqual([[1, 2], [3, 4], [5]], list(chunk_list([1, 2, 3, 4, 5], "2")))
        with self.assertRaises(InvalidInputError):
            list(chunk_list([1], 0))

    def test_ts_to_utc(self):
        self.assertEqual(60.0, ts_to_utc("1970-01-01T00:01:00Z"))
        self.assertEqual(1704067200.0, ts_to_utc("2024-01-01 00:00:00 UTC"))
        self.assertEqual(1704067200.25, ts_to_utc("2024-01-01T00:00:00.25+00:00"))
        with self.assertRaises(InvalidInputError):
            ts_to_utc("yesterday")
