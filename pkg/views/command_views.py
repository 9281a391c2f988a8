import json
import os

import numpy as np

from artifacts.file_parser import FrameFileParser
from artifacts.parsers.detection_file import write_detections
from artifacts.parsers.estimate_file import parse_estimates, write_csv, write_estimates
from artifacts.parsers.truth_file import write_truth
from modules import benchmark, sim
from modules.calibration import AnnotatedFrame, coordinate_ascent
from modules.directional import FovSpec
from modules.geometry import ground_to_doa
from modules.metrics import GospaParams, gospa, gospa_csv_rows, positions_at, rms_gospa_decomposition
from modules.obj import RunStateManager
from modules.results_db import BenchmarkStore
from modules.tpmbm import FilterConfig
from modules.tracker import Tracker, models_from_config
from utils.errors import InvalidInputError, TrackerError
from utils.utils import apply_overrides, read_run_config, validate_run_config

DETECTIONS_FILE = "detections.jsonl"
TRUTH_FILE = "truth.jsonl"
ESTIMATES_FILE = "estimates.json"
DIAGNOSTICS_FILE = "diagnostics.csv"
GOSPA_FILE = "gospa.csv"
SUMMARY_FILE = "summary.json"
CALIBRATION_FILE = "calibration.json"
BENCHMARK_FILE = "benchmark.json"

DIAGNOSTIC_COLUMNS = ["step", "globals", "bernoullis", "ppp", "measurements", "runtime_ms"]
GOSPA_COLUMNS = ["step", "total", "localization", "missed", "false"]


def _error_response(name, e, logger):
    code = e.exit_code if isinstance(e, TrackerError) else 3
    logger.critical(f"{name}: Raised {e}")
    return {"response": f"{e}", "exit_code": code}


def load_run_config(config_path, overrides, logger):
    """
    Reads, overrides and validates the run configuration.

    Raises:
        InvalidInputError: Listing every schema violation.
    """
    config = apply_overrides(read_run_config(config_path, logger), overrides or {})
    validate_run_config(config)
    return config


def _out_dir(out_path):
    if os.path.isdir(out_path) is False:
        os.makedirs(out_path)
    return out_path


def _write_json(fpath, doc):
    with open(fpath, "w") as f:
        f.write(json.dumps(doc, indent=2))
        f.write("\n")


def cmd_simulate(config_path, out_path, logger, overrides=None):
    """
    Simulates a scenario and writes its detection and ground-truth files.

    Args:
        config_path (str): Run configuration; None for config/config.json.
        out_path (str): Output directory.
        logger (logging.Logger): The logger object.
        overrides (dict, optional): Command-line overrides, e.g. {"seed": 3}.

    Returns:
        dict: {"response": {"detections", "truth", "frames"} or error message, "exit_code"}.
    """
    try:
        config = load_run_config(config_path, overrides, logger)
        scenario = sim.ScenarioConfig.from_run_config(config)
        frames, _ = sim.generate(scenario)
        out = _out_dir(out_path)
        det_path = os.path.join(out, DETECTIONS_FILE)
        truth_path = os.path.join(out, TRUTH_FILE)
        write_detections(det_path, frames, [f.step * scenario.tau for f in frames], logger)
        write_truth(truth_path, frames, logger)
        logger.info(f"cmd_simulate: Wrote {len(frames):,} frames with seed {scenario.seed} to {out}")
        return {"response": {"detections": det_path, "truth": truth_path, "frames": len(frames)}, "exit_code": 0}
    except Exception as e:
        return _error_response("cmd_simulate", e, logger)


def cmd_track(data_path, config_path, out_path, logger, overrides=None):
    """
    Runs the filter over a detection frame file.

    Writes the trajectory estimates (JSON) and the per-step diagnostics (CSV)
    into out_path.

    Returns:
        dict: {"response": {"estimates", "diagnostics", "trajectories"} or error message, "exit_code"}.
    """
    try:
        config = load_run_config(config_path, overrides, logger)
        parser = FrameFileParser(logger, method=config["camera"]["pixel_method"])
        _, (frames, _) = parser.parse_file(data_path, expected="Detection Frame File")
        tracker = Tracker(logger, FilterConfig.from_dict(config["filter"]), models_from_config(config))
        tracker.run(frames)
        estimates = tracker.estimates()
        out = _out_dir(out_path)
        est_path = os.path.join(out, ESTIMATES_FILE)
        diag_path = os.path.join(out, DIAGNOSTICS_FILE)
        write_estimates(est_path, estimates, logger)
        write_csv(diag_path, tracker.diagnostics, DIAGNOSTIC_COLUMNS, logger)
        logger.info(f"cmd_track: {len(estimates):,} trajectories from {len(frames):,} frames")
        return {"response": {"estimates": est_path, "diagnostics": diag_path, "trajectories": len(estimates)}, "exit_code": 0}
    except Exception as e:
        return _error_response("cmd_track", e, logger)


def annotated_frames(det_frames, truth_frames):
    """
    Pairs detection and truth frames into calibration frames.

    Truth given as states is projected to DOAs through the frame's pose.

    Raises:
        InvalidInputError: If the two files do not cover the same frames.
    """
    det_steps = [f.step for f in det_frames]
    truth_steps = [t.step for t in truth_frames]
    if det_steps != truth_steps:
        missing = sorted(set(det_steps) ^ set(truth_steps))
        raise InvalidInputError(f"detection and truth files cover different frames, e.g. {missing[:5]}")
    out = []
    for f, t in zip(det_frames, truth_frames):
        if t.states.shape[0]:
            doas = np.array([ground_to_doa(p, f.pose) for p in t.positions]).reshape(-1, 3)
        else:
            doas = t.doas
        out.append(AnnotatedFrame(doas, f.measurements, FovSpec.from_pose(f.pose)))
    return out


def cmd_calibrate(data_path, truth_path, out_path, logger, max_rounds=50):
    """
    Estimates pd, kappa and lambda_c from annotated frames and writes the report.

    Returns:
        dict: {"response": calibration report or error message, "exit_code"}.
    """
    try:
        parser = FrameFileParser(logger)
        _, (det_frames, _) = parser.parse_file(data_path, expected="Detection Frame File")
        _, truth_frames = parser.parse_file(truth_path, expected="Ground Truth File")
        result = coordinate_ascent(annotated_frames(det_frames, truth_frames), max_rounds=max_rounds, logger=logger)
        report = result.to_dict()
        directory = os.path.dirname(out_path)
        if directory:
            _out_dir(directory)
        _write_json(out_path, report)
        logger.info(f"cmd_calibrate: pd={result.pd:.4f} kappa={result.kappa:.2f} lambda_c={result.lambda_c:.4f} in {result.iterations} rounds")
        report.pop("assignments")
        return {"response": report, "exit_code": 0}
    except Exception as e:
        return _error_response("cmd_calibrate", e, logger)


def evaluate_files(truth_frames, estimates, params):
    """
    Per-step GOSPA of estimates against truth.

    Raises:
        InvalidInputError: If an estimate covers steps outside the truth's range.
    """
    steps = [t.step for t in truth_frames]
    if not steps:
        raise InvalidInputError("evaluate_files: empty ground truth")
    for e in estimates:
        if e.birth_step < steps[0] or e.end_step > steps[-1]:
            raise InvalidInputError(f"estimate {e.label} covers steps {e.birth_step}..{e.end_step} outside truth steps {steps[0]}..{steps[-1]}")
    per_step = [gospa(t.positions, positions_at(estimates, t.step), params) for t in truth_frames]
    return steps, per_step


def cmd_evaluate(truth_path, estimate_path, out_path, logger, config_path=None, overrides=None):
    """
    Writes the per-step GOSPA CSV and the RMS-GOSPA summary of an estimate file.

    Returns:
        dict: {"response": RMS summary or error message, "exit_code"}.
    """
    try:
        config = load_run_config(config_path, overrides, logger)
        params = GospaParams(**config["gospa"])
        _, truth_frames = FrameFileParser(logger).parse_file(truth_path, expected="Ground Truth File")
        estimates = parse_estimates(estimate_path, logger)
        steps, per_step = evaluate_files(truth_frames, estimates, params)
        out = _out_dir(out_path)
        write_csv(os.path.join(out, GOSPA_FILE), gospa_csv_rows(per_step, steps), GOSPA_COLUMNS, logger)
        summary = rms_gospa_decomposition(per_step)
        summary["steps"] = len(steps)
        _write_json(os.path.join(out, SUMMARY_FILE), summary)
        logger.info(f"cmd_evaluate: RMS-GOSPA {summary['total']:.4f} m over {len(steps)} steps")
        return {"response": summary, "exit_code": 0}
    except Exception as e:
        return _error_response("cmd_evaluate", e, logger)


def cmd_benchmark(config_path, out_path, logger, runs=None, threads=None, overrides=None, variants=None):
    """
    Monte-Carlo comparison of the filter variants on the configured scenario.

    Every run is stored in the SQLite results database; the summary and the
    paired sign tests are written to out_path.

    Returns:
        dict: {"response": {"summary", "sign_tests", "progress"} or error message, "exit_code"}.
    """
    try:
        config = load_run_config(config_path, overrides, logger)
        n_runs = int(runs if runs is not None else config["benchmark"]["runs"])
        n_threads = int(threads if threads is not None else config["benchmark"]["threads"])
        db_path = config["benchmark"]["db_path"]
        if os.path.dirname(db_path):
            _out_dir(os.path.dirname(db_path))
        state_manager = RunStateManager()
        results = benchmark.run_monte_carlo(
            variants or benchmark.default_variants(),
            sim.ScenarioConfig.from_run_config(config),
            FilterConfig.from_dict(config["filter"]),
            n_runs,
            logger,
            state_manager=state_manager,
            threads=n_threads,
            db=BenchmarkStore(db_path, logger),
            gospa_params=GospaParams(**config["gospa"]),
        )
        doc = {
            "summary": benchmark.summarize(results),
            "sign_tests": benchmark.sign_test_table(results),
            "progress": state_manager.progress(),
        }
        out = _out_dir(out_path)
        _write_json(os.path.join(out, BENCHMARK_FILE), doc)
        return {"response": doc, "exit_code": 0}
    except Exception as e:
        return _error_response("cmd_benchmark", e, logger)
