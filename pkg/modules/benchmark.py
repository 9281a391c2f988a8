"""
Monte-Carlo comparison of filter variants on a simulated scenario.
"""
import math
import time
import threading
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import binomtest

from modules import sim
from modules.metrics import GospaParams, gospa, positions_at, rms_gospa_decomposition
from modules.tpmbm import FilterConfig, Frame, check_invariants
from modules.tracker import Tracker
from utils.errors import InvalidInputError, TrackerError
from utils.utils import chunk_list

SIGN_TEST_PAIRS = (
    ("TPMBM-L1N5-L5", "TPMBM-L1N5-L1"),
    ("TPMBM-L1N5-L1", "PMBM-L1N5"),
    ("PMBM-L1N5", "PMBM-L0N1"),
)


@dataclass(frozen=True)
class FilterVariant:
    """
    A filter configuration under comparison.

    The name follows the L<likelihood>N<iterations> convention: L0 is the
    plain IPLF marginal likelihood, L1 the improved one, and N the IPLF
    iteration cap. TPMBM names carry the L-scan window as a suffix.
    """

    name: str
    mode: str
    L: int
    iplf_iters: int
    likelihood: str

    def filter_config(self, base=None):
        base = FilterConfig() if base is None else base
        return replace(base, mode=self.mode, L=self.L, iplf_max_iters=self.iplf_iters, likelihood=self.likelihood)


@dataclass
class RunResult:
    variant: str
    seed: int
    per_step: list
    runtime_s: float
    steps: list = field(default_factory=list)

    @property
    def summary(self):
        return rms_gospa_decomposition(self.per_step)


def default_variants():
    return [
        FilterVariant("PMBM-L0N1", "PMBM", 1, 1, "L0"),
        FilterVariant("PMBM-L0N5", "PMBM", 1, 5, "L0"),
        FilterVariant("PMBM-L1N5", "PMBM", 1, 5, "L1"),
        FilterVariant("TPMBM-L0N1-L5", "TPMBM", 5, 1, "L0"),
        FilterVariant("TPMBM-L0N5-L5", "TPMBM", 5, 5, "L0"),
        FilterVariant("TPMBM-L1N5-L1", "TPMBM", 1, 5, "L1"),
        FilterVariant("TPMBM-L1N5-L5", "TPMBM", 5, 5, "L1"),
    ]


def evaluate_estimates(truths, estimates, steps, params=GospaParams()):
    """Per-step GOSPA between truth and estimated positions."""
    return [gospa(positions_at(truths, k), positions_at(estimates, k), params) for k in steps]


def run_single(variant, scenario, base_cfg, seed, logger, gospa_params=GospaParams(), check=False):
    """
    Simulates one scenario realization and filters it with one variant.

    Args:
        variant (FilterVariant): Filter under test.
        scenario (ScenarioConfig): Scenario; its seed is replaced by seed.
        base_cfg (FilterConfig): Settings not fixed by the variant.
        seed (int): Scenario seed.
        logger (logging.Logger): Passed to the tracker.
        gospa_params (GospaParams): Metric parameters.
        check (bool): Verify the posterior bookkeeping after every step.

    Returns:
        RunResult: Per-step GOSPA and filter runtime.
    """
    cfg = variant.filter_config(base_cfg)
    run_scenario = replace(scenario, seed=int(seed))
    frames, truths = sim.generate(run_scenario)
    tracker = Tracker(logger, cfg, sim.filter_models(run_scenario), instance_name=f"{variant.name}/{seed}")
    t0 = time.perf_counter()
    for f in frames:
        tracker.step(Frame(f.step, f.pose, f.measurements))
        if check:
            check_invariants(tracker.posterior, cfg)
    estimates = tracker.estimates()
    runtime = time.perf_counter() - t0
    steps = [f.step for f in frames]
    return RunResult(variant.name, int(seed), evaluate_estimates(truths, estimates, steps, gospa_params), runtime, steps)


def _run_chunk(jobs, scenario, base_cfg, logger, state_manager, db, gospa_params, results, lock):
    for variant, seed in jobs:
        key = f"{variant.name}/{seed}"
        if state_manager is not None:
            state_manager.mark_run_in_progress(key)
        try:
            res = run_single(variant, scenario, base_cfg, seed, logger, gospa_params)
        except TrackerError as e:
            logger.critical(f"_run_chunk: Raised {e} for run {key}")
            if state_manager is not None:
                state_manager.mark_run_failed(key, e)
            continue
        summary = res.summary
        with lock:
            results.setdefault(variant.name, []).append(res)
        if db is not None:
            db.add_run(variant.name, seed, summary, res.runtime_s)
        if state_manager is not None:
            state_manager.mark_run_done(key, summary["total"], res.runtime_s)
        logger.info(f"_run_chunk: run {key} RMS-GOSPA {summary['total']:.4f} m in {res.runtime_s:.2f} s")


def run_monte_carlo(variants, scenario, base_cfg, n_runs, logger, state_manager=None, threads=1, db=None, gospa_params=GospaParams()):
    """
    Runs every variant on n_runs scenario seeds.

    Seeds are scenario.seed, scenario.seed + 1, ... so all variants see the
    same realizations, which keeps the comparison paired. Jobs are split into
    one chunk per worker thread.

    Returns:
        dict: Variant name -> list of RunResult ordered by seed. Failed runs are
            logged and left out.
    """
    if n_runs < 1:
        raise InvalidInputError(f"run_monte_carlo: n_runs must be >= 1, got {n_runs}")
    seeds = [scenario.seed + i for i in range(n_runs)]
    jobs = [(v, s) for v in variants for s in seeds]
    if state_manager is not None:
        for v, s in jobs:
            state_manager.add_run(f"{v.name}/{s}")
    results = {}
    lock = threading.Lock()
    workers = []
    size = max(1, math.ceil(len(jobs) / max(1, int(threads))))
    for chunk in chunk_list(jobs, size):
        t = threading.Thread(
            target=_run_chunk,
            args=(chunk, scenario, base_cfg, logger, state_manager, db, gospa_params, results, lock),
        )
        t.start()
        workers.append(t)
    for t in workers:
        t.join()
    return {name: sorted(runs, key=lambda r: r.seed) for name, runs in results.items()}


def paired_sign_test(a, b):
    """
    One-sided paired sign test of a <= b.

    Ties are dropped. The p-value is that of observing at least as many pairs
    with a < b under equal odds.

    Returns:
        dict: {"wins", "losses", "ties", "p_value"}.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise InvalidInputError("paired_sign_test: samples differ in length")
    wins = int(np.sum(a < b))
    losses = int(np.sum(a > b))
    ties = int(a.size - wins - losses)
    p = 1.0 if wins + losses == 0 else float(binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue)
    return {"wins": wins, "losses": losses, "ties": ties, "p_value": p}


def sign_test_table(results, pairs=SIGN_TEST_PAIRS):
    out = []
    for better, worse in pairs:
        if better not in results or worse not in results:
            continue
        a = {r.seed: r.summary["total"] for r in results[better]}
        b = {r.seed: r.summary["total"] for r in results[worse]}
        common = sorted(set(a) & set(b))
        row = paired_sign_test([a[s] for s in common], [b[s] for s in common])
        row.update({"better": better, "worse": worse})
        out.append(row)
    return out


def summarize(results):
    """
    Per-variant means over runs.

    Returns:
        dict: Variant name -> {"runs", "rms_gospa", "rms_gospa_std", "localization",
            "missed", "false", "runtime_s"}.
    """
    out = {}
    for name, runs in results.items():
        if not runs:
            continue
        s = [r.summary for r in runs]
        total = np.array([x["total"] for x in s])
        out[name] = {
            "runs": len(runs),
            "rms_gospa": float(total.mean()),
            "rms_gospa_std": float(total.std()),
            "localization": float(np.mean([x["localization"] for x in s])),
            "missed": float(np.mean([x["missed"] for x in s])),
            "false": float(np.mean([x["false"] for x in s])),
            "runtime_s": float(np.mean([r.runtime_s for r in runs])),
        }
    return out
