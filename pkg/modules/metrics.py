"""
GOSPA between finite sets of ground positions (alpha = 2) and its RMS over time.
"""
import math
from dataclasses import dataclass

import numpy as np

from modules.assignment import solve_optimal
from utils.errors import InvalidInputError


@dataclass(frozen=True)
class GospaParams:
    c: float = 3.0
    p: float = 2.0
    alpha: float = 2.0

    def __post_init__(self):
        if not self.c > 0.0:
            raise InvalidInputError(f"GospaParams: c must be > 0, got {self.c}")
        if not self.p >= 1.0:
            raise InvalidInputError(f"GospaParams: p must be >= 1, got {self.p}")
        if self.alpha != 2.0:
            raise InvalidInputError(f"GospaParams: only alpha = 2 is supported, got {self.alpha}")


@dataclass(frozen=True)
class GospaResult:
    """
    GOSPA value and its decomposition. Each part is stored as a p-th root so that
    total^p = localization^p + missed^p + false_^p.
    """

    total: float
    localization: float
    missed: float
    false_: float
    n_missed: int = 0
    n_false: int = 0


def _as_points(x):
    a = np.asarray(x, dtype=float)
    if a.size == 0:
        return np.zeros((0, 2))
    return a.reshape(-1, 2)


def gospa(truth, estimate, params=GospaParams()):
    """
    GOSPA distance with alpha = 2.

    The assignment minimizes sum of min(d, c)^p over pairs plus c^p / 2 per
    unassigned element. Pairs at distance >= c are reported as one missed and
    one false element.

    Args:
        truth (array-like): n x 2 positions.
        estimate (array-like): k x 2 positions.
        params (GospaParams): Cutoff c and exponent p.

    Returns:
        GospaResult: Distance and decomposition.
    """
    x, y = _as_points(truth), _as_points(estimate)
    c, p = params.c, params.p
    half = c ** p / 2.0
    swap = x.shape[0] > y.shape[0]
    rows, cols = (y, x) if swap else (x, y)
    loc = 0.0
    n_pairs = 0
    if rows.shape[0]:
        d = np.linalg.norm(rows[:, None, :] - cols[None, :, :], axis=2)
        sol = solve_optimal(np.minimum(d, c) ** p - c ** p, tie_break=False)
        for i, j in enumerate(sol.columns):
            if d[i, j] < c:
                loc += d[i, j] ** p
                n_pairs += 1
    n_missed = x.shape[0] - n_pairs
    n_false = y.shape[0] - n_pairs
    missed = n_missed * half
    false_ = n_false * half
    total = loc + missed + false_
    inv = 1.0 / p
    return GospaResult(total ** inv, loc ** inv, missed ** inv, false_ ** inv, n_missed, n_false)


def rms_gospa_over_time(per_step, K=None):
    """sqrt((1/K) sum_k d_k^2) over per-step GOSPA values."""
    if not per_step:
        raise InvalidInputError("rms_gospa_over_time: empty sequence")
    if K is not None and K != len(per_step):
        raise InvalidInputError(f"rms_gospa_over_time: K={K} does not match {len(per_step)} values")
    values = np.array([r.total if isinstance(r, GospaResult) else float(r) for r in per_step])
    return float(math.sqrt(np.mean(values ** 2)))


def rms_gospa_decomposition(per_step):
    if not per_step:
        raise InvalidInputError("rms_gospa_decomposition: empty sequence")
    out = {}
    for key, attr in (("total", "total"), ("localization", "localization"), ("missed", "missed"), ("false", "false_")):
        v = np.array([getattr(r, attr) for r in per_step])
        out[key] = float(math.sqrt(np.mean(v ** 2)))
    return out


def gospa_csv_rows(per_step, steps):
    """Rows (step, total, localization, missed, false) for the per-step CSV."""
    if len(per_step) != len(steps):
        raise InvalidInputError("gospa_csv_rows: steps and results differ in length")
    return [
        {"step": int(k), "total": r.total, "localization": r.localization, "missed": r.missed, "false": r.false_}
        for k, r in zip(steps, per_step)
    ]


def positions_at(trajectories, step):
    """
    Ground positions (px, py) of every trajectory that exists at step.

    Trajectories need birth_step, end_step and states rows [px, vx, py, vy].
    """
    out = []
    for t in trajectories:
        if t.birth_step <= step <= t.end_step:
            s = t.states[step - t.birth_step]
            out.append((s[0], s[2]))
    return np.array(out, dtype=float).reshape(-1, 2)
