"""
Measurement-model calibration (pd, kappa, lambda_c) from annotated frames.

Each measurement gets an auxiliary label: 0 for clutter or the 1-based index of
the annotated object that generated it. For fixed labels the likelihood
factorizes and the parameters have closed forms; for fixed parameters the
labels of every frame come from an optimal assignment. Alternating the two
never decreases the likelihood.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect
from scipy.special import xlogy

from modules.assignment import solve_optimal
from modules.directional import FovSpec, bessel_ratio, clutter_constant, vmf_log_normalizer
from utils.errors import InvalidInputError, NumericalError

PD_EPS = 1e-4
LAMBDA_MIN = 1e-6
KAPPA_BRACKET = (1e-6, 1e7)
KAPPA_RTOL = 1e-8
INIT_PD = 0.9
INIT_KAPPA = 20.0


@dataclass(frozen=True)
class AnnotatedFrame:
    """Annotated object DOAs y_k and detector DOAs z_k of one frame."""

    truth_doas: np.ndarray
    measured_doas: np.ndarray
    fov: FovSpec

    def __post_init__(self):
        for name in ("truth_doas", "measured_doas"):
            v = np.asarray(getattr(self, name), dtype=float).reshape(-1, 3)
            if v.size and np.abs(np.linalg.norm(v, axis=1) - 1.0).max() > 1e-9:
                raise InvalidInputError(f"AnnotatedFrame: {name} must be unit vectors")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class FrameAssignment:
    labels: tuple

    def __post_init__(self):
        objects = [a for a in self.labels if a > 0]
        if len(objects) != len(set(objects)):
            raise InvalidInputError("FrameAssignment: an object is assigned more than one measurement")

    def clutter_count(self):
        return sum(1 for a in self.labels if a == 0)

    def detection_count(self):
        return sum(1 for a in self.labels if a > 0)


@dataclass(frozen=True)
class ClosedFormParams:
    lambda_c: float
    pd: float
    r_bar: float
    kappa: float
    kappa_approx: float


@dataclass
class CalibrationResult:
    pd: float
    kappa: float
    lambda_c: float
    assignments: list
    lower_bound: float
    iterations: int
    trace: list = field(default_factory=list)
    diagnostic: str = ""

    def to_dict(self):
        return {
            "pd": self.pd,
            "kappa": self.kappa,
            "lambda_c": self.lambda_c,
            "lower_bound": self.lower_bound,
            "iterations": self.iterations,
            "lower_bound_trace": list(self.trace),
            "diagnostic": self.diagnostic,
            "assignments": [list(a.labels) for a in self.assignments],
        }


def _check_open_params(pd, lambda_c):
    if not 0.0 < pd < 1.0:
        raise InvalidInputError(f"pd must lie in (0, 1) for association, got {pd}")
    if not lambda_c > 0.0:
        raise InvalidInputError(f"lambda_c must be > 0 for association, got {lambda_c}")


def association_cost(frame, pd, kappa, lambda_c):
    """
    m x (n + m) cost matrix of one frame: object columns then one clutter column per measurement.
    """
    _check_open_params(pd, lambda_c)
    z, y = frame.measured_doas, frame.truth_doas
    m, n = z.shape[0], y.shape[0]
    cost = np.full((m, n + m), np.inf)
    if n:
        log_v = vmf_log_normalizer(kappa) + kappa * (z @ y.T)
        cost[:, :n] = -(math.log(pd) + log_v - math.log(1.0 - pd))
    clutter = -math.log(lambda_c / clutter_constant(frame.fov))
    cost[np.arange(m), n + np.arange(m)] = clutter
    return cost


def associate_frame(frame, pd, kappa, lambda_c):
    """
    Most likely labeling of one frame's measurements for fixed parameters.

    Returns:
        FrameAssignment: Label 0 for clutter, i + 1 for annotated object i.

    Raises:
        InvalidInputError: If pd is not in (0, 1) or lambda_c <= 0.
    """
    cost = association_cost(frame, pd, kappa, lambda_c)
    if cost.shape[0] == 0:
        return FrameAssignment(())
    n = frame.truth_doas.shape[0]
    sol = solve_optimal(cost, tie_break=False)
    return FrameAssignment(tuple(col + 1 if col < n else 0 for col in sol.columns))


def _sufficient_statistics(frames, assignments):
    if len(frames) != len(assignments):
        raise InvalidInputError("frames and assignments differ in length")
    clutter = 0
    detections = 0
    objects = 0
    dot_sum = 0.0
    clutter_log_u = 0.0
    for f, a in zip(frames, assignments):
        if len(a.labels) != f.measured_doas.shape[0]:
            raise InvalidInputError("assignment length does not match the measurement count")
        objects += f.truth_doas.shape[0]
        for j, label in enumerate(a.labels):
            if label == 0:
                clutter += 1
                clutter_log_u += math.log(clutter_constant(f.fov))
            else:
                detections += 1
                dot_sum += float(f.measured_doas[j] @ f.truth_doas[label - 1])
    return clutter, detections, objects, dot_sum, clutter_log_u


def log_likelihood(frames, assignments, pd, kappa, lambda_c):
    """
    Log likelihood of measurements and labels:

        sum_k [ |Z0_k| log(lambda_c / u^C) + (n_k - d_k) log(1 - pd) + d_k log pd
                + sum_det (log(kappa / sinh kappa) + kappa z^T y) ] - K lambda_c

    with 0 log 0 = 0.
    """
    clutter, detections, objects, dot_sum, clutter_log_u = _sufficient_statistics(frames, assignments)
    out = float(xlogy(clutter, lambda_c)) - clutter_log_u
    out += float(xlogy(objects - detections, 1.0 - pd)) + float(xlogy(detections, pd))
    if detections:
        out += detections * vmf_log_normalizer(kappa) + kappa * dot_sum
    return out - len(frames) * lambda_c


def solve_kappa(r_bar):
    """
    Solves coth(kappa) - 1/kappa = r_bar by bisection on the fixed bracket.

    Raises:
        InvalidInputError: If r_bar <= 0 or r_bar >= 1.
    """
    if not 0.0 < r_bar < 1.0:
        raise InvalidInputError(f"solve_kappa: mean resultant length must lie in (0, 1), got {r_bar}")
    lo, hi = KAPPA_BRACKET
    if r_bar <= bessel_ratio(lo):
        return lo
    if r_bar >= bessel_ratio(hi):
        return hi
    return float(bisect(lambda k: bessel_ratio(k) - r_bar, lo, hi, rtol=KAPPA_RTOL, maxiter=500))


def closed_form_params(frames, assignments):
    """
    Maximizers of the likelihood for fixed labels.

    Returns:
        ClosedFormParams: lambda_c = clutter per frame, pd = detections / objects,
            r_bar = mean z^T y over detections, kappa from r_bar by bisection and
            the approximation 1 / (1 - r_bar).

    Raises:
        InvalidInputError: With no frames, no detections, or r_bar <= 0.
    """
    if not frames:
        raise InvalidInputError("closed_form_params: no frames")
    clutter, detections, objects, dot_sum, _ = _sufficient_statistics(frames, assignments)
    if detections == 0:
        raise InvalidInputError("closed_form_params: no detections, kappa is undefined")
    lambda_c = max(LAMBDA_MIN, clutter / len(frames))
    pd = min(1.0 - PD_EPS, max(PD_EPS, detections / objects))
    r_bar = dot_sum / detections
    if r_bar <= 0.0:
        raise InvalidInputError(f"closed_form_params: mean resultant length {r_bar} <= 0")
    r_bar = min(r_bar, 1.0 - 1e-15)
    return ClosedFormParams(lambda_c, pd, r_bar, solve_kappa(r_bar), 1.0 / (1.0 - r_bar))


def initial_params(frames):
    excess = [max(0, f.measured_doas.shape[0] - f.truth_doas.shape[0]) for f in frames]
    lambda_c = max(0.5, float(np.mean(excess))) if excess else 0.5
    return INIT_PD, INIT_KAPPA, lambda_c


def coordinate_ascent(frames, init_params=None, max_rounds=50, tol=1e-6, logger=None):
    """
    Alternates per-frame association and the closed-form parameter step.

    Args:
        frames (list): AnnotatedFrame objects.
        init_params (tuple, optional): (pd, kappa, lambda_c); defaults to pd 0.9,
            kappa 20 and lambda_c = max(0.5, mean excess measurements per frame).
        max_rounds (int): Round cap.
        tol (float): Stop when the likelihood improves by less than tol.
        logger (logging.Logger, optional): Receives per-round progress at DEBUG.

    Returns:
        CalibrationResult: Final parameters, labels and the likelihood trace.

    Raises:
        NumericalError: If a coordinate step decreases the likelihood.
    """
    if not frames:
        raise InvalidInputError("coordinate_ascent: no frames")
    pd, kappa, lambda_c = init_params if init_params is not None else initial_params(frames)
    pd = min(1.0 - PD_EPS, max(PD_EPS, pd))
    lambda_c = max(LAMBDA_MIN, lambda_c)
    previous = None
    previous_labels = None
    trace = []
    diagnostic = ""
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        assignments = [associate_frame(f, pd, kappa, lambda_c) for f in frames]
        after_labels = log_likelihood(frames, assignments, pd, kappa, lambda_c)
        if previous is not None and after_labels < previous - 1e-9 * (1.0 + abs(previous)):
            raise NumericalError(f"coordinate_ascent: association step decreased the likelihood ({previous} -> {after_labels})")
        try:
            cf = closed_form_params(frames, assignments)
            pd, kappa, lambda_c = cf.pd, cf.kappa, cf.lambda_c
        except InvalidInputError as e:
            clutter = sum(a.clutter_count() for a in assignments)
            lambda_c = max(LAMBDA_MIN, clutter / len(frames))
            pd = PD_EPS
            diagnostic = f"{e}"
            if logger is not None:
                logger.warning(f"coordinate_ascent: {e}, keeping kappa={kappa}")
        value = log_likelihood(frames, assignments, pd, kappa, lambda_c)
        if value < after_labels - 1e-9 * (1.0 + abs(after_labels)):
            raise NumericalError(f"coordinate_ascent: parameter step decreased the likelihood ({after_labels} -> {value})")
        trace.append(value)
        if logger is not None:
            logger.debug(f"coordinate_ascent: round {rounds} L={value:.6f} pd={pd:.4f} kappa={kappa:.2f} lambda_c={lambda_c:.4f}")
        labels = [a.labels for a in assignments]
        converged = previous is not None and (labels == previous_labels or value - previous < tol)
        previous, previous_labels = value, labels
        if converged:
            break
    return CalibrationResult(pd, kappa, lambda_c, assignments, previous, rounds, trace, diagnostic)
