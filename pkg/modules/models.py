"""
Dynamic and measurement models.

Object state is x = [px, vx, py, vy] on the ground plane of the local frame.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from modules.directional import FovSpec, VmfParams, clutter_intensity, vmf_log_density
from modules.geometry import angles_to_doa, ground_to_doa, ground_to_doas, project_doa_to_ground
from utils.errors import DegenerateGeometryError, InvalidInputError, NoIntersectionError

STATE_DIM = 4
POS_IDX = (0, 2)
VEL_IDX = (1, 3)


@dataclass(frozen=True)
class MotionModel:
    """
    Nearly constant velocity model with survival probability ps.

    F and Q are derived from tau and sigma_q2 at construction.
    """

    tau: float
    sigma_q2: float
    ps: float
    F: np.ndarray = field(init=False, repr=False, compare=False)
    Q: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.tau > 0.0:
            raise InvalidInputError(f"MotionModel: tau must be > 0, got {self.tau}")
        if self.sigma_q2 < 0.0:
            raise InvalidInputError(f"MotionModel: sigma_q2 must be >= 0, got {self.sigma_q2}")
        if not 0.0 <= self.ps <= 1.0:
            raise InvalidInputError(f"MotionModel: ps must lie in [0, 1], got {self.ps}")
        t = self.tau
        block_f = np.array([[1.0, t], [0.0, 1.0]])
        block_q = self.sigma_q2 * np.array([[t ** 3 / 3.0, t ** 2 / 2.0], [t ** 2 / 2.0, t]])
        object.__setattr__(self, "F", np.kron(np.eye(2), block_f))
        object.__setattr__(self, "Q", np.kron(np.eye(2), block_q))

    def predict_gaussian(self, mean, cov):
        return self.F @ mean, self.F @ cov @ self.F.T + self.Q


def build_cv(tau, sigma_q2, ps):
    """F = I2 (x) [[1, tau], [0, 1]], Q = sigma_q2 I2 (x) [[tau^3/3, tau^2/2], [tau^2/2, tau]]."""
    return MotionModel(float(tau), float(sigma_q2), float(ps))


@dataclass(frozen=True)
class BirthModel:
    lambda_b: float
    lambda_b_initial: float
    sigma_v2: float

    def __post_init__(self):
        if self.lambda_b < 0.0 or self.lambda_b_initial < 0.0:
            raise InvalidInputError("BirthModel: birth rates must be >= 0")
        if self.sigma_v2 < 0.0:
            raise InvalidInputError("BirthModel: sigma_v2 must be >= 0")

    def rate(self, step):
        return self.lambda_b_initial if step == 0 else self.lambda_b


@dataclass(frozen=True)
class MeasurementModel:
    """VMF noise with concentration kappa, constant detection probability pd and uniform FoV clutter."""

    kappa: float
    pd: float
    lambda_c: float
    fov: FovSpec

    def __post_init__(self):
        if not self.kappa >= 0.0:
            raise InvalidInputError(f"MeasurementModel: kappa must be >= 0, got {self.kappa}")
        if not 0.0 <= self.pd <= 1.0:
            raise InvalidInputError(f"MeasurementModel: pd must lie in [0, 1], got {self.pd}")
        if self.lambda_c < 0.0:
            raise InvalidInputError(f"MeasurementModel: lambda_c must be >= 0, got {self.lambda_c}")

    def clutter_intensity(self, z):
        return clutter_intensity(z, self.fov, self.lambda_c)


def position(x):
    x = np.asarray(x, dtype=float)
    return np.array([x[0], x[2]])


def doa_mean(x, pose):
    """
    h(x) = R_q (p - s) / ||R_q (p - s)|| with p = (px, py, 0).

    Raises:
        DegenerateGeometryError: If the object sits at the drone position.
    """
    return ground_to_doa(position(x), pose)


def doa_means(xs, pose):
    """h evaluated at every row of an n x 4 state array; returns n x 3."""
    xs = np.asarray(xs, dtype=float).reshape(-1, STATE_DIM)
    return ground_to_doas(xs[:, POS_IDX], pose)


def measurement_log_likelihood(z, x, model, pose):
    """log V(z; h(x), kappa)."""
    return vmf_log_density(z, VmfParams(tuple(doa_mean(x, pose)), model.kappa))


def birth_components(pose, birth, sigma_point_scheme=None, step=1):
    """
    Gaussian birth density for one frame.

    The angular position of a new object is uniform over the FoV rectangle,
    approximated by N(0, diag(fx^2, fy^2)/12). Its sigma points are mapped to
    DOAs and then to the ground, and the positional mean and covariance are the
    weighted moments of the ground points. Velocity has zero mean and variance
    sigma_v2 on each axis, uncorrelated with position.

    Args:
        pose (CameraPose): Pose of the current frame.
        birth (BirthModel): Birth rates and velocity prior.
        sigma_point_scheme (callable, optional): (mean, cov) -> (points, weights).
            Defaults to the unscented transform with centre weight 1/3.
        step (int): Time index; step 0 uses the initial birth rate.

    Returns:
        tuple: (lambda_bar, mean 4-vector, 4x4 covariance).

    Raises:
        DegenerateGeometryError: If a sigma-point ray misses the ground.
    """
    if sigma_point_scheme is None:
        from modules.slr_filters import GaussianDensity, unscented_points

        def sigma_point_scheme(mean, cov):
            return unscented_points(GaussianDensity(mean, cov))

    fx, fy = pose.fov
    r_b = np.diag([fx * fx, fy * fy]) / 12.0
    points, weights = sigma_point_scheme(np.zeros(2), r_b)
    ground = []
    for phi, theta in points:
        try:
            ground.append(project_doa_to_ground(angles_to_doa(phi, theta), pose))
        except NoIntersectionError as e:
            raise DegenerateGeometryError(
                f"birth_components: sigma point ({math.degrees(phi):.2f}, {math.degrees(theta):.2f}) deg misses the ground"
            ) from e
    ground = np.array(ground)
    m_pos = weights @ ground
    d = ground - m_pos
    p_pos = (weights[:, None] * d).T @ d
    p_pos = 0.5 * (p_pos + p_pos.T)
    mean = np.array([m_pos[0], 0.0, m_pos[1], 0.0])
    cov = np.zeros((STATE_DIM, STATE_DIM))
    cov[np.ix_(POS_IDX, POS_IDX)] = p_pos
    cov[VEL_IDX[0], VEL_IDX[0]] = birth.sigma_v2
    cov[VEL_IDX[1], VEL_IDX[1]] = birth.sigma_v2
    return birth.rate(step), mean, cov
