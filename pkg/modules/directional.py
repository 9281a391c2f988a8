"""
Von Mises-Fisher distribution on the unit sphere S2 and the FoV clutter model.

Densities are taken with respect to the uniform distribution on S2, so the
uniform density is 1 and a VMF with kappa = 0 reduces to it.
"""
import math
from dataclasses import dataclass

import numpy as np

from utils.errors import InvalidInputError

SMALL_KAPPA = 1e-3
LOG_4PI = math.log(4.0 * math.pi)


@dataclass(frozen=True)
class VmfParams:
    mu: tuple
    kappa: float

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        if mu.shape != (3,) or abs(np.linalg.norm(mu) - 1.0) > 1e-9:
            raise InvalidInputError(f"VmfParams: mean direction must be a unit 3-vector, got {self.mu}")
        if not (self.kappa >= 0.0) or not math.isfinite(self.kappa):
            raise InvalidInputError(f"VmfParams: kappa must be finite and >= 0, got {self.kappa}")
        object.__setattr__(self, "mu", tuple(float(v) for v in mu))
        object.__setattr__(self, "kappa", float(self.kappa))

    @property
    def mean_direction(self):
        return np.array(self.mu)


@dataclass(frozen=True)
class FovSpec:
    """Angular field of view (fx, fy) in radians."""

    fx: float
    fy: float

    def __post_init__(self):
        if not (0.0 < self.fx <= 2.0 * math.pi) or not (0.0 < self.fy <= math.pi):
            raise InvalidInputError(f"FovSpec: FoV out of range ({self.fx}, {self.fy})")

    @classmethod
    def from_pose(cls, pose):
        return cls(*pose.fov)


def log_sinh(kappa):
    """log(sinh(kappa)) for kappa > 0 without overflow."""
    return kappa + math.log1p(-math.exp(-2.0 * kappa)) - math.log(2.0)


def vmf_log_normalizer(kappa):
    """
    Returns log(kappa / sinh(kappa)), the log normalizer of the S2 VMF against the
    uniform measure. It is 0 at kappa = 0 and finite up to at least 1e6.
    """
    if kappa < 0.0:
        raise InvalidInputError(f"vmf_log_normalizer: negative kappa {kappa}")
    if kappa < SMALL_KAPPA:
        k2 = kappa * kappa
        # log(k / sinh k) = -k^2/6 + k^4/180 - ...
        return -k2 / 6.0 + k2 * k2 / 180.0
    return math.log(kappa) - log_sinh(kappa)


def vmf_log_density(z, params):
    """
    Log density of one direction, or of every row of an n x 3 array.

    Args:
        z (array-like): Unit direction(s).
        params (VmfParams): Mean direction and concentration.

    Returns:
        float or numpy.ndarray: log V(z; mu, kappa).
    """
    z = np.asarray(z, dtype=float)
    return vmf_log_density_from_cosine(z @ params.mean_direction, params.kappa)


def vmf_log_density_from_cosine(dots, kappa):
    """log V as a function of mu.z, for scalars or arrays of cosines."""
    # kappa * (mu.z - 1) keeps the exponent bounded; the -kappa is absorbed
    # by writing log sinh(kappa) = kappa + log1p(-e^{-2kappa}) - log 2.
    if kappa < SMALL_KAPPA:
        out = vmf_log_normalizer(kappa) + kappa * np.asarray(dots, dtype=float)
    else:
        out = math.log(kappa) - math.log1p(-math.exp(-2.0 * kappa)) + math.log(2.0) + kappa * (np.asarray(dots, dtype=float) - 1.0)
    if np.ndim(out) == 0:
        return float(out)
    return out


def vmf_density(z, params):
    return np.exp(vmf_log_density(z, params))


def bessel_ratio(kappa):
    """
    Mean resultant length A3(kappa) = I_{3/2}(kappa) / I_{1/2}(kappa) = coth(kappa) - 1/kappa.

    Args:
        kappa (float): Concentration, strictly positive.

    Returns:
        float: Value in (0, 1), strictly increasing in kappa.

    Raises:
        InvalidInputError: If kappa <= 0.
    """
    if not kappa > 0.0:
        raise InvalidInputError(f"bessel_ratio: kappa must be > 0, got {kappa}")
    if kappa < SMALL_KAPPA:
        return kappa / 3.0 - kappa ** 3 / 45.0 + 2.0 * kappa ** 5 / 945.0
    if kappa > 20.0:
        # coth(k) = 1 + 2e^{-2k}/(1 - e^{-2k})
        e = math.exp(-2.0 * kappa)
        return 1.0 + 2.0 * e / (1.0 - e) - 1.0 / kappa
    return 1.0 / math.tanh(kappa) - 1.0 / kappa


def _parallel_variance(kappa):
    # Var(mu.z) = 1/k^2 - 1/sinh^2(k), written to avoid cancellation at both ends.
    if kappa < SMALL_KAPPA:
        k2 = kappa * kappa
        return 1.0 / 3.0 - k2 / 15.0 + 2.0 * k2 * k2 / 189.0
    if kappa > 20.0:
        return 1.0 / (kappa * kappa) - 4.0 * math.exp(-2.0 * kappa) / (1.0 - math.exp(-2.0 * kappa)) ** 2
    return 1.0 / (kappa * kappa) - 1.0 / math.sinh(kappa) ** 2


def vmf_moments(params):
    """
    Mean vector and covariance matrix of a VMF on S2.

    Returns:
        tuple: (mean, cov) with mean = A3 mu and
            cov = (A3/kappa)(I - mu mu^T) + Var(mu.z) mu mu^T.
    """
    mu = params.mean_direction
    a, perp, par = vmf_moment_scalars(params.kappa)
    mm = np.outer(mu, mu)
    cov = perp * (np.eye(3) - mm) + par * mm
    return a * mu, cov


def vmf_moment_scalars(kappa):
    """(A3, per-axis variance orthogonal to mu, variance along mu) for concentration kappa."""
    if kappa == 0.0:
        return 0.0, 1.0 / 3.0, 1.0 / 3.0
    a = bessel_ratio(kappa)
    if kappa < SMALL_KAPPA:
        perp = 1.0 / 3.0 - kappa * kappa / 45.0
    else:
        perp = a / kappa
    return a, perp, _parallel_variance(kappa)


def tangent_basis(mu):
    """
    Orthonormal 3x2 basis of the plane orthogonal to mu.

    The first column is built from the coordinate axis least aligned with mu so
    the basis is a deterministic function of mu.
    """
    mu = np.asarray(mu, dtype=float)
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(mu)))] = 1.0
    e1 = axis - np.dot(axis, mu) * mu
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(mu, e1)
    return np.column_stack([e1, e2])


def vmf_sample(params, n, rng):
    """
    Draws n i.i.d. VMF samples by exact inversion of the cosine toward mu.

    Args:
        params (VmfParams): Distribution to sample.
        n (int): Number of samples, >= 0.
        rng (numpy.random.Generator): Caller-owned random generator.

    Returns:
        numpy.ndarray: n x 3 array of unit vectors.
    """
    if n < 0:
        raise InvalidInputError(f"vmf_sample: negative sample count {n}")
    if n == 0:
        return np.zeros((0, 3))
    kappa = params.kappa
    u = 1.0 - rng.random(n)
    if kappa == 0.0:
        w = 2.0 * u - 1.0
    else:
        w = 1.0 + np.log(u + (1.0 - u) * math.exp(-2.0 * kappa)) / kappa
    w = np.clip(w, -1.0, 1.0)
    angle = 2.0 * math.pi * rng.random(n)
    t = tangent_basis(params.mean_direction)
    radial = np.sqrt(np.maximum(0.0, 1.0 - w * w))
    v = np.cos(angle)[:, None] * t[:, 0] + np.sin(angle)[:, None] * t[:, 1]
    z = w[:, None] * params.mean_direction + radial[:, None] * v
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def clutter_constant(fov):
    """u^C = fx sin(fy/2) / (2 pi), the uniform-measure fraction of the sphere inside the FoV."""
    return fov.fx * math.sin(fov.fy / 2.0) / (2.0 * math.pi)


def in_fov(z, fov):
    """
    FoV membership |phi(z)| <= fx/2 and |theta(z)| <= fy/2.

    For fx < pi the azimuth test implies z_x > 0, so directions behind the
    camera are never inside.
    """
    z = np.asarray(z, dtype=float)
    phi = np.arctan2(z[..., 1], z[..., 0])
    theta = np.arcsin(np.clip(z[..., 2], -1.0, 1.0))
    inside = (np.abs(phi) <= fov.fx / 2.0) & (np.abs(theta) <= fov.fy / 2.0)
    if np.ndim(inside) == 0:
        return bool(inside)
    return inside


def clutter_intensity(z, fov, lambda_bar):
    """lambda_bar / u^C inside the FoV and 0 outside."""
    if lambda_bar < 0.0:
        raise InvalidInputError(f"clutter_intensity: negative clutter rate {lambda_bar}")
    level = lambda_bar / clutter_constant(fov)
    inside = in_fov(z, fov)
    return np.where(inside, level, 0.0) if np.ndim(inside) else (level if inside else 0.0)


def sample_uniform_fov(fov, n, rng):
    """
    Draws n directions uniform (spherical measure) on the FoV by inversion:
    azimuth uniform in [-fx/2, fx/2] and sin(elevation) uniform in [-sin(fy/2), sin(fy/2)].
    """
    if n == 0:
        return np.zeros((0, 3))
    phi = (rng.random(n) - 0.5) * fov.fx
    s = (2.0 * rng.random(n) - 1.0) * math.sin(fov.fy / 2.0)
    theta = np.arcsin(s)
    ct = np.cos(theta)
    return np.column_stack([np.cos(phi) * ct, np.sin(phi) * ct, np.sin(theta)])
