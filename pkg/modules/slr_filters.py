"""
Gaussian filtering machinery: sigma points, statistical linear regression,
the iterated posterior linearisation filter and trajectory (stacked-state)
Gaussians with an L-scan window.
"""
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import logsumexp

from modules.directional import LOG_4PI, tangent_basis, vmf_log_density_from_cosine, vmf_moment_scalars
from modules.models import STATE_DIM, doa_mean, doa_means
from utils.errors import InvalidInputError

EIG_FLOOR = 1e-12
SYM_TOL = 1e-10
PSD_TOL = 1e-9
DIVERGENCE_RUN = 3


def regularize_cov(p, floor=EIG_FLOOR):
    """Symmetrizes p and clamps its eigenvalues at floor."""
    p = np.asarray(p, dtype=float)
    p = 0.5 * (p + p.T)
    try:
        np.linalg.cholesky(p - floor * np.eye(p.shape[0]))
        return p
    except np.linalg.LinAlgError:
        pass
    vals, vecs = np.linalg.eigh(p)
    if vals.min() >= floor:
        return p
    vals = np.maximum(vals, floor)
    out = (vecs * vals) @ vecs.T
    return 0.5 * (out + out.T)


def _cholesky(p):
    """Cholesky factor of p, falling back to a regularized copy."""
    try:
        return cho_factor(p, lower=True), p
    except LinAlgError:
        q = regularize_cov(p)
        return cho_factor(q, lower=True), q


@dataclass(frozen=True)
class GaussianDensity:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=float).reshape(-1)
        p = np.asarray(self.cov, dtype=float)
        if p.shape != (m.size, m.size):
            raise InvalidInputError(f"GaussianDensity: covariance shape {p.shape} does not match mean of size {m.size}")
        scale = max(1.0, float(np.abs(p).max())) if p.size else 1.0
        if np.abs(p - p.T).max(initial=0.0) > SYM_TOL * scale:
            raise InvalidInputError("GaussianDensity: covariance is not symmetric")
        p = 0.5 * (p + p.T)
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov", p)

    @property
    def dim(self):
        return self.mean.size


@dataclass(frozen=True)
class LinearizationResult:
    A: np.ndarray
    b: np.ndarray
    Omega: np.ndarray


@dataclass(frozen=True)
class IplfResult:
    posterior: GaussianDensity
    log_marginal: float
    iterations: int
    diverged: bool = False


def gaussian_log_pdf(x, mean, cov):
    """log N(x; mean, cov) with the covariance regularized when needed."""
    d = np.asarray(x, dtype=float) - np.asarray(mean, dtype=float)
    (c, low), _ = _cholesky(np.asarray(cov, dtype=float))
    sol = cho_solve((c, low), d)
    log_det = 2.0 * np.sum(np.log(np.diag(c)))
    return float(-0.5 * (d.size * math.log(2.0 * math.pi) + log_det + d @ sol))


def gaussian_log_pdfs(xs, mean, cov):
    """Row-wise gaussian_log_pdf for an n x d array."""
    d = np.atleast_2d(np.asarray(xs, dtype=float)) - np.asarray(mean, dtype=float)
    (c, low), _ = _cholesky(np.asarray(cov, dtype=float))
    sol = cho_solve((c, low), d.T)
    log_det = 2.0 * np.sum(np.log(np.diag(c)))
    return -0.5 * (d.shape[1] * math.log(2.0 * math.pi) + log_det + np.einsum("ij,ji->i", d, sol))


def mahalanobis2(x, mean, cov):
    d = np.asarray(x, dtype=float) - np.asarray(mean, dtype=float)
    (c, low), _ = _cholesky(np.asarray(cov, dtype=float))
    return float(d @ cho_solve((c, low), d))


def unscented_points(g, w0=1.0 / 3.0):
    """
    Unscented transform of a Gaussian: 2d + 1 points with centre weight w0 and
    (1 - w0) / (2d) elsewhere, reproducing mean and covariance exactly.

    Args:
        g (GaussianDensity): Density to sample.
        w0 (float): Centre weight in [0, 1).

    Returns:
        tuple: (points (2d+1) x d, weights (2d+1,)).
    """
    if not 0.0 <= w0 < 1.0:
        raise InvalidInputError(f"unscented_points: centre weight must be in [0, 1), got {w0}")
    d = g.dim
    try:
        sqrt_p = np.linalg.cholesky(g.cov)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(g.cov)
        if vals.min(initial=0.0) < -PSD_TOL * max(1.0, abs(vals).max(initial=0.0)):
            raise InvalidInputError("unscented_points: covariance is not positive semi-definite")
        sqrt_p = vecs * np.sqrt(np.maximum(vals, 0.0))
    spread = math.sqrt(d / (1.0 - w0)) * sqrt_p
    points = np.vstack([g.mean, g.mean + spread.T, g.mean - spread.T])
    weights = np.full(2 * d + 1, (1.0 - w0) / (2.0 * d))
    weights[0] = w0
    return points, weights


def slr(moment_map, prior, w0=1.0 / 3.0, batched=False):
    """
    Statistical linear regression of a conditional moment map under a Gaussian prior.

    Args:
        moment_map (callable): x -> (E[z|x], Cov[z|x]), or with batched set,
            an n x d array of points -> (n x m means, n x m x m covariances).
        prior (GaussianDensity): Density the regression is taken over.
        w0 (float): Unscented centre weight.
        batched (bool): Evaluate moment_map once over all sigma points.

    Returns:
        LinearizationResult: z ~ A x + b + e, e ~ N(0, Omega).
    """
    points, weights = unscented_points(prior, w0)
    if batched:
        means, covs = moment_map(points)
        means = np.asarray(means, dtype=float)
        covs = np.asarray(covs, dtype=float)
    else:
        moments = [moment_map(x) for x in points]
        means = np.array([np.asarray(m, dtype=float) for m, _ in moments])
        covs = np.array([np.asarray(c, dtype=float) for _, c in moments])
    cond = np.einsum("i,ijk->jk", weights, covs)
    z_bar = weights @ means
    dz = means - z_bar
    dx = points - prior.mean
    psi = (weights[:, None] * dx).T @ dz
    phi = (weights[:, None] * dz).T @ dz + cond
    (c, low), _ = _cholesky(prior.cov)
    a = cho_solve((c, low), psi).T
    b = z_bar - a @ prior.mean
    omega = regularize_cov(phi - a @ prior.cov @ a.T)
    return LinearizationResult(a, b, omega)


def kld_gaussians(a, b):
    """KL(a || b) between two Gaussians of the same dimension."""
    if a.dim != b.dim:
        raise InvalidInputError(f"kld_gaussians: dimension mismatch {a.dim} vs {b.dim}")
    (cb, low), pb = _cholesky(b.cov)
    d = b.mean - a.mean
    tr = np.trace(cho_solve((cb, low), a.cov))
    quad = d @ cho_solve((cb, low), d)
    _, logdet_a = np.linalg.slogdet(regularize_cov(a.cov))
    logdet_b = 2.0 * np.sum(np.log(np.diag(cb)))
    return max(0.0, float(0.5 * (tr + quad - a.dim + logdet_b - logdet_a)))


def kalman_update(prior, z, lin):
    """Kalman-form update of prior with the affine model z = A x + b + N(0, Omega)."""
    a, b, omega = lin.A, lin.b, lin.Omega
    s = regularize_cov(a @ prior.cov @ a.T + omega)
    (c, low), s = _cholesky(s)
    k = cho_solve((c, low), a @ prior.cov).T
    z_hat = a @ prior.mean + b
    mean = prior.mean + k @ (np.asarray(z, dtype=float) - z_hat)
    cov = regularize_cov(prior.cov - k @ s @ k.T)
    return GaussianDensity(mean, cov), z_hat, s


def iplf_generic(
    prior,
    z,
    moment_map,
    max_iters=5,
    kld_threshold=1e-2,
    w0=1.0 / 3.0,
    log_likelihood=None,
    log_marginal_offset=0.0,
    batched=False,
    first_linearization=None,
):
    """
    Iterated posterior linearisation of a measurement against a Gaussian prior.

    Each iteration linearizes moment_map by SLR over the current posterior
    iterate and reapplies the Kalman-form update to the prior. Iteration stops
    when KL(new || old) < kld_threshold or after max_iters. One iteration is the
    unscented update.

    Args:
        prior (GaussianDensity): Predicted density.
        z (array-like): Observed measurement in the coordinates of moment_map.
        moment_map (callable): x -> (E[z|x], Cov[z|x]).
        max_iters (int): Iteration cap, >= 1.
        kld_threshold (float): Convergence threshold.
        w0 (float): Unscented centre weight.
        log_likelihood (callable, optional): x -> log l(z|x). When given, the log
            marginal is re-estimated by sigma-point importance quadrature of the
            true likelihood over the final posterior; otherwise it is the Gaussian
            predicted-measurement density of the final linearization.
        log_marginal_offset (float): Added to the Gaussian log marginal to change
            the reference measure.
        batched (bool): moment_map and log_likelihood take an n x d array of
            points and return per-point results.
        first_linearization (LinearizationResult, optional): SLR of moment_map
            over prior, reused as the first iteration.

    Returns:
        IplfResult: Posterior, log marginal, iterations used and divergence flag.
    """
    if max_iters < 1:
        raise InvalidInputError(f"iplf_generic: max_iters must be >= 1, got {max_iters}")
    z = np.asarray(z, dtype=float)
    current = prior
    iterates = []
    previous_kld = None
    rising = 0
    diverged = False
    for it in range(1, max_iters + 1):
        if it == 1 and first_linearization is not None:
            lin = first_linearization
        else:
            lin = slr(moment_map, current, w0, batched)
        post, z_hat, s = kalman_update(prior, z, lin)
        log_marginal = gaussian_log_pdf(z, z_hat, s) + log_marginal_offset
        iterates.append((log_marginal, it, post))
        kld = kld_gaussians(post, current)
        current = post
        if kld < kld_threshold:
            break
        if previous_kld is not None and kld > previous_kld:
            rising += 1
            if rising >= DIVERGENCE_RUN:
                diverged = True
                break
        else:
            rising = 0
        previous_kld = kld
    if diverged:
        log_marginal, it, current = max(iterates, key=lambda t: (t[0], -t[1]))
    else:
        log_marginal, it, current = iterates[-1]
    if log_likelihood is not None:
        log_marginal = _importance_log_marginal(prior, current, log_likelihood, w0, batched)
    return IplfResult(current, float(log_marginal), it, diverged)


def _importance_log_marginal(prior, posterior, log_likelihood, w0, batched=False):
    # log of sum_i w_i l(z|X_i) N(X_i; prior) / N(X_i; posterior) over posterior sigma points
    points, weights = unscented_points(posterior, w0)
    keep = weights > 0.0
    points, weights = points[keep], weights[keep]
    if batched:
        log_l = np.asarray(log_likelihood(points), dtype=float)
    else:
        log_l = np.array([log_likelihood(x) for x in points], dtype=float)
    terms = (
        np.log(weights)
        + log_l
        + gaussian_log_pdfs(points, prior.mean, prior.cov)
        - gaussian_log_pdfs(points, posterior.mean, posterior.cov)
    )
    return float(logsumexp(terms))


def vmf_tangent_moment_map(pose, kappa, basis):
    """
    Batched conditional moments of a VMF direction measurement in the plane
    spanned by basis: n x 4 states -> (n x 2 means, n x 2 x 2 covariances).

    With u = basis^T h(x), the mean is A3 u and the covariance is
    perp (I - u u^T) + par u u^T, the projection of the 3-D VMF moments.
    """
    a, perp, par = vmf_moment_scalars(kappa)
    eye = np.eye(basis.shape[1])

    def moment_map(xs):
        u = doa_means(xs, pose) @ basis
        uu = u[:, :, None] * u[:, None, :]
        return a * u, perp * (eye - uu) + par * uu

    return moment_map


def measurement_linearization(prior, z, model, pose, w0=1.0 / 3.0):
    """SLR of the VMF measurement in the tangent plane at z over prior."""
    basis = tangent_basis(np.asarray(z, dtype=float))
    return slr(vmf_tangent_moment_map(pose, model.kappa, basis), prior, w0, batched=True)


def iplf_update(
    prior,
    z,
    model,
    pose,
    max_iters=5,
    kld_threshold=1e-2,
    likelihood_mode="L1",
    w0=1.0 / 3.0,
    first_linearization=None,
):
    """
    IPLF update of a 4-D object state with a VMF direction measurement.

    The measurement is regressed in the tangent plane of the sphere at z, where
    it has coordinates (0, 0). The Gaussian log marginal of the tangent
    coordinates approximates the density with respect to surface area, and the
    log(4 pi) offset turns it into a density with respect to the uniform
    distribution on S2, the reference measure of the clutter intensity.

    Args:
        prior (GaussianDensity): Predicted object state.
        z (array-like): Unit DOA in the camera frame.
        model (MeasurementModel): Provides kappa.
        pose (CameraPose): Pose of the frame.
        max_iters (int): IPLF iterations.
        kld_threshold (float): Stopping threshold.
        likelihood_mode (str): "L0" for the Gaussian predicted likelihood or "L1"
            for the sigma-point quadrature of the VMF likelihood.
        w0 (float): Unscented centre weight.
        first_linearization (LinearizationResult, optional): measurement_linearization
            over prior, when the caller already has it from gating.

    Returns:
        IplfResult: Posterior over the state and the log marginal likelihood.
    """
    z = np.asarray(z, dtype=float)
    mm = vmf_tangent_moment_map(pose, model.kappa, tangent_basis(z))
    log_lik = None
    if likelihood_mode == "L1":
        vmf_kappa = model.kappa

        def log_lik(xs):
            return vmf_log_density_from_cosine(doa_means(xs, pose) @ z, vmf_kappa)

    elif likelihood_mode != "L0":
        raise InvalidInputError(f"iplf_update: unknown likelihood mode {likelihood_mode}")
    return iplf_generic(
        prior, np.zeros(2), mm, max_iters, kld_threshold, w0, log_lik, LOG_4PI,
        batched=True, first_linearization=first_linearization,
    )


def predicted_measurement(prior, z, model, pose, w0=1.0 / 3.0, lin=None):
    """
    Tangent-plane predicted measurement at z under prior: (mean 2-vector, covariance 2x2).

    Also returns the cosine between z and the predicted mean direction.
    """
    if lin is None:
        lin = measurement_linearization(prior, z, model, pose, w0)
    mean = lin.A @ prior.mean + lin.b
    cov = regularize_cov(lin.A @ prior.cov @ lin.A.T + lin.Omega)
    direction = doa_mean(prior.mean, pose)
    return mean, cov, float(direction @ np.asarray(z, dtype=float))


@dataclass(frozen=True)
class TrajectoryComponent:
    """
    Gaussian over the stacked states of a trajectory ending at end_step.

    mean holds every state x_birth..x_end flattened. Only the last window states
    keep a joint covariance (window_cov); older states keep their frozen 4x4
    marginals in past_covs.
    """

    end_step: int
    beta: float
    mean: np.ndarray
    window_cov: np.ndarray
    past_covs: np.ndarray

    @property
    def n_states(self):
        return self.mean.size // STATE_DIM

    @property
    def window(self):
        return self.window_cov.shape[0] // STATE_DIM

    @property
    def last_mean(self):
        return self.mean[-STATE_DIM:]

    @property
    def last_cov(self):
        return self.window_cov[-STATE_DIM:, -STATE_DIM:]

    def states(self):
        return self.mean.reshape(-1, STATE_DIM)


@dataclass(frozen=True)
class TrajectoryGaussian:
    """
    Mixture over end times of Gaussians over trajectories born at birth_step.

    current_step is the time the density refers to; the component with
    end_step == current_step is the alive one.
    """

    birth_step: int
    current_step: int
    components: tuple

    def betas(self):
        return np.array([c.beta for c in self.components])

    def alive_component(self):
        for c in self.components:
            if c.end_step == self.current_step:
                return c
        return None

    @property
    def alive_mass(self):
        c = self.alive_component()
        return 0.0 if c is None else c.beta

    def map_component(self):
        """Component with the largest beta; later end times win ties."""
        return max(self.components, key=lambda c: (c.beta, c.end_step))


def new_trajectory(g, step):
    """Single-state trajectory born at step with density g."""
    comp = TrajectoryComponent(step, 1.0, np.array(g.mean, dtype=float), np.array(g.cov, dtype=float), np.zeros((0, STATE_DIM, STATE_DIM)))
    return TrajectoryGaussian(step, step, (comp,))


def end_state(tg):
    """Gaussian of the last state of the alive component."""
    c = tg.alive_component()
    if c is None:
        raise InvalidInputError("end_state: trajectory has no alive component")
    return GaussianDensity(c.last_mean, c.last_cov)


def marginal(tg, end, step):
    """Marginal Gaussian of the state at time step within the component ending at end."""
    comp = next((c for c in tg.components if c.end_step == end), None)
    if comp is None or not tg.birth_step <= step <= end:
        raise InvalidInputError(f"marginal: no state for end {end}, step {step}")
    i = step - tg.birth_step
    n_past = comp.past_covs.shape[0]
    block = comp.mean[i * STATE_DIM : (i + 1) * STATE_DIM]
    if i < n_past:
        return GaussianDensity(block, comp.past_covs[i])
    j = (i - n_past) * STATE_DIM
    return GaussianDensity(block, comp.window_cov[j : j + STATE_DIM, j : j + STATE_DIM])


def _normalized(components):
    kept = [c for c in components if c.beta > 0.0]
    total = sum(c.beta for c in kept)
    if total <= 0.0:
        return ()
    return tuple(replace(c, beta=c.beta / total) for c in kept)


def trajectory_predict(tg, motion, current_step=None):
    """
    Predicts a trajectory density from step k to k + 1.

    The alive component splits into a trajectory that ended at k (weight
    (1 - ps) beta) and one extended by x_{k+1} = F x_k + q (weight ps beta). The
    new block has covariance F P_kk F^T + Q and cross-covariance F times the
    last-block strip. Components that ended earlier are unchanged.

    Args:
        tg (TrajectoryGaussian): Density at step k.
        motion (MotionModel): Transition and survival.
        current_step (int, optional): k; defaults to tg.current_step.

    Returns:
        TrajectoryGaussian: Density at step k + 1.
    """
    k = tg.current_step if current_step is None else current_step
    f, q, ps = motion.F, motion.Q, motion.ps
    out = []
    for c in tg.components:
        if c.end_step != k:
            out.append(c)
            continue
        if ps < 1.0:
            out.append(replace(c, beta=c.beta * (1.0 - ps)))
        w = c.window_cov
        strip = w[-STATE_DIM:, :]
        cross = f @ strip
        new_block = f @ c.last_cov @ f.T + q
        grown = np.block([[w, cross.T], [cross, 0.5 * (new_block + new_block.T)]])
        out.append(
            TrajectoryComponent(k + 1, c.beta * ps, np.concatenate([c.mean, f @ c.last_mean]), grown, c.past_covs)
        )
    return TrajectoryGaussian(tg.birth_step, k + 1, _normalized(out))


def trajectory_update(tg, posterior_current):
    """
    Conditions the alive component on an updated density of its last state.

    With P the window covariance and G = P_{past,k} P_kk^-1, the past window
    states move by G (m+ - m_k) and their covariance by G (P+ - P_kk) G^T, with
    cross-covariance G P+ to the last state. States before the window are left
    untouched.

    Args:
        tg (TrajectoryGaussian): Trajectory density.
        posterior_current (GaussianDensity): Updated last-state density.

    Returns:
        TrajectoryGaussian: Updated density.
    """
    comps = []
    for c in tg.components:
        if c.end_step != tg.current_step:
            comps.append(c)
            continue
        comps.append(_condition_component(c, posterior_current))
    return replace(tg, components=tuple(comps))


def _condition_component(c, post):
    w = c.window_cov
    n = w.shape[0]
    last = slice(n - STATE_DIM, n)
    past = slice(0, n - STATE_DIM)
    p_kk = w[last, last]
    dm = post.mean - c.last_mean
    dp = post.cov - p_kk
    mean = c.mean.copy()
    mean[-STATE_DIM:] = post.mean
    out = np.empty_like(w)
    out[last, last] = post.cov
    if n > STATE_DIM:
        (cf, low), _ = _cholesky(p_kk)
        g = cho_solve((cf, low), w[last, past]).T
        start = mean.size - n
        mean[start : mean.size - STATE_DIM] += g @ dm
        out[past, past] = w[past, past] + g @ dp @ g.T
        out[past, last] = g @ post.cov
        out[last, past] = out[past, last].T
    out = 0.5 * (out + out.T)
    return replace(c, mean=mean, window_cov=out)


def l_scan_truncate(tg, L):
    """
    Keeps joint covariance only for the last L states of every component; the
    marginals of older states are frozen into past_covs.

    Components that ended L or more steps before current_step are reduced to
    the heaviest of them carrying their summed beta, so a trajectory holds at
    most L + 1 components.
    """
    if L < 1:
        raise InvalidInputError(f"l_scan_truncate: L must be >= 1, got {L}")
    comps = []
    for c in _merge_old_endings(tg.components, tg.current_step - L):
        extra = c.window - L
        if extra <= 0:
            comps.append(c)
            continue
        w = c.window_cov
        frozen = np.array([w[i * STATE_DIM : (i + 1) * STATE_DIM, i * STATE_DIM : (i + 1) * STATE_DIM] for i in range(extra)])
        cut = extra * STATE_DIM
        comps.append(
            replace(c, window_cov=w[cut:, cut:].copy(), past_covs=np.concatenate([c.past_covs, frozen], axis=0))
        )
    return replace(tg, components=tuple(comps))


def _merge_old_endings(components, cutoff):
    old = [c for c in components if c.end_step <= cutoff]
    if len(old) < 2:
        return components
    kept = max(old, key=lambda c: (c.beta, c.end_step))
    merged = replace(kept, beta=sum(c.beta for c in old))
    return tuple(c for c in components if c.end_step > cutoff) + (merged,)


def collapse_to_alive(tg):
    """Keeps only the alive component with beta = 1 (a detected trajectory is alive)."""
    c = tg.alive_component()
    if c is None:
        raise InvalidInputError("collapse_to_alive: trajectory has no alive component")
    return replace(tg, components=(replace(c, beta=1.0),))


def scale_alive(tg, factor):
    """Multiplies the alive beta by factor and renormalizes; returns the trajectory and the unnormalized mass."""
    comps = [replace(c, beta=c.beta * factor) if c.end_step == tg.current_step else c for c in tg.components]
    mass = sum(c.beta for c in comps)
    return replace(tg, components=_normalized(comps)), mass


def drop_alive(tg):
    """Removes the alive component; returns the trajectory and the removed beta."""
    alive = tg.alive_mass
    comps = [c for c in tg.components if c.end_step != tg.current_step]
    return replace(tg, components=_normalized(comps)), alive

