"""
Poisson multi-Bernoulli mixture filtering over sets of trajectories.

The posterior is a PPP for objects that have never been detected plus a
mixture of multi-Bernoulli densities. Every detected object owns a track with
a list of local hypotheses; a global hypothesis picks one local hypothesis per
track (or -1 when the track is absent from it).

Two modes share the recursion:
  TPMBM keeps trajectory densities with an L-scan window.
  PMBM keeps the current state only and folds death into r.
"""
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from modules.assignment import solve_k_best
from modules.directional import in_fov
from modules.models import birth_components, doa_mean
from modules.slr_filters import (
    GaussianDensity,
    collapse_to_alive,
    drop_alive,
    end_state,
    iplf_update,
    l_scan_truncate,
    mahalanobis2,
    measurement_linearization,
    new_trajectory,
    predicted_measurement,
    scale_alive,
    trajectory_predict,
    trajectory_update,
    unscented_points,
)
from utils.errors import DegenerateGeometryError, InvalidInputError, NoSolutionError

MODES = ("PMBM", "TPMBM")
LIKELIHOOD_MODES = ("L0", "L1")
TINY = 1e-300


@dataclass(frozen=True)
class FilterConfig:
    mode: str = "TPMBM"
    L: int = 5
    iplf_max_iters: int = 5
    likelihood: str = "L1"
    kld_threshold: float = 1e-2
    gate_threshold: float = 50.0
    max_globals: int = 100
    prune_bernoulli_r: float = 1e-4
    prune_global_w: float = 1e-4
    prune_ppp_w: float = 1e-5
    estimator_r_threshold: float = 0.5
    gamma_a: float = 1e-3
    ut_w0: float = 1.0 / 3.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidInputError(f"FilterConfig: mode must be one of {MODES}, got {self.mode}")
        if self.likelihood not in LIKELIHOOD_MODES:
            raise InvalidInputError(f"FilterConfig: likelihood must be one of {LIKELIHOOD_MODES}, got {self.likelihood}")
        if self.L < 1 or self.iplf_max_iters < 1 or self.max_globals < 1:
            raise InvalidInputError("FilterConfig: L, iplf_max_iters and max_globals must be >= 1")
        for name in ("kld_threshold", "gate_threshold", "prune_bernoulli_r", "prune_global_w", "prune_ppp_w", "estimator_r_threshold", "gamma_a"):
            if getattr(self, name) < 0.0:
                raise InvalidInputError(f"FilterConfig: {name} must be >= 0")

    @classmethod
    def from_dict(cls, d):
        names = cls.__dataclass_fields__.keys()
        return cls(**{k: v for k, v in d.items() if k in names})

    @property
    def keeps_trajectories(self):
        return self.mode == "TPMBM"


@dataclass(frozen=True)
class FilterModels:
    motion: object
    birth: object
    measurement: object


@dataclass(frozen=True)
class Frame:
    step: int
    pose: object
    measurements: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))


@dataclass(frozen=True)
class PppComponent:
    weight: float
    tg: object


@dataclass(frozen=True)
class BernoulliComponent:
    r: float
    tg: object


@dataclass(frozen=True)
class Track:
    """A potentially detected object: its label and local hypotheses."""

    label: str
    birth_step: int
    hyps: tuple


@dataclass(frozen=True)
class GlobalHypothesis:
    weight: float
    local_index: tuple


@dataclass(frozen=True)
class PmbmPosterior:
    ppp: tuple = ()
    tracks: tuple = ()
    globals: tuple = (GlobalHypothesis(1.0, ()),)
    step: int = -1

    def best_global(self):
        return max(self.globals, key=lambda g: g.weight)

    def n_bernoulli(self):
        return sum(len(t.hyps) for t in self.tracks)


@dataclass(frozen=True)
class EstimatedTrajectory:
    label: str
    birth_step: int
    end_step: int
    states: np.ndarray


def empty_posterior():
    return PmbmPosterior()


def detection_probability(g, model, pose):
    """pd when the predicted direction lies inside the FoV, else 0."""
    try:
        direction = doa_mean(g.mean, pose)
    except DegenerateGeometryError:
        return 0.0
    return model.pd if in_fov(direction, model.fov) else 0.0


def _predict_state_tg(tg, motion):
    g = end_state(tg)
    m, p = motion.predict_gaussian(g.mean, g.cov)
    return new_trajectory(GaussianDensity(m, 0.5 * (p + p.T)), tg.current_step + 1)


def predict(post, motion, birth_components, cfg):
    """
    Advances the posterior one step and appends the birth PPP component.

    Args:
        post (PmbmPosterior): Posterior at step k.
        motion (MotionModel): Transition and survival.
        birth_components (tuple or None): (lambda_bar, mean, cov) of the birth
            density at k + 1, or None for no births.
        cfg (FilterConfig): Mode selection.

    Returns:
        PmbmPosterior: Predicted density at k + 1.
    """
    ppp = tuple(PppComponent(c.weight * motion.ps, _predict_state_tg(c.tg, motion)) for c in post.ppp)
    tracks = []
    for t in post.tracks:
        hyps = []
        for h in t.hyps:
            if cfg.keeps_trajectories:
                hyps.append(BernoulliComponent(h.r, trajectory_predict(h.tg, motion)))
            else:
                hyps.append(BernoulliComponent(h.r * motion.ps, _predict_state_tg(h.tg, motion)))
        tracks.append(replace(t, hyps=tuple(hyps)))
    if birth_components is not None:
        lam, mean, cov = birth_components
        if lam > 0.0:
            ppp = ppp + (PppComponent(float(lam), new_trajectory(GaussianDensity(mean, cov), post.step + 1)),)
    return PmbmPosterior(ppp, tuple(tracks), post.globals, post.step + 1)


def gate(g, z, model, pose, threshold, w0=1.0 / 3.0, lin=None):
    """
    Ellipsoidal gate in the tangent plane of the sphere at z.

    The squared Mahalanobis distance of z (tangent coordinates 0) under the
    SLR-linearized predicted measurement must not exceed threshold, and the
    predicted direction must lie in the same hemisphere as z. lin, when given,
    is the measurement_linearization of g at z.
    """
    if math.isinf(threshold):
        return True
    if float(doa_mean(g.mean, pose) @ z) <= 0.0:
        return False
    mean, cov, _ = predicted_measurement(g, z, model, pose, w0, lin)
    return mahalanobis2(np.zeros(2), mean, cov) <= threshold


def _gated_update(prior, z, model, pose, cfg):
    """Gate then IPLF update, sharing one SLR between them; None when gated out."""
    z = np.asarray(z, dtype=float)
    lin = None
    if not math.isinf(cfg.gate_threshold):
        if float(doa_mean(prior.mean, pose) @ z) <= 0.0:
            return None
        lin = measurement_linearization(prior, z, model, pose, cfg.ut_w0)
        if not gate(prior, z, model, pose, cfg.gate_threshold, cfg.ut_w0, lin):
            return None
    return iplf_update(
        prior, z, model, pose, cfg.iplf_max_iters, cfg.kld_threshold, cfg.likelihood, cfg.ut_w0, first_linearization=lin
    )


def _missed_hypothesis(h, pd_eff, keep_trajectories):
    beta_a = h.tg.alive_mass if keep_trajectories else 1.0
    l_miss = 1.0 - h.r * pd_eff * beta_a
    r_num = h.r * (1.0 - pd_eff * beta_a)
    r_new = r_num / l_miss if l_miss > TINY else 0.0
    tg = h.tg
    if keep_trajectories and beta_a > 0.0 and pd_eff > 0.0:
        tg, _ = scale_alive(tg, 1.0 - pd_eff)
        if not tg.components:
            tg = h.tg
            r_new = 0.0
    return BernoulliComponent(min(1.0, max(0.0, r_new)), tg), math.log(max(l_miss, TINY))


def _detection_hypothesis(h, z, models, pose, cfg, pd_eff):
    beta_a = h.tg.alive_mass if cfg.keeps_trajectories else 1.0
    if pd_eff <= 0.0 or beta_a <= 0.0 or h.r <= 0.0:
        return None
    prior = end_state(h.tg)
    res = _gated_update(prior, z, models.measurement, pose, cfg)
    if res is None:
        return None
    if cfg.keeps_trajectories:
        tg = trajectory_update(collapse_to_alive(h.tg), res.posterior)
    else:
        tg = new_trajectory(res.posterior, h.tg.current_step)
    lw = math.log(h.r * pd_eff * beta_a) + res.log_marginal
    return BernoulliComponent(1.0, tg), lw


def _new_track(ppp, pd_effs, z, models, pose, cfg, step, j):
    """Bernoulli for the first detection of an object, merged over PPP components."""
    log_terms = []
    posts = []
    for c, pd_eff in zip(ppp, pd_effs):
        if pd_eff <= 0.0 or c.weight <= 0.0:
            continue
        res = _gated_update(end_state(c.tg), z, models.measurement, pose, cfg)
        if res is None:
            continue
        log_terms.append(math.log(c.weight) + math.log(pd_eff) + res.log_marginal)
        posts.append(res.posterior)
    clutter = float(models.measurement.clutter_intensity(z))
    if not log_terms:
        return None, math.log(max(clutter, TINY))
    log_e = float(logsumexp(log_terms))
    log_total = float(np.logaddexp(log_e, math.log(clutter))) if clutter > 0.0 else log_e
    r = math.exp(log_e - log_total)
    w = np.exp(np.array(log_terms) - log_e)
    mean = sum(wi * p.mean for wi, p in zip(w, posts))
    cov = sum(wi * (p.cov + np.outer(p.mean - mean, p.mean - mean)) for wi, p in zip(w, posts))
    tg = new_trajectory(GaussianDensity(mean, 0.5 * (cov + cov.T)), step)
    track = Track(f"{step}-{j}", step, (BernoulliComponent(r, tg),))
    return track, log_total


def update(post, measurements, models, pose, cfg):
    """
    Measurement update with Murty k-best association per parent global hypothesis.

    Args:
        post (PmbmPosterior): Predicted posterior at step k.
        measurements (array-like): m x 3 unit DOAs in the camera frame.
        models (FilterModels): Motion, birth and measurement models.
        pose (CameraPose): Pose of frame k.
        cfg (FilterConfig): Filter settings.

    Returns:
        PmbmPosterior: Updated posterior (unpruned).
    """
    z_set = np.asarray(measurements, dtype=float).reshape(-1, 3)
    m = z_set.shape[0]
    model = models.measurement
    k = post.step

    # Local hypotheses of existing tracks: each old hypothesis h becomes a miss
    # hypothesis plus one detection hypothesis per gated measurement.
    new_tracks = []
    miss_index = []
    miss_lw = []
    det_index = []
    det_lw = []
    for t in post.tracks:
        hyps = []
        t_miss_i, t_miss_lw, t_det_i, t_det_lw = [], [], [], []
        for h in t.hyps:
            alive = h.tg.alive_component() if cfg.keeps_trajectories else h.tg.components[0]
            pd_eff = 0.0 if alive is None else detection_probability(end_state(h.tg), model, pose)
            miss_h, lw = _missed_hypothesis(h, pd_eff, cfg.keeps_trajectories)
            t_miss_i.append(len(hyps))
            t_miss_lw.append(lw)
            hyps.append(miss_h)
            di, dl = {}, {}
            for j in range(m):
                det = _detection_hypothesis(h, z_set[j], models, pose, cfg, pd_eff)
                if det is None:
                    continue
                di[j] = len(hyps)
                dl[j] = det[1]
                hyps.append(det[0])
            t_det_i.append(di)
            t_det_lw.append(dl)
        new_tracks.append(replace(t, hyps=tuple(hyps)))
        miss_index.append(t_miss_i)
        miss_lw.append(t_miss_lw)
        det_index.append(t_det_i)
        det_lw.append(t_det_lw)

    pd_effs = [detection_probability(end_state(c.tg), model, pose) for c in post.ppp]
    born = []
    new_lw = []
    for j in range(m):
        track, lw = _new_track(post.ppp, pd_effs, z_set[j], models, pose, cfg, k, j)
        born.append(track)
        new_lw.append(lw)

    n_old = len(post.tracks)
    born_offset = {}
    for j, track in enumerate(born):
        if track is not None:
            born_offset[j] = n_old + len(born_offset)
    all_tracks = tuple(new_tracks) + tuple(t for t in born if t is not None)

    children = []
    for g in post.globals:
        present = [i for i, a in enumerate(g.local_index) if a >= 0]
        base = math.log(g.weight) + sum(miss_lw[i][g.local_index[i]] for i in present)
        index = [-1] * len(all_tracks)
        for i in present:
            index[i] = miss_index[i][g.local_index[i]]
        if m == 0:
            children.append((base, tuple(index)))
            continue
        cost = np.full((m, len(present) + m), np.inf)
        for col, i in enumerate(present):
            a = g.local_index[i]
            for j, lw in det_lw[i][a].items():
                cost[j, col] = -(lw - miss_lw[i][a])
        for j in range(m):
            cost[j, len(present) + j] = -new_lw[j]
        budget = max(1, int(math.ceil(cfg.max_globals * g.weight)))
        try:
            solutions = solve_k_best(cost, budget)
        except NoSolutionError:
            continue
        for sol in solutions:
            child = list(index)
            for j, col in enumerate(sol.columns):
                if col < len(present):
                    i = present[col]
                    child[i] = det_index[i][g.local_index[i]][j]
                elif j in born_offset:
                    child[born_offset[j]] = 0
            children.append((base - sol.cost, tuple(child)))
    if not children:
        raise NoSolutionError(f"update: no feasible global hypothesis at step {k}")
    log_w = np.array([c[0] for c in children])
    w = np.exp(log_w - logsumexp(log_w))
    globals_ = tuple(GlobalHypothesis(float(wi), idx) for wi, idx in zip(w, (c[1] for c in children)))
    ppp = tuple(PppComponent(c.weight * (1.0 - pd), c.tg) for c, pd in zip(post.ppp, pd_effs))
    return PmbmPosterior(ppp, all_tracks, globals_, k)


def prune(post, cfg):
    """
    Drops low-weight global hypotheses, low-existence and absent-alive Bernoullis,
    unreferenced local hypotheses and low-weight PPP components.
    """
    ranked = sorted(post.globals, key=lambda g: (-g.weight, g.local_index))
    kept = [g for g in ranked if g.weight >= cfg.prune_global_w] or ranked[:1]
    kept = kept[: cfg.max_globals]

    tracks = []
    for t in post.tracks:
        hyps = []
        for h in t.hyps:
            if cfg.keeps_trajectories and h.tg.alive_mass > 0.0 and h.r * h.tg.alive_mass < cfg.gamma_a:
                # The alive part is too unlikely to keep branching; the track keeps its ended trajectories.
                tg, beta_a = drop_alive(h.tg)
                h = BernoulliComponent(h.r * (1.0 - beta_a) if tg.components else 0.0, tg if tg.components else h.tg)
            hyps.append(h)
        tracks.append(replace(t, hyps=tuple(hyps)))

    merged = {}
    for g in kept:
        idx = tuple(
            a if a >= 0 and tracks[i].hyps[a].r >= max(cfg.prune_bernoulli_r, 0.0) and tracks[i].hyps[a].r > 0.0 else -1
            for i, a in enumerate(g.local_index)
        )
        merged[idx] = merged.get(idx, 0.0) + g.weight
    total = sum(merged.values())
    items = sorted(merged.items(), key=lambda kv: (-kv[1], kv[0]))

    keep_tracks = [i for i in range(len(tracks)) if any(idx[i] >= 0 for idx, _ in items)]
    remap = []
    out_tracks = []
    for i in keep_tracks:
        used = sorted({idx[i] for idx, _ in items if idx[i] >= 0})
        remap.append({a: n for n, a in enumerate(used)})
        out_tracks.append(replace(tracks[i], hyps=tuple(tracks[i].hyps[a] for a in used)))
    globals_ = tuple(
        GlobalHypothesis(w / total, tuple(remap[n][idx[i]] if idx[i] >= 0 else -1 for n, i in enumerate(keep_tracks)))
        for idx, w in items
    )
    ppp = tuple(c for c in post.ppp if c.weight >= cfg.prune_ppp_w)
    return PmbmPosterior(ppp, tuple(out_tracks), globals_, post.step)


def truncate(post, cfg):
    """Applies the L-scan window to every Bernoulli trajectory density."""
    if not cfg.keeps_trajectories:
        return post
    tracks = tuple(
        replace(t, hyps=tuple(BernoulliComponent(h.r, l_scan_truncate(h.tg, cfg.L)) for h in t.hyps)) for t in post.tracks
    )
    return replace(post, tracks=tracks)


def estimate(post, cfg):
    """
    Trajectory estimates from the highest-weight global hypothesis.

    Every Bernoulli with r >= cfg.estimator_r_threshold reports the mean state
    sequence of its most likely end time. In PMBM mode the sequence is the
    current state only.

    Returns:
        list: EstimatedTrajectory objects ordered by label.
    """
    if not post.tracks:
        return []
    best = post.best_global()
    out = []
    for t, a in zip(post.tracks, best.local_index):
        if a < 0:
            continue
        h = t.hyps[a]
        if h.r < cfg.estimator_r_threshold or not h.tg.components:
            continue
        comp = h.tg.map_component()
        states = comp.states()
        out.append(EstimatedTrajectory(t.label, comp.end_step - states.shape[0] + 1, comp.end_step, states.copy()))
    return sorted(out, key=lambda e: (e.birth_step, e.label))


def step(post, frame, models, cfg, birth=None):
    """
    One filter recursion: predict, update, prune and L-scan truncation.

    Args:
        post (PmbmPosterior): Posterior at step k - 1.
        frame (Frame): Measurements and pose of step k.
        models (FilterModels): Motion, birth and measurement models.
        cfg (FilterConfig): Filter settings.
        birth (tuple, optional): Precomputed birth density; by default it is
            built from the frame pose.

    Returns:
        PmbmPosterior: Posterior at step k.
    """
    if birth is None:
        birth = birth_components(frame.pose, models.birth, unscented_scheme(cfg.ut_w0), step=post.step + 1)
    predicted = predict(post, models.motion, birth, cfg)
    updated = update(predicted, frame.measurements, models, frame.pose, cfg)
    return truncate(prune(updated, cfg), cfg)


def unscented_scheme(w0):
    def scheme(mean, cov):
        return unscented_points(GaussianDensity(mean, cov), w0)

    return scheme


def check_invariants(post, cfg, tol=1e-9):
    """
    Verifies the bookkeeping invariants of a posterior.

    Raises:
        InvalidInputError: Naming the first violated invariant.
    """
    total = sum(g.weight for g in post.globals)
    if abs(total - 1.0) > tol:
        raise InvalidInputError(f"global weights sum to {total}")
    for g in post.globals:
        if len(g.local_index) != len(post.tracks):
            raise InvalidInputError("global hypothesis length does not match the track count")
        for t, a in zip(post.tracks, g.local_index):
            if a >= len(t.hyps):
                raise InvalidInputError(f"global hypothesis references missing local hypothesis {a} of {t.label}")
    bound = (cfg.L * 4) ** 2 if cfg.keeps_trajectories else 16
    for t in post.tracks:
        for h in t.hyps:
            if not 0.0 <= h.r <= 1.0:
                raise InvalidInputError(f"existence {h.r} of {t.label} outside [0, 1]")
            betas = h.tg.betas()
            if cfg.keeps_trajectories and betas.size > cfg.L + 1:
                raise InvalidInputError(f"{t.label} holds {betas.size} end times, more than L + 1")
            if betas.size and abs(betas.sum() - 1.0) > tol:
                raise InvalidInputError(f"beta of {t.label} sums to {betas.sum()}")
            for c in h.tg.components:
                if c.window_cov.size > bound:
                    raise InvalidInputError(f"window covariance of {t.label} exceeds the L-scan bound")
