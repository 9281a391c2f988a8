"""
Synthetic drone-camera scenarios: ground truth, poses, VMF detections and FoV clutter.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from modules.calibration import AnnotatedFrame
from modules.directional import FovSpec, VmfParams, in_fov, sample_uniform_fov, vmf_sample
from modules.geometry import CameraPose, ground_to_doa, look_at_quaternion, point_in_footprint
from modules.models import BirthModel, MeasurementModel, birth_components, build_cv, position
from modules.tpmbm import FilterModels
from presets.camera_presets import CameraPresets
from utils.errors import DegenerateGeometryError, InvalidInputError

TRUTH_MODES = ("scripted", "sampled")

# Crossing geometry of the scripted scenario.
CROSSING_POINT = (25.0, 25.0)
CROSSING_STEP = 50
CROSSING_SPEED = 1.5
CROSSING_HEADINGS_DEG = (20.0, 110.0, 200.0, 290.0)
CROSSING_OFFSETS = ((0.5, 0.0), (0.0, 0.5), (-0.5, 0.0), (0.0, -0.5))
DYING_OBJECT = 3


@dataclass(frozen=True)
class ScenarioConfig:
    """
    Scenario parameters. Defaults are the synthetic-experiment values.

    pose_script, when given, holds one (drone_position, look_at) pair per step and
    overrides the static drone and look_at entries.
    """

    steps: int = 101
    tau: float = 1.0 / 6.0
    sigma_q2: float = 0.5
    ps: float = 0.99
    lambda_b_initial: float = 1.0
    lambda_b: float = 0.025
    sigma_v2: float = 400.0
    kappa: float = 700.0
    pd: float = 0.9
    lambda_c: float = 5.0
    camera: str = "optical"
    drone: tuple = (0.0, 0.0, -25.0)
    look_at: tuple = (25.0, 25.0, 0.0)
    truth_mode: str = "scripted"
    seed: int = 0
    pose_script: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.steps < 1:
            raise InvalidInputError(f"ScenarioConfig: steps must be >= 1, got {self.steps}")
        for name in ("lambda_b_initial", "lambda_b", "lambda_c", "sigma_v2", "sigma_q2"):
            if getattr(self, name) < 0.0:
                raise InvalidInputError(f"ScenarioConfig: {name} must be >= 0")
        if not 0.0 <= self.pd <= 1.0 or not 0.0 <= self.ps <= 1.0:
            raise InvalidInputError("ScenarioConfig: pd and ps must lie in [0, 1]")
        if self.truth_mode not in TRUTH_MODES:
            raise InvalidInputError(f"ScenarioConfig: truth_mode must be one of {TRUTH_MODES}, got {self.truth_mode}")
        if self.pose_script and len(self.pose_script) != self.steps:
            raise InvalidInputError(f"ScenarioConfig: pose_script has {len(self.pose_script)} entries for {self.steps} steps")
        CameraPresets().get_camera(self.camera)

    @classmethod
    def from_run_config(cls, run_cfg):
        """Builds the scenario from the motion, birth, sensor, camera and scenario sections of a run config."""
        motion, birth, sensor, scenario = run_cfg["motion"], run_cfg["birth"], run_cfg["sensor"], run_cfg["scenario"]
        return cls(
            steps=int(scenario["steps"]),
            tau=float(motion["tau"]),
            sigma_q2=float(motion["sigma_q2"]),
            ps=float(motion["ps"]),
            lambda_b_initial=float(birth["lambda_b_initial"]),
            lambda_b=float(birth["lambda_b"]),
            sigma_v2=float(birth["sigma_v2"]),
            kappa=float(sensor["kappa"]),
            pd=float(sensor["pd"]),
            lambda_c=float(sensor["lambda_c"]),
            camera=run_cfg["camera"]["preset"],
            drone=tuple(float(v) for v in scenario["drone"]),
            look_at=tuple(float(v) for v in scenario["look_at"]),
            truth_mode=scenario["truth_mode"],
            seed=int(scenario["seed"]),
        )

    @property
    def fov(self):
        return FovSpec(*CameraPresets().get_fov_radians(self.camera))


@dataclass(frozen=True)
class GroundTruthTrajectory:
    id: int
    birth_step: int
    states: np.ndarray

    @property
    def end_step(self):
        return self.birth_step + self.states.shape[0] - 1


@dataclass(frozen=True)
class FrameRecord:
    step: int
    pose: CameraPose
    measurements: np.ndarray
    truth_states: np.ndarray
    truth_ids: tuple = ()


def default_scenario():
    return ScenarioConfig()


def scenario_pose(cfg, step=0):
    presets = CameraPresets()
    if cfg.pose_script:
        drone, target = cfg.pose_script[step]
    else:
        drone, target = cfg.drone, cfg.look_at
    return CameraPose(
        tuple(drone),
        look_at_quaternion(drone, target),
        presets.get_fov_radians(cfg.camera),
        presets.get_image_size(cfg.camera),
    )


def filter_models(cfg):
    """Motion, birth and measurement models matching the scenario's generative model."""
    return FilterModels(
        build_cv(cfg.tau, cfg.sigma_q2, cfg.ps),
        BirthModel(cfg.lambda_b, cfg.lambda_b_initial, cfg.sigma_v2),
        MeasurementModel(cfg.kappa, cfg.pd, cfg.lambda_c, cfg.fov),
    )


def scripted_trajectories(cfg):
    """
    Four constant-velocity objects crossing near the crossing point at step 50.

    Each object moves at 1.5 m/s on its own heading and passes within 0.5 m of
    the crossing point. Object 3 disappears after step 50; the others live for
    the whole scenario.

    Raises:
        InvalidInputError: If an object is outside the FoV at birth.
    """
    dt = cfg.tau
    pose = scenario_pose(cfg, 0)
    out = []
    for i, (heading, offset) in enumerate(zip(CROSSING_HEADINGS_DEG, CROSSING_OFFSETS)):
        a = math.radians(heading)
        v = CROSSING_SPEED * np.array([math.cos(a), math.sin(a)])
        through = np.array(CROSSING_POINT) + np.array(offset)
        last = min(cfg.steps - 1, CROSSING_STEP) if i == DYING_OBJECT else cfg.steps - 1
        k = np.arange(last + 1)
        p = through[None, :] + (k - CROSSING_STEP)[:, None] * dt * v[None, :]
        states = np.column_stack([p[:, 0], np.full(k.size, v[0]), p[:, 1], np.full(k.size, v[1])])
        if not point_in_footprint(p[0], pose):
            raise InvalidInputError(f"scripted_trajectories: object {i} is outside the FoV at birth ({p[0][0]:.2f}, {p[0][1]:.2f})")
        out.append(GroundTruthTrajectory(i, 0, states))
    return out


def _sampled_trajectories(cfg, rng):
    models = filter_models(cfg)
    motion = models.motion
    chol_q = np.linalg.cholesky(motion.Q + 1e-12 * np.eye(4))
    alive = {}
    finished = []
    next_id = 0
    for k in range(cfg.steps):
        survivors = {}
        for oid, (birth_step, states) in alive.items():
            if rng.random() < cfg.ps:
                states.append(motion.F @ states[-1] + chol_q @ rng.standard_normal(4))
                survivors[oid] = (birth_step, states)
            else:
                finished.append(GroundTruthTrajectory(oid, birth_step, np.array(states)))
        alive = survivors
        rate, mean, cov = birth_components(scenario_pose(cfg, k), models.birth, step=k)
        for _ in range(rng.poisson(rate)):
            alive[next_id] = (k, [rng.multivariate_normal(mean, cov)])
            next_id += 1
    finished.extend(GroundTruthTrajectory(oid, b, np.array(s)) for oid, (b, s) in alive.items())
    return sorted(finished, key=lambda t: t.id)


def _detect(states, pose, cfg, rng):
    fov = cfg.fov
    out = []
    for x in states:
        try:
            if not point_in_footprint(position(x), pose):
                continue
            mu = ground_to_doa(position(x), pose)
        except DegenerateGeometryError:
            continue
        if rng.random() >= cfg.pd:
            continue
        z = vmf_sample(VmfParams(tuple(mu), cfg.kappa), 1, rng)[0]
        if in_fov(z, fov):
            out.append(z)
    return np.array(out).reshape(-1, 3)


def generate(cfg, rng=None):
    """
    Draws one scenario realization.

    Every alive object inside the FoV is detected with probability pd, its DOA
    drawn from a VMF centred on the true direction; detections that fall
    outside the FoV are discarded. Clutter is a Poisson number of directions
    uniform on the FoV. Measurements of a frame are shuffled.

    Args:
        cfg (ScenarioConfig): Scenario parameters.
        rng (numpy.random.Generator, optional): Defaults to a generator seeded with cfg.seed.

    Returns:
        tuple: (list of FrameRecord, list of GroundTruthTrajectory).
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    truths = scripted_trajectories(cfg) if cfg.truth_mode == "scripted" else _sampled_trajectories(cfg, rng)
    frames = []
    for k in range(cfg.steps):
        pose = scenario_pose(cfg, k)
        present = [t for t in truths if t.birth_step <= k <= t.end_step]
        states = np.array([t.states[k - t.birth_step] for t in present]).reshape(-1, 4)
        detections = _detect(states, pose, cfg, rng)
        clutter = sample_uniform_fov(cfg.fov, int(rng.poisson(cfg.lambda_c)), rng)
        z = np.vstack([detections, clutter])
        z = z[rng.permutation(z.shape[0])]
        frames.append(FrameRecord(k, pose, z, states, tuple(t.id for t in present)))
    return frames, truths


def generate_calibration_frames(n_objects, K, pd, kappa, lambda_c, fov, rng, inset=0.8):
    """
    Annotated frames for measurement-model calibration.

    Annotated DOAs are uniform on the FoV shrunk by inset; each is detected with
    probability pd through VMF noise, and uniform clutter is added.
    """
    if K < 1 or n_objects < 0:
        raise InvalidInputError("generate_calibration_frames: need K >= 1 and n_objects >= 0")
    inner = FovSpec(fov.fx * inset, fov.fy * inset)
    frames = []
    for _ in range(K):
        truth = sample_uniform_fov(inner, n_objects, rng)
        detected = [vmf_sample(VmfParams(tuple(y), kappa), 1, rng)[0] for y in truth if rng.random() < pd]
        clutter = sample_uniform_fov(fov, int(rng.poisson(lambda_c)), rng)
        z = np.vstack([np.array(detected).reshape(-1, 3), clutter])
        frames.append(AnnotatedFrame(truth, z[rng.permutation(z.shape[0])], fov))
    return frames
