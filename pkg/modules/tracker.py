import time
import threading
from dataclasses import replace

import numpy as np

from modules import tpmbm
from modules.directional import FovSpec
from modules.models import BirthModel, MeasurementModel, birth_components, build_cv
from modules.tpmbm import EstimatedTrajectory, FilterModels
from presets.camera_presets import CameraPresets
from utils.errors import InvalidInputError


class Tracker(object):

    def __init__(self, logger, cfg, models, instance_name="default"):
        self.logger = logger
        self.cfg = cfg
        self.models = models
        self.instance_name = instance_name
        self.lock = threading.RLock()
        self.reset()

    def reset(self):
        """
        Returns the tracker to the empty prior.

        The posterior, the last processed step, the per-step diagnostics and the
        PMBM estimate history are all cleared.
        """
        with self.lock:
            self.posterior = tpmbm.empty_posterior()
            self.last_step = None
            self.diagnostics = []
            self.history = {}
        return True

    def _frame_models(self, pose):
        measurement = replace(self.models.measurement, fov=FovSpec.from_pose(pose))
        return replace(self.models, measurement=measurement)

    def _predict_gap(self, missing):
        for _ in range(missing):
            post = tpmbm.predict(self.posterior, self.models.motion, None, self.cfg)
            self.posterior = tpmbm.truncate(tpmbm.prune(post, self.cfg), self.cfg)

    def step(self, frame):
        """
        Processes one frame: predict, update, prune and L-scan truncation.

        When frames are missing between the previous frame and this one, the
        posterior is predicted through the gap without births or updates and a
        warning is logged.

        Args:
            frame (Frame): Step index, camera pose and m x 3 measured DOAs.

        Returns:
            dict: Step diagnostics {"step", "globals", "bernoullis", "ppp", "measurements", "runtime_ms"}.

        Raises:
            InvalidInputError: If the frame step does not advance.
        """
        with self.lock:
            t0 = time.perf_counter()
            first = self.last_step is None
            if not first:
                if frame.step <= self.last_step:
                    raise InvalidInputError(f"Tracker.step: frame {frame.step} does not follow frame {self.last_step}")
                missing = frame.step - self.last_step - 1
                if missing:
                    self.logger.warning(f"Tracker.step: {missing} frame(s) missing before frame {frame.step}, predicting through the gap")
                    self._predict_gap(missing)
            else:
                # Local step indices start at the first frame.
                self.posterior = replace(self.posterior, step=frame.step - 1)
            models = self._frame_models(frame.pose)
            birth = birth_components(
                frame.pose, models.birth, tpmbm.unscented_scheme(self.cfg.ut_w0), step=0 if first else frame.step
            )
            self.posterior = tpmbm.step(self.posterior, frame, models, self.cfg, birth=birth)
            self.last_step = frame.step
            if not self.cfg.keeps_trajectories:
                self._record_current(frame.step)
            runtime_ms = round((time.perf_counter() - t0) * 1000.0, 3)
            diag = {
                "step": frame.step,
                "globals": len(self.posterior.globals),
                "bernoullis": self.posterior.n_bernoulli(),
                "ppp": len(self.posterior.ppp),
                "measurements": int(np.asarray(frame.measurements).reshape(-1, 3).shape[0]),
                "runtime_ms": runtime_ms,
            }
            self.diagnostics.append(diag)
        self.logger.debug(
            f"Tracker.step: frame {frame.step} with {diag['measurements']} measurements, "
            f"{diag['globals']} global hypotheses, {diag['bernoullis']} Bernoullis in {runtime_ms} ms"
        )
        return diag

    def run(self, frames):
        return [self.step(f) for f in frames]

    def _record_current(self, step):
        for e in tpmbm.estimate(self.posterior, self.cfg):
            self.history.setdefault(e.label, {})[step] = e.states[-1].copy()

    def _history_trajectories(self):
        out = []
        for label, by_step in self.history.items():
            steps = sorted(by_step)
            runs = [[steps[0]]]
            for k in steps[1:]:
                if k == runs[-1][-1] + 1:
                    runs[-1].append(k)
                else:
                    runs.append([k])
            for n, run in enumerate(runs):
                name = label if len(runs) == 1 else f"{label}#{n}"
                states = np.array([by_step[k] for k in run])
                out.append(EstimatedTrajectory(name, run[0], run[-1], states))
        return sorted(out, key=lambda e: (e.birth_step, e.label))

    def estimates(self):
        """
        Returns the trajectory estimates after the last processed frame.

        TPMBM reads the trajectories from the posterior. PMBM only holds current
        states, so its trajectories are the per-step estimates of each track label
        collected while filtering, split where a label was not reported.

        Returns:
            list: EstimatedTrajectory objects with states [px, vx, py, vy].
        """
        with self.lock:
            if self.cfg.keeps_trajectories:
                return tpmbm.estimate(self.posterior, self.cfg)
            return self._history_trajectories()


def models_from_config(run_cfg):
    """
    Filter models from the motion, birth, sensor and camera sections of a run config.

    The measurement FoV is the camera preset's; Tracker.step replaces it with the
    FoV of each frame's pose.
    """
    presets = CameraPresets()
    return FilterModels(
        build_cv(run_cfg["motion"]["tau"], run_cfg["motion"]["sigma_q2"], run_cfg["motion"]["ps"]),
        BirthModel(run_cfg["birth"]["lambda_b"], run_cfg["birth"]["lambda_b_initial"], run_cfg["birth"]["sigma_v2"]),
        MeasurementModel(
            run_cfg["sensor"]["kappa"],
            run_cfg["sensor"]["pd"],
            run_cfg["sensor"]["lambda_c"],
            FovSpec(*presets.get_fov_radians(run_cfg["camera"]["preset"])),
        ),
    )
