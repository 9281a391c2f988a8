import time
import threading
from utils.utils import obj_cp


class RunStateManager(object):
    """
    Progress of the Monte-Carlo runs of one benchmark.

    Unlike a process-wide singleton, every benchmark creates its own manager so
    concurrent benchmarks in one process do not share run keys.
    """

    def __init__(self):
        self.lock = threading.RLock()
        self.status = {}
        self.last_update = time.time()

    def get_status(self):
        """
        Returns a copy of the run status map.

        Returns:
            dict: Run key -> {"status", and once done "rms" and "runtime"}.
        """
        with self.lock:
            return obj_cp(self.status)

    def add_run(self, key):
        """
        Adds a run to the queue with an initial status of 'queued'.

        Args:
            key (str): Run key, "<variant>/<seed>".
        """
        with self.lock:
            self.last_update = time.time()
            self.status[key] = {"status": "queued"}

    def mark_run_in_progress(self, key):
        with self.lock:
            self.last_update = time.time()
            self.status[key] = {"status": "in-progress"}

    def mark_run_done(self, key, rms, runtime):
        """
        Marks a run as done and stores its RMS-GOSPA and runtime.

        Args:
            key (str): Run key.
            rms (float): RMS-GOSPA of the run (m).
            runtime (float): Filter runtime of the run (s).
        """
        with self.lock:
            self.last_update = time.time()
            self.status[key] = {"status": "done", "rms": rms, "runtime": runtime}

    def mark_run_failed(self, key, msg):
        with self.lock:
            self.last_update = time.time()
            self.status[key] = {"status": "failed", "msg": f"{msg}"}

    def progress(self):
        """Counts runs per status."""
        with self.lock:
            out = {"queued": 0, "in-progress": 0, "done": 0, "failed": 0}
            for v in self.status.values():
                out[v["status"]] = out.get(v["status"], 0) + 1
            return out
