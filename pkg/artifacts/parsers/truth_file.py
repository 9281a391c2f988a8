import json
from dataclasses import dataclass

import numpy as np

from artifacts.frame_filter import check_increasing, filter_truth_record
from utils.errors import InputFileError


@dataclass(frozen=True)
class TruthFrame:
    """
    Ground truth of one frame: object states [px, vx, py, vy] with their ids, or
    annotated DOAs when the file carries directions only.
    """

    step: int
    ids: tuple
    states: np.ndarray
    doas: np.ndarray

    @property
    def positions(self):
        return self.states[:, [0, 2]]


def identify_truth(fpath, logger, header=None):
    try:
        if header is None:
            with open(fpath, "rb") as f:
                header = f.read(1024 * 1024)
        for line in header.decode("utf-8", errors="ignore").split("\n"):
            if line.strip():
                record = json.loads(line)
                return isinstance(record, dict) and "frame" in record and ("objects" in record or "doas" in record) and "quat" not in record
    except Exception as e:
        logger.debug(f"identify_truth: Raised {e}")
    return False


def parse_truth(fpath, logger):
    """
    Parses a ground-truth JSONL file.

    Args:
        fpath (str): The file path.
        logger (logging.Logger): A logger instance.

    Returns:
        list: TruthFrame objects in file order.

    Raises:
        InputFileError: With the path and line number of the first bad record.
    """
    out = []
    line_nos = []
    with open(fpath, "r") as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise InputFileError(f"invalid JSON ({e.msg})", fpath, line_no) from e
            kind = filter_truth_record(record, fpath, line_no)
            if kind == "states":
                objects = record["objects"]
                ids = tuple(o["id"] for o in objects)
                states = np.array([o["state"] for o in objects], dtype=float).reshape(-1, 4)
                doas = np.zeros((0, 3))
            else:
                ids = ()
                states = np.zeros((0, 4))
                doas = np.array(record["doas"], dtype=float).reshape(-1, 3)
            out.append(TruthFrame(record["frame"], ids, states, doas))
            line_nos.append(line_no)
    check_increasing([t.step for t in out], fpath, line_nos)
    logger.debug(f"parse_truth: Parsed {len(out):,} frames from {fpath}")
    return out


def write_truth(fpath, frames, logger):
    """
    Writes ground truth, one line per frame.

    Args:
        fpath (str): Output path.
        frames (list): Objects with step, truth_ids and truth_states (FrameRecord).
        logger (logging.Logger): A logger instance.
    """
    with open(fpath, "w") as f:
        for fr in frames:
            objects = [
                {"id": int(i), "state": [float(v) for v in s]}
                for i, s in zip(fr.truth_ids, np.asarray(fr.truth_states).reshape(-1, 4))
            ]
            f.write(json.dumps({"frame": int(fr.step), "objects": objects}))
            f.write("\n")
    logger.debug(f"write_truth: Wrote {len(frames):,} frames to {fpath}")
