import json

import numpy as np
import pandas as pd

from modules.tpmbm import EstimatedTrajectory
from utils.errors import InputFileError

# File rows are [px, py, vx, vy]; the filter state is [px, vx, py, vy].
FILE_TO_STATE = [0, 2, 1, 3]
STATE_TO_FILE = [0, 2, 1, 3]


def estimate_document(trajectories):
    return {
        "trajectories": [
            {
                "label": t.label,
                "birth_step": int(t.birth_step),
                "end_step": int(t.end_step),
                "states": [[float(v) for v in row] for row in np.asarray(t.states)[:, STATE_TO_FILE]],
            }
            for t in trajectories
        ]
    }


def write_estimates(fpath, trajectories, logger):
    """
    Writes trajectory estimates as indented JSON.

    Args:
        fpath (str): Output path.
        trajectories (list): EstimatedTrajectory objects.
        logger (logging.Logger): A logger instance.
    """
    with open(fpath, "w") as f:
        f.write(json.dumps(estimate_document(trajectories), indent=2))
        f.write("\n")
    logger.debug(f"write_estimates: Wrote {len(trajectories):,} trajectories to {fpath}")


def parse_estimates(fpath, logger):
    """
    Reads a trajectory estimate file.

    Returns:
        list: EstimatedTrajectory objects with states [px, vx, py, vy].

    Raises:
        InputFileError: If the document is malformed or a trajectory's state
            count does not match its step range.
    """
    try:
        with open(fpath, "r") as f:
            doc = json.loads(f.read())
    except json.JSONDecodeError as e:
        raise InputFileError(f"invalid JSON ({e.msg})", fpath, e.lineno) from e
    if not isinstance(doc, dict) or not isinstance(doc.get("trajectories"), list):
        raise InputFileError("expected an object with a 'trajectories' list", fpath)
    out = []
    for n, t in enumerate(doc["trajectories"]):
        try:
            label = f"{t['label']}"
            birth, end = int(t["birth_step"]), int(t["end_step"])
            states = np.array(t["states"], dtype=float).reshape(-1, 4)
        except (KeyError, TypeError, ValueError) as e:
            raise InputFileError(f"trajectory {n}: {e}", fpath) from e
        if states.shape[0] != end - birth + 1:
            raise InputFileError(f"trajectory {label}: {states.shape[0]} states for steps {birth}..{end}", fpath)
        out.append(EstimatedTrajectory(label, birth, end, states[:, FILE_TO_STATE]))
    logger.debug(f"parse_estimates: Parsed {len(out):,} trajectories from {fpath}")
    return out


def write_csv(fpath, rows, columns, logger):
    """Writes rows (dicts) as CSV with the given column order."""
    pd.DataFrame(rows, columns=columns).to_csv(fpath, index=False)
    logger.debug(f"write_csv: Wrote {len(rows):,} rows to {fpath}")


def read_csv(fpath):
    return pd.read_csv(fpath)
