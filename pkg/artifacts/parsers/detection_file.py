import json
import math

import numpy as np

from artifacts.frame_filter import check_increasing, filter_detection_record
from modules.geometry import (
    BoundingBox,
    CameraPose,
    GeoCoordinate,
    Quaternion,
    angles_to_doa,
    bbox_center,
    pixel_to_angles,
    wgs84_to_local,
)
from modules.tpmbm import Frame
from utils.errors import InputFileError, InvalidInputError
from utils.utils import ts_to_utc

FOV_DECIMALS = 10


def identify_detections(fpath, logger, header=None):
    """
    Identifies a detection frame file by its first non-empty line.

    The line must decode to a JSON object carrying "frame", "quat" and one of
    "boxes" or "doas".

    Args:
        fpath (str): The path to the file to be checked.
        logger (logging.Logger): A logger object for logging debug information.
        header (bytes, optional): The pre-read start of the file.

    Returns:
        bool: True if the file looks like a detection frame file.
    """
    try:
        if header is None:
            with open(fpath, "rb") as f:
                header = f.read(1024 * 1024)
        for line in header.decode("utf-8", errors="ignore").split("\n"):
            if line.strip():
                record = json.loads(line)
                return isinstance(record, dict) and "frame" in record and "quat" in record and ("boxes" in record or "doas" in record)
    except Exception as e:
        logger.debug(f"identify_detections: Raised {e}")
    return False


def _pose(record, origin):
    drone = record["drone"]
    if "local_xyz_m" in drone:
        position = tuple(float(v) for v in drone["local_xyz_m"])
    else:
        geo = GeoCoordinate(math.radians(drone["lat_deg"]), math.radians(drone["lon_deg"]), float(drone["alt_m"]))
        position = tuple(float(v) for v in wgs84_to_local(geo, origin))
    fov = tuple(math.radians(v) for v in record["fov_deg"])
    return CameraPose(position, Quaternion(*[float(v) for v in record["quat"]]), fov, tuple(record["image_px"]))


def _measurements(record, pose, method):
    if "doas" in record:
        return np.array(record["doas"], dtype=float).reshape(-1, 3)
    out = []
    for bx, by, bw, bh in record["boxes"]:
        phi, theta = pixel_to_angles(bbox_center(BoundingBox(bx, by, bw, bh)), pose, method)
        out.append(angles_to_doa(phi, theta))
    return np.array(out, dtype=float).reshape(-1, 3)


def parse_detections(fpath, logger, method=2):
    """
    Parses a detection frame file into filter frames.

    Geodetic drone positions are converted to the local frame anchored on the
    ground below the first frame's latitude and longitude; alt_m is the height
    above that ground. Boxes are converted to DOAs through their centre pixel.
    Times come from time_s, or from utc relative to the first frame.

    Args:
        fpath (str): The file path of the JSONL detection file.
        logger (logging.Logger): A logger instance.
        method (int): Pixel-to-angle method for boxes, 1 or 2.

    Returns:
        tuple: (list of Frame, list of frame times in seconds).

    Raises:
        InputFileError: With the path and line number of the first bad record.
    """
    frames = []
    times = []
    line_nos = []
    form = None
    origin = None
    utc0 = None
    with open(fpath, "r") as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise InputFileError(f"invalid JSON ({e.msg})", fpath, line_no) from e
            record_form = filter_detection_record(record, fpath, line_no)
            if form is None:
                form = record_form
                if form == "geodetic":
                    d = record["drone"]
                    origin = GeoCoordinate(math.radians(d["lat_deg"]), math.radians(d["lon_deg"]), 0.0)
            elif record_form != form:
                raise InputFileError(f"pose form {record_form} differs from the file's {form} form", fpath, line_no)
            try:
                pose = _pose(record, origin)
                measurements = _measurements(record, pose, method)
                if "time_s" in record:
                    t = float(record["time_s"])
                elif "utc" in record:
                    utc = ts_to_utc(record["utc"])
                    utc0 = utc if utc0 is None else utc0
                    t = utc - utc0
                else:
                    t = float(record["frame"])
            except InvalidInputError as e:
                raise InputFileError(f"{e}", fpath, line_no) from e
            frames.append(Frame(record["frame"], pose, measurements))
            times.append(t)
            line_nos.append(line_no)
    check_increasing([fr.step for fr in frames], fpath, line_nos)
    logger.debug(f"parse_detections: Parsed {len(frames):,} frames from {fpath}")
    return frames, times


def detection_record(frame, time_s):
    """The local-pose JSON record of one frame, measurements written as DOAs."""
    pose = frame.pose
    q = pose.quat
    return {
        "frame": int(frame.step),
        "time_s": float(time_s),
        "drone": {"local_xyz_m": [float(v) for v in pose.position_local]},
        "quat": [float(q.q1), float(q.q2), float(q.q3), float(q.q4)],
        "fov_deg": [round(math.degrees(v), FOV_DECIMALS) for v in pose.fov],
        "image_px": [int(v) for v in pose.image],
        "doas": [[float(v) for v in z] for z in np.asarray(frame.measurements, dtype=float).reshape(-1, 3)],
    }


def write_detections(fpath, frames, times, logger):
    """
    Writes frames as a detection frame file, one JSON object per line.

    Args:
        fpath (str): Output path.
        frames (list): Frame or FrameRecord objects (step, pose, measurements).
        times (list): Frame times in seconds.
        logger (logging.Logger): A logger instance.
    """
    if len(frames) != len(times):
        raise InvalidInputError("write_detections: frames and times differ in length")
    with open(fpath, "w") as f:
        for frame, t in zip(frames, times):
            f.write(json.dumps(detection_record(frame, t)))
            f.write("\n")
    logger.debug(f"write_detections: Wrote {len(frames):,} frames to {fpath}")
