import math

from utils.errors import InputFileError

DETECTION_KEYS = ("frame", "quat", "fov_deg", "image_px", "drone")
UNIT_TOL = 1e-6


def _number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _vector(v, n):
    return isinstance(v, list) and len(v) == n and all(_number(x) for x in v)


def pose_form(drone):
    """Returns "geodetic" or "local" for the drone entry of a detection record, None if neither."""
    if not isinstance(drone, dict):
        return None
    geodetic = all(k in drone for k in ("lat_deg", "lon_deg", "alt_m"))
    local = "local_xyz_m" in drone
    if geodetic == local:
        return None
    return "geodetic" if geodetic else "local"


def filter_detection_record(record, path, line_no):
    """
    Validates one line of a detection frame file.

    Args:
        record (dict): The decoded JSON line.
        path (str): File path, for error messages.
        line_no (int): 1-based line number, for error messages.

    Returns:
        str: The pose form of the record, "geodetic" or "local".

    Raises:
        InputFileError: On the first violation found.
    """
    if not isinstance(record, dict):
        raise InputFileError("record must be a JSON object", path, line_no)
    for key in DETECTION_KEYS:
        if key not in record:
            raise InputFileError(f"missing field '{key}'", path, line_no)
    if not isinstance(record["frame"], int) or isinstance(record["frame"], bool) or record["frame"] < 0:
        raise InputFileError(f"frame must be a non-negative integer, got {record['frame']!r}", path, line_no)
    if "time_s" in record and not _number(record["time_s"]):
        raise InputFileError("time_s must be a number", path, line_no)
    if "time_s" not in record and "utc" in record and not isinstance(record["utc"], str):
        raise InputFileError("utc must be an ISO-8601 string", path, line_no)
    if not _vector(record["quat"], 4):
        raise InputFileError("quat must be [q1, q2, q3, q4]", path, line_no)
    if not _vector(record["fov_deg"], 2) or not all(0.0 < v < 180.0 for v in record["fov_deg"]):
        raise InputFileError("fov_deg must be [fx, fy] with both in (0, 180)", path, line_no)
    if not _vector(record["image_px"], 2) or not all(isinstance(v, int) and v > 0 and v % 2 == 0 for v in record["image_px"]):
        raise InputFileError("image_px must be [w, h] of positive even integers", path, line_no)
    form = pose_form(record["drone"])
    if form is None:
        raise InputFileError("drone must hold either lat_deg/lon_deg/alt_m or local_xyz_m", path, line_no)
    drone = record["drone"]
    if form == "local" and not _vector(drone["local_xyz_m"], 3):
        raise InputFileError("drone.local_xyz_m must be [x, y, z]", path, line_no)
    if form == "geodetic" and not all(_number(drone[k]) for k in ("lat_deg", "lon_deg", "alt_m")):
        raise InputFileError("drone lat_deg, lon_deg and alt_m must be numbers", path, line_no)
    has_boxes = "boxes" in record
    has_doas = "doas" in record
    if has_boxes == has_doas:
        raise InputFileError("exactly one of 'boxes' and 'doas' is required", path, line_no)
    if has_boxes:
        if not isinstance(record["boxes"], list) or not all(_vector(b, 4) and b[2] > 0 and b[3] > 0 for b in record["boxes"]):
            raise InputFileError("boxes must be a list of [bx, by, bw, bh] with positive size", path, line_no)
    else:
        if not isinstance(record["doas"], list) or not all(_vector(z, 3) for z in record["doas"]):
            raise InputFileError("doas must be a list of [x, y, z]", path, line_no)
        for z in record["doas"]:
            if abs(math.sqrt(sum(v * v for v in z)) - 1.0) > UNIT_TOL:
                raise InputFileError(f"doa {z} is not a unit vector", path, line_no)
    return form


def filter_truth_record(record, path, line_no):
    """
    Validates one line of a ground-truth file: {"frame", "objects": [{"id", "state"}]}
    or {"frame", "doas": [[x, y, z], ...]} for annotated directions.

    Returns:
        str: "states" or "doas".
    """
    if not isinstance(record, dict):
        raise InputFileError("record must be a JSON object", path, line_no)
    if not isinstance(record.get("frame"), int) or isinstance(record.get("frame"), bool) or record["frame"] < 0:
        raise InputFileError("frame must be a non-negative integer", path, line_no)
    has_objects = "objects" in record
    has_doas = "doas" in record
    if has_objects == has_doas:
        raise InputFileError("exactly one of 'objects' and 'doas' is required", path, line_no)
    if has_doas:
        if not isinstance(record["doas"], list) or not all(_vector(z, 3) for z in record["doas"]):
            raise InputFileError("doas must be a list of [x, y, z]", path, line_no)
        return "doas"
    if not isinstance(record["objects"], list):
        raise InputFileError("objects must be a list", path, line_no)
    ids = []
    for obj in record["objects"]:
        if not isinstance(obj, dict) or not isinstance(obj.get("id"), int) or not _vector(obj.get("state"), 4):
            raise InputFileError("each object needs an integer id and state [px, vx, py, vy]", path, line_no)
        ids.append(obj["id"])
    if len(ids) != len(set(ids)):
        raise InputFileError("duplicate object id in frame", path, line_no)
    return "states"


def check_increasing(frames, path, line_nos):
    """Raises InputFileError unless the frame numbers strictly increase."""
    for i in range(1, len(frames)):
        if frames[i] <= frames[i - 1]:
            raise InputFileError(f"frame {frames[i]} does not follow frame {frames[i - 1]}", path, line_nos[i])
