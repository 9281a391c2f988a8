import datetime
import os
import json
import ciso8601

from utils.errors import InvalidInputError

EPOCH = datetime.datetime(1970, 1, 1)

DEFAULT_CONFIG_PATH = "config/config.json"

DEFAULT_RUN_CONFIG = {
    "filter": {
        "mode": "TPMBM",
        "L": 5,
        "iplf_max_iters": 5,
        "likelihood": "L1",
        "kld_threshold": 1e-2,
        "gate_threshold": 50.0,
        "max_globals": 100,
        "prune_bernoulli_r": 1e-4,
        "prune_global_w": 1e-4,
        "prune_ppp_w": 1e-5,
        "estimator_r_threshold": 0.5,
        "gamma_a": 1e-3,
        "ut_w0": 1.0 / 3.0,
    },
    "motion": {"tau": 1.0 / 6.0, "sigma_q2": 0.5, "ps": 0.99},
    "birth": {"lambda_b": 0.025, "lambda_b_initial": 1.0, "sigma_v2": 400.0},
    "sensor": {"kappa": 700.0, "pd": 0.9, "lambda_c": 5.0},
    "camera": {"preset": "optical", "pixel_method": 2},
    "scenario": {
        "steps": 101,
        "drone": [0.0, 0.0, -25.0],
        "look_at": [25.0, 25.0, 0.0],
        "truth_mode": "scripted",
        "seed": 0,
    },
    "gospa": {"c": 3.0, "p": 2.0, "alpha": 2.0},
    "benchmark": {"runs": 100, "threads": 4, "db_path": "data/benchmark.db"},
}


def _number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _integer(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _vector3(v):
    return isinstance(v, list) and len(v) == 3 and all(_number(x) for x in v)


# (section, key) -> (check, description)
RUN_CONFIG_SCHEMA = {
    ("filter", "mode"): (lambda v: v in ("PMBM", "TPMBM"), "PMBM or TPMBM"),
    ("filter", "L"): (lambda v: _integer(v) and v >= 1, "integer >= 1"),
    ("filter", "iplf_max_iters"): (lambda v: _integer(v) and v >= 1, "integer >= 1"),
    ("filter", "likelihood"): (lambda v: v in ("L0", "L1"), "L0 or L1"),
    ("filter", "kld_threshold"): (lambda v: _number(v) and v >= 0, "number >= 0"),
    ("filter", "gate_threshold"): (lambda v: _number(v) and v > 0, "number > 0"),
    ("filter", "max_globals"): (lambda v: _integer(v) and v >= 1, "integer >= 1"),
    ("filter", "prune_bernoulli_r"): (lambda v: _number(v) and 0 <= v < 1, "number in [0, 1)"),
    ("filter", "prune_global_w"): (lambda v: _number(v) and 0 <= v < 1, "number in [0, 1)"),
    ("filter", "prune_ppp_w"): (lambda v: _number(v) and v >= 0, "number >= 0"),
    ("filter", "estimator_r_threshold"): (lambda v: _number(v) and 0 <= v <= 1, "number in [0, 1]"),
    ("filter", "gamma_a"): (lambda v: _number(v) and 0 <= v < 1, "number in [0, 1)"),
    ("filter", "ut_w0"): (lambda v: _number(v) and 0 <= v < 1, "number in [0, 1)"),
    ("motion", "tau"): (lambda v: _number(v) and v > 0, "number > 0"),
    ("motion", "sigma_q2"): (lambda v: _number(v) and v >= 0, "number >= 0"),
    ("motion", "ps"): (lambda v: _number(v) and 0 <= v <= 1, "number in [0, 1]"),
    ("birth", "lambda_b"): (lambda v: _number(v) and v >= 0, "number >= 0"),
    ("birth", "lambda_b_initial"): (lambda v: _number(v) and v >= 0, "number >= 0"),
    ("birth", "sigma_v2"): (lambda v: _number(v) and v >= 0, "number >= 0"),
    ("sensor", "kappa"): (lambda v: _number(v) and v > 0, "number > 0"),
    ("sensor", "pd"): (lambda v: _number(v) and 0 <= v <= 1, "number in [0, 1]"),
    ("sensor", "lambda_c"): (lambda v: _number(v) and v >= 0, "number >= 0"),
    ("camera", "preset"): (lambda v: v in ("optical", "thermal"), "optical or thermal"),
    ("camera", "pixel_method"): (lambda v: v in (1, 2), "1 or 2"),
    ("scenario", "steps"): (lambda v: _integer(v) and v >= 1, "integer >= 1"),
    ("scenario", "drone"): (lambda v: _vector3(v) and v[2] < 0, "[x, y, z] with z < 0"),
    ("scenario", "look_at"): (_vector3, "[x, y, z]"),
    ("scenario", "truth_mode"): (lambda v: v in ("scripted", "sampled"), "scripted or sampled"),
    ("scenario", "seed"): (lambda v: _integer(v) and v >= 0, "integer >= 0"),
    ("gospa", "c"): (lambda v: _number(v) and v > 0, "number > 0"),
    ("gospa", "p"): (lambda v: _number(v) and v >= 1, "number >= 1"),
    ("gospa", "alpha"): (lambda v: v == 2, "2"),
    ("benchmark", "runs"): (lambda v: _integer(v) and v >= 1, "integer >= 1"),
    ("benchmark", "threads"): (lambda v: _integer(v) and v >= 1, "integer >= 1"),
    ("benchmark", "db_path"): (lambda v: isinstance(v, str) and len(v) > 0, "non-empty string"),
}


def chunk_list(long_list, _max_chunk):
    """
    Splits a list into chunks of specified size.

    Args:
        long_list (list): The list to be split into chunks.
        _max_chunk (int or str): The maximum size of each chunk, converted to int.

    Yields:
        list: A chunk of the original list with a length up to max_chunk.

    Raises:
        InvalidInputError: If long_list is not a list or the chunk size is < 1.
    """
    max_chunk = int(_max_chunk)
    if not isinstance(long_list, list):
        raise InvalidInputError("chunk_list: expected a list")
    if max_chunk < 1:
        raise InvalidInputError(f"chunk_list: chunk size must be >= 1, got {max_chunk}")
    for i in range(0, len(long_list), max_chunk):
        yield long_list[i : i + max_chunk]


def obj_cp(obj):
    """Deep copy of a JSON-serializable object."""
    return json.loads(json.dumps(obj))


def read_run_config(config_path, logger):
    """
    Reads the run configuration and merges it over the defaults.

    Keys missing from the file keep their default values. Without a path the
    repository config/config.json is used, or the built-in defaults when it is
    absent.

    Args:
        config_path (str or None): Path of the JSON file; None uses config/config.json.
        logger (logging.Logger): The logger to use for logging errors.

    Returns:
        dict: The merged configuration (not yet validated).

    Raises:
        InvalidInputError: If a given file is missing, is not valid JSON or its
            top level is not an object.
    """
    config = obj_cp(DEFAULT_RUN_CONFIG)
    path = DEFAULT_CONFIG_PATH if config_path is None else config_path
    if os.path.isfile(path) is False:
        if config_path is None:
            return config
        logger.error(f"read_run_config: {path} not found")
        raise InvalidInputError(f"read_run_config: config file {path} not found")
    try:
        with open(path, "r") as f:
            user = json.loads(f.read())
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as e:
        logger.error(f"read_run_config: Raised {e} reading {path}")
        raise InvalidInputError(f"read_run_config: cannot parse {path}: {e}") from e
    if not isinstance(user, dict):
        raise InvalidInputError(f"read_run_config: top level of {path} must be an object")
    for section, values in user.items():
        if isinstance(values, dict) and isinstance(config.get(section), dict):
            config[section].update(values)
        else:
            config[section] = values
    return config


def validate_run_config(config):
    """
    Checks every entry of a run configuration against the schema.

    Raises:
        InvalidInputError: Listing every violation, one per line.
    """
    errors = []
    for section, values in config.items():
        if section not in DEFAULT_RUN_CONFIG:
            errors.append(f"unknown section '{section}'")
            continue
        if not isinstance(values, dict):
            errors.append(f"section '{section}' must be an object")
            continue
        for key, value in values.items():
            rule = RUN_CONFIG_SCHEMA.get((section, key))
            if rule is None:
                errors.append(f"unknown key '{section}.{key}'")
            elif not rule[0](value):
                errors.append(f"'{section}.{key}' must be {rule[1]}, got {value!r}")
    for section, key in RUN_CONFIG_SCHEMA:
        if key not in config.get(section, {}):
            errors.append(f"missing key '{section}.{key}'")
    if errors:
        raise InvalidInputError("invalid run config:\n" + "\n".join(errors))
    return True


def write_run_config(config, config_path, logger):
    try:
        directory = os.path.dirname(config_path)
        if directory and os.path.isdir(directory) is False:
            os.makedirs(directory)
        with open(config_path, "w") as f:
            f.write(json.dumps(config, indent=2))
    except Exception as e:
        logger.error(f"write_run_config: Raised {e}")
    return


def apply_overrides(config, overrides):
    """
    Applies command-line overrides to a copy of the configuration.

    Args:
        config (dict): Run configuration.
        overrides (dict): Any of mode, lscan, iplf_iters, likelihood, gospa_c,
            gospa_p and seed; None values are ignored.

    Returns:
        dict: The updated copy.
    """
    targets = {
        "mode": ("filter", "mode", lambda v: f"{v}".upper()),
        "lscan": ("filter", "L", int),
        "iplf_iters": ("filter", "iplf_max_iters", int),
        "likelihood": ("filter", "likelihood", lambda v: f"{v}".upper()),
        "gospa_c": ("gospa", "c", float),
        "gospa_p": ("gospa", "p", float),
        "seed": ("scenario", "seed", int),
    }
    out = obj_cp(config)
    for name, value in overrides.items():
        if value is None or name not in targets:
            continue
        section, key, cast = targets[name]
        out.setdefault(section, {})[key] = cast(value)
    return out


def ts_to_utc(dtg):
    """
    Converts an ISO-8601 timestamp to seconds since the epoch (UTC).

    A trailing " UTC", " +..." or "+00:00" suffix is dropped before parsing, and
    a bare timestamp is read as UTC.

    Args:
        dtg (str): The timestamp.

    Returns:
        float: Seconds since epoch, rounded to microseconds.

    Raises:
        InvalidInputError: If the timestamp cannot be parsed.
    """
    try:
        for suffix in (" +", " UTC", "+00:00"):
            try:
                idx = dtg.index(suffix)
                dtg = dtg[0:idx]
            except ValueError:
                pass
        try:
            _dtg = ciso8601.parse_datetime_as_naive(dtg)
        except ValueError:
            dtg = f"{dtg}Z"
            _dtg = ciso8601.parse_datetime_as_naive(dtg)
        return round((_dtg - EPOCH).total_seconds(), 6)
    except Exception as e:
        raise InvalidInputError(f"ts_to_utc: cannot parse timestamp {dtg!r} ({e})") from e
