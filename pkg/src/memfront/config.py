"""Experiment configuration: JSON files validated against a bundled schema."""

import copy
import json
from importlib import resources

import jsonschema

from .errors import ConfigError

DEFAULTS = {
    "nonlinearity": {"type": "cubic", "a": 0.6},
    "kernel": {"form": "expsum", "terms": [[1.0, 1.0]]},
    "D": 1.0,
    "routes": ["evolve", "fixed_point"],
    "evolve": {"X": 400.0, "dx": 0.1, "dt": 0.01, "T_end": 300.0, "out_every": 0.5},
    "twfront": {"L": 60.0, "h": 0.05},
    "twoscale": {"N_y": 64, "N_y_kernel": 256, "D_eff": 1.0, "X": 400.0, "dx": 0.1,
                 "dt": 0.01, "T_end": 300.0, "scalar_check": True},
    "workers": 1,
    "failure_budget": 0.1,
    "output": {"dir": "out"},
}


def schema():
    text = resources.files("memfront").joinpath("schema/experiment.schema.json").read_text()
    return json.loads(text)


ATOMIC_BLOCKS = ("nonlinearity", "kernel")


def _merge(base, extra):
    out = copy.deepcopy(base)
    for key, val in extra.items():
        if key not in ATOMIC_BLOCKS and isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg, overrides):
    """Apply ``key.sub=value`` edits; values are parsed as JSON when possible."""
    cfg = copy.deepcopy(cfg)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        node = cfg
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-object")
        node[parts[-1]] = _parse_value(text)
    return cfg


def validate(cfg):
    try:
        jsonschema.validate(cfg, schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None
    sw = cfg.get("sweep")
    if sw and sw["beta_max"] < sw["beta_min"]:
        raise ConfigError("sweep: beta_max is below beta_min")
    return cfg


def load(path=None, overrides=(), experiment=None, data=None):
    """Read, override, validate and fill defaults.

    ``experiment`` fills in the experiment kind when the file omits it.
    """
    if data is None:
        if path is None:
            data = {}
        else:
            try:
                with open(path) as fh:
                    data = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    data = apply_overrides(data, overrides)
    if experiment is not None:
        data.setdefault("experiment", experiment)
    validate(data)
    return _merge(DEFAULTS, data)
