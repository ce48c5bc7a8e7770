"""Flat `key = value` run configuration with a closed key schema.

Files are UTF-8 text, one assignment per line, '#' comments. Unknown keys
are rejected by name; CLI flags override file values; every command writes
a resolved snapshot next to its outputs so a run is reproducible from the
snapshot alone.
"""

from __future__ import annotations

import os


class UnknownKeyError(ValueError):
    def __init__(self, key):
        super().__init__(f"unknown config key {key!r}")
        self.key = key


class ConfigValueError(ValueError):
    pass


def _parse_bool(s):
    low = str(s).strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigValueError(f"expected a boolean, got {s!r}")


def _parse_int_list(s):
    if isinstance(s, (list, tuple)):
        return tuple(int(v) for v in s)
    return tuple(int(v) for v in str(s).split(",") if v.strip())


_PARSERS = {"int": int, "float": float, "str": str, "bool": _parse_bool,
            "int_list": _parse_int_list}

# key -> (type name, default)
SCHEMA = {
    # data generation
    "family": ("str", "torus"),
    "count": ("int", 128),
    "test_count": ("int", 64),
    "points": ("int", 512),
    "jitter": ("float", 0.01),
    "param_spread": ("float", 0.2),
    # training
    "lr": ("float", 1e-4),
    "batch_size": ("int", 64),
    "epochs": ("int", 300),
    "clip_norm": ("float", 1.0),
    "sigma_d": ("float", 1.0),
    "seed": ("int", 0),
    "schedule": ("str", "trigflow"),
    "lambda_mode": ("str", "linear_ramp"),
    "lambda_fixed": ("float", 0.3),
    "fm_normalization": ("str", "per_point"),
    "loss_mode": ("str", "fm_chamfer"),
    "normalization": ("str", "unit_radius"),  # unit_radius | global_minmax | per_shape_minmax | none
    "point_widths": ("int_list", (64, 128)),
    "time_dim": ("int", 64),
    "time_hidden": ("int", 128),
    "out_widths": ("int_list", (128,)),
    "checkpoint_every": ("int", 0),  # 0: final checkpoint only
    # sampling
    "method": ("str", "single_step"),
    "steps": ("int", 1),
    "sample_count": ("int", 16),
    "heun_advance": ("bool", False),
    "final_predict": ("bool", False),
    # evaluation
    "dist": ("str", "cd"),  # cd | emd | both
    "jsd_resolution": ("int", 28),
    "emd_mode": ("str", "auto"),  # auto | exact | auction
    # reporting
    "plot": ("bool", False),
}


def defaults():
    return {k: v for k, (_, v) in SCHEMA.items()}


def coerce(key, value):
    if key not in SCHEMA:
        raise UnknownKeyError(key)
    kind, _ = SCHEMA[key]
    try:
        return _PARSERS[kind](value)
    except (ValueError, TypeError) as exc:
        raise ConfigValueError(f"config key {key!r}: {exc}") from None


def parse_file(path):
    """Read a key=value file into a coerced dict (missing keys absent)."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = stripped.partition("=")
            out[key.strip()] = coerce(key.strip(), value.strip())
    return out


def resolve(file_values=None, overrides=None):
    """Defaults <- file <- explicit overrides; every key validated."""
    cfg = defaults()
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            if value is None:
                continue
            cfg[key] = coerce(key, value)
    return cfg


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def write_snapshot(cfg, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for key in SCHEMA:
            fh.write(f"{key} = {_fmt(cfg[key])}\n")
