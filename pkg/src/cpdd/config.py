# JSON experiment configs: unit-suffixed field names, strict unknown-key
# rejection, defaults echoed back into the run metadata.

import json
import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi


class ConfigError(ValueError):
    """Raised for malformed configs; message names the offending field."""


@dataclass(frozen=True)
class Field:
    kind: type
    default: object = None
    required: bool = False
    unit: str = ""
    check: object = None


def _positive(v):
    return v > 0


def _non_negative(v):
    return v >= 0


def parse_block(data, schema, path=""):
    """Validate one dict against a schema; returns the resolved dict."""
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object, got {type(data).__name__}")
    unknown = set(data) - set(schema)
    if unknown:
        raise ConfigError(f"{path or 'config'}: unknown key(s) {sorted(unknown)}")
    out = {}
    for name, spec in schema.items():
        where = f"{path}.{name}" if path else name
        if name not in data:
            if spec.required:
                raise ConfigError(f"{where}: required ({spec.unit or spec.kind.__name__})")
            out[name] = spec.default
            continue
        value = data[name]
        if spec.kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if spec.kind is not None and not isinstance(value, spec.kind):
            raise ConfigError(
                f"{where}: expected {spec.kind.__name__}"
                + (f" in {spec.unit}" if spec.unit else "")
                + f", got {value!r}")
        if spec.check is not None and not spec.check(value):
            raise ConfigError(
                f"{where}: invalid value {value!r}"
                + (f" (unit {spec.unit})" if spec.unit else ""))
        out[name] = value
    return out


SIGNAL_SCHEMA = {
    "frequency_hz": Field(float, required=True, unit="Hz", check=_positive),
    "amplitude_hz": Field(float, 0.0, unit="Hz", check=_non_negative),
    "phase_rad": Field(float, 0.0, unit="rad"),
}

MODEL_SCHEMA = {
    "kappa": Field(float, 0.5, check=lambda v: 0 < v <= 1),
    "max_contrast": Field(float, 1.0, check=_positive),
    "bright": Field(float, 0.66, check=lambda v: 0 <= v <= 1),
    "dark": Field(float, 0.34, check=lambda v: 0 <= v <= 1),
    "coherence_time_s": Field(float, math.inf, unit="s", check=_positive),
    "stretch": Field(float, 1.0, check=_positive),
    "photons_per_readout": Field(float, 0.164, check=_positive),
    "gyro_hz_per_tesla": Field(float, 28.03e9, unit="Hz/T", check=_positive),
}

GRID_SCHEMA = {
    "protocol": Field(str, "cxy8"),
    "start_hz": Field(float, required=True, unit="Hz"),
    "stop_hz": Field(float, required=True, unit="Hz"),
    "count": Field(int, required=True, check=lambda v: v >= 2),
}

SCHEMAS = {
    "robustness-map": {
        "protocols": Field(list, ["cx", "cxy8"]),
        "target_freq_hz": Field(float, required=True, unit="Hz", check=_positive),
        "intervals": Field(int, 8, check=_positive),
        "carrier_span_frac": Field(float, 0.2, check=_positive),
        "mismatch_span_frac": Field(float, 0.2, check=_positive),
        "grid_points": Field(int, 101, check=lambda v: v >= 2),
        "mc_shots": Field(int, 0, check=_non_negative),
        "mc_distribution": Field(str, "gaussian"),
        "mc_carrier_width_frac": Field(float, 0.0, check=_non_negative),
        "mc_rabi_width_frac": Field(float, 0.0, check=_non_negative),
    },
    "time-scan": {
        "protocols": Field(list, ["cxy8"]),
        "signal": Field(dict, required=True),
        "interval_s": Field(float, None, unit="s"),
        "duration_s": Field(float, required=True, unit="s", check=_positive),
        "sample_interval_s": Field(float, required=True, unit="s", check=_positive),
        "mismatches_hz": Field(list, [0.0]),
        "frame": Field(str, "dressed", check=lambda v: v in ("dressed", "rotating")),
        "model": Field(dict, None),
    },
    "detuning-scan": {
        "scans": Field(list, required=True),
        "signal": Field(dict, required=True),
        "interval_s": Field(float, None, unit="s"),
        "duration_s": Field(float, required=True, unit="s", check=_positive),
        "sample_interval_s": Field(float, required=True, unit="s", check=_positive),
        "frame": Field(str, "dressed", check=lambda v: v in ("dressed", "rotating")),
        "model": Field(dict, None),
    },
    "freq-scan": {
        "protocol": Field(str, "cxy8"),
        "repetitions": Field(int, required=True, check=_positive),
        "signal": Field(dict, required=True),
        "start_hz": Field(float, required=True, unit="Hz", check=_positive),
        "stop_hz": Field(float, required=True, unit="Hz", check=_positive),
        "count": Field(int, 105, check=lambda v: v >= 8),
        "phase_samples": Field(int, 32, check=_non_negative),
        "frame": Field(str, "dressed", check=lambda v: v in ("dressed", "rotating")),
        "model": Field(dict, None),
    },
    "order-scan": {
        "signal": Field(dict, required=True),
        "order_start": Field(int, 2, check=_positive),
        "order_stop": Field(int, 80, check=_positive),
        "order_step": Field(int, 2, check=_positive),
        "interval_s": Field(float, None, unit="s"),
        "shots": Field(int, 4096, check=_positive),
        "model": Field(dict, None),
    },
    "spurious": {
        "protocol": Field(str, "cxy4", check=lambda v: v in ("cxy4", "cxy4r")),
        "signal": Field(dict, required=True),
        "pulses": Field(int, 480, check=_positive),
        "runs": Field(int, 640, check=_positive),
        "window_frac": Field(float, 0.015, check=_positive),
        "window_points": Field(int, 13, check=lambda v: v >= 3),
        "baseline_points": Field(int, 48, check=lambda v: v >= 8),
        "span_low": Field(float, 0.625, check=_positive),
        "span_high": Field(float, 2.5, check=_positive),
        "substeps": Field(int, 48, check=_positive),
        "model": Field(dict, None),
    },
    "qdyne-sim": {
        "signal": Field(dict, required=True),
        "sequence_time_s": Field(float, required=True, unit="s", check=_positive),
        "overhead_s": Field(float, required=True, unit="s", check=_non_negative),
        "measurements": Field(int, required=True, check=_positive),
        "model": Field(dict, None),
        "shot_noise": Field(bool, True),
        "format": Field(str, "npy", check=lambda v: v in ("npy", "csv")),
    },
    "qdyne-analyze": {
        "trace": Field(str, required=True),
        "prior_hz": Field(float, required=True, unit="Hz", check=_positive),
        "window_bins": Field(int, 50, check=lambda v: v >= 4),
        "scaling_min_log2": Field(int, 16, check=_positive),
        "scaling_max_log2": Field(int, 22, check=_positive),
        "scaling_align": Field(bool, True),
    },
    "sensitivity": {
        "model": Field(dict, None),
        "overhead_s": Field(float, required=True, unit="s", check=_non_negative),
        "sensing_time_s": Field(float, required=True, unit="s", check=_positive),
    },
}


def load_config(path, subcommand):
    """Load and validate the JSON config for one subcommand."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return resolve_config(raw, subcommand)


def resolve_config(raw, subcommand):
    if subcommand not in SCHEMAS:
        raise ConfigError(f"no config schema for subcommand {subcommand!r}")
    out = parse_block(raw, SCHEMAS[subcommand])
    if "signal" in out and out["signal"] is not None:
        out["signal"] = parse_block(out["signal"], SIGNAL_SCHEMA, "signal")
    if "model" in out:
        out["model"] = parse_block(out["model"] or {}, MODEL_SCHEMA, "model")
    if "scans" in out:
        out["scans"] = [parse_block(s, GRID_SCHEMA, f"scans[{i}]")
                        for i, s in enumerate(out["scans"])]
    return out


def signal_from_config(block):
    from .dynamics import SignalField

    return SignalField(TWO_PI * block["amplitude_hz"], TWO_PI * block["frequency_hz"],
                       block["phase_rad"])


def model_from_config(block):
    from .sensing import MeasurementModel

    block = block or {k: f.default for k, f in MODEL_SCHEMA.items()}
    return MeasurementModel(
        kappa=block["kappa"], max_contrast=block["max_contrast"],
        bright=block["bright"], dark=block["dark"],
        coherence_time=block["coherence_time_s"], stretch=block["stretch"],
        photons_per_readout=block["photons_per_readout"],
        gyro=TWO_PI * block["gyro_hz_per_tesla"],
    )
