"""Versioned text configuration for the batch pipeline.

Files are `key = value` lines (# comments allowed) and must carry
config_version = 1.  Unknown keys are rejected; every key is range-checked
against the schema below, which also feeds the CLI --help output.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

CONFIG_VERSION = 1


def _int_min(lo):
    return lambda v: isinstance(v, int) and v >= lo, f"integer >= {lo}"


def _float_min(lo, inclusive=True):
    if inclusive:
        return lambda v: v >= lo, f"float >= {lo}"
    return lambda v: v > lo, f"float > {lo}"


def _float_range(lo, hi):
    return lambda v: lo < v < hi, f"float in ({lo}, {hi})"


def _bool():
    return lambda v: isinstance(v, bool), "true or false"


def _enum(*vals):
    return lambda v: v in vals, "one of " + "|".join(vals)


def _even_min(lo):
    return lambda v: isinstance(v, int) and v >= lo and v % 2 == 0, f"even integer >= {lo}"


# key: (python type tag, default, (validator, range text), help)
SCHEMA: dict[str, tuple[str, object, tuple, str]] = {
    "config_version": ("int", CONFIG_VERSION, _int_min(1), "config format version"),
    "seed": ("int", 7, _int_min(0), "master RNG seed"),
    "workers": ("int", 1, _int_min(1), "worker threads for shot-level work"),
    "keyframe_stride": ("int", 3, _int_min(1), "analyze every Nth frame pair"),
    "min_area": ("int", 16, _int_min(0), "drop moving components smaller than this"),
    "hs_lambda": ("float", 100.0, _float_min(0, False), "flow smoothness weight (alpha^2 = 1/hs_lambda)"),
    "pyramid_levels": ("int", 3, _int_min(1), "coarse-to-fine pyramid levels"),
    "iterations_per_level": ("int", 200, _int_min(1), "relaxation sweep cap per level"),
    "convergence_eps": ("float", 1e-4, _float_min(0.0), "mean-update stop threshold"),
    "speed_threshold": ("float", 0.5, _float_min(0.0), "zero speeds below this (px/frame)"),
    "speed_sigma": ("float", 0.6, _float_min(0, False), "speed map smoothing sigma (px)"),
    "cv_lambda": ("float", 1.0, _float_min(0, False), "segmentation data weight"),
    "cv_mu": ("float_or_auto", "auto", _float_min(0.0), "contour length weight; auto = 0.1*range^2"),
    "cv_epsilon": ("float", 0.5, _float_min(0, False), "step regularization width"),
    "cv_dt": ("float", 0.25, _float_min(0, False), "evolution step size"),
    "cv_max_iters": ("int", 300, _int_min(1), "evolution iteration cap"),
    "cv_stop_tol": ("float", 1e-4, _float_min(0.0), "sign-flip fraction stop threshold"),
    "warm_start": ("bool", False, _bool(), "seed each key-frame's level set from the previous one"),
    "codebook_k": ("int", 64, _int_min(2), "centroids per feature channel"),
    "codebook_iters": ("int", 100, _int_min(1), "k-means iteration cap"),
    "svm_c": ("float", 10.0, _float_min(0, False), "SVM regularization C"),
    "svm_kernel": ("enum", "rbf", _enum("linear", "rbf", "poly"), "SVM kernel"),
    "svm_gamma": ("float", 0.5, _float_min(0, False), "rbf kernel gamma"),
    "svm_degree": ("int", 3, _int_min(1), "poly kernel degree"),
    "svm_coef": ("float", 1.0, _float_min(-1e18), "poly kernel additive coefficient"),
    "t_k": ("int", 3, _int_min(1), "weak hypotheses per training batch"),
    "train_fraction": ("float", 0.7, _float_range(0.0, 1.0), "per-round training subset fraction"),
    "kkt_tol": ("float", 1e-3, _float_min(0, False), "SMO optimality tolerance"),
    "max_passes": ("int", 200, _int_min(1), "SMO pass cap"),
    "train_batches": ("int", 2, _int_min(1), "incremental training batches"),
    "ndcr_cost_miss": ("float", 10.0, _float_min(0, False), "NDCR miss cost"),
    "ndcr_cost_fa": ("float", 1.0, _float_min(0, False), "NDCR false-alarm cost"),
    "ndcr_rtarget": ("float", 20.0, _float_min(0, False), "expected events per hour"),
    "synth_shots": ("int", 60, _int_min(1), "synthetic corpus size"),
    "synth_frames": ("int", 8, _int_min(2), "frames per synthetic shot"),
    "synth_size": ("int", 64, _even_min(32), "synthetic frame edge (even)"),
    "synth_fps": ("int", 10, _int_min(1), "synthetic frame rate"),
}


@dataclass
class PipelineConfig:
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        merged = {k: spec[1] for k, spec in SCHEMA.items()}
        for k, v in self.values.items():
            if k not in SCHEMA:
                raise ConfigError(f"unknown config key {k!r}")
            merged[k] = v
        for k, v in merged.items():
            _validate(k, v)
        if merged["config_version"] != CONFIG_VERSION:
            raise ConfigError(
                f"config_version {merged['config_version']} unsupported (expected {CONFIG_VERSION})"
            )
        self.values = merged

    def __getattr__(self, key):
        values = object.__getattribute__(self, "values")
        if key in values:
            return values[key]
        raise AttributeError(key)

    def with_overrides(self, overrides: dict) -> "PipelineConfig":
        merged = dict(self.values)
        for k, raw in overrides.items():
            if k not in SCHEMA:
                raise ConfigError(f"unknown config key {k!r}")
            merged[k] = _parse_value(k, raw) if isinstance(raw, str) else raw
        return PipelineConfig(merged)

    def resolved_mu(self):
        return None if self.values["cv_mu"] == "auto" else float(self.values["cv_mu"])


def _validate(key, value):
    kind, _default, (check, range_text), _help = SCHEMA[key]
    if kind == "float_or_auto" and value == "auto":
        return
    if kind in ("float", "float_or_auto"):
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"{key} must be a number")
        value = float(value)
    if not check(value):
        raise ConfigError(f"{key} = {value!r} out of range; expected {range_text}")


def _parse_value(key, raw: str):
    kind = SCHEMA[key][0]
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "float_or_auto":
            return "auto" if raw == "auto" else float(raw)
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        return raw  # enum; validated later
    except ValueError as e:
        raise ConfigError(f"cannot parse {key} = {raw!r}") from e


def load_config(path) -> PipelineConfig:
    values = {}
    for ln, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{path}:{ln}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"{path}:{ln}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw)
    return PipelineConfig(values)


def save_config(cfg: PipelineConfig, path) -> None:
    lines = [f"# survidx pipeline configuration (version {CONFIG_VERSION})"]
    for key in SCHEMA:
        v = cfg.values[key]
        if isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{key} = {v}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def schema_help() -> str:
    lines = ["configuration keys (key = default; range; meaning):"]
    for key, (kind, default, (_check, range_text), help_text) in SCHEMA.items():
        if isinstance(default, bool):
            default = "true" if default else "false"
        lines.append(f"  {key} = {default}; {range_text}; {help_text}")
    return "\n".join(lines)
