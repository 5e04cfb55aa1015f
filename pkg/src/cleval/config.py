"""Run configuration and the line-oriented ``key = value`` config format.

Comments start with ``#``, lists are comma separated, unknown keys and
out-of-range values are errors that name the offending line. Keys that are
irrelevant to the chosen method are accepted with a warning.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, fields, replace

from .methods import METHOD_NAMES
from .streams import SCENARIOS

__all__ = ["RunConfig", "ConfigError", "parse_config", "parse_grid", "config_text"]

DATASETS = ("synthetic_split", "mnist_split", "permuted")


class ConfigError(ValueError):
    """Invalid config text; message carries the line number when known."""


@dataclass(frozen=True)
class RunConfig:
    dataset: str = "synthetic_split"
    scenario: str = "class_incremental"
    n_tasks: int = 5
    iters_per_task: int = 500
    batch_size: int = 256
    method: str = "finetune"
    lr: float = 0.01
    momentum: float = 0.9
    alpha: float = 0.5
    buffer_capacity: int = 1000
    gem_margin: float = 0.5
    lwf_temperature: float = 2.0
    ewc_lambda: float = 1.0
    fisher_samples: int = 1024
    rho_eval: int = 1
    eval_subsample: int | None = 1000  # None = full split
    resample_each_eval: bool = True
    eval_source: str = "eval_split"
    window_sizes: tuple[int, ...] = (10, 100)
    minacc_range: str = "post_learned"
    seeds: tuple[int, ...] = (0,)
    output_dir: str = "run"
    hidden_units: int = 400
    hidden_layers: int = 2
    synth_classes: int = 10
    synth_dims: int = 32
    synth_train_per_class: int = 500
    synth_eval_per_class: int = 500
    data_seed: int = 0
    mnist_dir: str = "data/mnist"


def _parse_int(raw: str) -> int:
    return int(raw)


def _parse_float(raw: str) -> float:
    return float(raw)


def _parse_bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_subsample(raw: str) -> int | None:
    if raw.lower() == "all":
        return None
    return int(raw)


def _parse_int_list(raw: str) -> tuple[int, ...]:
    return tuple(int(part.strip()) for part in raw.split(",") if part.strip())


def _parse_str(raw: str) -> str:
    return raw


def _in_range(lo=None, hi=None, lo_open=False, hi_open=False):
    def check(v):
        if lo is not None and (v <= lo if lo_open else v < lo):
            return f"must be {'>' if lo_open else '>='} {lo}"
        if hi is not None and (v >= hi if hi_open else v > hi):
            return f"must be {'<' if hi_open else '<='} {hi}"
        return None

    return check


def _one_of(options):
    def check(v):
        if v not in options:
            return f"must be one of {', '.join(options)}"
        return None

    return check


def _positive_list(v):
    if not v:
        return "must be non-empty"
    if any(x < 2 for x in v):
        return "entries must be >= 2"
    return None


def _seed_list(v):
    if not v:
        return "must be non-empty"
    if any(x < 0 for x in v):
        return "seeds must be >= 0"
    return None


# key -> (parser, validator or None)
_FIELD_SPECS = {
    "dataset": (_parse_str, _one_of(DATASETS)),
    "scenario": (_parse_str, _one_of(SCENARIOS)),
    "n_tasks": (_parse_int, _in_range(lo=1)),
    "iters_per_task": (_parse_int, _in_range(lo=1)),
    "batch_size": (_parse_int, _in_range(lo=1)),
    "method": (_parse_str, _one_of(METHOD_NAMES)),
    "lr": (_parse_float, _in_range(lo=0, lo_open=True)),
    "momentum": (_parse_float, _in_range(lo=0.0, hi=1.0, hi_open=True)),
    "alpha": (_parse_float, _in_range(lo=0.0, hi=1.0)),
    "buffer_capacity": (_parse_int, _in_range(lo=1)),
    "gem_margin": (_parse_float, _in_range(lo=0.0)),
    "lwf_temperature": (_parse_float, _in_range(lo=0, lo_open=True)),
    "ewc_lambda": (_parse_float, _in_range(lo=0.0)),
    "fisher_samples": (_parse_int, _in_range(lo=1)),
    "rho_eval": (_parse_int, _in_range(lo=1)),
    "eval_subsample": (_parse_subsample, lambda v: None if v is None else _in_range(lo=1)(v)),
    "resample_each_eval": (_parse_bool, None),
    "eval_source": (_parse_str, _one_of(("eval_split", "train_split"))),
    "window_sizes": (_parse_int_list, _positive_list),
    "minacc_range": (_parse_str, _one_of(("post_learned", "eq2_literal"))),
    "seeds": (_parse_int_list, _seed_list),
    "output_dir": (_parse_str, None),
    "hidden_units": (_parse_int, _in_range(lo=1)),
    "hidden_layers": (_parse_int, _in_range(lo=0)),
    "synth_classes": (_parse_int, _in_range(lo=2)),
    "synth_dims": (_parse_int, _in_range(lo=1)),
    "synth_train_per_class": (_parse_int, _in_range(lo=1)),
    "synth_eval_per_class": (_parse_int, _in_range(lo=1)),
    "data_seed": (_parse_int, _in_range(lo=0)),
    "mnist_dir": (_parse_str, None),
}

_KEY_ALIASES = {"seed": "seeds"}

# keys that only matter for some methods; setting them elsewhere is a warning
_METHOD_KEYS = {
    "alpha": {"er", "lwf", "ewc"},
    "buffer_capacity": {"er", "gem"},
    "gem_margin": {"gem"},
    "lwf_temperature": {"lwf"},
    "ewc_lambda": {"ewc"},
    "fisher_samples": {"ewc"},
}


def parse_value(key: str, raw: str):
    """Parse and validate one value for a known config key."""
    if key not in _FIELD_SPECS:
        raise ConfigError(f"unknown key {key!r}")
    parser, validator = _FIELD_SPECS[key]
    try:
        value = parser(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} ({exc})") from exc
    if validator is not None:
        problem = validator(value)
        if problem:
            raise ConfigError(f"{key} {problem}, got {raw!r}")
    return value


def _cross_validate(cfg: RunConfig, explicit: set[str]) -> RunConfig:
    if cfg.dataset == "permuted":
        if "scenario" not in explicit:
            cfg = replace(cfg, scenario="domain_incremental")
        elif cfg.scenario != "domain_incremental":
            raise ConfigError("dataset permuted requires scenario = domain_incremental")
    elif cfg.scenario == "domain_incremental":
        raise ConfigError(f"dataset {cfg.dataset} is class or task incremental")
    if cfg.dataset in ("synthetic_split", "mnist_split"):
        n_classes = cfg.synth_classes if cfg.dataset == "synthetic_split" else 10
        if n_classes % cfg.n_tasks != 0:
            raise ConfigError(f"{n_classes} classes not divisible by n_tasks = {cfg.n_tasks}")
    defaults = RunConfig()
    for key in explicit & set(_METHOD_KEYS):
        if cfg.method not in _METHOD_KEYS[key] and getattr(cfg, key) != getattr(defaults, key):
            warnings.warn(f"config key {key!r} is ignored for method {cfg.method!r}")
    return cfg


def _iter_entries(text: str):
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.rstrip()!r}")
        key, raw = body.split("=", 1)
        yield lineno, _KEY_ALIASES.get(key.strip(), key.strip()), raw.strip()


def parse_config(text: str) -> RunConfig:
    values = {}
    explicit = set()
    for lineno, key, raw in _iter_entries(text):
        try:
            values[key] = parse_value(key, raw)
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
        explicit.add(key)
    return _cross_validate(RunConfig(**values), explicit)


def parse_grid(text: str) -> dict[str, list]:
    """Grid file: each line is ``key = v1, v2, ...`` over a RunConfig key."""
    grid: dict[str, list] = {}
    for lineno, key, raw in _iter_entries(text):
        if key in ("seeds", "window_sizes"):
            raise ConfigError(f"line {lineno}: {key} cannot be a grid axis")
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        if not parts:
            raise ConfigError(f"line {lineno}: no values for {key}")
        try:
            grid[key] = [parse_value(key, p) for p in parts]
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    if not grid:
        raise ConfigError("grid file defines no axes")
    return grid


def config_text(cfg: RunConfig) -> str:
    """Serialize a config back to the key = value format."""
    lines = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if v is None:
            v = "all"
        elif isinstance(v, tuple):
            v = ", ".join(str(x) for x in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
