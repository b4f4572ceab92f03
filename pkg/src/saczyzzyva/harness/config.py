"""Scenario files (TOML) and parameter sweeps."""

from __future__ import annotations

import copy
import sys
from pathlib import Path
from typing import Any

from ..scenario import ConfigError, DelayModel, Fault, Partition, ScenarioConfig, Workload

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "ConfigError",
    "DelayModel",
    "Fault",
    "Partition",
    "ScenarioConfig",
    "Workload",
    "load_config",
    "parse_config",
    "parse_param",
    "sweep_configs",
]


def parse_config(text: str) -> ScenarioConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"bad TOML: {exc}") from None
    cfg = ScenarioConfig.from_dict(data)
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> ScenarioConfig:
    cfg = parse_config(Path(path).read_text())
    if not cfg.name:
        cfg.name = Path(path).stem
    return cfg


def _parse_value(text: str) -> Any:
    try:
        return int(text)
    except ValueError:
        return text


def parse_param(param: str) -> tuple[str, list[Any]]:
    """``"f=1..5"`` → ``("f", [1, 2, 3, 4, 5])``; ``"variant=zyzzyva,zyzzyva5"`` → a list.

    Dotted keys (``delay.jitter=0..4``) address nested tables.
    """
    if "=" not in param:
        raise ConfigError(f"parameter {param!r} must look like key=values")
    key, _, values = param.partition("=")
    key = key.strip()
    if ".." in values:
        lo, _, hi = values.partition("..")
        try:
            return key, list(range(int(lo), int(hi) + 1))
        except ValueError:
            raise ConfigError(f"bad range {values!r}") from None
    return key, [_parse_value(v.strip()) for v in values.split(",") if v.strip()]


def _set(data: dict[str, Any], dotted: str, value: Any) -> None:
    *path, last = dotted.split(".")
    for part in path:
        data = data.setdefault(part, {})
    data[last] = value


def sweep_configs(template: ScenarioConfig, params: list[str], seed: int | None = None) -> list[ScenarioConfig]:
    """Cartesian product of the parameter ranges applied to ``template``.

    ``n`` and ``n_tmc`` are re-derived from ``f`` unless the sweep sets them.
    """
    parsed = [parse_param(p) for p in params]
    swept = {key for key, _ in parsed}
    grid: list[tuple[dict[str, Any], list[str]]] = [(template.to_dict(), [])]
    for key, values in parsed:
        grid = [
            (_with(d, key, value), tags + [f"{key}={value}"]) for d, tags in grid for value in values
        ]
    out = []
    for d, tags in grid:
        if "f" in swept:
            if "n" not in swept:
                d["n"] = None
            if "n_tmc" not in swept:
                d["n_tmc"] = None
        if seed is not None:
            d["seed"] = seed
        d["name"] = f"{template.name or 'sweep'}[{','.join(tags)}]"
        cfg = ScenarioConfig.from_dict(d)
        cfg.validate()
        out.append(cfg)
    return out


def _with(data: dict[str, Any], dotted: str, value: Any) -> dict[str, Any]:
    d = copy.deepcopy(data)
    _set(d, dotted, value)
    return d
