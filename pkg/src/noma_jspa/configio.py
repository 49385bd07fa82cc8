"""Strict YAML scenario-file parsing; unknown keys are hard errors."""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Any, Optional

import yaml

from .baselines import FtpcConfig
from .campaign import ScenarioSpec, Sweep
from .jspa import JspaConfig
from .model import SystemConfig
from .usma import Usma2Config


class ConfigError(Exception):
    """Malformed scenario configuration."""


_INT_FIELDS_OK_AS_FLOAT = ()


def _build(section: str, cls, data: dict[str, Any], **extra):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}': {sorted(unknown)}")
    kwargs = dict(data)
    kwargs.update(extra)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{section}' section: {exc}") from exc


def _expect_mapping(name: str, value: Any) -> dict[str, Any]:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"'{name}' must be a mapping")
    return value


def parse_scenario(data: Any) -> ScenarioSpec:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("scenario config must be a mapping")
    known_top = {
        "system",
        "scheme",
        "num_trials",
        "num_slots",
        "sweep",
        "jspa",
        "usma2",
        "ftpc",
        "ofdma_subchannels",
    }
    unknown = set(data) - known_top
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {sorted(unknown)}")

    system = _build("system", SystemConfig, _expect_mapping("system", data.get("system")))
    usma2 = _build("usma2", Usma2Config, _expect_mapping("usma2", data.get("usma2")))
    jspa_data = _expect_mapping("jspa", data.get("jspa"))
    if "usma2" in jspa_data:
        raise ConfigError("put annealing settings in the top-level 'usma2' section")
    jspa = _build("jspa", JspaConfig, jspa_data, usma2=usma2)
    ftpc = _build("ftpc", FtpcConfig, _expect_mapping("ftpc", data.get("ftpc")))

    sweep: Optional[Sweep] = None
    if data.get("sweep") is not None:
        sweep_data = _expect_mapping("sweep", data["sweep"])
        unknown = set(sweep_data) - {"variable", "values"}
        if unknown:
            raise ConfigError(f"unknown key(s) in 'sweep': {sorted(unknown)}")
        if "variable" not in sweep_data or "values" not in sweep_data:
            raise ConfigError("'sweep' needs 'variable' and 'values'")
        values = sweep_data["values"]
        if not isinstance(values, (list, tuple)) or not all(
            isinstance(v, int) for v in values
        ):
            raise ConfigError("'sweep.values' must be a list of integers")
        try:
            sweep = Sweep(str(sweep_data["variable"]), tuple(values))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    try:
        return ScenarioSpec(
            system=system,
            scheme=str(data.get("scheme", "jspa1")),
            num_trials=int(data.get("num_trials", 1)),
            num_slots=int(data.get("num_slots", 30)),
            sweep=sweep,
            jspa=jspa,
            ftpc=ftpc,
            ofdma_subchannels=int(data.get("ofdma_subchannels", 25)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_scenario(path: str | Path) -> ScenarioSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from exc
    return parse_scenario(data)
