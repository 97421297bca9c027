"""Run configuration: TOML loading, validation, and round-trip serialization.

A run file is sectioned key-value text.  Every key has a shipped default, so
an empty file is a valid NF-mission configuration; unknown keys anywhere are
rejected (typos must not silently fall back to defaults).
"""

from __future__ import annotations

import dataclasses

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from dataclasses import dataclass, field
from typing import Optional

from .baselines import BaselineKind
from .convex import SolverSettings
from .jamming_opt import NonOutageConfig, TwoLinkParams
from .model import (
    PRESETS,
    NLoSParams,
    PropulsionParams,
    ScenarioPreset,
    SolarParams,
    SystemParams,
    validate_scenario,
)

ALGORITHMS = ("alg1", "alg1-nlos", "alg1-two-link", "alg1-non-outage", "alg2") + tuple(
    f"baseline:{kind.value}" for kind in BaselineKind
)


class ConfigError(ValueError):
    """Unreadable, unparsable, or invariant-violating run file."""


@dataclass(frozen=True)
class RunConfig:
    system: SystemParams = field(default_factory=SystemParams)
    propulsion: PropulsionParams = field(default_factory=PropulsionParams)
    solar: SolarParams = field(default_factory=SolarParams)
    scenario: ScenarioPreset = field(default_factory=lambda: PRESETS["NF"])
    algorithm: str = "alg1"
    output_dir: str = "out"
    seed: int = 0
    figures: bool = True
    solver: Optional[SolverSettings] = None
    nlos: Optional[NLoSParams] = None
    two_link: Optional[TwoLinkParams] = None
    non_outage: Optional[NonOutageConfig] = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(
                f"unknown algorithm {self.algorithm!r}; choose one of {', '.join(ALGORITHMS)}")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        try:
            validate_scenario(self.scenario, self.system)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.algorithm == "alg1-nlos" and self.nlos is None:
            raise ConfigError("alg1-nlos needs an [nlos] section")
        if self.algorithm == "alg1-two-link" and self.two_link is None:
            raise ConfigError("alg1-two-link needs a [two_link] section")
        if self.algorithm == "alg1-non-outage" and self.non_outage is None:
            raise ConfigError("alg1-non-outage needs a [non_outage] section")


def _build(cls, table: dict, section: str):
    fields = {f.name for f in dataclasses.fields(cls)}
    unknown = set(table) - fields
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
    try:
        return cls(**table)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}]: {exc}") from exc


def _build_scenario(table: dict) -> ScenarioPreset:
    unknown = set(table) - {"preset", "name", "start", "end"}
    if unknown:
        raise ConfigError(f"unknown key(s) in [scenario]: {', '.join(sorted(unknown))}")
    if "preset" in table:
        if {"start", "end"} & set(table):
            raise ConfigError("[scenario]: give either a preset or start/end, not both")
        try:
            return PRESETS[table["preset"]]
        except KeyError:
            raise ConfigError(
                f"[scenario]: unknown preset {table['preset']!r}; "
                f"choose one of {', '.join(PRESETS)}") from None
    if not {"start", "end"} <= set(table):
        raise ConfigError("[scenario]: custom missions need both start and end")
    for key in ("start", "end"):
        v = table[key]
        if not (isinstance(v, list) and len(v) == 2
                and all(isinstance(c, (int, float)) for c in v)):
            raise ConfigError(f"[scenario]: {key} must be a pair of coordinates [x, y]")
    return ScenarioPreset(
        name=str(table.get("name", "custom")),
        start=tuple(float(c) for c in table["start"]),
        end=tuple(float(c) for c in table["end"]),
    )


_SECTIONS = {
    "system": (SystemParams, "system"),
    "propulsion": (PropulsionParams, "propulsion"),
    "solar": (SolarParams, "solar"),
    "solver": (SolverSettings, "solver"),
    "nlos": (NLoSParams, "nlos"),
    "two_link": (TwoLinkParams, "two_link"),
    "non_outage": (NonOutageConfig, "non_outage"),
}
_TOP_KEYS = {"algorithm", "output_dir", "seed", "figures"}


def load_config(path) -> RunConfig:
    """Parse, default, and validate a run file (see module docstring)."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc  # message carries line/column

    unknown = set(raw) - _TOP_KEYS - set(_SECTIONS) - {"scenario"}
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")

    kwargs = {}
    for key in _TOP_KEYS & set(raw):
        kwargs[key] = raw[key]
    if "scenario" in raw:
        kwargs["scenario"] = _build_scenario(raw["scenario"])
    for key, (cls, section) in _SECTIONS.items():
        if key in raw:
            kwargs[key] = _build(cls, raw[key], section)
    try:
        return RunConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (tuple, list)):
        return "[" + ", ".join(_toml_value(c) for c in v) + "]"
    raise TypeError(f"cannot serialize {type(v).__name__}")


def _emit_section(name: str, obj, skip_none=True) -> list:
    lines = [f"[{name}]"]
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if v is None and skip_none:
            continue
        lines.append(f"{f.name} = {_toml_value(v)}")
    lines.append("")
    return lines


def serialize(config: RunConfig) -> str:
    """TOML text that load_config parses back to an equal RunConfig."""
    lines = []
    for key in ("algorithm", "output_dir", "seed", "figures"):
        lines.append(f"{key} = {_toml_value(getattr(config, key))}")
    lines.append("")
    sc = config.scenario
    if sc.name in PRESETS and PRESETS[sc.name] == sc:
        lines += [f"[scenario]", f"preset = {_toml_value(sc.name)}", ""]
    else:
        lines += _emit_section("scenario", sc)
    for key, (_, section) in _SECTIONS.items():
        obj = getattr(config, key)
        if obj is not None:
            lines += _emit_section(section, obj)
    return "\n".join(lines)
