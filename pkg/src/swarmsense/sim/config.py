"""Scenario configuration: TOML sections [world] [robots] [channels] [protocol] [run].

Validation collects every problem as ``section.key: message`` before raising
:class:`~swarmsense.errors.ConfigError`. Unknown sections and keys are errors.
"""
from __future__ import annotations

import copy
import dataclasses
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from .. import _toml
from ..errors import ConfigError

Triple = tuple[float, float, float]


@dataclass(frozen=True)
class Box:
    lo: Triple
    hi: Triple
    reflectivity: float = 0.5


@dataclass(frozen=True)
class WorldConfig:
    tank: Triple = (2.5, 2.0, 1.0)  # m; 5 m^3 by default
    wall_reflectivity: float = 0.5
    station: Triple | None = (1.25, 1.0, 0.95)
    dock_radius: float = 0.15
    obstacles: tuple[Box, ...] = ()

    @property
    def volume(self) -> float:
        return self.tank[0] * self.tank[1] * self.tank[2]


@dataclass(frozen=True)
class RobotsConfig:
    count: int = 20
    energy_range: tuple[float, float] = (0.4, 1.0)
    energies: tuple[float, ...] | None = None
    positions: tuple[Triple, ...] | None = None
    drain_rate: float = 0.002  # 1/s
    recharge_threshold: float = 0.3
    recharge_rate: float = 0.05  # 1/s while docked
    max_speed: float = 0.05  # m/s vertical
    incline: float = 1.0  # horizontal speed / vertical speed while ascending
    drift_sigma: float = 0.0  # m/sqrt(s), horizontal random walk
    depth_gain: float = 2.0  # drive per meter away from cruise depth


@dataclass(frozen=True)
class ChannelsConfig:
    digital: str = "ir-pcm"
    analog: str = "blue"
    override: str | None = None
    efield_localization: bool = False
    efield_noise_sigma: float = 0.0  # V at the electrodes


@dataclass(frozen=True)
class ProtocolConfig:
    duty_period: float = 1.0  # s
    send_fraction: float = 0.05
    slot_jitter: float = 0.5  # fraction of a period the slot start may wander
    ladder_levels: int = 16
    staleness_periods: float = 5.0
    pressure_gain: float = 0.25
    active_sensing: bool = True


@dataclass(frozen=True)
class RunConfig:
    horizon: float = 300.0  # s
    tick: float = 0.05  # s
    seed: int = 1
    trace_interval: float = 1.0  # s
    output_dir: str | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    world: WorldConfig = field(default_factory=WorldConfig)
    robots: RobotsConfig = field(default_factory=RobotsConfig)
    channels: ChannelsConfig = field(default_factory=ChannelsConfig)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    run: RunConfig = field(default_factory=RunConfig)
    source: dict = field(default_factory=dict, compare=False, repr=False)
    base_dir: str | None = field(default=None, compare=False, repr=False)

    @classmethod
    def from_dict(cls, data: dict, base_dir=None) -> ScenarioConfig:
        return _build(data, base_dir)


_SECTIONS = {
    "world": WorldConfig,
    "robots": RobotsConfig,
    "channels": ChannelsConfig,
    "protocol": ProtocolConfig,
    "run": RunConfig,
}


def _triple(v, where, problems):
    try:
        t = tuple(float(x) for x in v)
    except (TypeError, ValueError):
        problems.append(f"{where}: expected three numbers")
        return None
    if len(t) != 3 or not all(math.isfinite(x) for x in t):
        problems.append(f"{where}: expected three finite numbers")
        return None
    return t


def _coerce(section: str, key: str, value: Any, problems: list[str]):
    where = f"{section}.{key}"
    if section == "world" and key in ("tank", "station"):
        return _triple(value, where, problems)
    if section == "world" and key == "obstacles":
        boxes = []
        for i, ob in enumerate(value):
            w = f"{where}[{i}]"
            if not isinstance(ob, dict):
                problems.append(f"{w}: expected a table")
                continue
            unknown = set(ob) - {"lo", "hi", "reflectivity"}
            problems.extend(f"{w}.{k}: unknown key" for k in sorted(unknown))
            lo = _triple(ob.get("lo"), f"{w}.lo", problems)
            hi = _triple(ob.get("hi"), f"{w}.hi", problems)
            refl = float(ob.get("reflectivity", 0.5))
            if not 0.0 <= refl <= 1.0:
                problems.append(f"{w}.reflectivity: must lie in [0, 1]")
            if lo and hi:
                if any(a >= b for a, b in zip(lo, hi)):
                    problems.append(f"{w}: lo must be below hi on every axis")
                boxes.append(Box(lo, hi, refl))
        return tuple(boxes)
    if section == "robots" and key == "positions":
        return tuple(_triple(p, f"{where}[{i}]", problems) for i, p in enumerate(value))
    if section == "robots" and key in ("energy_range", "energies"):
        try:
            return tuple(float(x) for x in value)
        except (TypeError, ValueError):
            problems.append(f"{where}: expected a list of numbers")
            return None
    return value


def _type_check(section, key, value, default, problems):
    where = f"{section}.{key}"
    if value is None or default is None or isinstance(default, tuple):
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            problems.append(f"{where}: expected true/false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            problems.append(f"{where}: expected an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append(f"{where}: expected a number")
            return value
        return float(value)
    if isinstance(default, str) and not isinstance(value, str):
        problems.append(f"{where}: expected a string")
    return value


def _validate(cfg: ScenarioConfig, problems: list[str]):
    w, r, c, p, run = cfg.world, cfg.robots, cfg.channels, cfg.protocol, cfg.run
    if w.tank and any(x <= 0 for x in w.tank):
        problems.append("world.tank: dimensions must be positive")
    if not 0.0 <= w.wall_reflectivity <= 1.0:
        problems.append("world.wall_reflectivity: must lie in [0, 1]")
    if w.station and w.tank and not all(0 <= s <= t for s, t in zip(w.station, w.tank)):
        problems.append("world.station: must lie inside the tank")
    if not w.dock_radius > 0:
        problems.append("world.dock_radius: must be positive")
    if r.count < 0:
        problems.append("robots.count: must be non-negative")
    if r.energies is not None and len(r.energies) != r.count:
        problems.append(f"robots.energies: expected {r.count} values, got {len(r.energies)}")
    if r.energies is not None and not all(0.0 <= e <= 1.0 for e in r.energies):
        problems.append("robots.energies: values must lie in [0, 1]")
    if r.energy_range is not None and (
        len(r.energy_range) != 2 or not 0.0 <= r.energy_range[0] <= r.energy_range[1] <= 1.0
    ):
        problems.append("robots.energy_range: need 0 <= low <= high <= 1")
    if r.positions is not None:
        if len(r.positions) != r.count:
            problems.append(f"robots.positions: expected {r.count} positions, got {len(r.positions)}")
        elif w.tank and any(p_ is not None and not all(0 <= a <= t for a, t in zip(p_, w.tank)) for p_ in r.positions):
            problems.append("robots.positions: every position must lie inside the tank")
    for key in ("drain_rate", "recharge_rate", "drift_sigma", "depth_gain"):
        if getattr(r, key) < 0:
            problems.append(f"robots.{key}: must be non-negative")
    if not 0.0 <= r.recharge_threshold <= 1.0:
        problems.append("robots.recharge_threshold: must lie in [0, 1]")
    if not r.max_speed > 0:
        problems.append("robots.max_speed: must be positive")
    if c.efield_noise_sigma < 0:
        problems.append("channels.efield_noise_sigma: must be non-negative")
    if not p.duty_period > 0:
        problems.append("protocol.duty_period: must be positive")
    if not 0.0 < p.send_fraction < 1.0:
        problems.append("protocol.send_fraction: must lie in (0, 1)")
    if not 0.0 <= p.slot_jitter < 1.0:
        problems.append("protocol.slot_jitter: must lie in [0, 1)")
    if p.ladder_levels < 2:
        problems.append("protocol.ladder_levels: need at least 2")
    if not p.staleness_periods > 0:
        problems.append("protocol.staleness_periods: must be positive")
    if not run.horizon >= 0:
        problems.append("run.horizon: must be non-negative")
    if not run.tick > 0:
        problems.append("run.tick: must be positive")
    if not run.trace_interval > 0:
        problems.append("run.trace_interval: must be positive")
    if not 0 <= run.seed < 2**64:
        problems.append("run.seed: must fit in 64 unsigned bits")


def _build(data: dict, base_dir=None) -> ScenarioConfig:
    problems: list[str] = []
    if not isinstance(data, dict):
        raise ConfigError("scenario: expected a table at top level")
    unknown = sorted(set(data) - set(_SECTIONS) - {"name"})
    problems.extend(f"{k}: unknown section" for k in unknown)
    sections = {}
    for name, cls in _SECTIONS.items():
        raw = data.get(name, {})
        if not isinstance(raw, dict):
            problems.append(f"{name}: expected a table")
            raw = {}
        defaults = cls()
        names = {f.name for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in raw.items():
            if key not in names:
                problems.append(f"{name}.{key}: unknown key")
                continue
            value = _type_check(name, key, value, getattr(defaults, key), problems)
            kwargs[key] = _coerce(name, key, value, problems)
        try:
            sections[name] = cls(**kwargs)
        except TypeError as exc:  # pragma: no cover
            problems.append(f"{name}: {exc}")
            sections[name] = defaults
    if problems:
        raise ConfigError(problems)
    cfg = ScenarioConfig(
        name=str(data.get("name", "scenario")),
        source=copy.deepcopy(data),
        base_dir=None if base_dir is None else str(base_dir),
        **sections,
    )
    _validate(cfg, problems)
    if problems:
        raise ConfigError(problems)
    return cfg


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    text = path.read_text()
    try:
        data = _toml.loads(text)
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return ScenarioConfig.from_dict(data, base_dir=path.parent)


BUNDLED = ("docking", "echo")


def bundled_scenario_path(name: str):
    if name not in BUNDLED:
        raise ConfigError(f"scenario: no bundled scenario {name!r}; have {list(BUNDLED)}")
    return resources.files("swarmsense") / "data" / "scenarios" / f"{name}.toml"


def bundled_scenario(name: str) -> ScenarioConfig:
    p = bundled_scenario_path(name)
    return ScenarioConfig.from_dict(_toml.loads(p.read_text()))


def param_exists(path: str) -> bool:
    section, _, key = path.partition(".")
    cls = _SECTIONS.get(section)
    return cls is not None and key in {f.name for f in dataclasses.fields(cls)}


def with_param(cfg: ScenarioConfig, path: str, value) -> ScenarioConfig:
    """Copy of ``cfg`` with ``section.key`` replaced, revalidated from the raw table."""
    if not param_exists(path):
        raise ConfigError(f"{path}: no such parameter")
    section, _, key = path.partition(".")
    data = copy.deepcopy(cfg.source) if cfg.source else {}
    data.setdefault(section, {})[key] = value
    if section == "robots" and key == "count":
        # explicit per-robot lists no longer match the new count
        for k in ("energies", "positions"):
            data["robots"].pop(k, None)
    return ScenarioConfig.from_dict(data, base_dir=cfg.base_dir)


def parse_value(text: str):
    """Interpret a command-line value as TOML scalar, falling back to a string."""
    try:
        return _toml.loads(f"v = {text}")["v"]
    except _toml.TOMLDecodeError:
        return text
