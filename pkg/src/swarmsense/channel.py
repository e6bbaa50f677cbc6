"""Physical channel models: attenuation, link budgets and locality.

All intensities are in dB relative to a unit reference, and a receiver's
detection floor sits at 0 dB. A channel's link budget is therefore the
transmit power at which the signal reaches the floor exactly at maximum
range, and ``max_range = link_budget / attenuation``.
"""
from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from pathlib import Path

from . import _toml
from .errors import ConfigError, UnknownChannel, UnknownCombination

SOUND_SPEED_WATER = 1500.0  # m/s


class Carrier(str, enum.Enum):
    SONAR = "sonar"
    RADIO = "radio"
    OPTICAL = "optical"
    EFIELD = "efield"


@dataclass(frozen=True)
class ChannelModel:
    """A named physical channel.

    ``band`` is a frequency in Hz when ``band_unit == "Hz"`` and a wavelength
    in nm when ``band_unit == "nm"``.
    """

    name: str
    carrier: Carrier
    band: float
    band_unit: str
    attenuation: float  # dB/m
    link_budget: float  # dB
    antenna_size: float = 0.1  # m, informational
    analog: bool = False

    def __post_init__(self):
        object.__setattr__(self, "carrier", Carrier(self.carrier))
        if self.band_unit not in ("Hz", "nm"):
            raise ValueError(f"band_unit must be 'Hz' or 'nm', got {self.band_unit!r}")
        if not self.attenuation > 0:
            raise ValueError(f"{self.name}: attenuation must be > 0")
        if not self.link_budget > 0:
            raise ValueError(f"{self.name}: link budget must be > 0")

    @property
    def max_range(self) -> float:
        return max_range(self)

    @property
    def propagation_speed(self) -> float:
        """Signal speed in m/s; ``math.inf`` for channels instantaneous at tank scale."""
        return SOUND_SPEED_WATER if self.carrier is Carrier.SONAR else math.inf


def path_loss(channel: ChannelModel, d: float) -> float:
    """Loss in dB over ``d`` meters (linear in distance)."""
    if d < 0:
        raise ValueError("distance must be non-negative")
    return channel.attenuation * d


def max_range(channel: ChannelModel) -> float:
    """Distance at which path loss uses up the whole link budget."""
    return channel.link_budget / channel.attenuation


def received_intensity(channel: ChannelModel, tx_power: float, d: float) -> float:
    """Received level in dB: ``tx_power - path_loss``."""
    return tx_power - path_loss(channel, d)


# name, carrier, band, unit, attenuation dB/m, antenna m, range m, analog
_TABLE1 = (
    ("sonar-30kHz", "sonar", 30e3, "Hz", 0.3, 0.1, 300.0, False),
    ("radio-100kHz", "radio", 100e3, "Hz", 1.0, 100.0, 100.0, False),
    ("radio-1MHz", "radio", 1e6, "Hz", 4.0, 10.0, 25.0, False),
    ("radio-100MHz", "radio", 100e6, "Hz", 40.0, 0.1, 2.5, False),
    ("ir-unmodulated", "optical", 800.0, "nm", 10.0, 0.1, 0.25, True),
    ("ir-pcm", "optical", 800.0, "nm", 10.0, 0.1, 0.5, False),
    ("blue", "optical", 460.0, "nm", 1.0, 0.1, 1.2, False),
    ("efield-2.5kHz", "efield", 2.5e3, "Hz", 100.0, 0.1, 1.0, False),
)

# budgets written out as attenuation x range, so the table is bit-exact
_TABLE1_BUDGETS = {
    "sonar-30kHz": 90.0,
    "radio-100kHz": 100.0,
    "radio-1MHz": 100.0,
    "radio-100MHz": 100.0,
    "ir-unmodulated": 2.5,
    "ir-pcm": 5.0,
    "blue": 1.2,
    "efield-2.5kHz": 100.0,
}

TABLE1_RANGES = {row[0]: row[6] for row in _TABLE1}


def builtin_channels() -> dict[str, ChannelModel]:
    """The eight reference channels, keyed by name, in table order."""
    out = {}
    for name, carrier, band, unit, att, antenna, _rng, analog in _TABLE1:
        out[name] = ChannelModel(
            name=name,
            carrier=carrier,
            band=band,
            band_unit=unit,
            attenuation=att,
            link_budget=_TABLE1_BUDGETS[name],
            antenna_size=antenna,
            analog=analog,
        )
    return out


def get_channel(name: str, channels: dict[str, ChannelModel] | None = None) -> ChannelModel:
    channels = builtin_channels() if channels is None else channels
    try:
        return channels[name]
    except KeyError:
        raise UnknownChannel(name) from None


_BAND_RE = re.compile(r"^\s*([0-9.eE+-]+)\s*(Hz|kHz|MHz|GHz|nm)\s*$")
_BAND_SCALE = {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9, "nm": 1.0}
_CHANNEL_KEYS = {"name", "carrier", "frequency", "attenuation_db_per_m", "range_m", "antenna_size_m", "analog"}
_CHANNEL_REQUIRED = {"name", "carrier", "frequency", "attenuation_db_per_m", "range_m"}


def parse_band(text) -> tuple[float, str]:
    """Parse ``"30 kHz"`` or ``"460 nm"`` into (value, "Hz"|"nm")."""
    m = _BAND_RE.match(str(text))
    if not m:
        raise ValueError(f"cannot parse frequency/wavelength {text!r}")
    value, unit = float(m.group(1)), m.group(2)
    return value * _BAND_SCALE[unit], ("nm" if unit == "nm" else "Hz")


def channels_from_records(records, base: dict[str, ChannelModel] | None = None) -> dict[str, ChannelModel]:
    """Build channels from override records, merged over ``base``.

    Each record carries ``name, carrier, frequency, attenuation_db_per_m,
    range_m`` and optionally ``antenna_size_m`` and ``analog``. The budget is
    derived as attenuation x range. Unknown keys are rejected.
    """
    out = dict(builtin_channels() if base is None else base)
    problems = []
    for i, rec in enumerate(records):
        where = f"channel[{i}]"
        if not isinstance(rec, dict):
            problems.append(f"{where}: expected a table")
            continue
        unknown = sorted(set(rec) - _CHANNEL_KEYS)
        missing = sorted(_CHANNEL_REQUIRED - set(rec))
        problems += [f"{where}.{k}: unknown key" for k in unknown]
        problems += [f"{where}.{k}: missing" for k in missing]
        if unknown or missing:
            continue
        try:
            band, unit = parse_band(rec["frequency"])
            att = float(rec["attenuation_db_per_m"])
            rng = float(rec["range_m"])
            out[rec["name"]] = ChannelModel(
                name=str(rec["name"]),
                carrier=rec["carrier"],
                band=band,
                band_unit=unit,
                attenuation=att,
                link_budget=att * rng,
                antenna_size=float(rec.get("antenna_size_m", 0.1)),
                analog=bool(rec.get("analog", False)),
            )
        except ValueError as exc:
            problems.append(f"{where}: {exc}")
    if problems:
        raise ConfigError(problems)
    return out


def load_channel_overrides(path, base: dict[str, ChannelModel] | None = None) -> dict[str, ChannelModel]:
    """Read a TOML file with ``[[channel]]`` records and merge it over the built-ins."""
    try:
        data = _toml.loads(Path(path).read_text())
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    extra = sorted(set(data) - {"channel"})
    if extra:
        raise ConfigError([f"{k}: unknown top-level key" for k in extra])
    return channels_from_records(data.get("channel", []), base)


class Locality(str, enum.Enum):
    LOCAL = "Local"
    INTERMEDIATE = "Intermediate"
    GLOBAL = "Global"


LOCAL_BAND = (0.5, 1.2)
GLOBAL_FLOOR = 3.0


def local_comm_radius(volume: float, count: int) -> float:
    """Radius of the per-robot share of the swarm volume.

    Solves ``count * 4/3 pi R^3 = volume`` for R.
    """
    if not volume > 0:
        raise ValueError("swarm volume must be positive")
    if count < 1:
        raise ValueError("robot count must be at least 1")
    return (volume / (count * 4.0 / 3.0 * math.pi)) ** (1.0 / 3.0)


def classify_range(radius: float) -> Locality:
    """Local for [0.5, 1.2] m, Global from 3 m up, Intermediate anywhere else."""
    if not radius > 0:
        raise ValueError("range must be positive")
    lo, hi = LOCAL_BAND
    if lo <= radius <= hi:
        return Locality.LOCAL
    if radius >= GLOBAL_FLOOR:
        return Locality.GLOBAL
    return Locality.INTERMEDIATE


@dataclass(frozen=True)
class SwarmGeometry:
    volume: float  # V_sw, m^3
    count: int  # N

    def __post_init__(self):
        if not self.volume > 0:
            raise ValueError("swarm volume must be positive")
        if self.count < 1:
            raise ValueError("robot count must be at least 1")

    @property
    def density(self) -> float:
        """Robots per cubic meter."""
        return self.count / self.volume

    @property
    def comm_radius(self) -> float:
        return local_comm_radius(self.volume, self.count)

    @property
    def comm_volume(self) -> float:
        return 4.0 / 3.0 * math.pi * self.comm_radius**3


class Modulation(str, enum.Enum):
    DIRECT = "direct"
    IRDA = "IrDA"
    TV_REMOTE = "TV-remote"
    QAM = "QAM"


class Transducer(str, enum.Enum):
    INFRARED = "infrared"
    BLUE_LED = "blue-LED"


@dataclass(frozen=True)
class ModulationEntry:
    """One row of the 119 kbps optical range measurements.

    ``sensing_band`` is stored verbatim as a (low, high) interval in cm; its
    semantics are not interpreted.
    """

    modulation: Modulation
    transducer: Transducer
    comm_range_cm: float | None
    sensing_band_cm: tuple[float, float] | None


_TABLE2 = (
    (Modulation.DIRECT, Transducer.INFRARED, None, None),
    (Modulation.IRDA, Transducer.INFRARED, 7.0, (0.0, 5.0)),
    (Modulation.TV_REMOTE, Transducer.INFRARED, 5.0, (0.0, 5.0)),
    (Modulation.QAM, Transducer.INFRARED, 12.0, (0.0, 5.0)),
    (Modulation.DIRECT, Transducer.BLUE_LED, 20.0, None),
    (Modulation.IRDA, Transducer.BLUE_LED, 60.0, (0.0, 5.0)),
    (Modulation.TV_REMOTE, Transducer.BLUE_LED, 45.0, (3.0, 8.0)),
    (Modulation.QAM, Transducer.BLUE_LED, 120.0, (7.0, 12.0)),
)

MODULATION_TABLE = {(m, t): ModulationEntry(m, t, c, s) for m, t, c, s in _TABLE2}


def modulation_range(modulation, transducer) -> ModulationEntry:
    try:
        key = (Modulation(modulation), Transducer(transducer))
    except ValueError:
        raise UnknownCombination((modulation, transducer)) from None
    try:
        return MODULATION_TABLE[key]
    except KeyError:  # pragma: no cover - every enum pair is tabulated
        raise UnknownCombination(key) from None
