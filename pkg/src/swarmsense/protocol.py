"""Swarm coordination protocols as pure state machines.

* duty-cycled ID broadcast and reception interpretation
* three-phase active sensing (discovery, ranging by sensitivity sweep,
  cooperation)
* energy arbitration for a single docking station, with optical pressure

Transitions are pure functions ``(state, event) -> state`` so a run can be
replayed from its event log.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Union

import numpy as np

from .channel import ChannelModel, received_intensity
from .errors import OutOfRange, ProtocolViolation

RobotId = int


class PacketKind(str, enum.Enum):
    ID_BEACON = "IdBeacon"
    ENERGY_VALUE = "EnergyValue"
    SENSING_PROBE = "SensingProbe"
    DATA = "Data"


@dataclass(frozen=True)
class Packet:
    kind: PacketKind
    sender: RobotId
    payload: Any
    channel: ChannelModel
    tx_power: float  # dB
    timestamp: float  # s

    def __post_init__(self):
        object.__setattr__(self, "kind", PacketKind(self.kind))
        if self.kind is PacketKind.ENERGY_VALUE and not 0.0 <= float(self.payload) <= 1.0:
            raise ValueError("energy payload must lie in [0, 1]")


@dataclass(frozen=True)
class RawLight:
    """Unmodulated light on a digital receiver: no ID can be decoded."""

    intensity: float
    timestamp: float = 0.0


class Slot(str, enum.Enum):
    LISTEN = "Listen"
    SEND = "Send"


@dataclass(frozen=True)
class DutyCycle:
    period: float = 1.0
    send_fraction: float = 0.05
    phase_offset: float = 0.0

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError("period must be positive")
        if not 0.0 < self.send_fraction < 1.0:
            raise ValueError("send fraction must lie in (0, 1)")

    @property
    def listen_fraction(self) -> float:
        return 1.0 - self.send_fraction

    @property
    def send_duration(self) -> float:
        return self.send_fraction * self.period

    def next_send_start(self, t: float) -> float:
        """Earliest send-slot start at or after ``t``."""
        k = math.ceil((t - self.phase_offset) / self.period)
        return self.phase_offset + k * self.period


def duty_cycle_slot(dc: DutyCycle, t: float) -> Slot:
    """Send during the first ``send_fraction`` of each shifted period."""
    if t < 0:
        raise ValueError("time must be non-negative")
    frac = ((t - dc.phase_offset) % dc.period) / dc.period
    if frac > 1.0 - 1e-9:  # rounding just short of a slot start
        frac = 0.0
    return Slot.SEND if frac < dc.send_fraction else Slot.LISTEN


class ReceptionKind(str, enum.Enum):
    NEIGHBOR = "Neighbor"
    ECHO = "Echo"
    AMBIENT_LIGHT = "AmbientLight"


@dataclass(frozen=True)
class Reception:
    kind: ReceptionKind
    peer: RobotId | None = None


def interpret_reception(own: RobotId, p: Union[Packet, RawLight]) -> Reception:
    """Another robot's ID means a neighbor; our own ID coming back means an echo."""
    if isinstance(p, RawLight):
        return Reception(ReceptionKind.AMBIENT_LIGHT)
    if p.sender == own:
        return Reception(ReceptionKind.ECHO)
    return Reception(ReceptionKind.NEIGHBOR, p.sender)


def sensitivity_to_distance(threshold: float, channel: ChannelModel, tx_power: float) -> float:
    """Distance at which the received level falls to ``threshold``."""
    if threshold > tx_power:
        raise OutOfRange(f"threshold {threshold} dB above transmit power {tx_power} dB")
    return (tx_power - threshold) / channel.attenuation


@dataclass(frozen=True)
class SensitivityLadder:
    """Discrete receiver thresholds for the ranging sweep.

    Level ``levels - 1`` is the most sensitive (threshold at the detection
    floor, i.e. maximum range) and level 0 the least (threshold at the
    transmit power). Thresholds are geometric in linear intensity, which is
    an even spacing in dB.
    """

    channel: ChannelModel
    tx_power: float
    levels: int = 16
    floor: float = 0.0  # dB

    def __post_init__(self):
        if self.levels < 2:
            raise ValueError("ladder needs at least two levels")
        if not self.tx_power > self.floor:
            raise ValueError("transmit power must exceed the detection floor")

    @property
    def top(self) -> int:
        return self.levels - 1

    @property
    def thresholds(self) -> np.ndarray:
        lin = np.geomspace(10 ** (self.tx_power / 10), 10 ** (self.floor / 10), self.levels)
        db = 10 * np.log10(lin)
        db[0], db[-1] = self.tx_power, self.floor
        return db

    def threshold(self, level: int) -> float:
        return float(self.thresholds[level])

    def distance(self, level: int) -> float:
        return sensitivity_to_distance(self.threshold(level), self.channel, self.tx_power)

    @property
    def gap(self) -> float:
        """Largest distance step between adjacent levels."""
        d = [self.distance(k) for k in range(self.levels)]
        return float(np.max(np.diff(d)))

    def acks(self, level: int, true_distance: float) -> bool:
        """Noiseless link check: is the peer heard at this threshold?"""
        return received_intensity(self.channel, self.tx_power, true_distance) >= self.threshold(level)


class Phase(str, enum.Enum):
    DISCOVERY = "Discovery"
    RANGING = "Ranging"
    COOPERATION = "Cooperation"


@dataclass(frozen=True)
class ActiveSensingState:
    phase: Phase = Phase.DISCOVERY
    peer: RobotId | None = None
    sensitivity_level: int = 15
    distance_estimate: float | None = None
    ladder_levels: int = 16

    def __post_init__(self):
        if self.phase is Phase.RANGING and self.peer is None:
            raise ValueError("ranging requires a peer")
        if self.phase is Phase.COOPERATION and self.distance_estimate is None:
            raise ValueError("cooperation requires a distance estimate")


@dataclass(frozen=True)
class Received:
    """A reception; ``exchange_complete`` marks that the peer has also heard us."""

    reception: Reception
    exchange_complete: bool = False


@dataclass(frozen=True)
class Ack:
    peer: RobotId


@dataclass(frozen=True)
class Timeout:
    pass


SensingEvent = Union[Received, Ack, Timeout]

HANDSHAKE_EVENTS = 2


def initial_sensing_state(ladder: SensitivityLadder) -> ActiveSensingState:
    return ActiveSensingState(sensitivity_level=ladder.top, ladder_levels=ladder.levels)


def active_sensing_step(st: ActiveSensingState, event: SensingEvent, ladder: SensitivityLadder) -> ActiveSensingState:
    """Advance the discovery / ranging / cooperation machine by one event.

    Ranging starts at the most sensitive level; each ack lowers the
    sensitivity by one level. The first missed ack fixes the estimate at the
    last level that still worked. A miss at the very first level means the
    peer is gone and discovery restarts.
    """
    if st.phase is Phase.DISCOVERY:
        if isinstance(event, Timeout):
            return replace(st, peer=None)
        if isinstance(event, Ack):
            raise ProtocolViolation("ack received during discovery")
        rec = event.reception
        if rec.kind is not ReceptionKind.NEIGHBOR:
            return st
        if event.exchange_complete and (st.peer is None or st.peer == rec.peer):
            return ActiveSensingState(Phase.RANGING, rec.peer, ladder.top, None, ladder.levels)
        if st.peer is None:
            return replace(st, peer=rec.peer)
        return st

    if st.phase is Phase.RANGING:
        if isinstance(event, Received):
            return st
        if isinstance(event, Ack):
            if event.peer != st.peer:
                raise ProtocolViolation(f"ack from {event.peer} while ranging with {st.peer}")
            if st.sensitivity_level == 0:
                return replace(st, phase=Phase.COOPERATION, distance_estimate=ladder.distance(0))
            return replace(st, sensitivity_level=st.sensitivity_level - 1)
        # timeout: the probe at the current level was not answered
        if st.sensitivity_level >= ladder.top:
            return ActiveSensingState(Phase.DISCOVERY, None, ladder.top, None, ladder.levels)
        last_ok = st.sensitivity_level + 1
        return replace(st, phase=Phase.COOPERATION, distance_estimate=ladder.distance(last_ok))

    raise ProtocolViolation(f"{type(event).__name__} in terminal phase {st.phase.value}")


def liveness_bound(ladder: SensitivityLadder) -> int:
    return 2 + ladder.levels + HANDSHAKE_EVENTS


class Decision(str, enum.Enum):
    ASCEND = "Ascend"
    DESCEND = "Descend"
    UNDECIDED = "Undecided"


@dataclass(frozen=True)
class EnergyReport:
    energy: float
    timestamp: float


@dataclass(frozen=True)
class ArbitrationState:
    own_id: RobotId
    own_energy: float
    known_neighbor_energies: Mapping[RobotId, EnergyReport] = field(default_factory=dict)
    decision: Decision = Decision.UNDECIDED

    def __post_init__(self):
        if not 0.0 <= self.own_energy <= 1.0:
            raise ValueError("energy must lie in [0, 1]")

    def heard(self, peer: RobotId, energy: float, now: float) -> ArbitrationState:
        known = dict(self.known_neighbor_energies)
        known[peer] = EnergyReport(float(energy), float(now))
        return replace(self, known_neighbor_energies=known)

    def fresh(self, staleness_limit: float, now: float) -> dict[RobotId, float]:
        return {
            rid: rep.energy
            for rid, rep in self.known_neighbor_energies.items()
            if now - rep.timestamp <= staleness_limit and rid != self.own_id
        }


def arbitration_decide(
    st: ArbitrationState,
    staleness_limit: float,
    now: float,
    recharge_threshold: float = 0.3,
) -> Decision:
    """Lowest (energy, id) among fresh neighbors ascends; everyone else descends.

    With no fresh neighbor information a hungry robot is Undecided and a
    satisfied one Descends.
    """
    fresh = st.fresh(staleness_limit, now)
    if not fresh:
        return Decision.UNDECIDED if st.own_energy < recharge_threshold else Decision.DESCEND
    mine = (st.own_energy, st.own_id)
    if all(mine < (e, rid) for rid, e in fresh.items()):
        return Decision.ASCEND
    return Decision.DESCEND


def blue_gradient_response(samples, decision: Decision | None = None, gain: float = 0.25) -> float:
    """Vertical drive in [-1, 1]: sink in proportion to sensed neighbor light.

    An Ascend decision overrides the pressure with full upward drive.
    """
    readings = np.asarray(samples, dtype=np.float64).ravel()
    if readings.size == 0:
        raise ValueError("need at least one intensity reading")
    if decision is Decision.ASCEND:
        return 1.0
    return float(np.clip(-gain * readings.sum(), -1.0, 1.0))


@dataclass(frozen=True)
class TraceRecord:
    """One protocol transition: ``time robot before event after``, tab separated."""

    time: float
    robot: RobotId
    before: str
    event: str
    after: str

    def format(self) -> str:
        return f"{self.time:.6f}\t{self.robot}\t{self.before}\t{self.event}\t{self.after}"

    @classmethod
    def parse(cls, line: str) -> TraceRecord:
        t, robot, before, event, after = line.rstrip("\n").split("\t")
        return cls(float(t), int(robot), before, event, after)


def describe_event(event: SensingEvent) -> str:
    if isinstance(event, Received):
        rec = event.reception
        peer = "" if rec.peer is None else f"({rec.peer})"
        return f"{rec.kind.value}{peer}" + ("+exchange" if event.exchange_complete else "")
    if isinstance(event, Ack):
        return f"Ack({event.peer})"
    return "Timeout"
