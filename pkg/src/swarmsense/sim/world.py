"""World state and the channel-level physics of the simulator."""
from __future__ import annotations

import enum
import heapq
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..channel import ChannelModel, received_intensity
from ..core import Vec3, distance
from ..protocol import (
    ActiveSensingState,
    ArbitrationState,
    Decision,
    DutyCycle,
    Packet,
    SensitivityLadder,
)


@dataclass(frozen=True)
class Surface:
    """A planar reflector: ``normal`` points into the water it faces.

    ``bounds`` limits the face to an axis-aligned rectangle; None means
    unbounded.
    """

    point: tuple[float, float, float]
    normal: tuple[float, float, float]
    reflectivity: float
    bounds: tuple[tuple[float, float, float], tuple[float, float, float]] | None = None
    label: str = "wall"

    def mirror_distance(self, p: Vec3) -> float | None:
        """Perpendicular distance from ``p`` if its foot lands on the face, else None."""
        n = np.asarray(self.normal)
        rel = p.as_array() - np.asarray(self.point)
        d = float(rel @ n)
        if d <= 0:
            return None
        if self.bounds is not None:
            foot = p.as_array() - d * n
            lo, hi = np.asarray(self.bounds[0]), np.asarray(self.bounds[1])
            if np.any(foot < lo - 1e-12) or np.any(foot > hi + 1e-12):
                return None
        return d


def tank_surfaces(tank, reflectivity: float) -> list[Surface]:
    """Four side walls and the floor; the water surface does not reflect."""
    w, d, _h = tank
    return [
        Surface((0.0, 0.0, 0.0), (1.0, 0.0, 0.0), reflectivity, label="wall-x0"),
        Surface((w, 0.0, 0.0), (-1.0, 0.0, 0.0), reflectivity, label="wall-x1"),
        Surface((0.0, 0.0, 0.0), (0.0, 1.0, 0.0), reflectivity, label="wall-y0"),
        Surface((0.0, d, 0.0), (0.0, -1.0, 0.0), reflectivity, label="wall-y1"),
        Surface((0.0, 0.0, 0.0), (0.0, 0.0, 1.0), reflectivity, label="floor"),
    ]


def box_surfaces(lo, hi, reflectivity: float, label: str = "box") -> list[Surface]:
    out = []
    for axis in range(3):
        for side, coord in ((-1.0, lo[axis]), (1.0, hi[axis])):
            normal = [0.0, 0.0, 0.0]
            normal[axis] = side
            point = list(lo)
            point[axis] = coord
            blo, bhi = list(lo), list(hi)
            blo[axis] = bhi[axis] = coord
            out.append(Surface(tuple(point), tuple(normal), reflectivity, (tuple(blo), tuple(bhi)), label))
    return out


@dataclass
class Transceiver:
    tx_power: float  # dB
    sensitivity: float = 0.0  # dB threshold


@dataclass
class RobotState:
    id: int
    position: Vec3
    energy: float
    energy_drain: float
    duty: DutyCycle
    sensing: ActiveSensingState
    arbitration: ArbitrationState
    transceivers: dict[str, Transceiver]
    cruise_depth: float
    vertical_velocity: float = 0.0
    docked: bool = False
    ascending: bool = False
    heard: dict[int, float] = field(default_factory=dict)
    heard_since_slot: bool = False
    cooperation_until: float | None = None

    @property
    def decision(self) -> Decision:
        return self.arbitration.decision


@dataclass
class DockingStation:
    position: Vec3
    radius: float
    occupant: int | None = None


@dataclass(frozen=True)
class Transmission:
    packet: Packet
    start: float
    end: float
    origin: Vec3


class Outcome(str, enum.Enum):
    DELIVERED = "delivered"
    OUT_OF_RANGE = "out_of_range"
    COLLIDED = "collided"


@dataclass(frozen=True)
class Delivery:
    receiver: int
    outcome: Outcome
    packet: Packet | None
    distance: float
    latency: float


@dataclass(frozen=True)
class EchoResult:
    robot: int
    packet: Packet
    delay: float
    surface: str
    level: float  # dB received by the sender


@dataclass
class Metrics:
    """Append-only record of one run."""

    docking_events: list = field(default_factory=list)
    undocking_events: list = field(default_factory=list)
    ascent_counts: dict = field(default_factory=dict)
    packets: dict = field(
        default_factory=lambda: {
            "transmitted": 0,
            "delivered": 0,
            "out_of_range": 0,
            "collided": 0,
            "echoes": 0,
            "max_delivered_distance": 0.0,
        }
    )
    echo_events: list = field(default_factory=list)
    localization_errors_deg: list = field(default_factory=list)
    distance_estimates: list = field(default_factory=list)
    energy_trace: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    final_energy: dict = field(default_factory=dict)
    summary_info: dict = field(default_factory=dict)


class World:
    """Robots, reflectors, docking station, event queue and a single generator."""

    def __init__(self, robots, surfaces, station, channels, digital, analog, tank, rng, seed, tick, horizon):
        ids = [r.id for r in robots]
        if len(set(ids)) != len(ids):
            raise ValueError("robot ids must be unique")
        self.robots: list[RobotState] = list(robots)
        self.by_id = {r.id: r for r in self.robots}
        self.surfaces: list[Surface] = list(surfaces)
        self.station: DockingStation | None = station
        self.channels: dict[str, ChannelModel] = dict(channels)
        self.digital: ChannelModel = digital
        self.analog: ChannelModel = analog
        self.tank = tank
        self.rng: np.random.Generator = rng
        self.seed = seed
        self.tick = tick
        self.horizon = horizon
        self.clock = 0.0
        self.queue: list = []
        self._seq = itertools.count()
        self.transmissions: list[Transmission] = []
        self.metrics = Metrics()
        self.ladders: dict[int, SensitivityLadder] = {}
        self.settings: dict = {}

    def schedule(self, time: float, priority: int, kind: str, payload=None):
        if time < self.clock:
            raise ValueError("cannot schedule into the past")
        heapq.heappush(self.queue, (time, priority, next(self._seq), kind, payload))

    def peek_time(self) -> float | None:
        return self.queue[0][0] if self.queue else None

    def positions(self) -> np.ndarray:
        return np.array([[r.position.x, r.position.y, r.position.z] for r in self.robots]).reshape(-1, 3)

    def prune_transmissions(self, keep_after: float):
        self.transmissions = [t for t in self.transmissions if t.end >= keep_after]


def _overlaps(a: Transmission, b: Transmission) -> bool:
    return a.start < b.end and b.start < a.end


def deliver(world: World, tx: Transmission) -> list[Delivery]:
    """Resolve one transmission at every other robot.

    A robot receives when the level at its position reaches its sensitivity.
    Any other transmission on the same channel that overlaps in time and is
    also audible at that robot destroys the packet there; so does the robot's
    own overlapping transmission (half duplex).
    """
    p = tx.packet
    ch = p.channel
    out = []
    others = [o for o in world.transmissions if o is not tx and o.packet.channel.name == ch.name and _overlaps(o, tx)]
    for rx in world.robots:
        if rx.id == p.sender:
            continue
        d = distance(tx.origin, rx.position)
        trx = rx.transceivers.get(ch.name)
        threshold = trx.sensitivity if trx else 0.0
        if received_intensity(ch, p.tx_power, d) < threshold:
            out.append(Delivery(rx.id, Outcome.OUT_OF_RANGE, None, d, math.nan))
            continue
        collided = False
        for o in others:
            if o.packet.sender == rx.id:
                collided = True
                break
            if received_intensity(ch, o.packet.tx_power, distance(o.origin, rx.position)) >= threshold:
                collided = True
                break
        if collided:
            out.append(Delivery(rx.id, Outcome.COLLIDED, None, d, math.nan))
        else:
            out.append(Delivery(rx.id, Outcome.DELIVERED, p, d, d / ch.propagation_speed))
    return out


def reflection_loss(reflectivity: float) -> float:
    """dB lost on a mirror bounce; infinite for a black surface."""
    return math.inf if reflectivity <= 0 else -10.0 * math.log10(reflectivity)


def echo(world: World, tx: Transmission) -> EchoResult | None:
    """Mirror echo of a packet off the nearest reflecting surface."""
    p = tx.packet
    robot = world.by_id.get(p.sender)
    if robot is None:
        return None
    best = None
    for s in world.surfaces:
        d = s.mirror_distance(tx.origin)
        if d is not None and (best is None or d < best[0]):
            best = (d, s)
    if best is None:
        return None
    d, surface = best
    ch = p.channel
    level = p.tx_power - (ch.attenuation * 2 * d + reflection_loss(surface.reflectivity))
    trx = robot.transceivers.get(ch.name)
    threshold = trx.sensitivity if trx else 0.0
    if not level >= threshold:
        return None
    return EchoResult(robot.id, p, 2 * d / ch.propagation_speed, surface.label, level)


def aggregate_intensity(world: World, at: Vec3, channel: ChannelModel, exclude: int | None = None, floor: float | None = None) -> float:
    """Sum of linear intensities from every emitting robot at ``at``.

    Each robot's received level (dB) is converted to linear units before the
    sum. Contributions below ``floor`` dB are skipped when a floor is given.
    """
    total = 0.0
    for r in world.robots:
        if r.id == exclude:
            continue
        trx = r.transceivers.get(channel.name)
        if trx is None:
            continue
        level = received_intensity(channel, trx.tx_power, distance(r.position, at))
        if floor is not None and level < floor:
            continue
        total += 10.0 ** (level / 10.0)
    return total


def pairwise_pressure_intensity(world: World, channel: ChannelModel, floor: float = 0.0) -> np.ndarray:
    """Intensity each robot senses from all the others (its own light excluded)."""
    tx = np.array([r.transceivers[channel.name].tx_power for r in world.robots], dtype=np.float64)
    emitting = np.ones(len(world.robots), dtype=bool)
    return kernels.linear_intensity_sum(world.positions(), tx, channel.attenuation, floor, emitting)
