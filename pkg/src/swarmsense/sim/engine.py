"""Hybrid discrete-event loop: packet events over a fixed kinematic tick."""
from __future__ import annotations

import math
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..channel import builtin_channels, get_channel, load_channel_overrides, local_comm_radius, received_intensity
from ..core import Seed, Vec3, as_seed, distance
from ..efield import DipoleSender, ReceiverArray, localize_many, pair_potential_differences
from ..errors import ConfigError, UnknownChannel
from ..protocol import (
    Ack,
    ActiveSensingState,
    ArbitrationState,
    Decision,
    DutyCycle,
    Packet,
    PacketKind,
    Phase,
    Received,
    ReceptionKind,
    SensitivityLadder,
    Timeout,
    TraceRecord,
    arbitration_decide,
    active_sensing_step,
    blue_gradient_response,
    describe_event,
    initial_sensing_state,
    interpret_reception,
)
from .config import ScenarioConfig
from .world import (
    DockingStation,
    Metrics,
    Outcome,
    RobotState,
    Transceiver,
    Transmission,
    World,
    box_surfaces,
    deliver,
    echo,
    pairwise_pressure_intensity,
    tank_surfaces,
)

TX_END, DELIVER, TX_START, TICK = 0, 1, 2, 3
_MARGIN = 0.02  # m, keep-out from tank walls
_COOPERATION_HOLD = 2  # duty periods spent in cooperation before rediscovery
EFIELD_CHANNEL = "efield-2.5kHz"


def _channels(cfg: ScenarioConfig):
    base = builtin_channels()
    if cfg.channels.override:
        path = Path(cfg.channels.override)
        if not path.is_absolute() and cfg.base_dir:
            path = Path(cfg.base_dir) / path
        base = load_channel_overrides(path, base)
    return base


def build_world(cfg: ScenarioConfig, seed=None, phase_offsets=None) -> World:
    """Instantiate robots, reflectors and the initial event queue.

    ``phase_offsets`` pins each robot's first send slot; by default they are
    drawn uniformly over one duty period.
    """
    seed = as_seed(cfg.run.seed if seed is None else seed)
    rng = seed.rng()
    channels = _channels(cfg)
    try:
        digital = get_channel(cfg.channels.digital, channels)
        analog = get_channel(cfg.channels.analog, channels)
    except UnknownChannel as exc:
        raise ConfigError(f"channels: unknown channel {exc.args[0]!r}") from None
    w, dpt, h = cfg.world.tank
    rc = cfg.robots
    n = rc.count
    if rc.positions is not None:
        pos = np.array(rc.positions, dtype=np.float64).reshape(-1, 3)
    else:
        pos = np.column_stack(
            [rng.uniform(0.1 * w, 0.9 * w, n), rng.uniform(0.1 * dpt, 0.9 * dpt, n), rng.uniform(0.1 * h, 0.7 * h, n)]
        )
    energies = np.array(rc.energies, dtype=np.float64) if rc.energies is not None else rng.uniform(*rc.energy_range, n)
    period = cfg.protocol.duty_period
    offsets = rng.uniform(0.0, period, n)
    if phase_offsets is not None:
        offsets = np.asarray(phase_offsets, dtype=np.float64).reshape(n)

    robots = []
    ladders = {}
    for i in range(n):
        trx = {
            digital.name: Transceiver(digital.link_budget),
            analog.name: Transceiver(analog.link_budget),
        }
        ladder = SensitivityLadder(digital, digital.link_budget, cfg.protocol.ladder_levels)
        ladders[i] = ladder
        robots.append(
            RobotState(
                id=i,
                position=Vec3(*pos[i]),
                energy=float(energies[i]),
                energy_drain=rc.drain_rate,
                duty=DutyCycle(period, cfg.protocol.send_fraction, float(offsets[i])),
                sensing=initial_sensing_state(ladder),
                arbitration=ArbitrationState(i, float(energies[i])),
                transceivers=trx,
                cruise_depth=float(pos[i][2]),
            )
        )
    surfaces = tank_surfaces(cfg.world.tank, cfg.world.wall_reflectivity)
    for k, box in enumerate(cfg.world.obstacles):
        surfaces += box_surfaces(box.lo, box.hi, box.reflectivity, label=f"obstacle-{k}")
    station = DockingStation(Vec3(*cfg.world.station), cfg.world.dock_radius) if cfg.world.station else None
    world = World(robots, surfaces, station, channels, digital, analog, cfg.world.tank, rng, seed, cfg.run.tick, cfg.run.horizon)
    world.ladders = ladders
    world.settings = {
        "config": cfg,
        "staleness": cfg.protocol.staleness_periods * period,
        "tick_index": 0,
        "next_trace": 0.0,
        "max_tx": cfg.protocol.send_fraction * period,
    }
    if n == 0:
        return world
    world.schedule(0.0, TICK, "tick")
    for r in robots:
        if r.duty.phase_offset <= cfg.run.horizon:
            world.schedule(r.duty.phase_offset, TX_START, "tx_start", r.id)
    for r in robots:
        world.metrics.ascent_counts[r.id] = 0
    return world


def _trace(world: World, robot: int, before: str, event: str, after: str):
    world.metrics.trace.append(TraceRecord(world.clock, robot, before, event, after))


def _feed(world: World, r: RobotState, event, log_unchanged: bool = True):
    before = r.sensing
    after = active_sensing_step(before, event, world.ladders[r.id])
    if after != before or log_unchanged:
        _trace(world, r.id, before.phase.value, describe_event(event), after.phase.value)
    r.sensing = after
    if after.phase is Phase.COOPERATION and before.phase is not Phase.COOPERATION:
        peer = world.by_id.get(after.peer)
        world.metrics.distance_estimates.append(
            {
                "time": world.clock,
                "robot": r.id,
                "peer": after.peer,
                "estimate": after.distance_estimate,
                "true": distance(r.position, peer.position) if peer else None,
            }
        )
        r.cooperation_until = world.clock + _COOPERATION_HOLD * r.duty.period


def _handle_reception(world: World, r: RobotState, packet: Packet):
    cfg: ScenarioConfig = world.settings["config"]
    rec = interpret_reception(r.id, packet)
    if rec.kind is not ReceptionKind.NEIGHBOR:
        return
    now = world.clock
    r.heard[rec.peer] = now
    r.heard_since_slot = True
    if packet.kind is PacketKind.ENERGY_VALUE:
        r.arbitration = r.arbitration.heard(rec.peer, packet.payload, now)
    elif packet.kind is PacketKind.ID_BEACON and cfg.protocol.active_sensing and r.sensing.phase is Phase.DISCOVERY:
        _feed(world, r, Received(rec, exchange_complete=r.id in packet.payload))


def _on_tx_start(world: World, rid: int):
    cfg: ScenarioConfig = world.settings["config"]
    r = world.by_id[rid]
    now = world.clock
    if cfg.protocol.active_sensing:
        if r.sensing.phase is Phase.COOPERATION and r.cooperation_until is not None and now >= r.cooperation_until:
            fresh = initial_sensing_state(world.ladders[r.id])
            _trace(world, r.id, r.sensing.phase.value, "Reset", fresh.phase.value)
            r.sensing = fresh
            r.cooperation_until = None
        elif r.sensing.phase is Phase.DISCOVERY and not r.heard_since_slot:
            _feed(world, r, Timeout(), log_unchanged=False)
    r.heard_since_slot = False

    staleness = world.settings["staleness"]
    ch = world.digital
    tx_power = r.transceivers[ch.name].tx_power
    if r.sensing.phase is Phase.RANGING:
        first = Packet(PacketKind.SENSING_PROBE, r.id, (r.sensing.peer, r.sensing.sensitivity_level), ch, tx_power, now)
    else:
        heard = tuple(sorted(k for k, t in r.heard.items() if now - t <= staleness))
        first = Packet(PacketKind.ID_BEACON, r.id, heard, ch, tx_power, now)
    dur = r.duty.send_duration / 2
    second = Packet(PacketKind.ENERGY_VALUE, r.id, r.energy, ch, tx_power, now + dur)
    for k, pkt in enumerate((first, second)):
        start = now + k * dur
        tx = Transmission(pkt, start, start + dur, r.position)
        world.transmissions.append(tx)
        world.schedule(start + dur, TX_END, "tx_end", tx)

    jitter = cfg.protocol.slot_jitter
    nxt = now + r.duty.period * (1.0 + (world.rng.uniform(-jitter / 2, jitter / 2) if jitter else 0.0))
    if nxt <= world.horizon:
        world.schedule(nxt, TX_START, "tx_start", rid)


def _resolve_probe(world: World, tx: Transmission, outcomes):
    prober = world.by_id[tx.packet.sender]
    peer_id, level = tx.packet.payload
    if prober.sensing.phase is not Phase.RANGING or prober.sensing.peer != peer_id:
        return
    ladder = world.ladders[prober.id]
    acked = False
    for d in outcomes:
        if d.receiver == peer_id and d.outcome is Outcome.DELIVERED:
            peer = world.by_id[peer_id]
            reply = received_intensity(world.digital, peer.transceivers[world.digital.name].tx_power, distance(peer.position, prober.position))
            acked = reply >= ladder.threshold(level)
    _feed(world, prober, Ack(peer_id) if acked else Timeout())


def _on_tx_end(world: World, tx: Transmission):
    m = world.metrics
    outcomes = deliver(world, tx)
    m.packets["transmitted"] += 1
    for d in outcomes:
        m.packets[d.outcome.value] += 1
        if d.outcome is Outcome.DELIVERED:
            m.packets["max_delivered_distance"] = max(m.packets["max_delivered_distance"], d.distance)
            if d.latency > 0:
                world.schedule(world.clock + d.latency, DELIVER, "deliver", (d.receiver, d.packet))
            else:
                _handle_reception(world, world.by_id[d.receiver], d.packet)
    if tx.packet.kind is PacketKind.SENSING_PROBE:
        _resolve_probe(world, tx, outcomes)
    if not tx.packet.channel.analog:
        e = echo(world, tx)
        if e is not None:
            rec = interpret_reception(e.robot, e.packet)
            m.packets["echoes"] += 1
            m.echo_events.append(
                {
                    "time": world.clock + e.delay,
                    "robot": e.robot,
                    "packet_sender": e.packet.sender,
                    "classification": rec.kind.value,
                    "surface": e.surface,
                }
            )


def _hungry(cfg: ScenarioConfig, r: RobotState) -> bool:
    return r.energy < cfg.robots.recharge_threshold


def _on_tick(world: World):
    cfg: ScenarioConfig = world.settings["config"]
    rc = cfg.robots
    dt = world.tick
    now = world.clock
    staleness = world.settings["staleness"]
    w, dpt, h = world.tank
    m = world.metrics

    for r in world.robots:
        arb = replace(r.arbitration, own_energy=r.energy)
        if r.docked or not _hungry(cfg, r):
            dec = Decision.DESCEND
        else:
            dec = arbitration_decide(arb, staleness, now, rc.recharge_threshold)
        if dec is not arb.decision:
            _trace(world, r.id, f"arb:{arb.decision.value}", "Energy", f"arb:{dec.value}")
        r.arbitration = replace(arb, decision=dec)

    pressure = pairwise_pressure_intensity(world, world.analog) if world.robots else np.zeros(0)
    station = world.station
    for i, r in enumerate(world.robots):
        if r.docked:
            r.vertical_velocity = 0.0
            continue
        hungry = _hungry(cfg, r)
        want_up = hungry and r.decision in (Decision.ASCEND, Decision.UNDECIDED)
        if want_up:
            drive = blue_gradient_response([pressure[i]], Decision.ASCEND)
        else:
            drive = blue_gradient_response([pressure[i]], r.decision, cfg.protocol.pressure_gain)
            if not hungry:
                drive = float(np.clip(drive + rc.depth_gain * (r.cruise_depth - r.position.z), -1.0, 1.0))
        if want_up and not r.ascending:
            m.ascent_counts[r.id] += 1
        r.ascending = want_up
        r.vertical_velocity = drive * rc.max_speed
        x, y, z = r.position.x, r.position.y, r.position.z + r.vertical_velocity * dt
        if want_up and station is not None:
            dx, dy = station.position.x - x, station.position.y - y
            dist = math.hypot(dx, dy)
            stepmax = rc.incline * rc.max_speed * dt
            if dist > 0:
                k = min(1.0, stepmax / dist)
                x, y = x + k * dx, y + k * dy
        if rc.drift_sigma > 0:
            jx, jy = world.rng.normal(0.0, rc.drift_sigma * math.sqrt(dt), 2)
            x, y = x + jx, y + jy
        r.position = Vec3(
            min(max(x, _MARGIN), w - _MARGIN),
            min(max(y, _MARGIN), dpt - _MARGIN),
            min(max(z, _MARGIN), h - _MARGIN),
        )

    for r in world.robots:
        if r.docked:
            r.energy = min(1.0, r.energy + rc.recharge_rate * dt)
            if r.energy >= 1.0:
                r.docked = False
                station.occupant = None
                m.undocking_events.append({"robot": r.id, "time": now})
                _trace(world, r.id, "Docked", "Charged", "Free")
        else:
            r.energy = max(0.0, r.energy - r.energy_drain * dt)

    if station is not None and station.occupant is None:
        cands = [
            r
            for r in world.robots
            if not r.docked
            and _hungry(cfg, r)
            and r.decision in (Decision.ASCEND, Decision.UNDECIDED)
            and distance(r.position, station.position) <= station.radius
        ]
        if cands:
            r = min(cands, key=lambda c: (distance(c.position, station.position), c.id))
            _dock(world, r)

    if now >= world.settings["next_trace"] - 1e-9:
        _sample(world)
        world.settings["next_trace"] += cfg.run.trace_interval

    world.prune_transmissions(now - 2 * world.settings["max_tx"])
    k = world.settings["tick_index"] + 1
    world.settings["tick_index"] = k
    nxt = k * dt
    if nxt <= world.horizon + 1e-9:
        world.schedule(nxt, TICK, "tick")


def _dock(world: World, r: RobotState):
    station = world.station
    rng_max = world.digital.max_range
    cfg = world.settings["config"]
    cluster = []
    for o in world.robots:
        if o.id == r.id:
            continue
        d = distance(o.position, r.position)
        if d <= rng_max:
            cluster.append({"robot": o.id, "energy": o.energy, "distance": d, "hungry": _hungry(cfg, o), "docked": o.docked})
    r.docked = True
    r.ascending = False
    r.position = station.position
    station.occupant = r.id
    world.metrics.docking_events.append(
        {"robot": r.id, "time": world.clock, "energy": r.energy, "decision": r.decision.value, "cluster": cluster}
    )
    _trace(world, r.id, "Free", "Dock", "Docked")


def _sample(world: World):
    cfg: ScenarioConfig = world.settings["config"]
    now = world.clock
    for r in world.robots:
        world.metrics.energy_trace.append(
            (now, r.id, r.position.x, r.position.y, r.position.z, r.energy, r.decision.value, r.sensing.phase.value, int(r.docked))
        )
    if cfg.channels.efield_localization and len(world.robots) > 1:
        _efield_sample(world, cfg.channels.efield_noise_sigma)


def _efield_sample(world: World, sigma: float):
    """Every robot localizes every other robot within e-field range."""
    ch = world.channels.get(EFIELD_CHANNEL)
    max_r = ch.max_range if ch else 1.0
    pos = world.positions()
    n = len(pos)
    ii, jj = np.nonzero(~np.eye(n, dtype=bool))
    rel = pos[jj] - pos[ii]
    horiz = np.hypot(rel[:, 0], rel[:, 1])
    rx = ReceiverArray(Vec3(0, 0, 0))
    keep = (np.linalg.norm(rel, axis=1) <= max_r) & (horiz > 2 * rx.half_spacing)
    if not np.any(keep):
        return
    rel = rel[keep]
    sender = DipoleSender(Vec3(0, 0, 0))
    amps = np.abs(sender.coulomb_scale * sender.amplitude * pair_potential_differences(
        rel, sender.electrode_separation, rx.half_spacing, rx.pair_separation))
    if sigma > 0:
        amps = np.abs(amps + sigma * world.rng.standard_normal(amps.shape))
    batch = localize_many(amps, rx.half_spacing)
    true = np.degrees(np.arctan2(rel[:, 1], rel[:, 0]))
    err = np.abs(np.mod(batch.alpha_deg - true + 180.0, 360.0) - 180.0)
    world.metrics.localization_errors_deg.extend(float(e) for e in err[np.isfinite(err)])


def step(world: World) -> World:
    """Process the next queued event (or tick) and return the world."""
    if not world.queue:
        world.clock += world.tick
        return world
    import heapq

    time, _prio, _seq, kind, payload = heapq.heappop(world.queue)
    world.clock = time
    if kind == "tick":
        _on_tick(world)
    elif kind == "tx_start":
        _on_tx_start(world, payload)
    elif kind == "tx_end":
        _on_tx_end(world, payload)
    elif kind == "deliver":
        rid, packet = payload
        _handle_reception(world, world.by_id[rid], packet)
    return world


def run_world(world: World) -> Metrics:
    while world.queue and world.queue[0][0] <= world.horizon + 1e-9:
        step(world)
    return world.metrics


def measure_distance(channel: str, true_distance: float, levels: int = 16, seed=0) -> float | None:
    """Range one peer at ``true_distance`` with the sensitivity sweep.

    Two robots on ``channel`` with staggered, jitter-free send slots, so no
    packet is lost. Returns the first robot's estimate, or None if it never
    reached cooperation.
    """
    cfg = ScenarioConfig.from_dict(
        {
            "name": "ranging",
            "world": {"tank": [4.0, 2.0, 1.0], "station": [2.0, 1.0, 0.95]},
            "robots": {
                "count": 2,
                "positions": [[1.0, 1.0, 0.5], [1.0 + true_distance, 1.0, 0.5]],
                "energies": [1.0, 1.0],
                "drain_rate": 0.0,
            },
            "channels": {"digital": channel, "analog": channel},
            "protocol": {"slot_jitter": 0.0, "ladder_levels": levels},
            "run": {"horizon": 4.0 * (levels + 4), "seed": seed},
        }
    )
    world = build_world(cfg, seed, phase_offsets=[0.0, 0.5])
    while world.queue and world.queue[0][0] <= world.horizon:
        step(world)
        for est in world.metrics.distance_estimates:
            if est["robot"] == 0:
                return est["estimate"]
    return None


def run_scenario(config: ScenarioConfig, seed=None) -> Metrics:
    """Run a scenario to its horizon; deterministic per (config, seed)."""
    world = build_world(config, seed)
    metrics = run_world(world)
    metrics.final_energy = {r.id: r.energy for r in world.robots}
    metrics.summary_info = {
        "name": config.name,
        "seed": world.seed.value,
        "horizon": config.run.horizon,
        "robots": config.robots.count,
        "volume": config.world.volume,
        "comm_radius": local_comm_radius(config.world.volume, config.robots.count) if config.robots.count else None,
        "digital_channel": world.digital.name,
        "analog_channel": world.analog.name,
    }
    return metrics
