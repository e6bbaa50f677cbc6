"""Command-line entry point.

Exit codes: 0 success, 2 usage or configuration error, 3 I/O error.
Human-readable output goes to stdout; machine output only to files.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

from .channel import builtin_channels, classify_range, load_channel_overrides, local_comm_radius
from .errors import ConfigError, SwarmSenseError, UnknownChannel

EXIT_OK, EXIT_USAGE, EXIT_IO = 0, 2, 3
OUTPUT_ENV = "SWARMSENSE_OUTPUT_DIR"


class UsageError(SwarmSenseError):
    """Invalid argument values (exit code 2)."""


def load_schema() -> dict:
    return json.loads((resources.files("swarmsense") / "data" / "schema.json").read_text())


def _out_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "out"))


# ---------------------------------------------------------------- link-budget


def resolve_channel(name: str, channels) -> list:
    """Exact name, else a unique prefix (``sonar`` finds ``sonar-30kHz``)."""
    if name in channels:
        return [channels[name]]
    hits = [c for n, c in channels.items() if n.startswith(name)]
    if len(hits) == 1:
        return hits
    if hits:
        raise UnknownChannel(f"{name!r} is ambiguous: {', '.join(c.name for c in hits)}")
    raise UnknownChannel(f"unknown channel {name!r}; known: {', '.join(channels)}")


def cmd_link_budget(args) -> int:
    channels = load_channel_overrides(args.override) if args.override else builtin_channels()
    if args.all or args.channel is None:
        rows = list(channels.values())
    else:
        rows = resolve_channel(args.channel, channels)
    print(f"{'channel':<16}{'band':>12}{'dB/m':>9}{'budget dB':>11}{'range m':>10}")
    for c in rows:
        band = f"{c.band:g} {c.band_unit}"
        print(f"{c.name:<16}{band:>12}{c.attenuation:>9g}{c.link_budget:>11g}{c.max_range:>10g}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(load_schema()["link_budget_csv"])
            for c in rows:
                w.writerow([c.name, c.carrier.value, repr(c.band), c.band_unit, repr(c.attenuation), repr(c.link_budget), repr(c.max_range)])
    return EXIT_OK


# ---------------------------------------------------------------- locality


def cmd_locality(args) -> int:
    if not (args.volume > 0 and math.isfinite(args.volume)):
        raise UsageError("--volume must be a positive number")
    if args.count < 1:
        raise UsageError("--count must be at least 1")
    rc = local_comm_radius(args.volume, args.count)
    print(f"R_c = {rc:.3f} m ({classify_range(rc).value})")
    return EXIT_OK


# ---------------------------------------------------------------- efield-calib


def cmd_efield_calib(args) -> int:
    from .calibration import CalibrationSetup, calibrate_noise, draw_trials, run_trials, write_csv

    if args.trials < 0:
        raise UsageError("--trials must be non-negative")
    try:
        setup = CalibrationSetup(
            s=args.s,
            r_range=tuple(args.r_range),
            forward=args.forward,
            duration=args.duration,
            adc_bits=args.adc_bits or None,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    ts = draw_trials(setup, args.trials, args.seed)
    if args.noise == "auto":
        if args.trials == 0:
            raise UsageError("--noise auto needs at least one trial")
        res = calibrate_noise(ts, target_median=args.target_median)
    else:
        try:
            sigma = float(args.noise)
        except ValueError:
            raise UsageError("--noise must be a number or 'auto'") from None
        if not sigma >= 0:
            raise UsageError("--noise must be non-negative")
        res = run_trials(ts, sigma)
    if args.out:
        write_csv(args.out, res)
    summ = res.summary()
    print(f"trials {summ['trials']}  used {summ['used']}  noise_sigma {summ['noise_sigma']:.6g} V")
    if summ["median"] is None:
        print("no data")
    else:
        print(f"median error {summ['median']:.6g} deg")
        print(f"max error    {summ['max']:.6g} deg")
        print(f"p99.9 error  {summ['p99_9']:.6g} deg")
    return EXIT_OK


# ---------------------------------------------------------------- run / sweep


def _load(path):
    from .sim.config import load_scenario

    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{path}: no such scenario file")
    return load_scenario(p)


def cmd_run(args) -> int:
    from .sim import run_scenario, write_outputs

    cfg = _load(args.config)
    seed = cfg.run.seed if args.seed is None else args.seed
    metrics = run_scenario(cfg, seed)
    out = Path(args.out) if args.out else Path(cfg.run.output_dir) if cfg.run.output_dir else _out_root() / f"{cfg.name}-{seed}"
    write_outputs(metrics, out)
    p = metrics.packets
    print(f"scenario {cfg.name}  seed {seed}  robots {cfg.robots.count}  horizon {cfg.run.horizon:g} s")
    print(f"docking events {len(metrics.docking_events)}  ascents {sum(metrics.ascent_counts.values())}")
    print(f"packets transmitted {p['transmitted']}  delivered {p['delivered']}  collided {p['collided']}  echoes {p['echoes']}")
    print(f"outputs in {out}")
    return EXIT_OK


def sweep_row(cfg, param: str, value, seed: int) -> list:
    from .sim import run_scenario

    m = run_scenario(cfg, seed)
    errs = m.localization_errors_deg
    n = cfg.robots.count
    return [
        f"{param}={value}/seed={seed}",
        param,
        value,
        seed,
        n,
        cfg.world.volume,
        local_comm_radius(cfg.world.volume, n) if n else "",
        len(m.docking_events),
        sum(m.ascent_counts.values()),
        m.packets["transmitted"],
        m.packets["delivered"],
        m.packets["out_of_range"],
        m.packets["collided"],
        m.packets["echoes"],
        statistics.median(errs) if errs else "",
    ]


def _sweep_job(job):
    return sweep_row(*job)


def parse_seeds(tokens) -> list[int]:
    """Seeds as integers; ``a:b`` expands to the half-open range."""
    seeds = []
    for tok in tokens:
        if ":" in tok:
            a, b = tok.split(":", 1)
            seeds.extend(range(int(a), int(b)))
        else:
            seeds.append(int(tok))
    return seeds


def cmd_sweep(args) -> int:
    from .sim.config import param_exists, parse_value, with_param

    cfg = _load(args.config)
    if not param_exists(args.param):
        raise ConfigError(f"{args.param}: no such parameter")
    try:
        seeds = parse_seeds(args.seeds) if args.seeds else [cfg.run.seed]
    except ValueError:
        raise UsageError("--seeds takes integers or a:b ranges") from None
    values = [parse_value(v) for v in args.values]
    variants = [(v, with_param(cfg, args.param, v)) for v in values]
    jobs = [(c, args.param, v, s) for v, c in variants for s in seeds]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_job, jobs))  # map keeps submission order
    else:
        rows = [_sweep_job(j) for j in jobs]
    out = Path(args.out) if args.out else _out_root() / f"sweep-{cfg.name}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(load_schema()["sweep_csv"])
        w.writerows(rows)
    print(f"{len(rows)} runs ({len(values)} values x {len(seeds)} seeds) -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="swarmsense", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("link-budget", help="attenuation, budget and range per channel")
    p.add_argument("channel", nargs="?", help="channel name or unique prefix")
    p.add_argument("--all", action="store_true", help="every known channel")
    p.add_argument("--csv", metavar="PATH", help="also write the rows as CSV")
    p.add_argument("--override", metavar="TOML", help="channel table replacing the built-in one")
    p.set_defaults(func=cmd_link_budget)

    p = sub.add_parser("locality", help="local communication radius for a swarm density")
    p.add_argument("--volume", type=float, required=True, help="m^3")
    p.add_argument("--count", type=int, required=True)
    p.set_defaults(func=cmd_locality)

    p = sub.add_parser("efield-calib", help="Monte Carlo bearing errors through the receiver chain")
    p.add_argument("--s", type=float, default=0.05, help="receiver half spacing, m")
    p.add_argument("--r-range", type=float, nargs=2, default=(0.1, 1.0), metavar=("LO", "HI"))
    p.add_argument("--noise", default="0", help="electrode noise sigma in V, or 'auto' to calibrate")
    p.add_argument("--target-median", type=float, default=5.0, help="deg, used with --noise auto")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--forward", choices=("inverse-square", "exact"), default="inverse-square")
    p.add_argument("--adc-bits", type=int, default=14, help="0 means an ideal converter")
    p.add_argument("--duration", type=float, default=0.05, help="s per measurement")
    p.add_argument("--out", metavar="CSV")
    p.set_defaults(func=cmd_efield_calib)

    p = sub.add_parser("run", help="run one scenario")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", metavar="DIR")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="values x seeds over one scenario parameter")
    p.add_argument("config")
    p.add_argument("--param", required=True, help="section.key, e.g. robots.count")
    p.add_argument("--values", nargs="*", default=[])
    p.add_argument("--seeds", nargs="*", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", metavar="CSV")
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UnknownChannel, UsageError) as exc:
        lines = exc.problems if isinstance(exc, ConfigError) else [exc.args[0] if exc.args else str(exc)]
        for line in lines:
            print(f"error: {line}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
