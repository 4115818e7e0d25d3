"""Command-line interface.

Subcommands: `map` runs the mapping pipeline, `synth` writes synthetic inputs
to disk, `eval` scores a map against ground truth, `calib-heading` estimates
the magnetometer offset. Exit codes: 0 success, 1 configuration error,
2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from .errors import ConfigError, IcpMapError
from .io import read_sensor_csv, read_trajectory_csv, write_gnss_csv, write_imu_csv, \
    write_trajectory_csv, atomic_write, format_keyvalues, fmt
from .metrics import crispness, crispness_proxy, loop_closure_error
from .penalties import estimate_heading_offset
from .pipeline import RUN_MODES, load_run_config, run_pipeline
from .ply import read_ply, write_ply
from .scenario import generate_inputs, load_scenario, save_scenario, save_world, load_world

log = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we use 1
        raise ConfigError(message)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="icpmap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_map = sub.add_parser("map", help="run the mapping pipeline")
    p_map.add_argument("--config", required=True, help="run config file (key = value)")
    p_map.add_argument("--out", required=True, help="output directory")
    p_map.add_argument("--mode", choices=RUN_MODES, default=None)
    p_map.add_argument("--seed", type=int, default=None)

    p_synth = sub.add_parser("synth", help="generate synthetic inputs to disk")
    p_synth.add_argument("--config", required=True, help="scenario file (key = value)")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--seed", type=int, default=None)

    p_eval = sub.add_parser("eval", help="compute metrics for a finished map")
    p_eval.add_argument("--map", required=True, dest="map_path")
    p_eval.add_argument("--world", default=None, help="synthetic world file")
    p_eval.add_argument("--trajectory", default=None)
    p_eval.add_argument("--groundtruth", default=None)
    p_eval.add_argument("--out", default=None, help="optional file for the metrics")

    p_cal = sub.add_parser("calib-heading", help="estimate magnetometer heading offset")
    p_cal.add_argument("--gnss", required=True)
    p_cal.add_argument("--imu", required=True)
    p_cal.add_argument("--min-distance", type=float, default=10.0)
    return parser


def _cmd_map(args) -> int:
    config = load_run_config(args.config, args.out, mode=args.mode, seed=args.seed)
    return run_pipeline(config)


def _cmd_synth(args) -> int:
    scenario = load_scenario(args.config)
    if args.seed is not None:
        import dataclasses

        scenario = dataclasses.replace(scenario, seed=args.seed)
    world, truth, scans, fixes, atts = generate_inputs(scenario)
    out = Path(args.out)
    (out / "scans").mkdir(parents=True, exist_ok=True)
    for k, scan in enumerate(scans):
        write_ply(scan, out / "scans" / f"scan_{k:04d}.ply")
    write_gnss_csv(fixes, out / "gnss.csv")
    write_imu_csv(atts, out / "imu.csv")
    write_trajectory_csv(truth, out / "groundtruth.csv")
    save_world(world, out / "world.txt")
    save_scenario(scenario, out / "scenario.txt")
    print(f"wrote {len(scans)} scans to {out}")
    return 0


def _cmd_eval(args) -> int:
    cloud = read_ply(args.map_path)
    results = []
    if args.world is not None:
        results.append(("crispness_m", crispness(cloud, load_world(args.world))))
    else:
        results.append(("crispness_proxy_m", crispness_proxy(cloud)))
    if args.trajectory is not None and args.groundtruth is not None:
        est = read_trajectory_csv(args.trajectory)
        gt = read_trajectory_csv(args.groundtruth)
        results.extend(sorted(loop_closure_error(est, gt).items()))
    text = format_keyvalues([(k, fmt(v)) for k, v in results])
    print(text, end="")
    if args.out is not None:
        atomic_write(args.out, text)
    return 0


def _cmd_calib(args) -> int:
    fixes, _ = read_sensor_csv(args.gnss)
    _, atts = read_sensor_csv(args.imu)
    offset = estimate_heading_offset(
        fixes,
        [(a.time, a.raw_magnetic_heading) for a in atts],
        min_distance=args.min_distance,
    )
    print(f"heading_offset_deg = {fmt(math.degrees(offset))}")
    return 0


_COMMANDS = {
    "map": _cmd_map,
    "synth": _cmd_synth,
    "eval": _cmd_eval,
    "calib-heading": _cmd_calib,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"icpmap: config error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"icpmap: config error: {exc}", file=sys.stderr)
        return 1
    except IcpMapError as exc:
        print(f"icpmap: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        log.exception("unhandled failure")
        print(f"icpmap: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
