"""``acsphere`` command-line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from ..errors import ConfigurationError, NumericalError, SnapshotError
from ..geometry import set_fft_workers
from . import drivers
from .config import load_config

COMMANDS = {
    "stationary": drivers.cmd_stationary,
    "spectrum": drivers.cmd_spectrum,
    "flow": drivers.cmd_flow,
    "sweep": drivers.cmd_sweep,
    "orbit": drivers.cmd_orbit,
    "toy": drivers.cmd_toy,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="acsphere",
        description="Allen-Cahn gradient flows on the 3-sphere between the Clifford torus "
                    "solution and ground states.")
    parser.add_argument("--config", help="key = value configuration file")
    parser.add_argument("--out", help="output directory (overrides output_dir)")
    parser.add_argument("--threads", type=int, help="FFT worker threads")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, help=(fn.__doc__ or name).strip().splitlines()[0])
    ins = sub.add_parser("inspect", help="summarize a field snapshot")
    ins.add_argument("snapshot")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, output_dir=args.out, threads=args.threads)
        if cfg.threads < 1:
            raise ConfigurationError(f"threads must be >= 1, got {cfg.threads}")
        set_fft_workers(cfg.threads)
        if args.command == "inspect":
            result = drivers.inspect_snapshot(args.snapshot, cfg)
        else:
            result = COMMANDS[args.command](cfg, cfg.output_dir)
            result = {k: v for k, v in result.items() if k not in ("records", "rows", "history")}
    except (ConfigurationError, SnapshotError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(result, indent=2, default=drivers._jsonable))
    return 0


if __name__ == "__main__":
    sys.exit(main())
