"""Command-line front-end.

    dlczsim <experiment> [--config PATH] [--seed N] [--out DIR] [--<key> VALUE ...]

Any configuration key (see ``dlczsim.config.KEYS``) can be passed as a
flag.  Exit codes: 0 success, 2 configuration error, 3 malformed data
file, 4 physically inconsistent parameters.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import EXPERIMENTS, KEYS, load_config, parse_overrides
from .errors import ConfigError, DataFormatError, PhysicsError
from .experiments import RUNNERS, write_result

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_PHYSICS = 4

log = logging.getLogger("dlczsim")


def _parser() -> argparse.ArgumentParser:
    keys = "\n".join(f"  --{k:<32} {doc}" for k, (_, doc) in KEYS.items() if k not in ("seed", "out"))
    p = argparse.ArgumentParser(
        prog="dlczsim",
        description="Simulate and analyze a heralded atomic-ensemble memory node.",
        epilog="configuration keys (also valid in --config files as 'key = value'):\n" + keys,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--seed", help="master seed (u64); overrides the config file")
    p.add_argument("--out", help="output directory; overrides the config file")
    p.add_argument("-q", "--quiet", action="store_true", help="only print warnings and errors")
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _parser()
    try:
        args, rest = parser.parse_known_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s: %(message)s")
    try:
        overrides = parse_overrides(rest)
        for key in ("seed", "out"):
            value = getattr(args, key)
            if value is not None:
                overrides.update(parse_overrides([f"--{key}={value}"]))
        cfg = load_config(args.experiment, args.config, overrides)
        result = RUNNERS[args.experiment](cfg)
        written = write_result(result, cfg.out)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except DataFormatError as exc:
        log.error("data format error: %s", exc)
        return EXIT_DATA
    except PhysicsError as exc:
        log.error("physics constraint violated: %s", exc)
        return EXIT_PHYSICS
    for path in written:
        log.info("wrote %s", path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
