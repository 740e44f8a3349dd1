"""Command-line entry point: ``ptzgame {validate,run,certify,replay}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .experiment import CertifyError, certify, replay, run_experiment, write_outputs

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

log = logging.getLogger("ptzgame")


def _validate(args) -> int:
    cfg = load_config(args.config)
    space = cfg.action_space()
    print(f"{cfg.name}: ok ({space.n_players} sensors, {cfg.grid.n_cells} cells, action counts {list(space.sizes)})")
    return EXIT_OK


def _run(args) -> int:
    cfg = load_config(args.config)
    runlog, summary = run_experiment(cfg, args.seed)
    out = Path(args.out) if args.out else Path(f"{cfg.name}-seed{summary.seed}")
    path = write_outputs(cfg, runlog, summary, out)
    sys.stdout.write(summary.text())
    log.info("wrote %s", path)
    return EXIT_OK


def _certify(args) -> int:
    cfg = load_config(args.config)
    sys.stdout.write(certify(cfg).text())
    return EXIT_OK


def _replay(args) -> int:
    err, rows = replay(args.log, args.config)
    print(f"{rows} rows, max |W logged - W replayed| = {err:.3g}")
    return EXIT_OK if err == 0.0 else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ptzgame", description="PTZ sensor-network learning experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", help="check a scenario file")
    s.add_argument("config")
    s.set_defaults(func=_validate)

    s = sub.add_parser("run", help="run the learner on a scenario")
    s.add_argument("config")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", default=None, help="output directory (default: <name>-seed<S>)")
    s.set_defaults(func=_run)

    s = sub.add_parser("certify", help="exact chain analysis of the scenario's reduced game")
    s.add_argument("config")
    s.set_defaults(func=_certify)

    s = sub.add_parser("replay", help="recompute W from a run log")
    s.add_argument("log")
    s.add_argument("--config", default=None, help="scenario file (default: from meta.json next to the log)")
    s.set_defaults(func=_replay)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except (CertifyError, OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
