"""Command line entry point: ``fastdiff params | run CONFIG | selftest``.

Exit codes: 0 all mandatory checks pass, 1 a check failed or the solver
stopped, 2 the configuration is invalid.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import default_config, parse_config
from .errors import ConfigurationError, SolverFailure
from .profiles import derive_params

log = logging.getLogger("fastdiff")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fastdiff", description="Radial fast diffusion experiments.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", metavar="DIR", help="directory for report, series and trajectories")
        p.add_argument("--override", metavar="KEY=VALUE", action="append", default=[],
                       help="set section.key=value (repeatable)")

    pp = sub.add_parser("params", help="print derived constants as JSON")
    pp.add_argument("config", nargs="?", help="config file; its [scenario] N, m, T are used")
    pp.add_argument("--N", type=int, default=3)
    pp.add_argument("--m", type=float, default=0.2)
    pp.add_argument("--T", type=float, default=1.0)
    pp.add_argument("--override", metavar="KEY=VALUE", action="append", default=[])

    pr = sub.add_parser("run", help="run the scenario described by a config file")
    pr.add_argument("config")
    common(pr)

    ps = sub.add_parser("selftest", help="closed-form and solver self checks")
    common(ps)
    return ap


def _read(path: str) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc


def _run(cfg, out) -> int:
    from .scenarios import run_scenario

    result = run_scenario(cfg, out)
    print(result.report.to_text())
    return 0 if result.passed else 1


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "params":
            if args.config:
                cfg = parse_config(_read(args.config), args.override)
                N, m, T = cfg["N"], cfg["m"], cfg["T"]
            else:
                N, m, T = args.N, args.m, args.T
            p = derive_params(N, m, T)
            if not p.in_range:
                raise ConfigurationError(f"m={m} is outside (0, (N-2)/N) for N={N}")
            print(json.dumps(p.as_dict(), indent=2, sort_keys=True))
            return 0
        if args.command == "run":
            cfg = parse_config(_read(args.config), args.override)
        else:
            cfg = default_config("barenblatt-selftest", args.override)
        return _run(cfg, args.out)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
