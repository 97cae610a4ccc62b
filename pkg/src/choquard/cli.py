"""``choquard`` command line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .runner import (EXIT_NUMERICAL, EXIT_OK, PLOT_KINDS, RunConfig, dispatch, error_payload,
                     exit_code_for)


def _add_problem(p: argparse.ArgumentParser, parts: bool = True, grid: bool = True) -> None:
    p.add_argument("--n", type=int, required=True, help="sphere dimension n >= 3")
    p.add_argument("--mu", type=str, required=True, help="nonlocality in (0, n); fractions like 9/2 are exact")
    if parts:
        p.add_argument("--parts", type=str, default=None, help="two block sizes summing to n+1, e.g. 2,2")
    if grid:
        p.add_argument("--grid-size", type=int, default=64)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="choquard", description="Critical Choquard equation on the sphere")
    ap.add_argument("--out", default=None, help="write the JSON envelope here instead of stdout")
    ap.add_argument("--cache-dir", default=None, help="kernel cache directory (default $CHOQUARD_CACHE_DIR)")
    ap.add_argument("--deterministic", action="store_true", help="single-threaded linear algebra")
    ap.add_argument("-v", "--verbose", action="store_true")
    # the global flags are also accepted after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=argparse.SUPPRESS)
    common.add_argument("--cache-dir", default=argparse.SUPPRESS)
    common.add_argument("--deterministic", action="store_true", default=argparse.SUPPRESS)
    sub = ap.add_subparsers(dest="command", required=True)
    _orig = sub.add_parser

    def add_parser(name, **kw):
        return _orig(name, parents=[common], **kw)

    sub.add_parser = add_parser

    p = sub.add_parser("verify", help="run the invariant suite for one configuration")
    _add_problem(p)
    p.add_argument("--seed", type=int, default=7)

    p = sub.add_parser("atlas", help="list block symmetry groups of S^n")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--max-degree", type=int, default=12)

    p = sub.add_parser("kernel", help="assemble the reduced kernel")
    _add_problem(p)
    p.add_argument("--csv", default=None, help="dump K as (theta_i, theta_j, K) rows")

    p = sub.add_parser("grid", help="build the reduced grid")
    _add_problem(p)
    p.add_argument("--csv", default=None, help="dump (theta, weight) rows")

    p = sub.add_parser("solve", help="search for critical points")
    _add_problem(p)
    p.add_argument("--class", dest="cls", choices=["G", "Gamma"], default="G")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--compare-classes", action="store_true",
                   help="for Gamma, also solve class G and report energy coincidences")

    p = sub.add_parser("ledger", help="exponent bookkeeping for local boundedness")
    _add_problem(p, parts=False, grid=False)

    p = sub.add_parser("bubble", help="bubble lift and the constant solution")
    _add_problem(p, parts=False, grid=False)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=11)

    p = sub.add_parser("plot-data", help="CSV series from a saved envelope")
    p.add_argument("--input", required=True)
    p.add_argument("--kind", choices=PLOT_KINDS, default="profile")
    p.add_argument("--csv", required=True)
    p.add_argument("--index", type=int, default=0)
    return ap


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    skip = {"command", "out", "cache_dir", "deterministic", "verbose"}
    options = {k: v for k, v in vars(ns).items() if k not in skip and v is not None and v is not False}
    return RunConfig(ns.command, options, ns.out, ns.cache_dir, ns.deterministic)


def main(argv=None) -> int:
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, stream=sys.stderr)
    cfg = config_from_args(ns)
    try:
        env = dispatch(cfg)
    except Exception as exc:  # every failure leaves a machine-readable payload
        code = exit_code_for(exc)
        logging.getLogger("choquard").debug("command failed", exc_info=True)
        sys.stdout.write(json.dumps(error_payload(exc, code), sort_keys=True) + "\n")
        return code
    if not cfg.out:
        sys.stdout.write(env.to_json())
    if cfg.command == "verify" and not env.payload.get("all_passed", False):
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
