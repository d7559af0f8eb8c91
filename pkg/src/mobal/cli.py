"""Command-line entry point: ``mobal <subcommand> [flags]``.

Exit codes: 0 success, 2 configuration error, 3 capacity guard tripped.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import experiments as ex
from .errors import CapacityError, ConfigError
from .netsys import NetSysConfig

EXIT_OK, EXIT_CONFIG, EXIT_CAPACITY = 0, 2, 3


def _int_list(text: str) -> list[int]:
    try:
        if ".." in text:
            return ex.parse_seeds(text)
        return [int(x) for x in text.split(",") if x.strip()]
    except (ValueError, ConfigError):
        raise argparse.ArgumentTypeError(f"expected integers like '1,2,5' or '1..18', got {text!r}")


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return doc


def _netsys(doc: dict) -> NetSysConfig:
    return NetSysConfig.from_dict({"n_components": 1, **doc.get("netsys", {})}) if "netsys" in doc \
        else NetSysConfig()


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mobal", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seeds=None):
        sp.add_argument("--config", help="JSON scenario file")
        sp.add_argument("--out", help="output CSV path (stdout if omitted)")
        if seeds is not None:
            sp.add_argument("--seeds", default=seeds, help="seed range a..b (inclusive) or list")
        return sp

    common(sub.add_parser("obs-dist", help="per-component alert distributions"))
    sp = common(sub.add_parser("lattice-count", help="number of representative beliefs"))
    sp.add_argument("--n", type=_int_list, default=[2, 4, 8])
    sp.add_argument("--r", type=_int_list, default=list(range(9)))

    sp = common(sub.add_parser("filter-eval", help="particle filter error against the exact filter"), "0..99")
    sp.add_argument("--n", type=_int_list, default=[2])
    sp.add_argument("--m", type=_int_list, default=list(range(1, 19)))
    sp.add_argument("--r", type=int, default=5, help="resolution of the evaluation strategy")
    sp.add_argument("--episodes", type=int, default=100)
    sp.add_argument("--steps", type=int, default=100)

    sp = common(sub.add_parser("posterior-eval", help="posterior and discrepancy traces"), "0..19")
    sp.add_argument("--steps", type=int, default=100)

    for name, default_r in (("bound-eval", [1, 2, 3, 4, 5, 10, 20, 50]), ("costfun-eval", [1, 5, 10])):
        sp = common(sub.add_parser(name))
        sp.add_argument("--r", type=_int_list, default=default_r)
        sp.add_argument("--conj", type=float, default=0.5, help="conjectured attack probability")
        sp.add_argument("--true-p", type=float, default=0.2)
        sp.add_argument("--r-ref", type=int, default=200)

    sp = common(sub.add_parser("run-loop", help="closed-loop episodes with baselines"), "0..99")
    sp.add_argument("--steps", type=int, help="episode length (overrides config)")
    sp.add_argument("--log-dir", help="directory for per-episode CSV logs")
    return p


def run(args) -> str:
    doc = _load_config(args.config)
    cmd = args.command
    if cmd == "obs-dist":
        header, rows = ex.obs_dist_rows(_netsys(doc))
        schema = "obs-dist"
    elif cmd == "lattice-count":
        if any(n < 1 for n in args.n) or any(r < 0 for r in args.r):
            raise ConfigError("need n >= 1 and r >= 0")
        header, rows = ex.lattice_count_rows(args.n, args.r)
        schema = "lattice-count"
    elif cmd == "filter-eval":
        if args.episodes < 1 or args.steps < 1:
            raise ConfigError("episodes and steps must be positive")
        header, rows = ex.filter_eval_rows(args.n, args.m, args.episodes, args.steps, ex.parse_seeds(args.seeds),
                                           args.r, _netsys(doc))
        schema = "filter-eval"
    elif cmd == "posterior-eval":
        if args.steps < 1:
            raise ConfigError("steps must be positive")
        header, rows = ex.posterior_eval_rows(ex.Scenario.from_dict(doc), args.steps, ex.parse_seeds(args.seeds))
        schema = "posterior-eval"
    elif cmd in ("bound-eval", "costfun-eval"):
        if any(r < 1 for r in args.r) or args.r_ref < max(args.r):
            raise ConfigError("resolutions must be positive and not exceed --r-ref")
        fn = ex.bound_eval_rows if cmd == "bound-eval" else ex.costfun_eval_rows
        header, rows = fn(args.r, conj_p=args.conj, true_p=args.true_p, r_ref=args.r_ref, netsys=_netsys(doc))
        schema = cmd
    elif cmd == "run-loop":
        if args.steps is not None:
            doc = {**doc, "horizon": args.steps}
        header, rows = ex.run_loop_rows(ex.Scenario.from_dict(doc), ex.parse_seeds(args.seeds), args.log_dir)
        schema = "run-loop"
    else:  # pragma: no cover
        raise ConfigError(f"unknown command {cmd}")
    return ex.write_csv(args.out, schema, header, rows)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        text = run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapacityError as exc:
        print(f"capacity limit: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    if not args.out:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
