"""Command line interface.

Each subcommand assembles a config dict (a JSON --config file supplies
defaults, explicit flags override it) and hands it to
experiments.run_experiment. Exit codes: 0 success, 2 config error,
3 unstable estimate, 4 IO error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .estimates import UnstableEstimateError
from .experiments import ConfigError, run_experiment

_SUBCOMMANDS = ("moments", "ratio", "chaos", "bridge", "walks", "tilt",
                "tails", "characters", "parseval", "fieldmax")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rmflab",
        description="Monte Carlo laboratory for random multiplicative "
                    "function moments, Euler products, and chaos integrals.")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in _SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--x", help="main size parameter; comma list allowed")
        p.add_argument("--q", help="moment exponent in [0,1]; comma list allowed")
        p.add_argument("--model", choices=("steinhaus", "rademacher"))
        p.add_argument("--trials", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--sigma", type=float)
        p.add_argument("--grid-dt", dest="grid_dt", type=float)
        p.add_argument("--out", help="output path (required here or in --config)")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--config", help="JSON config file with defaults")
        if name in ("chaos", "bridge"):
            p.add_argument("--v", type=float, help="bridge shift constant V")
        if name == "bridge":
            p.add_argument("--chaos-trials", dest="chaos_trials", type=int)
        if name == "walks":
            p.add_argument("--n", help="walk length; comma list for a family")
            p.add_argument("--a", help="barrier height; comma list for a family")
            p.add_argument("--components", type=int)
        if name == "tilt":
            p.add_argument("--scales", help="comma list of increment scales")
            p.add_argument("--t", type=float)
            p.add_argument("--kind", choices=("increment", "corridor"))
            p.add_argument("--a", type=float, help="corridor half-width")
            p.add_argument("--dimension", type=int, choices=(1, 2))
        if name == "tails":
            p.add_argument("--lambdas", help="comma list of thresholds >= 2")
        if name == "characters":
            p.add_argument("--p", type=int, help="odd prime modulus")
        if name == "parseval":
            p.add_argument("--t-max", dest="t_max", type=float)
            p.add_argument("--x-cap", dest="x_cap", type=int)
        if name == "fieldmax":
            p.add_argument("--grid-count", dest="grid_count", type=int)
    return parser


def _int_or_list(text: str, key: str, list_key: str, config: dict) -> None:
    if "," in text:
        config[list_key] = [int(v) for v in text.split(",") if v]
    else:
        config[key] = int(text)


def _build_config(args: argparse.Namespace) -> dict:
    config: dict = {}
    if args.config is not None:
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: line {exc.lineno}: {exc.msg}")
        if not isinstance(loaded, dict):
            raise ConfigError(f"{args.config}: top level must be an object")
        config.update(loaded)
    config["experiment"] = args.experiment

    if args.x is not None:
        _int_or_list(args.x, "x", "x_list", config)
    if args.q is not None:
        if "," in args.q:
            config["q_list"] = [float(v) for v in args.q.split(",") if v]
        else:
            config["q"] = float(args.q)
    for key in ("model", "trials", "seed", "threads", "sigma", "grid_dt",
                "out", "format", "v", "chaos_trials", "components", "t",
                "kind", "dimension", "p", "t_max", "x_cap", "grid_count"):
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    if args.experiment == "walks":
        n, a = getattr(args, "n", None), getattr(args, "a", None)
        if n is not None and ("," in n or (a is not None and "," in a)):
            config["n_list"] = [int(v) for v in n.split(",") if v]
            if a is not None:
                config["a_list"] = [float(v) for v in a.split(",") if v]
        else:
            if n is not None:
                config["n"] = int(n)
            if a is not None:
                config["a"] = float(a)
    elif args.experiment == "tilt":
        if getattr(args, "scales", None) is not None:
            config["scales"] = [int(v) for v in args.scales.split(",") if v]
        if getattr(args, "a", None) is not None:
            config["a"] = args.a
    if args.experiment == "tails" and getattr(args, "lambdas", None) is not None:
        config["lambdas"] = [float(v) for v in args.lambdas.split(",") if v]
    return config


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        manifest = run_experiment(_build_config(args))
    except UnstableEstimateError as exc:
        print(f"unstable estimate: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4
    print(f"{manifest.experiment}: wrote {manifest.outputs[0]} "
          f"(config {manifest.config_hash[:12]}, seed {manifest.seed})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
