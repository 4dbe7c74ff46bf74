"""Command line: ``run``, ``compare``, ``validate`` and ``presets``."""

from __future__ import annotations

import argparse
import json
import sys

from .experiment import ConfigError, OUTPUT_ENV, _jsonable, compare, run_experiment, validate_config
from .federation import FederationConfig
from .optim import SETTINGS, PresetError, preset_hyperparams
from .problems import KnownConstants


def _load(path, args):
    return validate_config(path, seed_override=args.seed_override, rounds_override=args.rounds_override)


def cmd_run(args) -> int:
    cfg = _load(args.config, args)
    out = run_experiment(cfg, args.out, grid=args.grid)
    print(out)
    return 0


def cmd_compare(args) -> int:
    cfgs = [_load(p, args) for p in args.configs]
    table = compare(cfgs, args.metric, args.out, grid=args.grid)
    for row in sorted(table["rows"], key=lambda r: r["rank"]):
        print(f"{row['rank']:>3}  {row['experiment_id']:<32} {row['final_mean']:.6g} +- {row['final_std']:.3g}")
    print(table["directory"])
    return 0


def cmd_validate(args) -> int:
    cfg = _load(args.config, args)
    print(json.dumps(_jsonable(cfg.to_dict()), indent=2))
    return 0


def cmd_presets(args) -> int:
    if args.config:
        cfg = _load(args.config, args)
        consts, fed, T = cfg.problem.constants, cfg.federation, cfg.run.T
    else:
        consts = KnownConstants(l=args.l, mu=args.mu, mu1=args.mu1, mu2=args.mu2, sigma=args.sigma,
                                sigma_G=args.sigma_G, diam_y=args.diam_y)
        fed = FederationConfig(M=args.M, m=args.m or args.M, K=args.K)
        T = args.T
    hp = preset_hyperparams(args.setting, consts, fed, T, target_eps=args.eps, delta=args.delta)
    print(json.dumps(_jsonable({**hp.to_dict(), "eta_x": hp.eta_x, "eta_y": hp.eta_y,
                                "details": hp.details}), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fedminimax", description="Federated minimax optimization experiments.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed-override", type=int, nargs="+", default=None, help="replace the config's seeds")
        p.add_argument("--rounds-override", type=int, default=None, help="replace run.T")

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config")
    p.add_argument("--out", default=None, help=f"output root (default ${OUTPUT_ENV} or run.output_dir)")
    p.add_argument("--grid", action="store_true", help="sweep the learning-rate grid, keep the best point")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run several configs and overlay one metric")
    p.add_argument("configs", nargs="+")
    p.add_argument("--metric", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--grid", action="store_true")
    common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("validate", help="check a config and print it with materialized step sizes")
    p.add_argument("config")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("presets", help="print the step sizes a setting prescribes")
    p.add_argument("setting", choices=SETTINGS)
    p.add_argument("--config", default=None, help="take constants and federation from a config")
    for name in ("l", "mu", "mu1", "mu2", "diam_y", "eps", "delta"):
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=float, default=None)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--sigma-G", dest="sigma_G", type=float, default=0.0)
    p.add_argument("--M", type=int, default=1)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--K", type=int, default=1)
    p.add_argument("--T", type=int, default=1000)
    common(p)
    p.set_defaults(func=cmd_presets)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "presets" and not args.config and args.l is None:
        print("presets: give --config or at least --l", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return 2
    except (PresetError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
