"""Command-line entry point.

Subcommands: solve (one realization, one scheme), sweep (Monte-Carlo
parameter sweep), trace (per-iteration convergence), gradcheck (the
finite-difference gradient audit).  CSV-producing commands also render a
matplotlib figure next to the output file unless --no-plot is given.
"""

from __future__ import annotations

import argparse
import os
import sys

from .ao import SCHEMES, format_result, run_scheme
from .channel import sample_realization
from .config import AlgorithmConfig, SystemConfig, load_config
from .experiments import (SweepSpec, gradient_check, run_convergence_trace,
                          run_sweep)


def _load(args):
    if args.config:
        return load_config(args.config)
    return SystemConfig().validate(), AlgorithmConfig().validate()


def _write_out(text: str, out_path, render):
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        if render is not None:
            base, _ = os.path.splitext(out_path)
            render(text, base + ".png")
    else:
        sys.stdout.write(text)


def _cmd_solve(args) -> int:
    cfg, alg = _load(args)
    realization = sample_realization(cfg, args.seed)
    result = run_scheme(args.protocol.upper(), realization, cfg, alg)
    record = format_result(result, seed=args.seed)
    _write_out(record, args.out, None)
    print(f"scheme={args.protocol.upper()} seed={args.seed} "
          f"wsr={result.wsr:.6f} converged={int(result.converged)}")
    return 0


def _cmd_sweep(args) -> int:
    cfg, alg = _load(args)
    spec = SweepSpec(
        param=args.param,
        values=[float(v) for v in args.values.split(",")],
        schemes=tuple(s.strip().upper() for s in args.schemes.split(",")),
        num_realizations=args.n,
        master_seed=args.seed,
    ).validate()
    text = run_sweep(spec, cfg, alg)
    from .plotting import render_sweep
    _write_out(text, args.out, None if args.no_plot else render_sweep)
    print(f"sweep param={args.param} points={len(spec.values)} "
          f"schemes={len(spec.schemes)} n={args.n}")
    return 0


def _cmd_trace(args) -> int:
    cfg, alg = _load(args)
    text = run_convergence_trace(cfg, alg, args.protocol.upper(), args.seed)
    from .plotting import render_trace
    _write_out(text, args.out, None if args.no_plot else render_trace)
    iters = text.count("\n") - 1
    print(f"trace protocol={args.protocol.upper()} iterations={iters}")
    return 0


def _cmd_gradcheck(args) -> int:
    cfg, _ = _load(args)
    err = gradient_check(cfg, trials=args.trials, seed=args.seed)
    print(f"gradcheck trials={args.trials} max_rel_error={err:.3e}")
    return 0 if err < 1e-4 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mestars",
        description="Movable-element surface beamforming simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="output file path")

    p = sub.add_parser("solve", help="run one realization")
    common(p)
    p.add_argument("--protocol", default="ES",
                   choices=[s for s in SCHEMES] + [s.lower() for s in SCHEMES])
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("sweep", help="Monte-Carlo parameter sweep")
    common(p)
    p.add_argument("--param", required=True,
                   help="users | power | region | paths | elements")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--schemes", default="ES,MS,TS")
    p.add_argument("--n", type=int, default=100,
                   help="realizations per point")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("trace", help="convergence trace of one run")
    common(p)
    p.add_argument("--protocol", default="ES")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=_cmd_trace)

    p = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    common(p)
    p.add_argument("--trials", type=int, default=100)
    p.set_defaults(func=_cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
