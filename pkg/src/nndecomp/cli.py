"""Command-line interface.

Five stage subcommands plus `run` for the whole pipeline.  Exit codes for
`run` and `evaluate`: 0 = contract PASS, 1 = contract FAIL, 2 = error.
"""

import argparse
import dataclasses
import json
import sys

from .boundary import AbsoluteSelector, QuantileSelector
from .errors import NndecompError
from .pipeline import (
    REPORT_FILE,
    load_config,
    run_pipeline,
    stage_decompose,
    stage_evaluate,
    stage_gen_data,
    stage_mine_boundary,
    stage_train,
)


def _add_common(p):
    p.add_argument("--config", required=True, help="pipeline config (JSON)")
    p.add_argument("--out", required=True, help="artifact directory")
    p.add_argument("--seed", type=int, default=None, help="override the master seed")


def _add_contract_overrides(p):
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    sel = p.add_mutually_exclusive_group()
    sel.add_argument("--quantile", type=float, default=None, help="boundary quantile q")
    sel.add_argument("--kappa", type=float, default=None, help="absolute margin cut")


def _add_lbmask_overrides(p):
    p.add_argument("--sparsity", type=float, default=None, help="target sparsity s")
    p.add_argument("--alpha", type=float, default=None, help="mask init alpha")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nndecomp",
        description="Decide whether a dense classifier admits a "
        "boundary-faithful, structurally separated decomposition.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in [
        ("gen-data", "generate or ingest the dataset"),
        ("train-ref", "train the frozen reference classifier"),
        ("mine-boundary", "attack and refine near-boundary input pairs"),
        ("decompose", "learn one structured mask per class"),
        ("evaluate", "compute contract metrics and the verdict"),
        ("run", "all stages in order"),
    ]:
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        if name in ("decompose", "run"):
            p.add_argument("--workers", type=int, default=None)
            _add_lbmask_overrides(p)
        if name in ("evaluate", "run"):
            _add_contract_overrides(p)
        if name == "evaluate":
            p.add_argument(
                "--masks",
                default=None,
                help="directory holding externally produced mask_<k>.json files",
            )
    return parser


def _apply_overrides(config, args):
    if getattr(args, "seed", None) is not None:
        config = dataclasses.replace(config, seed=args.seed)
    lbm = config.lbmask
    if getattr(args, "sparsity", None) is not None:
        lbm = dataclasses.replace(lbm, target_sparsity=args.sparsity)
    if getattr(args, "alpha", None) is not None:
        lbm = dataclasses.replace(lbm, init_alpha=args.alpha)
    if lbm is not config.lbmask:
        config = dataclasses.replace(config, lbmask=lbm)
    contract = config.contract
    for field in ("epsilon", "gamma", "eta", "delta"):
        value = getattr(args, field, None)
        if value is not None:
            contract = dataclasses.replace(contract, **{field: value})
    if getattr(args, "quantile", None) is not None:
        contract = dataclasses.replace(contract, selector=QuantileSelector(args.quantile))
    if getattr(args, "kappa", None) is not None:
        contract = dataclasses.replace(contract, selector=AbsoluteSelector(args.kappa))
    if contract is not config.contract:
        config = dataclasses.replace(config, contract=contract)
    return config


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = _apply_overrides(load_config(args.config), args)
        if args.command == "gen-data":
            dataset = stage_gen_data(config, args.out)
            print(f"wrote {len(dataset)} samples to {args.out}")
            return 0
        if args.command == "train-ref":
            net = stage_train(config, args.out)
            print(f"trained reference model {net.arch()}")
            return 0
        if args.command == "mine-boundary":
            points, flips = stage_mine_boundary(config, args.out)
            print(
                f"mined {len(points)} boundary points "
                f"(flip rate {flips.flip_rate:.3f})"
            )
            return 0
        if args.command == "decompose":
            components = stage_decompose(config, args.out, workers=args.workers)
            print(f"trained {len(components)} component masks")
            return 0
        if args.command == "evaluate":
            report = stage_evaluate(config, args.out, masks_dir=args.masks)
        else:  # run
            report = run_pipeline(config, args.out, workers=args.workers)
        print(json.dumps(report.to_dict(), indent=1))
        print(f"verdict: {'PASS' if report.verdict else 'FAIL'} ({args.out}/{REPORT_FILE})")
        return 0 if report.verdict else 1
    except NndecompError as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
