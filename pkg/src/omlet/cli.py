"""Command-line front end: ``omlet train|eval|loo|partition|gen``.

Exit status is 0 on success, 1 when an experiment cannot be carried out
and 2 for unreadable or malformed input.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import datagen, harness, rulebase
from .errors import (
    CyclicDefinition,
    HistogramInfeasible,
    MissingMeasurement,
    NoExamplesForLevel,
    OmletError,
    ParseError,
    PartialModel,
    SizeTooLarge,
    UnknownCategory,
)
from .trainer import TrainConfig, TrainState, train_all

INPUT_ERRORS = (ParseError, MissingMeasurement, CyclicDefinition, UnknownCategory, SizeTooLarge, OSError)


def _config(args) -> TrainConfig:
    return TrainConfig(
        epochs_per_level=args.epochs,
        lr=args.lr,
        escape_threshold=args.escape_threshold,
        slope_tol=args.slope_tol,
        grid_steps=args.grid_steps,
        gate_T=args.gate_t,
        rng_seed=args.seed,
        skip_empty_levels=not args.strict_levels,
    )


def _add_train_flags(p):
    p.add_argument("--epochs", type=int, default=1000, help="training epochs per level")
    p.add_argument("--lr", type=float, default=0.15, help="fraction of the error propagated per epoch")
    p.add_argument("--gate-t", type=float, default=0.0, help="subcategory evidence threshold")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--escape-threshold", type=float, default=1e-4)
    p.add_argument("--slope-tol", type=float, default=0.05)
    p.add_argument("--grid-steps", type=int, default=50)
    p.add_argument("--strict-levels", action="store_true",
                   help="fail instead of skipping levels without examples")


def _emit(text: str, out) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        rulebase.write_text(out, text)


def _load(args):
    defs = rulebase.read_rules(args.rules)
    examples = rulebase.read_examples(args.examples, defs)
    return defs, examples


def cmd_train(args) -> int:
    defs, examples = _load(args)
    cfg = _config(args)
    state = TrainState.fresh(defs)
    model = train_all(defs, examples, cfg, state=state)
    _emit(rulebase.serialize_model(model), args.out)
    prefix = args.trace or (args.out + ".trace" if args.out not in (None, "-") else None)
    if prefix:
        for level, trace in sorted(state.traces.items()):
            rulebase.write_text(f"{prefix}.level{level}.csv", harness.trace_csv(trace))
    for level, err in sorted(state.best_errors.items()):
        n = state.example_counts[level]
        print(f"level {level}: best_error={err!r} average={err / n!r} examples={n}", file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    defs = rulebase.read_rules(args.rules)
    model = rulebase.read_model(args.model)
    examples = rulebase.read_examples(args.examples, defs)
    report = harness.evaluate_examples(defs, model, examples, args.gate_t)
    if not report.rows:
        print("error: no examples to evaluate; average error is undefined", file=sys.stderr)
        return 2
    _emit(report.to_csv(), args.out)
    stream = sys.stderr if args.out in (None, "-") else sys.stdout
    print("\n".join(report.summary_lines()), file=stream)
    return 0


def cmd_loo(args) -> int:
    defs, examples = _load(args)
    cfg = _config(args)
    res = harness.leave_one_out(defs, examples, cfg, levels=args.level or None)
    _emit(harness.rows_csv(res.rows), args.out)
    stream = sys.stderr if args.out in (None, "-") else sys.stdout
    print(f"mean_error={res.mean_error!r}", file=stream)
    for level, v in res.level_means().items():
        print(f"level{level}.mean_error={v!r}", file=stream)
    return 0


def cmd_partition(args) -> int:
    defs, examples = _load(args)
    cfg = _config(args)
    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    curve = harness.partition_curve(defs, examples, sizes, cfg, level=args.level,
                                    n_partitions=args.partitions)
    _emit(harness.curve_csv(curve), args.out)
    return 0


def cmd_gen(args) -> int:
    if args.builtin:
        defs, truth = datagen.builtin(args.builtin)
    else:
        if not (args.rules and args.model):
            print("error: gen needs --builtin or both --rules and --model", file=sys.stderr)
            return 2
        defs = rulebase.read_rules(args.rules)
        truth = rulebase.read_model(args.model)
    hist = None
    if args.histogram:
        hist = datagen.parse_histogram(Path(args.histogram).read_text(encoding="utf-8"))
    spec = datagen.GenSpec(
        defs=defs,
        truth=truth,
        n=args.n,
        category=args.category,
        p_normal=args.p_normal,
        seed=args.seed,
        quality_filter=datagen.QUALITY[args.quality] if args.quality else None,
        target_histogram=hist,
        max_draws=args.max_draws,
    )
    examples = datagen.generate(spec)
    _emit(rulebase.serialize_examples(examples), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="omlet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="learn membership functions from labeled examples")
    p.add_argument("--rules", required=True)
    p.add_argument("--examples", required=True)
    p.add_argument("--out", default="-", help="model file (default: stdout)")
    p.add_argument("--trace", help="prefix for per-level epoch-error CSV files")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score examples with a trained model")
    p.add_argument("--rules", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--examples", required=True)
    p.add_argument("--out", default="-")
    p.add_argument("--gate-t", type=float, default=0.0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("loo", help="leave-one-out experiment")
    p.add_argument("--rules", required=True)
    p.add_argument("--examples", required=True)
    p.add_argument("--out", default="-")
    p.add_argument("--level", type=int, action="append", help="restrict to a learning level (repeatable)")
    _add_train_flags(p)
    p.set_defaults(func=cmd_loo)

    p = sub.add_parser("partition", help="learning curve over random train/test partitions")
    p.add_argument("--rules", required=True)
    p.add_argument("--examples", required=True)
    p.add_argument("--out", default="-")
    p.add_argument("--sizes", default="10,20,30,40,50,60,70")
    p.add_argument("--level", type=int, default=1)
    p.add_argument("--partitions", type=int, default=10)
    _add_train_flags(p)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("gen", help="generate synthetic examples from a truth model")
    p.add_argument("--builtin", choices=["chair", "cup"])
    p.add_argument("--rules")
    p.add_argument("--model", help="truth model file")
    p.add_argument("--category")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--p-normal", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quality", choices=sorted(datagen.QUALITY))
    p.add_argument("--histogram", help="file of '<bin lower edge>,<count>' lines")
    p.add_argument("--max-draws", type=int)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NoExamplesForLevel, PartialModel, HistogramInfeasible, OmletError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
