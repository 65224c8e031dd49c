"""Command-line entry point: ``hqnn train | compare | inspect-data``."""
import argparse
import json
import logging
import sys

from .experiment import (RunConfig, compare_runs, emit_comparison, emit_report,
                         load_data, load_report, prepare_splits, run_training)


def _seeds(text):
    return tuple(int(s) for s in text.replace(",", " ").split())


def build_parser():
    parser = argparse.ArgumentParser(prog="hqnn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="per-epoch logging")
    sub = parser.add_subparsers(dest="command", required=True)

    # defaults are None so that only flags given explicitly override the file
    train = sub.add_parser("train", help="train and evaluate one model over all seeds")
    train.add_argument("--config", help="JSON file with RunConfig fields")
    train.add_argument("--model", choices=["quantum", "classical"])
    train.add_argument("--backend", choices=["analytic", "statevector"])
    train.add_argument("--epochs", type=int, help="0 evaluates the untrained model")
    train.add_argument("--batch-size", type=int)
    train.add_argument("--lr", type=float)
    train.add_argument("--seeds", type=_seeds, help='e.g. "1,2,3,4,5"')
    train.add_argument("--data-dir")
    train.add_argument("--subset-fraction", type=float)
    train.add_argument("--threads", type=int)
    train.add_argument("--out")
    train.add_argument("--no-figures", action="store_true")

    comp = sub.add_parser("compare", help="compare two finished runs (a - b)")
    comp.add_argument("run_a")
    comp.add_argument("run_b")
    comp.add_argument("--out", required=True)
    comp.add_argument("--no-figures", action="store_true")

    insp = sub.add_parser("inspect-data", help="split sizes and one encoded example")
    insp.add_argument("--data-dir", default="data/mnist")
    insp.add_argument("--seed", type=int, default=1)
    insp.add_argument("--subset-fraction", type=float, default=1.0)
    insp.add_argument("--index", type=int, default=0)
    return parser


def resolve_config(args):
    values = {}
    if args.config:
        with open(args.config) as f:
            values.update(json.load(f))
    for key in ("model", "backend", "epochs", "batch_size", "lr", "seeds", "data_dir",
                "subset_fraction", "threads", "out"):
        v = getattr(args, key)
        if v is not None:
            values[key] = v
    return RunConfig.from_dict(values)


def cmd_train(args):
    config = resolve_config(args)
    report = run_training(config)
    echo = dict(report.config)
    print(json.dumps(echo, indent=2))
    print(f"trainable parameters: {report.n_params}")
    for s in report.seeds:
        print(f"seed {s.seed}: test ACC {s.test_acc:.6f}  BA {s.test_ba:.6f}  "
              f"({s.train_seconds:.1f} s)")
    print(f"average: test ACC {report.mean_test_acc:.6f}  BA {report.mean_test_ba:.6f}")
    for path in emit_report(report, config.out, figures=not args.no_figures):
        print(f"wrote {path}")
    return 0


def cmd_compare(args):
    a, b = load_report(args.run_a), load_report(args.run_b)
    comp = compare_runs(a, b)
    print(f"{'seed':>6} {'dACC':>10} {'dBA':>10}")
    for seed, da, db in zip(comp.seeds, comp.acc_delta, comp.ba_delta):
        print(f"{seed:>6} {da:>10.6f} {db:>10.6f}")
    print(f"{'mean':>6} {comp.mean_acc_delta:>10.6f} {comp.mean_ba_delta:>10.6f}")
    for path in emit_comparison(comp, a, b, args.out, figures=not args.no_figures):
        print(f"wrote {path}")
    return 0


def cmd_inspect(args):
    from .data import render_example

    tune, test = load_data(args.data_dir)
    train, val, test = prepare_splits(tune, test, args.seed, args.subset_fraction)
    print(f"train {len(train)}  validation {len(val)}  test {len(test)}")
    print(render_example(train[args.index]))
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    handler = {"train": cmd_train, "compare": cmd_compare, "inspect-data": cmd_inspect}
    try:
        return handler[args.command](args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
