"""Command-line front end.

Exit codes: 0 success, 2 usage or input error, 3 training divergence.
Machine-readable output goes to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import sys
from pathlib import Path

import numpy as np

from . import architectures as A
from . import benchmark, dataset, model_store, trainer
from .network import Network
from .tensor_core import ShapeError

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED = 0, 2, 3


class UsageError(Exception):
    pass


def _arch_args(p, required=True):
    p.add_argument("--arch", required=required,
                   help="tinynet | smallfirenet | fire-baseline | baseline-cnn, or a descriptor file")
    p.add_argument("--n", type=int, default=None, help="number of Tiny/SmallFire modules")
    p.add_argument("--filters", type=int, default=4, help="TinyNet filters per convolution")
    p.add_argument("--classes", type=int, default=A.DEFAULT_CLASSES)
    p.add_argument("--bn-mode", choices=("width_axis", "channel_axis"), default="width_axis")


def _train_args(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", type=Path, help="directory with one sub-directory of PGM images per class")
    src.add_argument("--synthetic", type=int, metavar="N", help="generate N synthetic images per class")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=trainer.TrainConfig.epochs)
    p.add_argument("--lr", type=float, default=trainer.TrainConfig.learning_rate)
    p.add_argument("--batch", type=int, default=trainer.TrainConfig.batch_size)


def resolve_arch(args) -> A.NetworkSpec:
    name = args.arch
    if name == "tinynet":
        return A.tinynet(args.filters, args.n or 5, args.classes, args.bn_mode)
    if name == "smallfirenet":
        return A.smallfirenet(args.n or 3, args.classes, args.bn_mode)
    if name in A.BUILDERS:
        return A.BUILDERS[name](args.classes, args.bn_mode)
    path = Path(name)
    if not path.is_file():
        raise UsageError(f"unknown architecture {name!r} (not a builder name or descriptor file)")
    return model_store.parse_descriptor(path.read_text(encoding="utf-8"))


def _train_config(args):
    try:
        return trainer.TrainConfig(learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _load_data(args):
    if args.data is not None:
        if not args.data.is_dir():
            raise UsageError(f"data directory not found: {args.data}")
        return dataset.load_directory(args.data)
    if args.synthetic < 1:
        raise UsageError("--synthetic needs a positive count")
    return dataset.synth_generate(args.synthetic, seed=args.seed)


def cmd_build(args):
    spec = resolve_arch(args)
    print(A.count_params(spec).table())


def cmd_train(args):
    cfg = _train_config(args)
    spec = resolve_arch(args)
    if args.out is None:
        raise UsageError("--out is required")
    data = _load_data(args)
    print(f"# train {spec.name} lr={cfg.learning_rate} epochs={cfg.epochs} batch={cfg.batch_size} seed={cfg.seed}"
          f" images={len(data.train)}", file=sys.stderr)
    result = trainer.train(spec, data, cfg)
    model_store.save(result.network.spec, result.network.params, args.out)
    with (open(args.metrics, "w", encoding="utf-8") if args.metrics else contextlib.nullcontext(sys.stdout)) as fh:
        trainer.write_metrics(result.rows, fh)
    print(f"# final train accuracy {result.final_accuracy:.4f}; model written to {args.out}", file=sys.stderr)


def cmd_eval(args):
    cfg = _train_config(args)
    spec = resolve_arch(args)
    data = _load_data(args)
    res = trainer.kfold_evaluate(spec, data, args.folds, cfg)
    for i, acc in enumerate(res.accuracies):
        print(f"fold {i}: {acc:.4f}")
    print(f"accuracy {res}")


def cmd_predict(args):
    try:
        spec, params = model_store.load(args.model)
    except (OSError, model_store.ModelFileError) as exc:
        raise UsageError(str(exc)) from exc
    try:
        image = dataset.load_image(args.image, spec.input[2])
    except (OSError, dataset.DatasetError) as exc:
        raise UsageError(str(exc)) from exc
    probs = Network(spec, params).forward(image)[0, :, 0, 0].astype(np.float64)
    print(int(np.argmax(probs)))
    print(" ".join(f"{p:.9g}" for p in probs))


def cmd_bench(args):
    if args.model:
        try:
            spec, params = model_store.load(args.model)
        except (OSError, model_store.ModelFileError) as exc:
            raise UsageError(str(exc)) from exc
    elif args.arch:
        spec, params = resolve_arch(args), None
    else:
        raise UsageError("bench needs --arch or --model")
    if args.runs < 1 or args.warmup < 0:
        raise UsageError("--runs must be >= 1 and --warmup >= 0")
    report = benchmark.bench(spec, params, warmup=args.warmup, runs=args.runs)
    reports = [report]
    reference = report.name
    if args.against:
        try:
            with open(args.against, encoding="utf-8") as fh:
                previous = benchmark.read_csv(fh)
        except (OSError, KeyError, ValueError) as exc:
            raise UsageError(f"cannot read {args.against}: {exc}") from exc
        if not previous:
            raise UsageError(f"{args.against} holds no reports")
        reference = args.reference or previous[0].name
        reports = [r for r in previous if r.name != report.name] + [report]
    table = benchmark.compare(reports, reference)
    if args.csv:
        sys.stdout.write(table.csv())
    else:
        print(f"warmup={report.warmup} runs={report.runs} single-thread")
        print(table.table())


def cmd_export(args):
    if args.model:
        spec, params = model_store.load(args.model)
    else:
        spec = resolve_arch(args)
        params = Network(spec, seed=args.seed).params
    if args.out and args.out.suffix == ".tnet":
        model_store.save(spec, params, args.out)
        print(f"# wrote {args.out}", file=sys.stderr)
    elif args.out:
        args.out.write_text(spec.descriptor(), encoding="utf-8")
    else:
        sys.stdout.write(spec.descriptor())


def cmd_import_check(args):
    try:
        spec, params = model_store.load(args.model)
    except (OSError, model_store.ModelFileError, model_store.DescriptorError) as exc:
        raise UsageError(str(exc)) from exc
    net = Network(spec, params)
    print(f"name {spec.name}")
    print(f"blobs {len(params)}")
    print(f"params {net.n_params()}")
    print(f"input {'x'.join(map(str, spec.input[1:]))}")
    print(f"classes {spec.classes}")


def make_parser():
    parser = argparse.ArgumentParser(prog="microcnn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="print the per-layer parameter/FLOP report")
    _arch_args(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("train", help="train a network and write a model file")
    _arch_args(p)
    _train_args(p)
    p.add_argument("--out", type=Path)
    p.add_argument("--metrics", type=Path, help="metrics CSV path (default: stdout)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="k-fold cross-validated accuracy")
    _arch_args(p)
    _train_args(p)
    p.add_argument("--folds", type=int, default=5)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="classify one 96x96 PGM image")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--image", type=Path, required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("bench", help="single-thread inference latency")
    _arch_args(p, required=False)
    p.add_argument("--model", type=Path)
    p.add_argument("--runs", type=int, default=50)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--against", type=Path, help="CSV report to compare with")
    p.add_argument("--reference", help="reference network name in the --against report (default: first row)")
    p.add_argument("--csv", action="store_true", help="emit CSV rows instead of the text table")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("export", help="write a descriptor or an initialized model file")
    _arch_args(p, required=False)
    p.add_argument("--model", type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("import-check", help="validate a model file")
    p.add_argument("--model", type=Path, required=True)
    p.set_defaults(func=cmd_import_check)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "export" and not (args.arch or args.model):
        print("error: export needs --arch or --model", file=sys.stderr)
        return EXIT_USAGE
    try:
        args.func(args)
    except trainer.DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (UsageError, ShapeError, ValueError, OSError, dataset.DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
