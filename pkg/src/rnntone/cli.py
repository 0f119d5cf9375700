"""Command-line entry point: ``rnntone <subcommand> ...``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from rnntone.config import read_kv
from rnntone.features import normalize_by_speaker, read_corpus, write_corpus
from rnntone.harness import evaluate, format_summary, grid_csv, parse_grid, run_grid, standard_grid, train_model
from rnntone.model import ModelConfig, dumps_model, load_model
from rnntone.syncorpus import GeneratorSpec, generate
from rnntone.training import Hyperparams, TrainingError, grad_check, write_epoch_log

GRAD_CHECK_BOUND = 1e-4

_SPEC_FIELDS = [f.name for f in dataclasses.fields(GeneratorSpec)]


def _hyper(path) -> Hyperparams:
    return Hyperparams.from_flat(read_kv(path)) if path else Hyperparams()


def cmd_gen_data(args) -> int:
    items = read_kv(args.spec) if args.spec else {}
    for name in _SPEC_FIELDS:
        value = getattr(args, name)
        if value is not None:
            items[name] = value
    spec = GeneratorSpec.from_flat(items)
    train, test = generate(spec)
    write_corpus(train, args.out_train)
    write_corpus(test, args.out_test)
    print(f"wrote {len(train)} train / {len(test)} test utterances "
          f"({spec.n_train_syllables} / {spec.n_test_syllables} syllables)", file=sys.stderr)
    return 0


def cmd_train(args) -> int:
    cfg = ModelConfig.from_flat(read_kv(args.config))
    hp = _hyper(args.hyper)
    corpus = normalize_by_speaker(read_corpus(args.train))
    params, log = train_model(corpus, cfg, hp)
    with open(args.out_model, "wb") as fh:
        fh.write(dumps_model(params, cfg))
    if args.log:
        with open(args.log, "w", encoding="utf-8", newline="") as fh:
            write_epoch_log(log, fh)
    else:
        write_epoch_log(log, sys.stdout)
    return 0


def cmd_eval(args) -> int:
    params, stored = load_model(args.model)
    if args.config:
        cfg = ModelConfig.from_flat(read_kv(args.config))
        if cfg != stored:
            raise ValueError(f"{args.config} does not match the configuration stored in {args.model}")
    else:
        cfg = stored
    corpus = normalize_by_speaker(read_corpus(args.corpus))
    report = evaluate(params, cfg, corpus, args.config_id or str(args.model))
    with open(args.report, "w", encoding="utf-8", newline="") as fh:
        fh.write(report.to_csv())
    print(f"accuracy {100 * report.accuracy:.1f}% on {report.n_examples} syllables", file=sys.stderr)
    return 0


def cmd_grad_check(args) -> int:
    worst = 0.0
    for name, cfg in standard_grid(hidden_size=args.hidden).rows:
        err = grad_check(cfg, seed=args.seed, epsilon=args.epsilon)
        worst = max(worst, err)
        print(f"{name}: {err:.3e}")
    print(f"max relative error {worst:.3e}")
    return 0 if worst < GRAD_CHECK_BOUND else 1


def cmd_grid(args) -> int:
    grid = parse_grid(open(args.grid, encoding="utf-8").read(), args.grid)
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    results = run_grid(grid, read_corpus(args.train), read_corpus(args.test), _hyper(args.hyper), seeds)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write(grid_csv(results))
    summary = format_summary(results)
    if args.summary:
        with open(args.summary, "w", encoding="utf-8") as fh:
            fh.write(summary)
    else:
        sys.stdout.write(summary)
    failed = [r for r in results if r.status != "ok"]
    return 1 if failed and len(failed) == len(results) else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rnntone", description="RNN tone classification toolkit.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic train/test corpus")
    g.add_argument("--spec", help="generator key=value file")
    g.add_argument("--out-train", required=True)
    g.add_argument("--out-test", required=True)
    for name in _SPEC_FIELDS:
        g.add_argument("--" + name.replace("_", "-"), dest=name, metavar="V",
                       help=argparse.SUPPRESS if name != "seed" else "override the generator seed")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train one model configuration")
    t.add_argument("--config", required=True, help="model key=value file")
    t.add_argument("--train", required=True, help="training corpus")
    t.add_argument("--hyper", help="hyperparameter key=value file")
    t.add_argument("--out-model", required=True)
    t.add_argument("--log", help="write the epoch CSV here instead of stdout")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a trained model")
    e.add_argument("--model", required=True)
    e.add_argument("--config", help="model key=value file; must match the stored configuration")
    e.add_argument("--corpus", required=True)
    e.add_argument("--report", required=True, help="CSV report path")
    e.add_argument("--config-id", help="label written into the report")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("grad-check", help="finite-difference check of every grid configuration")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--epsilon", type=float, default=1e-5)
    c.add_argument("--hidden", type=int, default=8)
    c.set_defaults(func=cmd_grad_check)

    r = sub.add_parser("grid", help="train and evaluate a grid of configurations over seeds")
    r.add_argument("--grid", required=True, help="INI grid file")
    r.add_argument("--train", required=True)
    r.add_argument("--test", required=True)
    r.add_argument("--seeds", default="1,2,3")
    r.add_argument("--hyper", help="hyperparameter key=value file")
    r.add_argument("--out", required=True, help="per-seed CSV")
    r.add_argument("--summary", help="write the median table here instead of stdout")
    r.set_defaults(func=cmd_grid)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, TrainingError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"rnntone {args.command}: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
