"""Command-line entry point: ``mltsfnet <command> ...``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import ablation
from .checkpoint import Checkpoint, CheckpointError
from .config import ConfigurationError, RunConfig, load_config
from .featio import (FeatureFileError, find_vocab, read_dataset, read_features, read_vocab,
                     write_dataset, write_vocab)
from .model import decode as decode_ids
from .model import gradient_check
from .synth import GlossVocabulary, synth_dataset
from .train import DivergenceError, VocabularyMismatchError, evaluate, train

log = logging.getLogger("mltsfnet")


def _split_dirs(data_dir: Path) -> tuple[Path, Path | None]:
    if (data_dir / "train").is_dir():
        dev = data_dir / "dev"
        return data_dir / "train", dev if dev.is_dir() else None
    return data_dir, None


def _eval_dir(data_dir: Path) -> Path:
    return data_dir / "dev" if (data_dir / "dev").is_dir() else data_dir


def _vocab_size(data_dir: Path) -> int | None:
    path = data_dir / "vocab.txt"
    return len(read_vocab(path)) if path.exists() else None


def cmd_train(args) -> int:
    config = load_config(args.config).train
    data_dir = Path(args.data_dir)
    vocab_size = _vocab_size(data_dir)
    if vocab_size is not None and vocab_size != config.vocab_size:
        raise VocabularyMismatchError(
            f"config vocab_size is {config.vocab_size}, {data_dir / 'vocab.txt'} has {vocab_size}")
    train_dir, dev_dir = _split_dirs(data_dir)
    train_set = read_dataset(train_dir, config.vocab_size)
    dev_set = read_dataset(dev_dir, config.vocab_size) if dev_dir else None
    if not train_set:
        raise FileNotFoundError(f"no feature files in {train_dir}")
    resume = Checkpoint.load(args.resume) if args.resume else None
    out = Path(args.out)

    def save(epoch, ckpt):
        ckpt.save(out)

    log.info("training on %d samples%s", len(train_set),
             f", {len(dev_set)} dev samples" if dev_set else "")
    try:
        result = train(config, train_set, dev_set, resume=resume, on_epoch=save)
    except DivergenceError as exc:
        if exc.checkpoint is not None:
            exc.checkpoint.save(out)
        raise
    if result.best_params is not None:
        best = Checkpoint(config, result.best_params, result.checkpoint.adam_m,
                          result.checkpoint.adam_v, result.checkpoint.adam_step,
                          result.checkpoint.epoch, result.checkpoint.rng_state,
                          result.checkpoint.best_dev_wer)
        best_path = out.with_name(out.stem + ".best" + out.suffix)
        best.save(best_path)
        print(f"best dev WER {100 * result.checkpoint.best_dev_wer:.1f}% -> {best_path}")
    print(f"final checkpoint -> {out}")
    return 0


def cmd_eval(args) -> int:
    ckpt = Checkpoint.load(args.ckpt)
    data_dir = Path(args.data_dir)
    data = read_dataset(_eval_dir(data_dir))
    if not data:
        raise FileNotFoundError(f"no feature files in {_eval_dir(data_dir)}")
    report = evaluate(ckpt, data, _vocab_size(data_dir))
    print(report.to_text())
    path = Path(args.report) if args.report else Path(args.ckpt).with_suffix(".report.txt")
    path.write_text(report.to_keyvalue(), encoding="utf-8")
    print(f"key=value report -> {path}")
    return 0


def cmd_decode(args) -> int:
    ckpt = Checkpoint.load(args.ckpt)
    sample = read_features(args.features, ckpt.config.vocab_size)
    params, _, _ = ckpt.restore()
    ids = decode_ids(params, sample.features, ckpt.config)
    try:
        vocab = read_vocab(args.vocab) if args.vocab else find_vocab(args.features)
    except FileNotFoundError:
        vocab = None
    if vocab is not None and len(vocab) != ckpt.config.vocab_size:
        raise VocabularyMismatchError(
            f"checkpoint vocabulary has {ckpt.config.vocab_size} entries, vocab file has {len(vocab)}")
    print(" ".join(vocab.decode(ids)) if vocab else " ".join(map(str, ids)))
    return 0


def cmd_gradcheck(args) -> int:
    config = load_config(args.config).train
    report = gradient_check(config, frames=args.frames, eps=args.eps, seed=args.seed)
    print(report.format())
    return 0 if report.passed else 1


def cmd_synth(args) -> int:
    run = load_config(args.config)
    out = Path(args.out)
    vocab = GlossVocabulary.synthetic(run.synth.vocab_size)
    if args.dev:
        write_dataset(out / "train", synth_dataset(run.synth, args.n))
        write_dataset(out / "dev", synth_dataset(run.synth, args.dev, offset=args.n))
    else:
        write_dataset(out, synth_dataset(run.synth, args.n))
    write_vocab(out / "vocab.txt", vocab)
    print(f"wrote {args.n} samples{f' + {args.dev} dev' if args.dev else ''} to {out}")
    return 0


def cmd_ablate(args) -> int:
    run = load_config(args.config) if args.config else RunConfig()
    base = run.train
    if args.epochs:
        base = base.replace(epochs=args.epochs, decay_start=min(base.decay_start, args.epochs))
    setup = ablation.BenchmarkSetup(args.train_size, args.dev_size, run.synth, base)
    seeds = tuple(int(s) for s in args.seeds.split(","))
    result = ablation.run_suite(
        args.suite, setup, seeds,
        progress=lambda r: print(f"  {r.variant} seed {r.seed}: {100 * r.best_dev_wer:.1f}% "
                                 f"({r.seconds:.0f} s)", flush=True))
    print(result.table())
    if args.suite in ("table4", "benchmark"):
        multi, single, none = ablation.benchmark_ordering(result)
        ok = multi <= single <= none
        print(f"median ordering multi {100 * multi:.1f} <= best single {100 * single:.1f} "
              f"<= none {100 * none:.1f}: {'holds' if ok else 'does not hold'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mltsfnet", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model on a feature directory")
    t.add_argument("--config", required=True)
    t.add_argument("--data-dir", required=True)
    t.add_argument("--out", required=True, help="checkpoint path (rewritten every epoch)")
    t.add_argument("--resume", help="continue from this checkpoint")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="WER of a checkpoint on a feature directory")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data-dir", required=True)
    e.add_argument("--report", help="key=value output file (default: next to the checkpoint)")
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser("decode", help="greedy-decode one feature file")
    d.add_argument("--ckpt", required=True)
    d.add_argument("--features", required=True)
    d.add_argument("--vocab", help="vocab.txt (default: looked up next to the features)")
    d.set_defaults(func=cmd_decode)

    g = sub.add_parser("gradcheck", help="finite-difference check of every parameter")
    g.add_argument("--config", required=True)
    g.add_argument("--eps", type=float, default=1e-4)
    g.add_argument("--frames", type=int, default=20)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("synth", help="write a synthetic dataset")
    s.add_argument("--config", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--dev", type=int, default=0, help="also write this many dev samples")
    s.set_defaults(func=cmd_synth)

    a = sub.add_parser("ablate", help="run a variant grid on the synthetic benchmark")
    a.add_argument("--suite", required=True, choices=sorted(ablation.SUITES))
    a.add_argument("--config", help="base config (default: built-in defaults)")
    a.add_argument("--seeds", default=",".join(map(str, ablation.DEFAULT_SEEDS)))
    a.add_argument("--epochs", type=int)
    a.add_argument("--train-size", type=int, default=300)
    a.add_argument("--dev-size", type=int, default=60)
    a.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, CheckpointError, FeatureFileError, VocabularyMismatchError,
            DivergenceError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
