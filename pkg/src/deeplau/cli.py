"""Command-line entry point.

Subcommands: train, translate, eval, gradcheck, diagnose, synth.
Exit codes: 0 success, 1 usage error, 2 data error, 3 check failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import checkpoint as ckpt
from .bleu import bleu_by_length, bucket_kv, corpus_bleu
from .config import ConfigError, load_config
from .data import TASKS, DataError, SyntheticTaskSpec, Vocab, generate_synthetic, read_lines, \
    write_lines, write_parallel
from .diagnostics import DEPTHS, SEPARATIONS, FlowProbe, compare_depth_flow, compare_time_flow
from .gradcheck import COMPONENTS, run_gradcheck
from .numerics import NonFiniteError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CHECK = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _overrides(pairs: Sequence[str]) -> dict:
    out = {}
    for item in pairs or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k] = v
    return out


# -- subcommands -------------------------------------------------------------

def cmd_train(args) -> int:
    from .train import run_training
    cfg = load_config(args.config, _overrides(args.set))
    trainer = run_training(cfg, resume=args.resume)
    print(f"updates={trainer.update}")
    if trainer.best_dev is not None:
        print(f"best_dev_bleu={trainer.best_dev:.6f}")
    return EXIT_OK


def cmd_translate(args) -> int:
    from .train import load_model, translate_corpus
    model = Path(args.model)
    run_dir = model.parent
    vs = Vocab.load(args.src_vocab or run_dir / "src.vocab")
    vt = Vocab.load(args.tgt_vocab or run_dir / "tgt.vocab")
    params, manifest, _ = load_model(model, vs, vt)
    if args.config:
        cfg = load_config(args.config, _overrides(args.set))
        if cfg.model_config(len(vs), len(vt)) != params.cfg:
            raise ckpt.CheckpointError("run config does not match the checkpoint manifest")
        beam = cfg.beam_width
    else:
        beam = 10
    beam = args.beam_width or beam
    sources = read_lines(args.input)
    write_lines(args.output, translate_corpus(params, sources, vs, vt, beam))
    return EXIT_OK


def cmd_eval(args) -> int:
    hyps, refs = read_lines(args.hyp), read_lines(args.ref)
    if len(hyps) != len(refs):
        raise DataError(f"{args.hyp} has {len(hyps)} lines but {args.ref} has {len(refs)}")
    report = corpus_bleu(hyps, refs, case_sensitive=not args.lowercase)
    print("\n".join(report.to_kv()))
    if args.src:
        lengths = [len(s) for s in read_lines(args.src)]
        if len(lengths) != len(refs):
            raise DataError("source file does not align with the references")
        print("\n".join(bucket_kv(bleu_by_length(hyps, refs, lengths,
                                                 case_sensitive=not args.lowercase))))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    report = run_gradcheck(range(args.seed, args.seed + args.seeds), fault=args.inject_fault)
    print("\n".join(report.to_kv()))
    return EXIT_OK if report.passed else EXIT_CHECK


def cmd_diagnose(args) -> int:
    probe = FlowProbe(args.input_dim, args.hidden_dim, args.separations, args.depths,
                      args.layers, args.seq_len, args.trials, args.seed, args.init_std,
                      args.quantity)
    reports = [compare_time_flow(probe)]
    if not args.time_only:
        reports.append(compare_depth_flow(probe))
    out = Path(args.out_dir) if args.out_dir else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    for rep in reports:
        print("\n".join(rep.to_kv()))
        if out is not None:
            (out / f"{rep.kind}_flow.tsv").write_text(rep.to_tsv(), encoding="utf-8")
            (out / f"{rep.kind}_flow_raw.tsv").write_text(rep.raw_tsv(), encoding="utf-8")
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = SyntheticTaskSpec(args.kind, args.vocab_size, args.min_len, args.max_len,
                             args.num_samples + args.dev_samples, args.seed)
    corpus = generate_synthetic(spec)
    train, dev = corpus.split(args.num_samples)
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    write_parallel(train, f"{prefix}.train.src", f"{prefix}.train.tgt")
    if args.dev_samples:
        write_parallel(dev, f"{prefix}.dev.src", f"{prefix}.dev.tgt")
    print(f"train_pairs={len(train)} dev_pairs={len(dev)}")
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="deeplau", description="Deep linear associative unit translation models.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config value")
    p.add_argument("--resume", action="store_true", help="continue from <checkpoint_dir>/last.ckpt")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("translate", help="beam-search translation of a tokenized file")
    p.add_argument("--model", required=True, help="checkpoint file")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--src-vocab", help="default: src.vocab next to the checkpoint")
    p.add_argument("--tgt-vocab", help="default: tgt.vocab next to the checkpoint")
    p.add_argument("--config", help="run config; must agree with the checkpoint")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--beam-width", type=int, default=0)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("eval", help="corpus BLEU of a hypothesis file")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--src", help="source file for per-length buckets")
    p.add_argument("--lowercase", action="store_true", help="case-insensitive matching")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of all backward passes")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--inject-fault", choices=COMPONENTS, help="corrupt one component (self-test)")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("diagnose", help="gradient-flow report at random initialization")
    p.add_argument("--input-dim", type=int, default=64)
    p.add_argument("--hidden-dim", type=int, default=64)
    p.add_argument("--separations", type=_int_list, default=SEPARATIONS)
    p.add_argument("--depths", type=_int_list, default=DEPTHS)
    p.add_argument("--layers", type=int, default=1, help="stack depth for the time probe")
    p.add_argument("--seq-len", type=int, default=10, help="sequence length for the depth probe")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init-std", type=float, default=0.04)
    p.add_argument("--quantity", choices=("input", "state"), default="input")
    p.add_argument("--time-only", action="store_true")
    p.add_argument("--out-dir", help="write summary and raw TSV files here")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("synth", help="generate a synthetic parallel corpus")
    p.add_argument("--kind", choices=TASKS, default="copy")
    p.add_argument("--vocab-size", type=int, default=20)
    p.add_argument("--min-len", type=int, default=3)
    p.add_argument("--max-len", type=int, default=12)
    p.add_argument("--num-samples", type=int, default=8000)
    p.add_argument("--dev-samples", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except (DataError, ckpt.CheckpointError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
