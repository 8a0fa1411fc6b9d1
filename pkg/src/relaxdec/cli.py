"""Command-line entry point: generate | train | decode | experiment | report.

Every command is a batch job: it reads files, writes files under --out,
and exits.  All randomness flows from --seed, so rerunning a command
with the same flags reproduces its outputs byte for byte.  Errors from
violated contracts (missing files, bad flag combinations, malformed
configs) exit with status 2 and a one-line message on stderr.
"""

from __future__ import annotations

import argparse
import os
import sys

from .checkpoint import load_checkpoint, save_checkpoint
from .data import TASKS, build_vocab, generate_synthetic, read_corpus, read_sentences, split_corpus, write_corpus
from .experiment import (
    DecoderSpec,
    ObjectiveChoice,
    RowSpec,
    load_experiment_config,
    model_path,
    rebuild_table,
    run_experiment,
    run_rows,
    train_one_model,
    write_train_log,
)
from .metrics import make_eval_report
from .relaxed import write_trace_csv
from .search import beam_decode, write_nbest


def _add_common(parser):
    parser.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    parser.add_argument("--out", default=".", help="output directory (default .)")
    parser.add_argument("--jobs", type=int, default=1,
                        help="sentence-level worker processes (default 1)")


def _corpus_paths(data_dir, split):
    return os.path.join(data_dir, f"{split}.src"), os.path.join(data_dir, f"{split}.tgt")


def cmd_generate(args):
    corpus = generate_synthetic(
        args.task, args.pairs, args.vocab, seed=args.seed,
        min_len=args.min_len, max_len=args.max_len, noise_rate=args.noise_rate,
    )
    splits = split_corpus(corpus, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    for split, part in zip(("train", "dev", "test"), splits):
        src_path, tgt_path = _corpus_paths(args.out, split)
        write_corpus(part, src_path, tgt_path)
        print(f"{split}: {len(part)} pairs -> {src_path}, {tgt_path}")
    return 0


def cmd_train(args):
    train = read_corpus(*_corpus_paths(args.data, "train"), split="train")
    dev = read_corpus(*_corpus_paths(args.data, "dev"), split="dev")
    src_vocab = build_vocab(train.sources())
    tgt_vocab = build_vocab(train.targets())

    result = train_one_model(
        train, dev, src_vocab, tgt_vocab, args.direction, args.side,
        embed_dim=args.embed_dim, hidden_dim=args.hidden_dim, attn_dim=args.attn_dim,
        epochs=args.epochs, lr=args.lr, clip_norm=args.clip_norm,
        patience=args.patience, seed=args.seed,
    )
    os.makedirs(os.path.join(args.out, "models"), exist_ok=True)
    path = model_path(args.out, args.direction, args.side)
    save_checkpoint(result.params, path)
    write_train_log(path[: -len(".ckpt")] + "-log.csv", result.history)
    best = min(h["dev_ppl"] for h in result.history) if result.history else float("nan")
    print(f"initial dev ppl {result.initial_dev_ppl:.4f}")
    for h in result.history:
        print(f"epoch {h['epoch']}: train loss {h['train_loss']:.4f} "
              f"dev ppl {h['dev_ppl']:.4f} lr {h['lr']:g}")
    print(f"best dev ppl {best:.4f} -> {path}")
    return 0


def cmd_decode(args):
    fwd = load_checkpoint(args.model)
    models = {(fwd.config.direction, fwd.config.side): fwd}
    if args.reverse_model:
        rev = load_checkpoint(args.reverse_model)
        key = (rev.config.direction, rev.config.side)
        if key in models:
            raise ValueError("forward and reverse checkpoints have the same orientation")
        models[key] = rev
    if fwd.config.side != "s2t":
        raise ValueError("decode needs a source-to-target forward model; "
                         "swap the corpus sides to translate the other way")
    relaxed = args.method in ("eg", "sgd")
    if relaxed and args.objective != "single" and not args.reverse_model:
        raise ValueError(f"objective {args.objective!r} needs --reverse-model")

    src_path, tgt_path = _corpus_paths(args.data, args.split)
    sources_tok = read_sentences(src_path)
    references = read_sentences(tgt_path) if os.path.exists(tgt_path) else None
    sources = [fwd.src_vocab.encode(s) for s in sources_tok]

    decoder = DecoderSpec(
        name=args.method, method=args.method, direction=fwd.config.direction,
        init=args.init, eta=args.eta, momentum=args.momentum,
        max_iter=args.max_iter, anneal=args.anneal, width=args.width,
        rerank_size=args.rerank_size,
    )
    objective = ObjectiveChoice(args.objective, args.objective, alpha=args.alpha)
    row = RowSpec(args.method, decoder, objective)

    results = run_rows([row], sources, models, jobs=args.jobs)[row.name]

    os.makedirs(args.out, exist_ok=True)
    hyp_path = os.path.join(args.out, "hyps.txt")
    hyps = [fwd.tgt_vocab.decode(r["tokens"]) for r in results]
    with open(hyp_path, "w", encoding="utf-8", newline="\n") as fh:
        for toks in hyps:
            fh.write(" ".join(toks) + "\n")
    print(f"hypotheses -> {hyp_path}")

    if relaxed:
        trace_path = os.path.join(args.out, "trace.csv")
        write_trace_csv(trace_path, [(sid, r["trace"]) for sid, r in enumerate(results)])
        print(f"trace -> {trace_path}")

    if args.nbest > 0 and args.method in ("beam", "rerank"):
        width = max(args.width, args.rerank_size if args.method == "rerank" else 0,
                    args.nbest)
        lists = [beam_decode(x, fwd, width=width, n_best=args.nbest) for x in sources]
        nbest_path = os.path.join(args.out, "nbest.txt")
        write_nbest(nbest_path, lists, fwd.tgt_vocab)
        print(f"n-best -> {nbest_path}")

    if references is not None:
        report = make_eval_report(hyps, references,
                                  [r["continuous"] for r in results],
                                  [r["discrete"] for r in results])
        report_path = os.path.join(args.out, "report.csv")
        report.write_csv(report_path)
        print(f"bleu {report.bleu:.2f} -> {report_path}")
    return 0


def cmd_experiment(args):
    cfg = load_experiment_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    if args.jobs is not None:
        cfg.jobs = args.jobs
    text = run_experiment(cfg, line_search=args.line_search, log=print)
    print(text, end="")
    return 0


def cmd_report(args):
    print(rebuild_table(args.out), end="")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="relaxdec",
        description="Train toy attentional translation models and decode them "
                    "by continuous optimisation over the probability simplex.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write seeded synthetic corpus splits")
    _add_common(p)
    p.add_argument("--task", required=True, choices=TASKS)
    p.add_argument("--pairs", type=int, required=True, help="number of sentence pairs")
    p.add_argument("--vocab", type=int, default=20, help="vocabulary size incl. specials")
    p.add_argument("--min-len", type=int, default=3)
    p.add_argument("--max-len", type=int, default=8)
    p.add_argument("--noise-rate", type=float, default=0.1,
                   help="fraction of noisy target tokens (noisy-cipher only)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train one oriented model on generated splits")
    _add_common(p)
    p.add_argument("--data", required=True, help="directory holding {train,dev}.{src,tgt}")
    p.add_argument("--direction", choices=("l2r", "r2l"), default="l2r")
    p.add_argument("--side", choices=("s2t", "t2s"), default="s2t")
    p.add_argument("--embed-dim", type=int, default=32)
    p.add_argument("--hidden-dim", type=int, default=32)
    p.add_argument("--attn-dim", type=int, default=16)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--clip-norm", type=float, default=5.0)
    p.add_argument("--patience", type=int, default=3)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("decode", help="decode one corpus split with one method")
    _add_common(p)
    p.add_argument("--data", required=True, help="directory holding corpus splits")
    p.add_argument("--split", choices=("train", "dev", "test"), default="test")
    p.add_argument("--model", required=True, help="forward checkpoint path")
    p.add_argument("--reverse-model", help="second checkpoint for ensemble objectives")
    p.add_argument("--method", required=True, choices=("greedy", "beam", "rerank", "eg", "sgd"))
    p.add_argument("--objective", choices=("single", "bidirectional", "bilingual"),
                   default="single")
    p.add_argument("--alpha", type=float, default=0.5, help="ensemble interpolation weight")
    p.add_argument("--init", choices=("uniform", "greedy", "beam", "rerank"), default="beam")
    p.add_argument("--eta", type=float, default=50.0, help="step size")
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--anneal", type=float, default=1.0, help="per-iteration step-size decay")
    p.add_argument("--width", type=int, default=5, help="beam width")
    p.add_argument("--rerank-size", type=int, default=10)
    p.add_argument("--nbest", type=int, default=0,
                   help="also write an n-best file of this size (beam/rerank)")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("experiment", help="run a declared sweep and emit the table")
    p.add_argument("config", help="INI experiment description")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=None, help="override the config output directory")
    p.add_argument("--jobs", type=int, default=None, help="override the config job count")
    p.add_argument("--line-search", action="store_true",
                   help="tune each relaxed decoder's step size on dev first")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="rebuild table.csv from saved per-row reports")
    _add_common(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
