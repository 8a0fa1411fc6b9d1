"""Experiment sweeps: train models, run decoder rows, emit tables and figures.

One experiment fixes a synthetic task and a seed, trains every model the
declared rows need (left-to-right, right-to-left, and swapped-language),
then decodes the test split once per row.  Baseline rows are greedy,
beam, or reranked search under a single model; relaxed rows are the
continuous decoders crossed with the declared objectives, named
"<decoder>+<objective>" in the output table.  All artifacts (corpus
files, checkpoints, hypotheses, traces, per-row reports, the table) land
under one output directory, and `rebuild_table` reproduces the table
byte-for-byte from the saved per-row reports alone.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .data import (
    EOS,
    TASKS,
    build_vocab,
    generate_synthetic,
    read_corpus,
    split_corpus,
    write_corpus,
)
from .metrics import EvalReport, make_eval_report
from .model import ModelConfig, TrainConfig, train_model
from .objectives import ObjectiveSpec
from .relaxed import OptimConfig, line_search_eta, relaxed_decode, write_trace_csv
from .search import beam_decode, greedy_decode, rerank, to_natural_order

BASELINE_METHODS = ("greedy", "beam", "rerank")
RELAXED_METHODS = ("eg", "sgd")


@dataclass(frozen=True)
class DecoderSpec:
    """One decoder column of the sweep; `direction` only matters for baselines."""

    name: str
    method: str
    direction: str = "l2r"
    init: str = "beam"
    eta: float = 50.0
    momentum: float = 0.9
    max_iter: int = 100
    anneal: float = 1.0
    width: int = 5
    rerank_size: int = 10

    def __post_init__(self):
        if self.method not in BASELINE_METHODS + RELAXED_METHODS:
            raise ValueError(f"decoder {self.name!r}: unknown method {self.method!r}")
        if self.direction not in ("l2r", "r2l"):
            raise ValueError(f"decoder {self.name!r}: bad direction {self.direction!r}")

    def optim_config(self):
        return OptimConfig(
            algorithm=self.method,
            eta=self.eta,
            momentum=self.momentum,
            max_iter=self.max_iter,
            init=self.init,
            beam_width=self.width,
            rerank_size=self.rerank_size,
            anneal=self.anneal,
        )


@dataclass(frozen=True)
class ObjectiveChoice:
    name: str
    kind: str
    alpha: float = 0.5

    def __post_init__(self):
        if self.kind not in ("single", "bidirectional", "bilingual"):
            raise ValueError(f"objective {self.name!r}: unknown kind {self.kind!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"objective {self.name!r}: alpha outside [0, 1]")


@dataclass(frozen=True)
class RowSpec:
    """One table row: a decoder, and for relaxed methods an objective."""

    name: str
    decoder: DecoderSpec
    objective: ObjectiveChoice


@dataclass
class ExperimentConfig:
    task: str = "noisy-cipher"
    pairs: int = 2000
    vocab: int = 20
    min_len: int = 3
    max_len: int = 8
    noise_rate: float = 0.1
    embed_dim: int = 32
    hidden_dim: int = 32
    attn_dim: int = 16
    epochs: int = 30
    lr: float = 0.5
    clip_norm: float = 5.0
    patience: int = 3
    seed: int = 0
    jobs: int = 1
    out: str = "experiment-out"
    decoders: list = field(default_factory=list)
    objectives: list = field(default_factory=list)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if not self.decoders:
            raise ValueError("experiment declares no decoders")
        names = [d.name for d in self.decoders]
        if len(set(names)) != len(names):
            raise ValueError("duplicate decoder names")
        if not self.objectives:
            self.objectives = [ObjectiveChoice("single", "single")]


def _section_items(parser, section):
    return {k: v for k, v in parser.items(section)} if parser.has_section(section) else {}


def _coerce(fields, raw, where):
    out = {}
    for key, value in raw.items():
        if key not in fields:
            raise ValueError(f"{where}: unknown key {key!r}")
        kind = fields[key]
        try:
            out[key] = kind(value)
        except ValueError:
            raise ValueError(
                f"{where}: {key} needs a {kind.__name__}, got {value!r}"
            ) from None
    return out


_TASK_KEYS = {"name": str, "pairs": int, "vocab": int, "min_len": int, "max_len": int,
              "noise_rate": float}
_MODEL_KEYS = {"embed_dim": int, "hidden_dim": int, "attn_dim": int}
_TRAIN_KEYS = {"epochs": int, "lr": float, "clip_norm": float, "patience": int}
_EXP_KEYS = {"seed": int, "jobs": int, "out": str}
_DECODER_KEYS = {"method": str, "direction": str, "init": str, "eta": float,
                 "momentum": float, "max_iter": int, "anneal": float, "width": int,
                 "rerank_size": int}
_OBJECTIVE_KEYS = {"kind": str, "alpha": float}


def load_experiment_config(path):
    """Parse a flat key=value INI experiment description."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(f"cannot read experiment config {path!r}")

    kw = {}
    task = _coerce(_TASK_KEYS, _section_items(parser, "task"), "[task]")
    if "name" in task:
        kw["task"] = task.pop("name")
    kw.update(task)
    kw.update(_coerce(_MODEL_KEYS, _section_items(parser, "model"), "[model]"))
    kw.update(_coerce(_TRAIN_KEYS, _section_items(parser, "training"), "[training]"))
    kw.update(_coerce(_EXP_KEYS, _section_items(parser, "experiment"), "[experiment]"))

    decoders, objectives = [], []
    for section in parser.sections():
        if section.startswith("decoder "):
            name = section.split(" ", 1)[1]
            vals = _coerce(_DECODER_KEYS, _section_items(parser, section), f"[{section}]")
            if "method" not in vals:
                raise ValueError(f"[{section}]: missing method")
            decoders.append(DecoderSpec(name=name, **vals))
        elif section.startswith("objective "):
            name = section.split(" ", 1)[1]
            vals = _coerce(_OBJECTIVE_KEYS, _section_items(parser, section), f"[{section}]")
            if "kind" not in vals:
                raise ValueError(f"[{section}]: missing kind")
            objectives.append(ObjectiveChoice(name=name, **vals))
        elif section not in ("task", "model", "training", "experiment"):
            raise ValueError(f"unknown config section [{section}]")
    return ExperimentConfig(decoders=decoders, objectives=objectives, **kw)


def expand_rows(cfg):
    """Cross decoders with objectives; baselines contribute one row each."""
    single = ObjectiveChoice("single", "single")
    rows = []
    for dec in cfg.decoders:
        if dec.method in BASELINE_METHODS:
            rows.append(RowSpec(dec.name, dec, single))
            continue
        for obj in cfg.objectives:
            name = dec.name if obj.kind == "single" else f"{dec.name}+{obj.name}"
            rows.append(RowSpec(name, dec, obj))
    names = [r.name for r in rows]
    if len(set(names)) != len(names):
        raise ValueError("row names collide; rename decoders or objectives")
    return rows


def models_needed(rows):
    """Set of (direction, side) model kinds the rows require."""
    needed = set()
    for row in rows:
        if row.decoder.method in BASELINE_METHODS:
            needed.add((row.decoder.direction, "s2t"))
            continue
        needed.add(("l2r", "s2t"))
        if row.objective.kind == "bidirectional":
            needed.add(("r2l", "s2t"))
        elif row.objective.kind == "bilingual":
            needed.add(("l2r", "t2s"))
    return needed


def model_path(out_dir, direction, side):
    return os.path.join(out_dir, "models", f"model-{direction}-{side}.ckpt")


def write_train_log(path, history):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "dev_ppl", "lr"])
        for h in history:
            writer.writerow([h["epoch"], repr(h["train_loss"]), repr(h["dev_ppl"]), repr(h["lr"])])


def train_one_model(train, dev, src_vocab, tgt_vocab, direction, side, *,
                    embed_dim=32, hidden_dim=32, attn_dim=16,
                    epochs=30, lr=0.5, clip_norm=5.0, patience=3, seed=0):
    """Train one oriented model from natural-order corpora."""
    n_src = len(src_vocab) if side == "s2t" else len(tgt_vocab)
    n_tgt = len(tgt_vocab) if side == "s2t" else len(src_vocab)
    mc = ModelConfig(
        n_src, n_tgt,
        embed_dim=embed_dim, hidden_dim=hidden_dim, attn_dim=attn_dim,
        direction=direction, side=side,
    )
    tc = TrainConfig(epochs=epochs, lr=lr, clip_norm=clip_norm,
                     patience=patience, seed=seed)
    return train_model(train, dev, src_vocab, tgt_vocab, mc, tc)


def prepare_models(cfg, rows, corpora, vocabs, out_dir, log=None):
    """Train (or reload) every model the rows need; returns {(dir, side): params}."""
    train, dev, _ = corpora
    src_vocab, tgt_vocab = vocabs
    os.makedirs(os.path.join(out_dir, "models"), exist_ok=True)
    models = {}
    for direction, side in sorted(models_needed(rows)):
        path = model_path(out_dir, direction, side)
        if os.path.exists(path):
            models[(direction, side)] = load_checkpoint(path)
            if log:
                log(f"loaded {path}")
            continue
        result = train_one_model(
            train, dev, src_vocab, tgt_vocab, direction, side,
            embed_dim=cfg.embed_dim, hidden_dim=cfg.hidden_dim, attn_dim=cfg.attn_dim,
            epochs=cfg.epochs, lr=cfg.lr, clip_norm=cfg.clip_norm,
            patience=cfg.patience, seed=cfg.seed,
        )
        save_checkpoint(result.params, path)
        write_train_log(path[: -len(".ckpt")] + "-log.csv", result.history)
        models[(direction, side)] = result.params
        if log:
            best = min(h["dev_ppl"] for h in result.history) if result.history else float("nan")
            log(f"trained {direction}/{side}: best dev ppl {best:.4f} -> {path}")
    return models


def _pick_model(models, side, direction, what):
    found = [
        params
        for (d, s), params in sorted(models.items())
        if s == side and (direction is None or d == direction)
    ]
    if len(found) != 1:
        raise ValueError(f"objective needs exactly one {what} model, found {len(found)}")
    return found[0]


def build_objective(choice, x, models):
    """ObjectiveSpec for one sentence under a {(direction, side): params} set."""
    fwd = _pick_model(models, "s2t", "l2r", "left-to-right forward")
    if choice.kind == "single":
        return ObjectiveSpec("single", fwd, tuple(x))
    if choice.kind == "bidirectional":
        rev = _pick_model(models, "s2t", "r2l", "right-to-left")
        return ObjectiveSpec("bidirectional", fwd, tuple(x), reverse=rev, alpha=choice.alpha)
    rev = _pick_model(models, "t2s", None, "target-to-source")
    return ObjectiveSpec("bilingual", fwd, tuple(x), reverse=rev, alpha=choice.alpha)


def decode_sentence(x, row, models):
    """Decode one source sentence under one row; returns a result dict.

    `tokens` are always natural-order content ids.  Baselines report the
    same value for both costs: their hypotheses are discrete points, and
    at one-hot points the relaxed objective coincides with the model's
    sequence log-probability.
    """
    dec = row.decoder
    if dec.method in BASELINE_METHODS:
        params = models[(dec.direction, "s2t")]
        if dec.method == "greedy":
            hyp = greedy_decode(x, params)
        elif dec.method == "beam":
            hyp = beam_decode(x, params, width=dec.width)[0]
        else:
            nbest = beam_decode(x, params, width=dec.rerank_size, n_best=dec.rerank_size)
            hyp, _ = rerank(nbest, [(params, 1.0)], x)
        cost = -hyp.score
        ordered = to_natural_order(list(hyp.tokens), dec.direction)
        tokens = [t for t in ordered if t != EOS]
        return {"tokens": tokens, "continuous": cost, "discrete": cost,
                "length": len(tokens) + 1, "trace": None}
    spec = build_objective(row.objective, x, models)
    res = relaxed_decode(x, spec, dec.optim_config())
    return {"tokens": list(res.tokens), "continuous": res.continuous_cost,
            "discrete": res.discrete_cost, "length": res.length, "trace": res.trace}


_WORKER = {}


def _worker_init(models, rows):
    _WORKER["models"] = models
    _WORKER["rows"] = {row.name: row for row in rows}


def _worker_decode(args):
    sid, x, row_name = args
    return sid, decode_sentence(x, _WORKER["rows"][row_name], _WORKER["models"])


def run_rows(rows, sources, models, jobs=1, log=None):
    """Decode every source sentence under every row, in sentence-id order."""
    out = {}
    if jobs <= 1:
        for row in rows:
            out[row.name] = [decode_sentence(x, row, models) for x in sources]
            if log:
                log(f"decoded {row.name} ({len(sources)} sentences)")
        return out
    with ProcessPoolExecutor(
        max_workers=jobs, initializer=_worker_init, initargs=(models, rows)
    ) as pool:
        for row in rows:
            args = [(sid, x, row.name) for sid, x in enumerate(sources)]
            results = sorted(pool.map(_worker_decode, args), key=lambda r: r[0])
            out[row.name] = [r for _, r in results]
            if log:
                log(f"decoded {row.name} ({len(sources)} sentences)")
    return out


TABLE_HEADER = ["row", "bleu", "avg_continuous_cost", "avg_discrete_cost", "avg_output_len"]


def _table_lines(names, reports):
    rows = []
    for name in names:
        rep = reports[name]
        rows.append([
            name,
            repr(rep.bleu),
            repr(float(np.mean(rep.continuous_costs))),
            repr(float(np.mean(rep.discrete_costs))),
            repr(rep.avg_len),
        ])
    return rows


def write_table(out_dir, names, reports):
    """Emit table.csv (repr floats) and an aligned table.txt."""
    lines = _table_lines(names, reports)
    with open(os.path.join(out_dir, "table.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TABLE_HEADER)
        writer.writerows(lines)

    widths = [max(len(str(r[i])) for r in [TABLE_HEADER] + lines) for i in range(len(TABLE_HEADER))]
    drawn = []
    for parts in [TABLE_HEADER] + lines:
        drawn.append("  ".join(str(p).ljust(w) for p, w in zip(parts, widths)).rstrip())
    text = "\n".join(drawn) + "\n"
    with open(os.path.join(out_dir, "table.txt"), "w", encoding="utf-8") as fh:
        fh.write(text)
    return text


def rebuild_table(out_dir):
    """Recreate table.csv/table.txt from saved per-row reports alone."""
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    names = manifest["rows"]
    reports = {
        name: EvalReport.read_csv(os.path.join(out_dir, "reports", f"{name}.csv"))
        for name in names
    }
    return write_table(out_dir, names, reports)


def _detok(ids, vocab):
    return vocab.decode(ids)


def _figure_convergence(path, row_traces):
    """Mean objective per iteration for each relaxed row, padded at convergence."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for name, traces in row_traces:
        if not traces:
            continue
        horizon = max(len(t.q) for t, _ in traces)
        padded = np.stack([
            np.pad(np.asarray(t.q) / ell, (0, horizon - len(t.q)), mode="edge")
            for t, ell in traces
        ])
        ax.plot(np.arange(horizon), padded.mean(axis=0), label=name)
    ax.set_xlabel("iteration")
    ax.set_ylabel("mean objective per row")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _figure_scatter(path, labelled_pairs):
    """Continuous-vs-discrete cost scatter with the identity diagonal."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4.8, 4.8))
    lo, hi = np.inf, -np.inf
    for name, pairs in labelled_pairs:
        if pairs.size == 0:
            continue
        ax.scatter(pairs[:, 0], pairs[:, 1], s=12, alpha=0.6, label=name)
        lo = min(lo, pairs.min())
        hi = max(hi, pairs.max())
    if np.isfinite(lo):
        ax.plot([lo, hi], [lo, hi], color="gray", linewidth=1)
    ax.set_xlabel("continuous cost per row")
    ax.set_ylabel("discrete cost per row")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def prepare_data(cfg, out_dir, log=None):
    """Generate (or reload) the seeded corpus splits under out/data."""
    data_dir = os.path.join(out_dir, "data")
    os.makedirs(data_dir, exist_ok=True)
    paths = {
        split: (os.path.join(data_dir, f"{split}.src"), os.path.join(data_dir, f"{split}.tgt"))
        for split in ("train", "dev", "test")
    }
    if all(os.path.exists(p) for pair in paths.values() for p in pair):
        splits = tuple(read_corpus(*paths[s], split=s) for s in ("train", "dev", "test"))
        if log:
            log(f"loaded corpus splits from {data_dir}")
        return splits
    corpus = generate_synthetic(
        cfg.task, cfg.pairs, cfg.vocab, seed=cfg.seed,
        min_len=cfg.min_len, max_len=cfg.max_len, noise_rate=cfg.noise_rate,
    )
    splits = split_corpus(corpus, seed=cfg.seed)
    for split, part in zip(("train", "dev", "test"), splits):
        write_corpus(part, *paths[split])
    if log:
        log(f"wrote corpus splits to {data_dir}")
    return splits


def run_experiment(cfg, line_search=False, log=None):
    """Run the full sweep; returns the rendered table text."""
    out_dir = cfg.out
    os.makedirs(out_dir, exist_ok=True)
    for sub in ("hyps", "traces", "reports", "figures"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)

    rows = expand_rows(cfg)
    train, dev, test = prepare_data(cfg, out_dir, log=log)
    src_vocab = build_vocab(train.sources())
    tgt_vocab = build_vocab(train.targets())
    models = prepare_models(cfg, rows, (train, dev, test), (src_vocab, tgt_vocab),
                            out_dir, log=log)

    if line_search:
        _line_search_rows(cfg, rows, dev, src_vocab, models, out_dir, log=log)
        rows = expand_rows(cfg)

    sources = [src_vocab.encode(s) for s in test.sources()]
    references = test.targets()
    results = run_rows(rows, sources, models, jobs=cfg.jobs, log=log)

    reports = {}
    for row in rows:
        per_row = results[row.name]
        hyps = [_detok(r["tokens"], tgt_vocab) for r in per_row]
        with open(os.path.join(out_dir, "hyps", f"{row.name}.txt"), "w",
                  encoding="utf-8", newline="\n") as fh:
            for toks in hyps:
                fh.write(" ".join(toks) + "\n")
        traces = [(sid, r["trace"]) for sid, r in enumerate(per_row) if r["trace"]]
        if traces:
            write_trace_csv(os.path.join(out_dir, "traces", f"{row.name}.csv"), traces)
        report = make_eval_report(
            hyps, references,
            [r["continuous"] for r in per_row],
            [r["discrete"] for r in per_row],
        )
        report.write_csv(os.path.join(out_dir, "reports", f"{row.name}.csv"))
        reports[row.name] = report
        if log:
            log(f"{row.name}: bleu {report.bleu:.2f}")

    manifest = {
        "rows": [row.name for row in rows],
        "seed": cfg.seed,
        "task": cfg.task,
        "pairs": cfg.pairs,
        "vocab": cfg.vocab,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    relaxed_rows = [row for row in rows if row.decoder.method in RELAXED_METHODS]
    if relaxed_rows:
        row_traces = [
            (row.name,
             [(r["trace"], r["length"]) for r in results[row.name] if r["trace"]])
            for row in relaxed_rows
        ]
        _figure_convergence(os.path.join(out_dir, "figures", "convergence.svg"), row_traces)
        labelled = []
        for row in relaxed_rows:
            pairs = np.array([
                [r["continuous"] / r["length"],
                 r["discrete"] / (len(r["tokens"]) + 1)]
                for r in results[row.name]
            ])
            labelled.append((row.name, pairs))
        _figure_scatter(os.path.join(out_dir, "figures", "scatter.svg"), labelled)

    return write_table(out_dir, [row.name for row in rows], reports)


def _line_search_rows(cfg, rows, dev, src_vocab, models, out_dir, log=None):
    """Tune eta per relaxed decoder on dev sentences; updates cfg in place."""
    dev_sources = [src_vocab.encode(s) for s in dev.sources()][:20]
    tuned = {}
    records = []
    for dec in cfg.decoders:
        if dec.method not in RELAXED_METHODS:
            continue
        row = next(r for r in rows if r.decoder.name == dec.name)
        specs = [build_objective(row.objective, x, models) for x in dev_sources]
        best, scanned = line_search_eta(specs, dec.optim_config())
        tuned[dec.name] = best
        for eta, cost in scanned:
            records.append([dec.name, repr(eta), repr(cost)])
        if log:
            log(f"line search {dec.name}: eta {best:g}")
    with open(os.path.join(out_dir, "linesearch.csv"), "w", encoding="utf-8",
              newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["decoder", "eta", "mean_cost_per_row"])
        writer.writerows(records)
    cfg.decoders = [
        dataclasses.replace(d, eta=tuned[d.name]) if d.name in tuned else d
        for d in cfg.decoders
    ]
