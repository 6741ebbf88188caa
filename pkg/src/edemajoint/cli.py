"""Command-line front end: label, gen-data, train, eval, explain, matrix, validate-config."""

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import synthgen, textlab
from .encoders import classify, encode_image, gradcam, pgm_bytes, saliency_json, text_saliency
from .errors import ConfigError, EdemaJointError
from .evalkit import EvalReport, evaluate, format_table
from .trainkit import (TrainConfig, atomic_write_bytes, dump_config, load_checkpoint, load_config,
                       metrics_csv, save_checkpoint, train, validate_config)

VARIANTS = ("image-only", "dot", "l2", "cosine",
            "ranking-dot", "ranking-l2", "ranking-cosine", "ranking-dot-semi")

_SIMILARITY = {"dot": "dot", "l2": "neg_l2", "cosine": "cosine"}


class UsageError(Exception):
    """Bad command-line input; maps to exit status 2."""


def _say(msg):
    print(msg, flush=True)


def _write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def _threads():
    raw = os.environ.get("EDEMAJOINT_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"EDEMAJOINT_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"EDEMAJOINT_THREADS must be a positive integer, got {raw!r}")
    return n


def _seeds(raw):
    try:
        seeds = [int(s) for s in str(raw).split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--seed expects integers separated by commas, got {raw!r}") from None
    if not seeds:
        raise UsageError("--seed is empty")
    return seeds


def _config(args):
    config = load_config(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        config = config.replace(seed=_seeds(args.seed)[0])
    return config


# ------------------------------------------------------------------ subcommands

def cmd_label(args):
    ruleset = textlab.load_ruleset(args.rules)
    corpus = textlab.label_corpus(textlab.read_reports(args.inp), ruleset)
    _write_text(args.out, textlab.labels_csv(corpus))
    summary = corpus.summary
    _write_text(Path(str(args.out) + ".summary.json"), json.dumps(summary, indent=2) + "\n")
    _say(f"label: {summary['n_documents']} documents, counts {summary['counts']}, "
         f"{summary['unlabeled']} unlabeled, {len(summary['failures'])} failures -> {args.out}")
    print(json.dumps(summary))


def cmd_gen_data(args):
    cfg = synthgen.GenConfig(seed=_seeds(args.seed)[0] if args.seed is not None else 0)
    split = synthgen.gen_dataset(cfg)
    out = Path(args.out)
    tmp = out.with_name(f".{out.name}.tmp")
    if tmp.exists():
        _remove_tree(tmp)
    synthgen.save_dataset(split, tmp)
    if out.exists():
        _remove_tree(out)
    os.replace(tmp, out)
    _say(f"gen-data: {len(split.labeled)} labeled + {len(split.unlabeled)} unlabeled pairs, "
         f"vocabulary {len(split.vocabulary)} -> {out}")


def _remove_tree(path):
    for p in sorted(Path(path).rglob("*"), reverse=True):
        p.rmdir() if p.is_dir() else p.unlink()
    Path(path).rmdir()


def _split(config, data):
    if config.holdout:
        return synthgen.holdout_split(data, config.holdout)
    return data, None


def cmd_train(args):
    config = _config(args)
    data = synthgen.load_dataset(args.data)
    train_split, held_out = _split(config, data)
    _say(f"train: {len(train_split.labeled)} labeled, {len(train_split.unlabeled)} unlabeled, "
         f"{0 if held_out is None else len(held_out)} held out; peak lr {config.peak_lr:g}")
    result = train(config, train_split, held_out)
    out = Path(args.out)
    save_checkpoint(result.checkpoint, out)
    if result.best is not None:
        save_checkpoint(result.best, out.with_name(out.name + ".best"))
    _write_text(out.with_name(out.name + ".metrics.csv"), metrics_csv(result.log))
    last = result.log[-1] if result.log else {}
    _say(f"train: {result.checkpoint.step} steps, final loss {last.get('loss', float('nan')):.5f} -> {out}")


def cmd_eval(args):
    ckpt = load_checkpoint(args.ckpt)
    data = synthgen.load_dataset(args.data)
    if ckpt.config.holdout:
        _, examples = synthgen.holdout_split(data, ckpt.config.holdout)
    else:
        examples = data.labeled
    report = evaluate(ckpt, examples)
    text = format_table([(Path(args.ckpt).name, report)])
    if args.out:
        _write_text(args.out, report.to_json() + "\n")
    print(text, end="")
    _say(f"eval: {report.n_examples} examples, mean AUC "
         f"{'-' if report.mean_auc is None else f'{report.mean_auc:.4f}'}, macro-F1 {report.macro_f1:.4f}")


def cmd_explain(args):
    ckpt = load_checkpoint(args.ckpt)
    data = synthgen.load_dataset(args.data)
    examples = data.examples
    if not 0 <= args.example < len(examples):
        raise ConfigError(f"--example {args.example} is out of range 0..{len(examples) - 1}")
    ex = examples[args.example]
    probs = classify(encode_image(ex.image, ckpt.params), ckpt.params, "image")
    cls = int(np.argmax(probs))
    heat = gradcam(ex.image, ckpt.params, cls)
    weights = text_saliency(ex.tokens, ckpt.params)
    words = data.decode(ex.tokens[:len(weights)])
    out = Path(args.out)
    atomic_write_bytes(out / f"example{args.example}_gradcam.pgm", pgm_bytes(heat))
    _write_text(out / f"example{args.example}_tokens.json", saliency_json(words, weights) + "\n")
    top = words[int(np.argmax(weights))]
    _say(f"explain: example {args.example} predicted level {cls} (p={probs[cls]:.3f}), "
         f"top token {top!r} -> {out}")


def cmd_validate_config(args):
    config, errors = validate_config(args.config)
    if errors:
        for e in errors:
            print(f"error: {e}", file=sys.stderr)
        return 1
    print(dump_config(config), end="")
    return 0


# ------------------------------------------------------------------ experiment matrix

def variant_config(config, name):
    """Training config for a named model variant."""
    if name not in VARIANTS:
        raise UsageError(f"unknown variant {name!r}; choose from {', '.join(VARIANTS)}")
    if name == "image-only":
        return config.replace(image_only=True, phase1_epochs=0)
    semi = name.endswith("-semi")
    base = name[:-len("-semi")] if semi else name
    mode, sim = ("ranking", base.split("-", 1)[1]) if base.startswith("ranking-") else ("direct", base)
    return config.replace(similarity=_SIMILARITY[sim], mode=mode, image_only=False,
                          phase1_epochs=config.phase1_epochs if semi else 0)


def _run_variant(job):
    config, data, held_out = job
    # final-epoch weights only, so skip the per-epoch validation pass
    result = train(config, data)
    return evaluate(result.checkpoint, held_out)


def run_experiment_matrix(config, variants, data, seeds=None, workers=1):
    """Train and score every variant for every seed on a shared dataset.

    Returns ``(rows, table)`` with one ``(variant, mean report)`` row per
    variant.  ``-semi`` variants are skipped when the dataset has no unlabeled
    pairs.
    """
    if not config.holdout:
        raise ConfigError("the experiment matrix needs holdout > 0 for a test split")
    for name in variants:
        variant_config(config, name)
    seeds = [config.seed] if seeds is None else list(seeds)
    train_split, held_out = synthgen.holdout_split(data, config.holdout)
    names = [v for v in variants if not (v.endswith("-semi") and not train_split.unlabeled)]
    jobs = [(variant_config(config, v).replace(seed=s), train_split, held_out)
            for v in names for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_run_variant, jobs))
    else:
        reports = [_run_variant(j) for j in jobs]
    rows = []
    for i, name in enumerate(names):
        rows.append((name, mean_report(reports[i * len(seeds):(i + 1) * len(seeds)])))
    return rows, format_table(rows)


def mean_report(reports):
    """Seed-averaged metrics; an AUC is absent if it is absent for any seed."""
    aucs = []
    for k in range(3):
        vals = [r.aucs[k] for r in reports]
        aucs.append(None if any(v is None for v in vals) else float(np.mean(vals)))
    return EvalReport(*aucs, float(np.mean([r.macro_f1 for r in reports])),
                      sum(r.confusion for r in reports), sum(r.n_examples for r in reports))


def cmd_matrix(args):
    config = _config(args)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    for v in variants:
        variant_config(config, v)
    seeds = _seeds(args.seed) if args.seed is not None else [config.seed]
    data = synthgen.load_dataset(args.data)
    _say(f"matrix: {len(variants)} variants x {len(seeds)} seeds")
    rows, table = run_experiment_matrix(config, variants, data, seeds, _threads())
    if args.out:
        _write_text(args.out, table)
    print(table, end="")
    _say(f"matrix: {len(rows)} rows" + (f" -> {args.out}" if args.out else ""))


# ------------------------------------------------------------------ entry point

def build_parser():
    parser = argparse.ArgumentParser(prog="edemajoint", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("label", help="label free-text reports with the keyword ruleset")
    p.add_argument("--in", dest="inp", required=True, help="JSON-lines file or directory of .txt")
    p.add_argument("--rules", default="default", help="'default' or a ruleset JSON file")
    p.add_argument("--out", required=True, help="labels CSV")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("gen-data", help="generate the synthetic paired corpus")
    p.add_argument("--seed", default=None)
    p.add_argument("--out", required=True, help="dataset directory")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the joint model")
    p.add_argument("--config", default=None, help="YAML config file")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--seed", default=None)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint with image-only inference")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None, help="report JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("explain", help="Grad-CAM heatmap and token saliency for one example")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--example", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("matrix", help="train and compare model variants")
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--variants", default=",".join(VARIANTS))
    p.add_argument("--seed", default=None, help="one seed or a comma-separated list")
    p.add_argument("--out", default=None, help="table text file")
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("validate-config", help="check a config file and echo it fully resolved")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_validate_config)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    try:
        _threads()
        status = args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"edemajoint: error: {exc}", file=sys.stderr)
        return 2
    except (EdemaJointError, OSError, ValueError, KeyError) as exc:
        print(f"edemajoint {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return status or 0


if __name__ == "__main__":
    sys.exit(main())
