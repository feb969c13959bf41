"""``riskscreen`` command line.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__, pipeline, synth
from .corpus import write_corpus_csv, write_corpus_jsonl
from .errors import NumericalError, ValidationError

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


def _u64(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS lets the flags appear before or after the subcommand
    common.add_argument("--config", default=argparse.SUPPRESS, help="experiment config (JSON)")
    common.add_argument("--seed", type=_u64, default=argparse.SUPPRESS, help="base seed")
    common.add_argument("--out", default=argparse.SUPPRESS,
                        help="output directory (for synth: the corpus file)")
    common.add_argument("--threads", type=_positive, default=argparse.SUPPRESS,
                        help="worker threads for independent fits")

    p = argparse.ArgumentParser(prog="riskscreen", parents=[common],
                                description="Risk screening from survey text and answers.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    s.add_argument("--spec", help="synthetic spec (JSON); defaults apply when omitted")
    s.add_argument("--format", choices=("jsonl", "csv"), help="default: from the --out suffix")

    for name, text in (
        ("preprocess", "tokenize the corpus and build the document-term matrix"),
        ("topics", "coherence sweep, final LDA model and LSI"),
        ("featurize", "assemble the feature sets, labels and split"),
        ("train-eval", "cross-validated lasso for every feature set and outcome"),
        ("report", "metrics table and coefficient charts"),
        ("run", "all stages in order"),
    ):
        sp = sub.add_parser(name, parents=[common], help=text)
        if name in ("preprocess", "run"):
            sp.add_argument("--corpus", help="corpus file, overriding the config")
    return p


def _config(args) -> pipeline.ExperimentConfig:
    cfg = pipeline.load_config(args.config) if getattr(args, "config", None) else pipeline.ExperimentConfig()
    over = {}
    if hasattr(args, "seed"):
        over["seed"] = args.seed
    if hasattr(args, "out"):
        over["out_dir"] = args.out
    if hasattr(args, "threads"):
        over["threads"] = args.threads
    if getattr(args, "corpus", None):
        over["corpus"] = args.corpus
    return replace(cfg, **over) if over else cfg


def _synth(args) -> None:
    spec = synth.load_spec(args.spec) if args.spec else synth.SynthSpec()
    if hasattr(args, "seed"):
        spec = synth.with_seed(spec, args.seed)
    out = Path(getattr(args, "out", "corpus.jsonl"))
    fmt = args.format or ("csv" if out.suffix.lower() == ".csv" else "jsonl")
    records = synth.generate(spec)
    out.parent.mkdir(parents=True, exist_ok=True)
    (write_corpus_csv if fmt == "csv" else write_corpus_jsonl)(records, out)
    print(f"wrote {len(records)} records to {out}")


def _dispatch(args) -> None:
    if args.command == "synth":
        _synth(args)
        return
    cfg = _config(args)
    if args.command == "preprocess":
        vocab, dtm = pipeline.run_preprocess(cfg)
        print(f"{dtm.n_docs} documents, {len(vocab)} terms -> {cfg.out / 'preprocess'}")
    elif args.command == "topics":
        report, model, lsi_model = pipeline.run_topics(cfg)
        print(f"best k = {report.best_k}; LSI rank {lsi_model.rank} -> {cfg.out / 'topics'}")
    elif args.command == "featurize":
        res = pipeline.run_featurize(cfg)
        for name, m in res["matrices"].items():
            print(f"{name}: {m.shape[1]} columns")
    elif args.command == "train-eval":
        metrics = pipeline.run_train_eval(cfg)
        print(pipeline.metrics_table(metrics))
        _fail_on_unfitted(metrics)
    elif args.command == "report":
        print(pipeline.run_report(cfg))
    elif args.command == "run":
        metrics = pipeline.run_all(cfg)
        print(pipeline.metrics_table(metrics))
        _fail_on_unfitted(metrics)


def _fail_on_unfitted(metrics: dict) -> None:
    # undefined metrics are reported per cell; a cell with no model at all is a failure
    failed = [r for r in metrics["cells"] if any(e.startswith("fit:") for e in r["errors"])]
    if failed:
        names = ", ".join(pipeline.cell_name(r["feature_set"], r["outcome"]) for r in failed)
        raise NumericalError(f"no model for: {names}")


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        _dispatch(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
