"""Command-line entry point: ``perfcast <command> [options]``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import pipeline
from .fleetsim import CorpusError
from .pipeline import PipelineError, UsageError, Workspace

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file with per-command sections")
    p.add_argument("--workdir", default=".", help="base directory for relative paths (default: .)")
    p.add_argument("--corpus", help="corpus directory (overrides paths.corpus)")
    p.add_argument("--out", help="artifact directory (overrides paths.out)")
    p.add_argument("--seed", type=int, help="global seed (overrides config)")
    p.add_argument("-v", "--verbose", action="store_true")


def _model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", choices=pipeline.MODELS)
    p.add_argument("--context", type=int, help="context width of the BoW features")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="perfcast", description="Predict performance regressions from code changes.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    _common(p)
    p.add_argument("--changes", type=int, help="number of change records")
    p.add_argument("--clustered", action="store_true", help="plant regressions in temporal bursts")
    p.add_argument("--force", action="store_true", help="overwrite a non-empty corpus directory")

    p = sub.add_parser("label", help="window, filter and binarize function changes")
    _common(p)
    p.add_argument("--threshold-t", type=float)
    p.add_argument("--cv-max", type=float)
    p.add_argument("--min-samples", type=int)

    p = sub.add_parser("split", help="train/tune/test split")
    _common(p)
    p.add_argument("--mode", choices=("chronological", "random"),
                   help="random is for experiments only")
    p.add_argument("--tune-cutoff", type=float)
    p.add_argument("--test-cutoff", type=float)

    p = sub.add_parser("featurize", help="build BoW or code-opaque feature rows")
    _common(p)
    p.add_argument("--mode", choices=("bow", "opaque"))
    p.add_argument("--context", type=int)

    p = sub.add_parser("train", help="fit a classifier on the train split")
    _common(p)
    _model_args(p)
    p.add_argument("--n-estimators", type=int)
    p.add_argument("--n-jobs", type=int)

    p = sub.add_parser("eval", help="metrics, curves and confusion matrix")
    _common(p)
    _model_args(p)
    p.add_argument("--threshold", help="decision threshold, or 'tuned'")
    p.add_argument("--split", default="test", choices=pipeline.SPLITS)

    p = sub.add_parser("tune", help="pick a threshold on the tune split")
    _common(p)
    _model_args(p)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--target-recall", type=float)
    g.add_argument("--target-precision", type=float)
    g.add_argument("--fixed", type=float)

    p = sub.add_parser("filter", help="filtering-mode report at the tuned threshold")
    _common(p)
    _model_args(p)

    p = sub.add_parser("explain", help="counterfactual explanations for flagged changes")
    _common(p)
    _model_args(p)
    p.add_argument("--limit", type=int)
    p.add_argument("--threshold", help="decision threshold, or 'tuned'")

    p = sub.add_parser("run", help="the whole pipeline from synth to explain")
    _common(p)
    p.add_argument("--force", action="store_true", help="overwrite a non-empty corpus directory")
    return parser


def _overrides(args) -> dict:
    ov: dict = {}
    if args.seed is not None:
        ov["seed"] = args.seed
    paths = {}
    if args.corpus:
        paths["corpus"] = args.corpus
    if args.out:
        paths["out"] = args.out
    if paths:
        ov["paths"] = paths
    cmd = args.command
    if cmd == "synth" and args.clustered:
        ov["synth"] = {"clustered": True}
    if cmd == "label":
        lab = {k: v for k, v in (("threshold_t", args.threshold_t), ("cv_max", args.cv_max),
                                 ("min_samples", args.min_samples)) if v is not None}
        if lab:
            ov["label"] = lab
    if cmd == "split":
        sp = {k: v for k, v in (("tune_cutoff", args.tune_cutoff), ("test_cutoff", args.test_cutoff))
              if v is not None}
        if sp:
            ov["split"] = sp
    if cmd == "train":
        tr = {k: v for k, v in (("n_estimators", args.n_estimators), ("n_jobs", args.n_jobs))
              if v is not None}
        if tr:
            ov["train"] = tr
    return ov


def dispatch(args) -> dict:
    cfg = pipeline.load_config(args.config, _overrides(args))
    ws = Workspace(cfg, args.workdir)
    cmd = args.command
    if cmd == "synth":
        return pipeline.stage_synth(ws, force=args.force, n_changes=args.changes)
    if cmd == "label":
        return pipeline.stage_label(ws)
    if cmd == "split":
        return pipeline.stage_split(ws, args.mode)
    if cmd == "featurize":
        return pipeline.stage_featurize(ws, args.mode, args.context)
    if cmd == "train":
        return pipeline.stage_train(ws, args.model, args.context)
    if cmd == "eval":
        return pipeline.stage_eval(ws, args.model, args.context, args.threshold, args.split)
    if cmd == "tune":
        if args.target_precision is not None:
            return pipeline.stage_tune(ws, args.model, args.context, "target_precision", args.target_precision)
        if args.fixed is not None:
            return pipeline.stage_tune(ws, args.model, args.context, "fixed", args.fixed)
        return pipeline.stage_tune(ws, args.model, args.context, None, args.target_recall)
    if cmd == "filter":
        return pipeline.stage_filter(ws, args.model, args.context)
    if cmd == "explain":
        return pipeline.stage_explain(ws, args.model, args.context, args.limit, args.threshold)
    if cmd == "run":
        return pipeline.stage_run(ws, force=args.force)
    raise UsageError(f"unknown command {cmd}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        result = dispatch(args)
    except UsageError as exc:
        print(f"perfcast: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PipelineError, CorpusError) as exc:
        print(f"perfcast: {exc}", file=sys.stderr)
        return EXIT_DATA
    print(json.dumps(result, indent=1, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
