"""Command-line entry point.

Subcommands mirror the pipeline stages (extract, dedup, split, embed,
train, index, eval), plus `run` for the whole pipeline, `predict` for a
single function slot and `report` to print persisted artifacts. Exit code
is 0 on success and 1 on failure, with the failing stage named on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import PipelineConfig, load_config, make_config
from .errors import StageError, TypesimError
from .evaluation import EvalReport
from .pipeline import STAGES, predict_for_source, run_pipeline


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML config file")
    parser.add_argument("--corpus", help="corpus root directory")
    parser.add_argument("--out", help="artifact output directory")
    parser.add_argument("--seed", type=int, help="root random seed")
    parser.add_argument(
        "--preset", choices=["desk", "paper"], help="hyperparameter preset"
    )
    parser.add_argument(
        "--ablate",
        choices=["identifiers", "context", "visible"],
        help="zero out one input branch",
    )
    parser.add_argument(
        "--force", action="store_true", help="rerun stages even when cached"
    )


def _build_config(args: argparse.Namespace) -> PipelineConfig:
    overrides = {
        "corpus_root": args.corpus,
        "output_dir": args.out,
        "seed": args.seed,
        "ablate": args.ablate,
    }
    if args.config:
        cfg = load_config(args.config, **overrides)
        if args.preset:
            raise ValueError("--preset cannot override an explicit --config file")
        return cfg
    return make_config(args.preset or "desk", **overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="typesim",
        description="Similarity-learning type inference pipeline for Python code",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the full pipeline")
    _add_common(run)

    for stage in STAGES:
        sp = sub.add_parser(stage, help=f"run the {stage} stage")
        _add_common(sp)

    predict = sub.add_parser("predict", help="predict types for one slot")
    _add_common(predict)
    predict.add_argument("--file", required=True, help="Python source file")
    predict.add_argument("--function", required=True, help="function (qualified) name")
    predict.add_argument("--arg", help="argument name; omit for the return type")
    predict.add_argument("--top", type=int, default=3, help="number of candidates")

    report = sub.add_parser("report", help="print persisted reports")
    _add_common(report)
    return parser


def _cmd_report(cfg: PipelineConfig) -> int:
    out = Path(cfg.output_dir)
    shown = False
    for name in (
        "extraction_report.json",
        "dedup_report.json",
        "type_frequency.json",
    ):
        path = out / name
        if path.exists():
            print(f"== {name} ==")
            print(path.read_text(encoding="utf-8").rstrip())
            shown = True
    eval_path = out / "eval_report.json"
    if eval_path.exists():
        report = EvalReport.load(eval_path)
        print("== evaluation ==")
        print(f"configuration: {report.notes.get('configuration', 'full')}")
        print(report.render_table())
        shown = True
    if not shown:
        print("no artifacts found; run the pipeline first", file=sys.stderr)
        return 1
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="[%(name)s] %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = _build_config(args)
        if args.command == "run":
            outcome = run_pipeline(cfg, force=args.force)
            print(json.dumps(outcome, sort_keys=True))
        elif args.command in STAGES:
            outcome = run_pipeline(cfg, stages=[args.command], force=args.force)
            print(json.dumps(outcome, sort_keys=True))
        elif args.command == "predict":
            result = predict_for_source(
                cfg, args.file, args.function, args.arg, top=args.top
            )
            print(json.dumps(result, indent=1, sort_keys=True))
        elif args.command == "report":
            return _cmd_report(cfg)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TypesimError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
