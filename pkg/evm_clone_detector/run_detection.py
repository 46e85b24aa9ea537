"""
Main entry point for the EVM clone detector.

This module provides the command-line interface:

    extract   bytecode (.hex) -> schema JSON files
    train     corpus -> model file
    detect    model + labels + queries -> clone and vulnerability reports
    eval      k-fold cross-validation metrics
    synth     write a synthetic labelled corpus

Exit codes: 0 success, 1 internal error, 2 input validation, 3 empty analysis.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from dotenv import load_dotenv

from .detection.evaluation import evaluate, evaluate_clones, metrics_to_csv, render_metrics
from .embedding.persistence import load_model, save_model
from .models.data_models import LabelStore
from .models.exceptions import (
    BytecodeFormatError,
    ConfigError,
    DimensionMismatchError,
    DuplicateFunctionError,
    EmptyCorpusError,
    EvaluationError,
    LabelError,
    ModelFormatError,
    SchemaError,
    TrainingDivergedError,
)
from .parsers.corpus_parser import find_corpus_files, load_corpus
from .parsers.extractor import build_contract_file, read_contract_blobs
from .parsers.label_parser import load_clone_groups, load_labels
from .parsers.schema_parser import write_schema_file
from .utils.config import RunConfig, build_config
from .utils.logger import Logger, level_from_env, set_global_level
from .utils.report import render_clone_precision, render_loss_history, render_query_report
from .utils.synthetic import DELETIONS, STATEMENTS, generate_corpus, write_corpus
from .workflow.pipeline import DetectionPipeline, train_from_corpus

logger = Logger(__name__)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2
EXIT_EMPTY = 3

INPUT_ERRORS = (BytecodeFormatError, SchemaError, LabelError, ConfigError, ModelFormatError,
                DimensionMismatchError, DuplicateFunctionError, EvaluationError)

# argparse destinations forwarded to RunConfig
_CONFIG_KEYS = ("corpus", "labels", "model", "dim", "negative", "alpha", "epochs", "infer_epochs",
                "min_count", "seed", "threshold", "top_k", "threads", "folds", "fork", "policy",
                "index_mode", "skip_boilerplate")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="Path to a key=value configuration file")
    parser.add_argument("--verbose", "-v", action="store_true", help="Log debug messages")
    parser.add_argument("--no-progress", action="store_true", help="Disable progress bars")


def _add_hyperparams(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dim", "-d", type=int, help="Token vector dimension (default 100)")
    parser.add_argument("--negative", "-k", type=int, help="Negative samples per token (default 25)")
    parser.add_argument("--alpha", type=float, help="Initial learning rate (default 0.025)")
    parser.add_argument("--epochs", type=int, help="Training epochs (default 10)")
    parser.add_argument("--infer-epochs", type=int, help="Inference epochs (default: --epochs)")
    parser.add_argument("--min-count", type=int, help="Fold rarer tokens into UNK (default 1)")
    parser.add_argument("--seed", type=int, help="Random seed (default 1)")
    parser.add_argument("--threads", type=int, help="Training threads; 1 is deterministic (default 1)")
    parser.add_argument("--fork", help="Opcode table: london, paris, shanghai, cancun (default shanghai)")
    parser.add_argument("--policy", help="Operand normalisation policy: default-v1 or selectors-v1")
    parser.add_argument("--index-mode", choices=["reembed", "trained"],
                        help="Index vectors: re-inferred (default) or taken from training")


def _add_detection(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--threshold", type=float, help="Clone similarity threshold (default 0.8)")
    parser.add_argument("--top-k", type=int, help="Maximum clones per function (default 5)")
    parser.add_argument("--skip-boilerplate", action="store_true", default=None,
                        help="Leave dispatcher and orphan functions out of queries and index")


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(
        prog="evm_clone_detector",
        description="Clone and vulnerability detection for EVM bytecode with learned function embeddings",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    extract = commands.add_parser("extract", help="Extract schema JSON from bytecode files")
    extract.add_argument("inputs", nargs="+", help=".hex files or directories")
    extract.add_argument("--out", required=True, help="Output directory for the JSON files")
    extract.add_argument("--fork", help="Opcode table (default shanghai)")
    _add_common(extract)

    train = commands.add_parser("train", help="Train a model on a corpus")
    train.add_argument("--corpus", nargs="+", help="Corpus files or directories (.hex / .json)")
    train.add_argument("--labels", help="Labels CSV (validated; needed later by detect)")
    train.add_argument("--model-out", required=True, help="Model file to write")
    _add_hyperparams(train)
    _add_common(train)

    detect = commands.add_parser("detect", help="Detect clones and vulnerabilities of query contracts")
    detect.add_argument("--model", help="Trained model file")
    detect.add_argument("--labels", help="Labels CSV of the training corpus")
    detect.add_argument("--query", nargs="+", required=True, help="Query files or directories")
    detect.add_argument("--json", action="store_true", help="Emit one JSON report per line")
    detect.add_argument("--out", help="Directory receiving the clone list of every query")
    detect.add_argument("--exclude-self", action="store_true", help="Never match a function to itself")
    _add_detection(detect)
    _add_common(detect)

    evaluation = commands.add_parser("eval", help="K-fold cross-validation")
    evaluation.add_argument("--corpus", nargs="+", help="Corpus files or directories")
    evaluation.add_argument("--labels", help="Labels CSV")
    evaluation.add_argument("--folds", type=int, help="Number of folds (default 10)")
    evaluation.add_argument("--csv", help="Write the metrics CSV here")
    evaluation.add_argument("--clone-groups", help="file,group CSV; adds the clone-precision table")
    evaluation.add_argument("--fold-workers", type=int, default=1, help="Folds run concurrently")
    _add_hyperparams(evaluation)
    _add_detection(evaluation)
    _add_common(evaluation)

    synth = commands.add_parser("synth", help="Write a synthetic labelled corpus")
    synth.add_argument("--out", required=True, help="Output directory")
    synth.add_argument("--templates", type=int, default=20, help="Number of templates")
    synth.add_argument("--variants", type=int, default=3, help="Rewrite variants per template")
    synth.add_argument("--statements", type=int, default=STATEMENTS, help="Statements per function body")
    synth.add_argument("--deletions", type=int, default=DELETIONS, help="Statements deleted per variant")
    synth.add_argument("--seed", type=int, default=7, help="Generator seed")
    _add_common(synth)

    return parser.parse_args(argv)


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """Defaults < config file < flags."""
    overrides: Dict[str, Any] = {}
    for key in _CONFIG_KEYS:
        value = getattr(args, key, None)
        if key == "corpus" and isinstance(value, list):
            value = ",".join(value)
        overrides[key] = value
    return build_config(overrides, getattr(args, "config", None))


def _corpus_paths(config: RunConfig) -> List[str]:
    if not config.corpus:
        raise ConfigError("no corpus given (--corpus or `corpus=` in the config file)")
    return [path for path in config.corpus.split(",") if path]


def _report_errors(errors: List[Dict[str, Any]]) -> None:
    for error in errors:
        print(f"error: {error['error_type']}: {error['message']}", file=sys.stderr)


def cmd_extract(args: argparse.Namespace) -> int:
    fork = build_config({"fork": args.fork}, args.config).fork
    files, errors = find_corpus_files(args.inputs, suffixes=(".hex",))
    if not files and not errors:
        logger.warning(f"No .hex files found under {', '.join(args.inputs)}")

    out = Path(args.out)
    written = 0
    for path in files:
        try:
            contract_file = build_contract_file(path.stem, read_contract_blobs(path.read_text(encoding="utf-8")), fork)
        except BytecodeFormatError as e:
            errors.append({'error_type': 'malformed_hex', 'message': f"{path}: {e}", 'file': str(path)})
            continue
        except (OSError, UnicodeDecodeError) as e:
            errors.append({'error_type': 'read_error', 'message': f"{path}: {e}", 'file': str(path)})
            continue
        write_schema_file(contract_file, str(out / f"{path.stem}.json"))
        written += 1

    logger.info(f"Wrote {written} schema files to {out}")
    _report_errors(errors)
    return EXIT_INPUT if errors else EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    progress = not args.no_progress
    if config.labels:
        labels = load_labels(config.labels)
        logger.info(f"Labels cover {len(labels)} contracts")
    if config.epochs == 0:
        logger.warning("--epochs 0: the model keeps zero function vectors")

    params, errors = train_from_corpus(_corpus_paths(config), config, progress=progress)
    save_model(params, args.model_out)
    print(render_loss_history(params.loss_history))
    _report_errors(errors)
    return EXIT_INPUT if errors else EXIT_OK


def cmd_detect(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    if not config.model:
        raise ConfigError("no model given (--model or `model=` in the config file)")
    params = load_model(config.model)
    labels = load_labels(config.labels) if config.labels else LabelStore()
    if not config.labels:
        logger.warning("No labels given: clones are reported without vulnerability scores")

    pipeline = DetectionPipeline(params, labels, config, out_dir=args.out, exclude_self=args.exclude_self)
    reports, errors = pipeline.run_many(args.query)
    for report in reports:
        if args.json:
            print(report.model_dump_json())
        else:
            print(render_query_report(report, config.threshold))
            print()

    _report_errors(errors)
    kinds = {error['error_type'] for error in errors}
    if kinds - {'empty_analysis'}:
        return EXIT_INPUT
    if kinds:
        return EXIT_EMPTY
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    if not config.labels:
        raise ConfigError("no labels given (--labels or `labels=` in the config file)")
    progress = not args.no_progress
    labels = load_labels(config.labels)
    corpus, errors = load_corpus(_corpus_paths(config), fork=config.fork, progress=progress)
    if not corpus:
        raise EmptyCorpusError("corpus is empty")

    settings = config.evaluation_settings()
    result = evaluate(corpus, labels, config.folds, settings.hyperparams.seed, settings,
                      workers=args.fold_workers, progress=progress)
    print(render_metrics(result))
    if args.csv:
        metrics_to_csv(result, args.csv)
        logger.info(f"Wrote metrics to {args.csv}")

    if args.clone_groups:
        groups = load_clone_groups(args.clone_groups)
        frame = evaluate_clones(corpus, groups, config.folds, settings.hyperparams.seed, settings,
                                workers=args.fold_workers, progress=progress)
        print()
        print(render_clone_precision(frame))

    _report_errors(errors)
    return EXIT_INPUT if errors else EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    contracts = generate_corpus(args.templates, args.variants, args.statements, args.deletions, args.seed)
    out = write_corpus(args.out, contracts)
    print(f"Wrote {len(contracts)} contracts, labels.csv and clone_groups.csv to {out}")
    return EXIT_OK


COMMANDS = {
    "extract": cmd_extract,
    "train": cmd_train,
    "detect": cmd_detect,
    "eval": cmd_eval,
    "synth": cmd_synth,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the command line interface and return the exit code."""
    load_dotenv()
    set_global_level(level_from_env())
    args = parse_args(argv)
    if args.verbose:
        set_global_level(logging.DEBUG)

    try:
        return COMMANDS[args.command](args)
    except EmptyCorpusError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_EMPTY
    except INPUT_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except TrainingDivergedError as e:
        logger.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as e:
        logger.exception(f"Unexpected error: {e}")
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
