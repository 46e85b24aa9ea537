#!/usr/bin/env python
"""
Run the clone detector end-to-end on a synthetic corpus.

Writes a labelled corpus, trains a model on every variant but the last one of
each template, and reports clones and vulnerability scores for the held-out
rewrites.
"""

import argparse
import os
import sys
import tempfile
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Add the parent directory to the path so we can import the modules
sys.path.append(str(Path(__file__).parent.parent))

from evm_clone_detector.embedding.persistence import save_model
from evm_clone_detector.utils.config import RunConfig
from evm_clone_detector.utils.logger import Logger
from evm_clone_detector.utils.report import render_loss_history, render_query_report
from evm_clone_detector.utils.synthetic import generate_corpus, to_label_store, write_corpus
from evm_clone_detector.workflow.pipeline import DetectionPipeline, train_from_corpus

logger = Logger(__name__)


def main():
    """Run the demo."""
    parser = argparse.ArgumentParser(description="Synthetic end-to-end demo")
    parser.add_argument("--out", help="Working directory (default: a temporary directory)")
    parser.add_argument("--templates", type=int, default=8)
    parser.add_argument("--variants", type=int, default=3)
    parser.add_argument("--dim", type=int, default=32)
    parser.add_argument("--epochs", type=int, default=15)
    args = parser.parse_args()

    work_dir = args.out or tempfile.mkdtemp(prefix="evm_clone_demo_")
    held_out = args.variants - 1

    # Step 1: synthetic corpus, split into training files and queries
    contracts = generate_corpus(templates=args.templates, variants=args.variants, seed=7)
    training = [c for c in contracts if c.variant != held_out]
    queries = [c for c in contracts if c.variant == held_out]
    corpus_dir = write_corpus(os.path.join(work_dir, "corpus"), training)
    query_dir = write_corpus(os.path.join(work_dir, "queries"), queries)
    logger.info(f"Wrote {len(training)} training contracts and {len(queries)} queries under {work_dir}")

    # Step 2: train and save
    config = RunConfig(corpus=str(corpus_dir), dim=args.dim, negative=10, epochs=args.epochs, seed=1,
                       skip_boilerplate=True)
    params, errors = train_from_corpus([str(corpus_dir)], config, progress=True)
    if errors:
        logger.error(f"{len(errors)} corpus files could not be loaded")
    print(render_loss_history(params.loss_history))
    model_path = os.path.join(work_dir, "model.bin")
    save_model(params, model_path)
    logger.info(f"Model saved to {model_path}")

    # Step 3: detect on the held-out rewrites
    pipeline = DetectionPipeline(params, to_label_store(training), config,
                                 out_dir=os.path.join(work_dir, "clones"))
    reports, errors = pipeline.run_many([str(query_dir)])
    hits = 0
    for report, contract in zip(reports, queries):
        print()
        print(render_query_report(report, config.threshold))
        hits += contract.tag.value in report.predicted(config.threshold)

    print()
    print(f"Predicted the template's tag for {hits} of {len(reports)} held-out rewrites")
    return 0 if not errors else 1


if __name__ == "__main__":
    sys.exit(main())
