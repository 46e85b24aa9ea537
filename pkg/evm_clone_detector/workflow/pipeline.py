"""
Detection pipeline.

Runs the three timed phases for each query file:

    extract    bytecode or schema JSON -> contract file
    detect     embed every function, retrieve clones, save the clone lists
    summarize  propagate labels per function, rank whole contracts by their
               mean function vector and build the report
"""

import json
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..detection.detector import ContractDetection, attach_index, detect, model_index
from ..detection.label_propagation import propagate_labels
from ..detection.vector_index import find_contract_clones
from ..embedding.model import ModelParams
from ..embedding.trainer import train
from ..models.data_models import TAXONOMY, ContractFile, LabelStore
from ..models.exceptions import BytecodeFormatError, EmptyCorpusError, SchemaError
from ..models.report_models import CloneEntry, ContractReport, FunctionReport, PhaseTimings, QueryReport
from ..parsers.corpus_parser import find_corpus_files, load_contract_file, load_corpus
from ..parsers.schema_parser import CONTRACT_SEPARATOR
from ..utils.config import RunConfig
from ..utils.logger import Logger

logger = Logger(__name__)


class DetectionPipeline:
    """Clone and vulnerability detection for query contract files."""

    def __init__(self, params: ModelParams, labels: Optional[LabelStore] = None,
                 config: Optional[RunConfig] = None, out_dir: Optional[str] = None,
                 exclude_self: bool = False):
        """
        Initialize the pipeline.

        Args:
            params: Trained model (with its index block when built in reembed mode)
            labels: Labels of the training contracts
            config: Threshold, top-k and boilerplate settings
            out_dir: Directory receiving one clone list per query
            exclude_self: Never match a query function to its own identity
        """
        self.params = params
        self.labels = labels if labels is not None else LabelStore()
        self.config = config or RunConfig()
        self.out_dir = Path(out_dir) if out_dir else None
        self.exclude_self = exclude_self
        self.index = model_index(params, self.labels, self.config.skip_boilerplate)
        logger.info(f"Index holds {len(self.index)} functions")

    def run(self, query_path: str) -> QueryReport:
        """
        Run all phases for one query file.

        Raises:
            EmptyCorpusError: When extraction yields zero functions
            BytecodeFormatError, SchemaError: When the query cannot be read
        """
        timings = PhaseTimings()

        started = time.perf_counter()
        contract_file = self._extract(query_path)
        timings.extract = (time.perf_counter() - started) * 1000

        started = time.perf_counter()
        detections = self._detect(contract_file)
        timings.detect = (time.perf_counter() - started) * 1000

        started = time.perf_counter()
        report = self._summarize(query_path, contract_file, detections)
        timings.summarize = (time.perf_counter() - started) * 1000

        report.timing_ms = timings
        logger.info(
            f"{query_path}: {len(report.functions)} functions, "
            f"extract {timings.extract:.1f} ms, detect {timings.detect:.1f} ms, summarize {timings.summarize:.1f} ms"
        )
        return report

    def run_many(self, paths: Sequence[str]) -> Tuple[List[QueryReport], List[Dict[str, Any]]]:
        """
        Run the pipeline over files and directories.

        Returns:
            Tuple containing:
            - Reports, one per query file that could be analysed
            - List of errors (missing paths, malformed input, empty analyses)
        """
        files, errors = find_corpus_files(paths)
        reports = []
        for path in files:
            try:
                reports.append(self.run(str(path)))
            except EmptyCorpusError as e:
                errors.append({'error_type': 'empty_analysis', 'message': str(e), 'file': str(path)})
                logger.warning(str(e))
            except BytecodeFormatError as e:
                errors.append({'error_type': 'malformed_hex', 'message': str(e), 'file': str(path)})
                logger.error(f"Malformed bytecode in {path}: {e}")
            except SchemaError as e:
                errors.append({'error_type': 'schema_error', 'message': str(e), 'file': str(path)})
                logger.error(f"Invalid schema file {path}: {e}")
            except (OSError, UnicodeDecodeError) as e:
                errors.append({'error_type': 'read_error', 'message': str(e), 'file': str(path)})
                logger.error(f"Cannot read {path}: {e}")
        return reports, errors

    def _extract(self, query_path: str) -> ContractFile:
        contract_file = load_contract_file(query_path, fork=self.params.fork)
        if not any(True for _ in contract_file.iter_functions()):
            raise EmptyCorpusError(f"query {query_path} yields zero functions")
        return contract_file

    def _detect(self, contract_file: ContractFile) -> List[ContractDetection]:
        detections = detect(
            contract_file, self.params, self.index,
            threshold=self.config.threshold,
            top_k=self.config.top_k,
            skip_boilerplate=self.config.skip_boilerplate,
            exclude_self=self.exclude_self,
        )
        if self.out_dir is not None:
            self._save(contract_file, detections)
        return detections

    def _save(self, contract_file: ContractFile, detections: List[ContractDetection]) -> None:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        document = {
            "query": contract_file.name,
            "md5": contract_file.md5,
            "contracts": [
                {
                    "contract": detection.contract.contract,
                    "functions": {
                        name: [
                            {"id": str(m.match), "similarity": m.similarity,
                             "tags": sorted(tag.value for tag in m.tags)}
                            for m in matches
                        ]
                        for name, matches in detection.matches.items()
                    },
                }
                for detection in detections
            ],
        }
        path = self.out_dir / f"{Path(contract_file.name).name}.clones.json"
        path.write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")
        logger.debug(f"Saved clone lists to {path}")

    def _summarize(self, query_path: str, contract_file: ContractFile,
                   detections: List[ContractDetection]) -> QueryReport:
        qualify = len(contract_file.contracts) > 1
        functions, contracts = [], []
        for detection in detections:
            if detection.vectors:
                similar = find_contract_clones(np.stack(list(detection.vectors.values())), self.index,
                                               self.config.threshold, self.config.top_k,
                                               exclude=detection.contract if self.exclude_self else None)
                contracts.append(ContractReport(
                    name=detection.contract.contract,
                    clones=[CloneEntry(id=str(key), similarity=similarity) for key, similarity in similar],
                ))
            for name, matches in detection.matches.items():
                scores = propagate_labels([matches], threshold=self.config.threshold).epsilon
                functions.append(FunctionReport(
                    name=f"{detection.contract.contract}{CONTRACT_SEPARATOR}{name}" if qualify else name,
                    clones=[CloneEntry(id=str(m.match), similarity=m.similarity) for m in matches],
                    epsilon={tag.value: scores[tag] for tag in TAXONOMY},
                ))
        return QueryReport(query=query_path, functions=functions, contracts=contracts)


def train_from_corpus(paths: Sequence[str], config: RunConfig,
                      progress: bool = False) -> Tuple[ModelParams, List[Dict[str, Any]]]:
    """
    Load a corpus, train a model and attach its index block.

    Returns:
        Tuple containing:
        - Trained model
        - List of errors for corpus files that could not be loaded

    Raises:
        EmptyCorpusError: When nothing could be loaded
    """
    corpus, errors = load_corpus(paths, fork=config.fork, progress=progress)
    if not any(True for contract_file in corpus for _ in contract_file.iter_functions()):
        raise EmptyCorpusError(f"no functions found under {', '.join(map(str, paths))}")

    params = train(corpus, config.hyperparameters(), config.policy, config.fork, progress=progress)
    attach_index(params, corpus, config.index_mode, workers=config.threads, progress=progress)
    return params, errors
