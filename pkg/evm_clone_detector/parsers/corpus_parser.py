"""
Corpus parser.

Loads a corpus of contract files from `.hex` bytecode files and pre-extracted
`.json` schema files, scanning directories recursively.
"""

import os
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from tqdm import tqdm

from ..models.data_models import ContractFile
from ..models.exceptions import BytecodeFormatError, SchemaError
from ..utils.logger import Logger
from .extractor import build_contract_file, read_contract_blobs
from .opcodes import DEFAULT_FORK
from .schema_parser import read_schema_file

logger = Logger(__name__)

CORPUS_SUFFIXES = (".hex", ".json")

PathLike = Union[str, os.PathLike]


def find_corpus_files(paths: Sequence[PathLike], suffixes: Sequence[str] = CORPUS_SUFFIXES) -> Tuple[List[Path], List[Dict]]:
    """
    Expand files and directories into a sorted list of corpus files.

    Returns:
        Tuple containing:
        - Sorted list of files
        - List of errors for paths that do not exist
    """
    files: List[Path] = []
    errors: List[Dict] = []
    for raw in paths:
        path = Path(raw)
        if path.is_dir():
            files.extend(p for p in path.rglob("*") if p.is_file() and p.suffix.lower() in suffixes)
        elif path.is_file():
            files.append(path)
        else:
            errors.append({
                'error_type': 'file_not_found',
                'message': f"Path not found: {path}",
                'file': str(path),
            })
            logger.error(f"Path not found: {path}")
    return sorted(set(files)), errors


def load_contract_file(path: PathLike, name: Optional[str] = None, fork: str = DEFAULT_FORK) -> ContractFile:
    """Load one `.hex` or `.json` corpus file, named `name` or else by its file stem."""
    path = Path(path)
    name = name or path.stem
    if path.suffix.lower() == ".json":
        contract_file = read_schema_file(str(path))
        if contract_file.name != name:
            logger.debug(f"{path}: schema names the file '{contract_file.name}', loading it as '{name}'")
            contract_file.name = name
        return contract_file
    text = path.read_text(encoding="utf-8")
    return build_contract_file(name, read_contract_blobs(text), fork)


def load_corpus(paths: Sequence[PathLike], fork: str = DEFAULT_FORK,
                progress: bool = False) -> Tuple[List[ContractFile], List[Dict]]:
    """
    Load every contract file under the given paths.

    Args:
        paths: Files and/or directories
        fork: Opcode table revision for `.hex` files
        progress: Show a progress bar

    Returns:
        Tuple containing:
        - Contract files in sorted path order, named by file stem
        - List of errors encountered (unreadable, malformed hex, bad schema)
    """
    files, errors = find_corpus_files(paths)
    names = _unique_names(files)
    corpus: List[ContractFile] = []

    for path in tqdm(files, desc="Loading corpus", disable=not progress):
        try:
            corpus.append(load_contract_file(path, names[path], fork))
        except BytecodeFormatError as e:
            errors.append({'error_type': 'malformed_hex', 'message': str(e), 'file': str(path)})
            logger.error(f"Malformed bytecode in {path}: {e}")
        except SchemaError as e:
            errors.append({'error_type': 'schema_error', 'message': str(e), 'file': str(path)})
            logger.error(f"Invalid schema file {path}: {e}")
        except (OSError, UnicodeDecodeError) as e:
            errors.append({'error_type': 'read_error', 'message': str(e), 'file': str(path)})
            logger.error(f"Cannot read {path}: {e}")

    logger.info(f"Loaded {len(corpus)} contract files ({len(errors)} errors)")
    return corpus, errors


def _unique_names(files: Sequence[Path]) -> Dict[Path, str]:
    """
    File stems, widened where stems collide.

    Colliding files take the shortest trailing run of parent directories that
    tells them apart (`proj1/contracts/Token`), then the file suffix, then the
    full path.
    """
    by_stem: Dict[str, List[Path]] = {}
    for path in files:
        by_stem.setdefault(path.stem, []).append(path)

    names = {}
    for stem, group in by_stem.items():
        if len(group) == 1:
            names[group[0]] = stem
            continue
        qualified = _distinguish(group)
        logger.warning(f"{len(group)} corpus files share the name '{stem}'; "
                       f"qualifying them as {', '.join(qualified[path] for path in group)}")
        names.update(qualified)
    return names


def _distinguish(group: Sequence[Path]) -> Dict[Path, str]:
    depth_limit = max(len(path.parent.parts) for path in group)
    for with_suffix in (False, True):
        for depth in range(1, depth_limit + 1):
            candidates = {path: _qualified_name(path, depth, with_suffix) for path in group}
            if len(set(candidates.values())) == len(group):
                return candidates
    return {path: path.as_posix() for path in group}


def _qualified_name(path: Path, depth: int, with_suffix: bool) -> str:
    parents = [part for part in path.parent.parts[-depth:] if part not in (path.anchor, "")]
    return "/".join(parents + [path.name if with_suffix else path.stem])
