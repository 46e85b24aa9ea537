"""
Vulnerability label parser.

Reads the labels CSV (header `file,contract,tag`, one row per contract and tag)
into an immutable LabelStore.
"""

from collections import defaultdict
from typing import Dict, Set, Tuple

import pandas as pd

from ..models.data_models import LabelStore, VulnerabilityTag
from ..models.exceptions import LabelError
from ..utils.logger import Logger

logger = Logger(__name__)

REQUIRED_COLUMNS = ("file", "contract", "tag")


def load_labels(path: str) -> LabelStore:
    """
    Load vulnerability labels from a CSV file.

    Args:
        path: Path to the labels CSV

    Returns:
        LabelStore; duplicate rows collapse into one entry

    Raises:
        LabelError: On a missing column, an empty cell or a tag outside the taxonomy
    """
    logger.info(f"Loading labels from {path}")
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise LabelError(f"labels file {path} is empty") from None

    df.columns = [str(column).strip().lower() for column in df.columns]
    missing = [column for column in REQUIRED_COLUMNS if column not in df.columns]
    if missing:
        raise LabelError(f"labels file {path} lacks column(s): {', '.join(missing)}")

    entries: Dict[Tuple[str, str], Set[VulnerabilityTag]] = defaultdict(set)
    for index, row in df.iterrows():
        # Line number in the file: header is line 1
        line = int(index) + 2
        file_name, contract_name, tag_name = (row[column].strip() for column in REQUIRED_COLUMNS)
        if not file_name or not contract_name:
            raise LabelError(f"row {line}: empty file or contract name", row=line)
        try:
            tag = VulnerabilityTag.from_string(tag_name)
        except ValueError:
            raise LabelError(
                f"row {line}: unknown vulnerability tag '{tag_name}'",
                row=line,
                tag=tag_name,
            ) from None
        entries[(file_name, contract_name)].add(tag)

    store = LabelStore(entries)
    logger.info(f"Loaded labels for {len(store)} contracts")
    return store


def labels_to_frame(store: LabelStore) -> pd.DataFrame:
    """Flatten a LabelStore into a `file,contract,tag` frame in stable order."""
    rows = [
        {"file": key.file, "contract": key.contract, "tag": tag.value}
        for key in sorted(store)
        for tag in sorted(store[key], key=lambda t: t.value)
    ]
    return pd.DataFrame(rows, columns=list(REQUIRED_COLUMNS))


def load_clone_groups(path: str) -> Dict[str, str]:
    """
    Load a `file,group` CSV assigning contract files to clone groups.

    Raises:
        LabelError: On a missing column or an empty cell
    """
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise LabelError(f"clone-group file {path} is empty") from None
    df.columns = [str(column).strip().lower() for column in df.columns]
    if "file" not in df.columns or "group" not in df.columns:
        raise LabelError(f"clone-group file {path} needs columns file,group")

    groups: Dict[str, str] = {}
    for index, row in df.iterrows():
        file_name, group = row["file"].strip(), row["group"].strip()
        if not file_name or not group:
            raise LabelError(f"row {int(index) + 2}: empty file or group", row=int(index) + 2)
        groups[file_name] = group
    logger.info(f"Loaded clone groups for {len(groups)} files")
    return groups
