"""
Results ledger: one JSON object per line
"""

import json
import os
from typing import Any, Dict, Iterable, Union

import pandas as pd

from ..exceptions import MissingArtifactError
from ..utils.helpers import atomic_write, canonical_json

PathLike = Union[str, os.PathLike]


def append_row(path: PathLike, row: Dict[str, Any]) -> None:
    """Append one row; keys are written sorted so equal rows are equal lines"""
    path = os.fspath(path)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "a", encoding="utf-8") as handle:
        handle.write(canonical_json(row) + "\n")
        handle.flush()
        os.fsync(handle.fileno())


def read_ledger(path: PathLike) -> pd.DataFrame:
    path = os.fspath(path)
    if not os.path.exists(path):
        raise MissingArtifactError(f"no results ledger at {path}")
    with open(path, "r", encoding="utf-8") as handle:
        rows = [json.loads(line) for line in handle if line.strip()]
    return pd.DataFrame(rows)


def merge_ledgers(paths: Iterable[PathLike], out_path: PathLike) -> pd.DataFrame:
    """
    Concatenate ledgers, drop exact duplicate rows, write the result

    Rows keep their input order (ledger by ledger).
    """
    lines = []
    seen = set()
    for path in paths:
        path = os.fspath(path)
        if not os.path.exists(path):
            raise MissingArtifactError(f"no results ledger at {path}")
        with open(path, "r", encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if line and line not in seen:
                    seen.add(line)
                    lines.append(line)
    atomic_write(out_path, "".join(line + "\n" for line in lines))
    return pd.DataFrame([json.loads(line) for line in lines])
