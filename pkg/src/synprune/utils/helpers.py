"""
Helper utility functions
"""

import hashlib
import json
import os
import tempfile
from datetime import datetime, timezone
from typing import Any, Optional, Union

import numpy as np

# Named PRNG streams; every random draw in the package is keyed by (seed, stream, ...)
STREAM_INIT = 1
STREAM_ORDER = 2
STREAM_DISTILL = 3
STREAM_DATA = 4
STREAM_SPLIT = 5
STREAM_PROBE = 6
STREAM_DIRECTION = 7

_UINT64_MASK = (1 << 64) - 1


def keyed_rng(seed: int, *counter: int) -> np.random.Generator:
    """
    Counter-based generator keyed by a seed and a tuple of counters

    Philox is stateless with respect to the process: the same key yields the
    same stream on every machine and in every process.

    Args:
        seed: 64-bit seed
        *counter: stream id followed by any sub-counters (epoch, probe, ...)

    Returns:
        numpy Generator
    """
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    words = [seed & _UINT64_MASK]
    mixed = 0
    for value in counter:
        mixed = (mixed * 1_000_003 + int(value) + 1) & _UINT64_MASK
    words.append(mixed)
    return np.random.Generator(np.random.Philox(key=np.array(words, dtype=np.uint64)))


def canonical_json(payload: Any) -> str:
    """JSON with sorted keys and no whitespace, stable across key order"""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=_json_default)


def _json_default(value: Any) -> Any:
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (set, frozenset)):
        return sorted(value)
    raise TypeError(f"not JSON serialisable: {type(value).__name__}")


def content_hash(payload: Any, length: int = 12) -> str:
    """
    Short sha256 hex digest of a JSON-able payload or raw bytes

    Args:
        payload: dict/list/scalars, or bytes
        length: number of hex characters kept

    Returns:
        hex digest prefix
    """
    if isinstance(payload, (bytes, bytearray, memoryview)):
        data = bytes(payload)
    elif isinstance(payload, np.ndarray):
        data = np.ascontiguousarray(payload).tobytes()
    else:
        data = canonical_json(payload).encode("utf-8")
    return hashlib.sha256(data).hexdigest()[:length]


def atomic_write(path: Union[str, os.PathLike], data: Union[str, bytes]) -> None:
    """
    Write a file via a temporary sibling and os.replace

    A reader never observes a half-written file.
    """
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    mode = "wb" if isinstance(data, (bytes, bytearray)) else "w"
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8"})) as handle:
            handle.write(data)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def format_timestamp(timestamp: Optional[float] = None) -> str:
    """
    Format a Unix timestamp (seconds) as ISO-8601 UTC

    Args:
        timestamp: seconds since epoch, None for now

    Returns:
        ISO format time string
    """
    if timestamp is None:
        dt = datetime.now(timezone.utc)
    else:
        dt = datetime.fromtimestamp(timestamp, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def worker_count(env_var: str = "SYNPRUNE_WORKERS") -> int:
    """Worker count from the environment; absent or invalid means serial (1)"""
    raw = os.getenv(env_var)
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1
