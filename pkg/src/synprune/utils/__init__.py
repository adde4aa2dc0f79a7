"""
Utility functions
"""

from .helpers import (
    atomic_write,
    canonical_json,
    content_hash,
    format_timestamp,
    keyed_rng,
    worker_count,
)

__all__ = [
    "atomic_write",
    "canonical_json",
    "content_hash",
    "format_timestamp",
    "keyed_rng",
    "worker_count",
]
