"""Shared utilities: logging setup, digests, and bounded thread pools."""

from .hashing import fast_hash_file, stable_digest, XXHASH_AVAILABLE
from .logging import get_logger, configure_root_logger, JsonFormatter
from .parallel import parallel_map, resolve_thread_cap

__all__ = [
    "fast_hash_file",
    "stable_digest",
    "XXHASH_AVAILABLE",
    "get_logger",
    "configure_root_logger",
    "JsonFormatter",
    "parallel_map",
    "resolve_thread_cap",
]
