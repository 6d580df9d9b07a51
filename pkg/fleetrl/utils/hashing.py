"""Content and configuration digests.

Uses xxhash when the ``fast`` extra is installed, md5 otherwise. Digests
name run directories and fingerprint input files in run summaries; they are
identifiers, not security primitives.
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Mapping

try:
    import xxhash
    XXHASH_AVAILABLE = True
except ImportError:
    XXHASH_AVAILABLE = False

# 64KB reads
BUFFER_SIZE = 65536


def _new_hasher(algorithm: str) -> Any:
    if algorithm == "auto":
        return xxhash.xxh64() if XXHASH_AVAILABLE else hashlib.md5()
    if algorithm == "xxhash":
        if not XXHASH_AVAILABLE:
            raise ImportError("xxhash not installed. Install with: pip install xxhash")
        return xxhash.xxh64()
    if algorithm == "md5":
        return hashlib.md5()
    if algorithm == "sha256":
        return hashlib.sha256()
    raise ValueError(f"Unknown algorithm: {algorithm}")


def fast_hash_file(file_path: Path, algorithm: str = "auto") -> str:
    """Hash a file's bytes.

    Args:
        file_path: File to hash
        algorithm: "auto", "xxhash", "md5" or "sha256"

    Returns:
        Hex digest

    Raises:
        FileNotFoundError: If the file does not exist
        ValueError: If the path is not a file or the algorithm is unknown
    """
    file_path = Path(file_path)
    if not file_path.exists():
        raise FileNotFoundError(f"File not found: {file_path}")
    if not file_path.is_file():
        raise ValueError(f"Not a file: {file_path}")

    hasher = _new_hasher(algorithm)
    with open(file_path, "rb") as f:
        while True:
            data = f.read(BUFFER_SIZE)
            if not data:
                break
            hasher.update(data)
    return hasher.hexdigest()


def canonical_json(payload: Any) -> str:
    """Serialize to the canonical JSON text used for digests and saved files."""
    return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=True) + "\n"


def stable_digest(payload: Mapping[str, Any], length: int = 12, algorithm: str = "auto") -> str:
    """Digest a JSON-serializable mapping independently of key order.

    Args:
        payload: Mapping to fingerprint (typically ``SimConfig.to_dict()``)
        length: Number of hex characters to keep
        algorithm: Same choices as ``fast_hash_file``

    Returns:
        Truncated hex digest
    """
    hasher = _new_hasher(algorithm)
    hasher.update(canonical_json(payload).encode("utf-8"))
    return str(hasher.hexdigest())[:length]
