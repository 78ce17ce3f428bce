"""
convexpde Integrity Module

SHA-256 digests of run artifacts (field dumps, reports) for the run report.
"""

from typing import Dict, Iterable

from cryptography.hazmat.primitives import hashes

from convexpde.errors import IOFailure

CHUNK = 1 << 16


def digest_bytes(data: bytes) -> str:
    h = hashes.Hash(hashes.SHA256())
    h.update(data)
    return h.finalize().hex()


def digest_file(path: str) -> str:
    """Hex SHA-256 of a file's contents."""
    h = hashes.Hash(hashes.SHA256())
    try:
        with open(path, "rb") as f:
            for chunk in iter(lambda: f.read(CHUNK), b""):
                h.update(chunk)
    except OSError as e:
        raise IOFailure(f"cannot digest {path}: {e}") from e
    return h.finalize().hex()


def digest_files(paths: Iterable[str]) -> Dict[str, str]:
    return {path: digest_file(path) for path in paths}
