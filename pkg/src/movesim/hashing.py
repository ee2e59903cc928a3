"""Configurable 256-bit hashing with domain separation for tree nodes."""

from __future__ import annotations

import hashlib

DIGEST_SIZE = 32
DEFAULT_ALGO = "sha256"

LEAF_PREFIX = b"\x00"
INNER_PREFIX = b"\x01"
EMPTY_TREE_TAG = b"EMPTY"

_ALGORITHMS = {
    "sha256": lambda data: hashlib.sha256(data).digest(),
    "blake2s": lambda data: hashlib.blake2s(data, digest_size=32).digest(),
}


def known_algorithms() -> tuple[str, ...]:
    return tuple(sorted(_ALGORITHMS))


def digest(data: bytes, algo: str = DEFAULT_ALGO) -> bytes:
    """Hash raw bytes with the configured algorithm."""
    try:
        fn = _ALGORITHMS[algo]
    except KeyError:
        raise ValueError(f"unknown hash algorithm {algo!r}") from None
    return fn(data)


def leaf_hash(item: bytes, algo: str = DEFAULT_ALGO) -> bytes:
    """Hash a leaf payload. The prefix byte keeps leaf and inner digests disjoint."""
    return digest(LEAF_PREFIX + item, algo)


def inner_hash(left: bytes, right: bytes, algo: str = DEFAULT_ALGO) -> bytes:
    """Hash two child digests into their parent node."""
    return digest(INNER_PREFIX + left + right, algo)


def empty_root(algo: str = DEFAULT_ALGO) -> bytes:
    """Fixed sentinel committed by a tree with no leaves."""
    return leaf_hash(EMPTY_TREE_TAG, algo)
