"""Binary hash tree with membership proofs.

An unpaired node at any level is promoted unchanged to the next level
(no duplication), so proof paths can be shorter than ceil(log2(n)) for
leaves that ride a promotion.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .hashing import DEFAULT_ALGO, empty_root, inner_hash, leaf_hash


@dataclass(frozen=True)
class ProofStep:
    sibling: bytes
    sibling_on_left: bool


@dataclass(frozen=True)
class MerkleProof:
    leaf_index: int
    path: tuple[ProofStep, ...]


def _levels(leaves: Sequence[bytes], algo: str) -> list[list[bytes]]:
    level = [leaf_hash(leaf, algo) for leaf in leaves]
    levels = [level]
    while len(level) > 1:
        nxt = []
        for i in range(0, len(level) - 1, 2):
            nxt.append(inner_hash(level[i], level[i + 1], algo))
        if len(level) % 2:
            nxt.append(level[-1])  # promote the unpaired node
        levels.append(nxt)
        level = nxt
    return levels


def build_root(leaves: Sequence[bytes], algo: str = DEFAULT_ALGO) -> bytes:
    """Root over the given leaf payloads; empty input commits a fixed sentinel."""
    if not leaves:
        return empty_root(algo)
    return _levels(leaves, algo)[-1][0]


def prove(leaves: Sequence[bytes], index: int, algo: str = DEFAULT_ALGO) -> MerkleProof:
    """Membership proof for leaves[index] against build_root(leaves)."""
    if not 0 <= index < len(leaves):
        raise IndexError(f"leaf index {index} out of range for {len(leaves)} leaves")
    steps = []
    i = index
    for level in _levels(leaves, algo)[:-1]:
        if i % 2 == 1:
            steps.append(ProofStep(level[i - 1], True))
        elif i + 1 < len(level):
            steps.append(ProofStep(level[i + 1], False))
        # unpaired node: promoted, no sibling at this level
        i //= 2
    return MerkleProof(index, tuple(steps))


def verify_proof(root: bytes, leaf: bytes, proof: MerkleProof, algo: str = DEFAULT_ALGO) -> bool:
    """True iff folding the leaf through the proof path reproduces the root.

    Never raises; malformed input simply fails to verify.
    """
    try:
        node = leaf_hash(leaf, algo)
        for step in proof.path:
            if step.sibling_on_left:
                node = inner_hash(step.sibling, node, algo)
            else:
                node = inner_hash(node, step.sibling, algo)
        return node == root
    except Exception:
        return False
