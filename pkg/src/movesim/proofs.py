"""Provable contract state.

Two commitment levels: a tree over one contract's storage words, and a
tree over all contract records of a chain. A ContractProof bundles the
full record with the membership path of its leaf so a peer chain can
reconstruct the contract from nothing but a trusted state root.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass
from typing import Mapping

from . import merkle
from .hashing import DEFAULT_ALGO

ADDRESS_BYTES = 20
WORD_BYTES = 32
BALANCE_BYTES = 32
NONCE_BYTES = 8
CHAIN_ID_BYTES = 8


class ProofError(Exception):
    """Raised when a proof cannot be produced."""


def be(value: int, width: int) -> bytes:
    return value.to_bytes(width, "big")


def storage_leaves(storage: Mapping[bytes, bytes]) -> list[bytes]:
    """Leaf payloads of the storage tree: key||value, keys ascending."""
    return [key + storage[key] for key in sorted(storage)]


def storage_root(storage: Mapping[bytes, bytes], algo: str = DEFAULT_ALGO) -> bytes:
    return merkle.build_root(storage_leaves(storage), algo)


def contract_leaf_bytes(
    address: bytes,
    code_hash: bytes,
    balance: int,
    nonce: int,
    location: int,
    storage_root_: bytes,
) -> bytes:
    """Fixed-width preimage of one contract's leaf in the chain state tree."""
    return b"".join(
        (
            address,
            code_hash,
            be(balance, BALANCE_BYTES),
            be(nonce, NONCE_BYTES),
            be(location, CHAIN_ID_BYTES),
            storage_root_,
        )
    )


@dataclass(frozen=True, eq=True)
class ProvenRecord:
    """Contract state as carried inside a proof.

    ``storage_root`` is the value committed in the record leaf; verification
    recomputes it from ``storage`` and rejects on mismatch.
    """

    address: bytes
    code_hash: bytes
    balance: int
    nonce: int
    location: int
    storage: dict[bytes, bytes]
    storage_root: bytes

    def leaf_bytes(self, algo: str = DEFAULT_ALGO) -> bytes:
        return contract_leaf_bytes(
            self.address, self.code_hash, self.balance, self.nonce, self.location, self.storage_root
        )


@dataclass(frozen=True, eq=True)
class ContractProof:
    record: ProvenRecord
    record_path: merkle.MerkleProof
    source_chain: int
    source_height: int


def state_root(records: Mapping[bytes, object], algo: str = DEFAULT_ALGO) -> bytes:
    """Root over all contract records, leaves ordered by address."""
    leaves = [records[addr].leaf_bytes(algo) for addr in sorted(records)]
    return merkle.build_root(leaves, algo)


def prove_contract(
    records: Mapping[bytes, object],
    address: bytes,
    source_chain: int,
    source_height: int,
    algo: str = DEFAULT_ALGO,
) -> ContractProof:
    """Prove one contract record against the state root of ``records``.

    ``records`` maps address to any object exposing the record fields plus
    ``leaf_bytes(algo)``; the returned proof snapshots the full storage.
    """
    addresses = sorted(records)
    index = bisect_left(addresses, address)
    if index == len(addresses) or addresses[index] != address:
        raise ProofError(f"unknown contract address {address.hex()}")
    leaves = [records[a].leaf_bytes(algo) for a in addresses]
    rec = records[address]
    proven = ProvenRecord(
        address=address,
        code_hash=rec.code_hash,
        balance=rec.balance,
        nonce=rec.nonce,
        location=rec.location,
        storage=dict(rec.storage),
        storage_root=storage_root(rec.storage, algo),
    )
    return ContractProof(
        record=proven,
        record_path=merkle.prove(leaves, index, algo),
        source_chain=source_chain,
        source_height=source_height,
    )


def verify_contract_proof(root: bytes, proof: ContractProof, algo: str = DEFAULT_ALGO) -> bool:
    """Check storage-root consistency, then the record leaf against the root."""
    try:
        rec = proof.record
        if storage_root(rec.storage, algo) != rec.storage_root:
            return False
        return merkle.verify_proof(root, rec.leaf_bytes(algo), proof.record_path, algo)
    except Exception:
        return False
