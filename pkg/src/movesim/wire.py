"""Canonical byte encodings.

Everything here is big-endian and length-prefixed where variable, so the
encoding of any value is unique. The exact layouts are documented in
docs/wire_format.md; the `verify-proof` CLI consumes these bytes as-is.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .merkle import MerkleProof, ProofStep
from .proofs import (
    ADDRESS_BYTES,
    BALANCE_BYTES,
    CHAIN_ID_BYTES,
    NONCE_BYTES,
    WORD_BYTES,
    ContractProof,
    ProvenRecord,
    be,
)

PROOF_MAGIC = b"MVPF"
PAYLOAD_MAGIC = b"MVP2"
WIRE_VERSION = 1

DIGEST_BYTES = 32


class WireFormatError(Exception):
    """Raised when bytes do not decode as a canonical structure."""


@dataclass(frozen=True, eq=True)
class Move2Payload:
    """Client-carried completion payload: the proof plus the claimed target."""

    target: int
    proof: ContractProof


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise WireFormatError("truncated input")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return int.from_bytes(self.take(2), "big")

    def u32(self) -> int:
        return int.from_bytes(self.take(4), "big")

    def u64(self) -> int:
        return int.from_bytes(self.take(8), "big")

    def u256(self) -> int:
        return int.from_bytes(self.take(32), "big")

    def done(self) -> None:
        if self.pos != len(self.data):
            raise WireFormatError("trailing bytes after structure")


def _encode_record(rec: ProvenRecord) -> bytes:
    if len(rec.address) != ADDRESS_BYTES:
        raise WireFormatError("address must be 20 bytes")
    if len(rec.code_hash) != DIGEST_BYTES or len(rec.storage_root) != DIGEST_BYTES:
        raise WireFormatError("digests must be 32 bytes")
    parts = [
        rec.address,
        rec.code_hash,
        be(rec.balance, BALANCE_BYTES),
        be(rec.nonce, NONCE_BYTES),
        be(rec.location, CHAIN_ID_BYTES),
        rec.storage_root,
        be(len(rec.storage), 4),
    ]
    for key in sorted(rec.storage):
        value = rec.storage[key]
        if len(key) != WORD_BYTES or len(value) != WORD_BYTES:
            raise WireFormatError("storage words must be 32 bytes")
        parts.append(key)
        parts.append(value)
    return b"".join(parts)


def _decode_record(r: _Reader) -> ProvenRecord:
    address = r.take(ADDRESS_BYTES)
    code_hash = r.take(DIGEST_BYTES)
    balance = r.u256()
    nonce = r.u64()
    location = r.u64()
    storage_root = r.take(DIGEST_BYTES)
    count = r.u32()
    storage: dict[bytes, bytes] = {}
    prev = None
    for _ in range(count):
        key = r.take(WORD_BYTES)
        if prev is not None and key <= prev:
            raise WireFormatError("storage keys must be strictly ascending")
        prev = key
        storage[key] = r.take(WORD_BYTES)
    return ProvenRecord(address, code_hash, balance, nonce, location, storage, storage_root)


def _encode_path(proof: MerkleProof) -> bytes:
    parts = [be(proof.leaf_index, 4), be(len(proof.path), 2)]
    for step in proof.path:
        if len(step.sibling) != DIGEST_BYTES:
            raise WireFormatError("path digests must be 32 bytes")
        parts.append(step.sibling)
        parts.append(b"\x01" if step.sibling_on_left else b"\x00")
    return b"".join(parts)


def _decode_path(r: _Reader) -> MerkleProof:
    leaf_index = r.u32()
    length = r.u16()
    steps = []
    for _ in range(length):
        sibling = r.take(DIGEST_BYTES)
        flag = r.u8()
        if flag not in (0, 1):
            raise WireFormatError(f"bad path flag {flag}")
        steps.append(ProofStep(sibling, flag == 1))
    return MerkleProof(leaf_index, tuple(steps))


def encode_contract_proof(proof: ContractProof) -> bytes:
    return b"".join(
        (
            PROOF_MAGIC,
            be(WIRE_VERSION, 1),
            be(proof.source_chain, 8),
            be(proof.source_height, 8),
            _encode_record(proof.record),
            _encode_path(proof.record_path),
        )
    )


def decode_contract_proof(data: bytes) -> ContractProof:
    r = _Reader(data)
    proof = _read_contract_proof(r)
    r.done()
    return proof


def _read_contract_proof(r: _Reader) -> ContractProof:
    if r.take(4) != PROOF_MAGIC:
        raise WireFormatError("bad proof magic")
    version = r.u8()
    if version != WIRE_VERSION:
        raise WireFormatError(f"unsupported proof version {version}")
    source_chain = r.u64()
    source_height = r.u64()
    record = _decode_record(r)
    path = _decode_path(r)
    return ContractProof(record, path, source_chain, source_height)


def encode_move2_payload(payload: Move2Payload) -> bytes:
    return b"".join(
        (
            PAYLOAD_MAGIC,
            be(WIRE_VERSION, 1),
            be(payload.target, 8),
            encode_contract_proof(payload.proof),
        )
    )


def decode_move2_payload(data: bytes) -> Move2Payload:
    r = _Reader(data)
    if r.take(4) != PAYLOAD_MAGIC:
        raise WireFormatError("bad payload magic")
    version = r.u8()
    if version != WIRE_VERSION:
        raise WireFormatError(f"unsupported payload version {version}")
    target = r.u64()
    proof = _read_contract_proof(r)
    r.done()
    return Move2Payload(target, proof)


# Deterministic encoding of transaction payload values, used for hashing.
# Supported universe: None, bool, int, bytes, str, tuple/list.

def encode_value(value) -> bytes:
    if value is None:
        return b"\x00"
    if isinstance(value, bool):
        return b"\x01" + (b"\x01" if value else b"\x00")
    if isinstance(value, int):
        raw = value.to_bytes((value.bit_length() + 8) // 8 or 1, "big", signed=True)
        return b"\x02" + be(len(raw), 4) + raw
    if isinstance(value, (bytes, bytearray)):
        return b"\x03" + be(len(value), 4) + bytes(value)
    if isinstance(value, str):
        raw = value.encode("utf-8")
        return b"\x04" + be(len(raw), 4) + raw
    if isinstance(value, (tuple, list)):
        parts = [b"\x05", be(len(value), 4)]
        parts.extend(encode_value(item) for item in value)
        return b"".join(parts)
    raise WireFormatError(f"cannot encode value of type {type(value).__name__}")


def pack_timestamp(ts: float) -> bytes:
    return struct.pack(">d", ts)
