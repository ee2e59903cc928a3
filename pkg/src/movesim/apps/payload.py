"""Inert contracts whose only job is to carry N words of provable storage."""

from __future__ import annotations

from ..hashing import DEFAULT_ALGO, digest
from ..proofs import be
from ..vm import Behavior, ContractRecord, GenesisContext, behavior_code_hash, derive_address, w32

STATE_NAME = "state-words"
STATE_CODE_SIZE = 400
STATE_CODE_HASH = behavior_code_hash(STATE_NAME)


def word_value(index: int) -> bytes:
    return digest(b"word:" + be(index, 8), "sha256")


def _state_constructor(ctx, args):
    (count,) = args
    if count < 0:
        ctx.abort("BadAmount")
    for index in range(count):
        ctx.put(w32(index), word_value(index))


def state_words_behavior() -> Behavior:
    return Behavior(
        name=STATE_NAME,
        code_size=STATE_CODE_SIZE,
        constructor=_state_constructor,
    )


def genesis_state_contract(
    chain_id: int,
    deployer: bytes,
    salt: bytes,
    count: int,
    algo: str = DEFAULT_ALGO,
) -> ContractRecord:
    address = derive_address(chain_id, deployer, salt, STATE_CODE_HASH, algo)
    rec = ContractRecord(address, STATE_CODE_HASH, {}, 0, 0, chain_id, salt)
    _state_constructor(GenesisContext(rec, chain_id, deployer), (count,))
    return rec
