"""Two-step contract migration between chains.

``move1`` blocks a contract on its source chain after the contract's own
``move_to`` hook agrees. Any client can then assemble a proof of the locked
state once the lock is final and submit ``move2`` on the target chain,
which verifies the claimed target, the source state root, the proof, and a
per-chain nonce watermark before reconstructing the contract.

The currency relay rides on top: a throwaway contract locks native units on
its origin chain, migrates, and mints backed tokens at the destination.
"""

from __future__ import annotations

from typing import Optional

from . import vm
from .vm import (
    BAD_PROOF,
    BAD_ROOT,
    BAD_TARGET,
    CONTRACT_MOVED,
    HOOK_REJECTED,
    NO_SUCH_CONTRACT,
    OUT_OF_GAS,
    REPLAY,
    UNKNOWN_CODE,
    WRONG_TARGET,
    Behavior,
    ContractRecord,
    ExecutionContext,
    Frame,
    Transaction,
    TxAbort,
    addr32,
    behavior_code_hash,
    r32,
    r_addr,
    skey,
    w32,
)
from .wire import Move2Payload, WireFormatError, decode_move2_payload, encode_move2_payload

__all__ = [
    "Move2Payload",
    "ProtocolError",
    "build_move2",
    "check_move2_payload",
    "execute_move1",
    "execute_move2",
    "lock_contract",
    "make_move1",
    "make_move2",
    "relay_behavior",
    "relay_factory_behavior",
    "RELAY_CODE_HASH",
    "RELAY_FACTORY_CODE_HASH",
]


class ProtocolError(Exception):
    """Client-side protocol failure (payload assembly, not a tx abort)."""

    def __init__(self, code: str, message: str = ""):
        super().__init__(message or code)
        self.code = code


# Transaction builders ------------------------------------------------------

def make_move1(
    sender: bytes,
    contract: bytes,
    target_chain: int,
    sender_seq: int,
    hook_args: tuple = (),
    gas_limit: int = 50_000_000,
) -> Transaction:
    return Transaction(
        sender=sender,
        kind=vm.MOVE1,
        target=contract,
        method="move1",
        args=(target_chain, *hook_args),
        sender_seq=sender_seq,
        gas_limit=gas_limit,
        op_class="move1",
    )


def make_move2(
    sender: bytes,
    payload: Move2Payload,
    sender_seq: int,
    gas_limit: int = 50_000_000,
) -> Transaction:
    return Transaction(
        sender=sender,
        kind=vm.MOVE2,
        target=payload.proof.record.address,
        method="move2",
        args=(encode_move2_payload(payload),),
        sender_seq=sender_seq,
        gas_limit=gas_limit,
        op_class="move2",
    )


# Source-side lock -----------------------------------------------------------

def lock_contract(
    frame: Frame,
    record: ContractRecord,
    target_chain: int,
    hook_args: tuple,
    sender: bytes,
) -> None:
    """Run the move_to hook, then point the record at the target chain."""
    chain = frame.chain
    if target_chain == chain.id:
        raise TxAbort(BAD_TARGET)
    if target_chain not in chain.header_registry.known_peers():
        raise TxAbort(BAD_TARGET)
    behavior = chain.registry.get(record.code_hash)
    if behavior is None:
        raise TxAbort(UNKNOWN_CODE)
    if behavior.move_to is not None:
        try:
            behavior.move_to(ExecutionContext(frame, record, sender), tuple(hook_args))
        except TxAbort as abort:
            if abort.reason == OUT_OF_GAS:
                raise
            raise TxAbort(HOOK_REJECTED) from abort
    frame.charge(frame.schedule.sstore_update)  # the location field write
    record.location = target_chain
    frame.moved_out.add(record.address)


def execute_move1(frame: Frame, tx: Transaction) -> None:
    rec = frame.record_for_read(tx.target)
    if rec is None:
        raise TxAbort(NO_SUCH_CONTRACT)
    if rec.location != frame.chain.id:
        raise TxAbort(CONTRACT_MOVED)
    if not tx.args:
        raise TxAbort(BAD_TARGET)
    target_chain = tx.args[0]
    if not isinstance(target_chain, int):
        raise TxAbort(BAD_TARGET)
    record = frame.record_for_write(tx.target)
    frame.invoked.add(tx.target)
    lock_contract(frame, record, target_chain, tuple(tx.args[1:]), tx.sender)
    frame.events.append(
        ("ContractBlocked", {"contract": tx.target.hex(), "target_chain": target_chain})
    )


# Client-side payload assembly ---------------------------------------------

def build_move2(src_chain, address: bytes) -> Move2Payload:
    """Assemble the completion payload from the source chain's finalized state.

    The proof targets the earliest finalized height at or after the lock; a
    locked record never changes, so when that height's state snapshot has
    already been pruned, any younger finalized height serves equally well.
    """
    rec = src_chain.read_record(address)
    if rec is None or rec.location == src_chain.id:
        raise ProtocolError("NotMoved", f"contract {address.hex()} is not blocked here")
    height = src_chain.blocked_heights.get(address)
    if height is None:
        raise ProtocolError("NotMoved", f"no recorded lock height for {address.hex()}")
    if not src_chain.is_final(height):
        raise ProtocolError(
            "NotFinal", f"lock height {height} not final at head {src_chain.head_height}"
        )
    if height not in src_chain.snapshots:
        retained = [
            h for h in src_chain.snapshots if h > height and src_chain.is_final(h)
        ]
        if not retained:
            raise ProtocolError(
                "NotFinal", f"no finalized snapshot at or after lock height {height}"
            )
        height = min(retained)
    proof = src_chain.prove_contract(address, height)
    return Move2Payload(target=rec.location, proof=proof)


# Target-side verification and reconstruction --------------------------------

def check_move2_payload(
    payload: Move2Payload,
    local_chain_id: int,
    header_lookup,
    watermark: int,
    algo: str,
) -> Optional[str]:
    """The move2 acceptance checks, in order; returns the failing reason or None.

    ``header_lookup(chain_id, height)`` returns ``(state_root, final)`` or None.
    """
    from .proofs import verify_contract_proof

    record = payload.proof.record
    if payload.target != local_chain_id or record.location != local_chain_id:
        return WRONG_TARGET
    looked_up = header_lookup(payload.proof.source_chain, payload.proof.source_height)
    if looked_up is None:
        return BAD_ROOT
    root, final = looked_up
    if not final:
        return BAD_ROOT
    if not verify_contract_proof(root, payload.proof, algo):
        return BAD_PROOF
    if record.nonce <= watermark:
        return REPLAY
    return None


def execute_move2(frame: Frame, tx: Transaction) -> None:
    chain = frame.chain
    try:
        payload = decode_move2_payload(tx.args[0])
    except (WireFormatError, IndexError, TypeError) as exc:
        raise TxAbort(BAD_PROOF) from exc

    def header_lookup(src: int, height: int):
        header = chain.header_registry.get(src, height)
        if header is None:
            return None
        root = header.state_root
        return root, chain.verify_peer_root(src, root, height)

    record = payload.proof.record
    watermark = chain.state.nonce_watermarks.get(record.address, -1)
    failure = check_move2_payload(payload, chain.id, header_lookup, watermark, chain.algo)
    if failure is not None:
        raise TxAbort(failure)

    behavior = chain.registry.get(record.code_hash)
    if behavior is None:
        raise TxAbort(UNKNOWN_CODE)

    frame.charge(frame.schedule.create_contract)
    if not frame.code_present(record.code_hash):
        deposit = behavior.code_size * frame.schedule.code_deposit_per_byte
        if deposit:
            frame.charge(deposit, deposit=True)
    frame.code_added.add(record.code_hash)

    stale = frame.record_for_read(record.address)
    salt = stale.created_salt if stale is not None else b"\x00" * 32
    rebuilt = ContractRecord(
        address=record.address,
        code_hash=record.code_hash,
        storage={},
        balance=record.balance,
        nonce=record.nonce + 1,
        location=chain.id,
        created_salt=salt,
    )
    frame.insert_record(rebuilt)
    frame.nonce_set.add(record.address)
    ctx = ExecutionContext(frame, rebuilt, tx.sender)
    for key in sorted(record.storage):
        ctx.put(key, record.storage[key])
    if behavior.move_finish is not None:
        behavior.move_finish(ctx, ())
    frame.events.append(
        (
            "ContractArrived",
            {
                "contract": record.address.hex(),
                "source_chain": payload.proof.source_chain,
                "nonce": rebuilt.nonce,
            },
        )
    )


# Currency relay ---------------------------------------------------------------

RELAY_NAME = "currency-relay"
RELAY_FACTORY_NAME = "currency-relay-factory"
RELAY_CODE_SIZE = 1800
RELAY_FACTORY_CODE_SIZE = 900

K_LOCKED = skey("relay.locked")
K_BENEFICIARY = skey("relay.beneficiary")
K_MINTED = skey("relay.minted")
K_ORIGIN = skey("relay.origin")
K_TOKENS = skey("relay.tokens")
K_CREATOR = skey("relay.creator")

K_FACTORY_SALT = skey("factory.next_salt")


def _relay_constructor(ctx, args):
    beneficiary, amount, target_chain = args
    if amount < 0 or ctx.balance != amount:
        ctx.abort(vm.INSUFFICIENT_BALANCE)
    ctx.put(K_LOCKED, w32(amount))
    ctx.put(K_BENEFICIARY, addr32(beneficiary))
    ctx.put(K_MINTED, w32(0))
    ctx.put(K_ORIGIN, w32(ctx.chain_id))
    ctx.put(K_TOKENS, w32(0))
    ctx.put(K_CREATOR, addr32(ctx.origin))
    # Lock for migration in the same transaction that funds the relay.
    ctx.move_self(target_chain)


def _relay_move_to(ctx, args):
    if r32(ctx.get(K_TOKENS)) != 0:
        ctx.abort("TokensOutstanding")
    origin = ctx.origin
    if origin != r_addr(ctx.get(K_CREATOR)) and origin != r_addr(ctx.get(K_BENEFICIARY)):
        ctx.abort("NotBeneficiary")


def _relay_mint(ctx, args):
    if ctx.origin != r_addr(ctx.get(K_BENEFICIARY)):
        ctx.abort("NotBeneficiary")
    if r32(ctx.get(K_MINTED)) != 0:
        ctx.abort("AlreadyMinted")
    if ctx.chain_id == r32(ctx.get(K_ORIGIN)):
        ctx.abort("NotMintable")
    amount = r32(ctx.get(K_LOCKED))
    ctx.put(K_TOKENS, w32(amount))
    ctx.put(K_MINTED, w32(1))
    ctx.emit("Minted", tokens=amount)


def _relay_burn(ctx, args):
    if ctx.origin != r_addr(ctx.get(K_BENEFICIARY)):
        ctx.abort("NotBeneficiary")
    tokens = r32(ctx.get(K_TOKENS))
    if tokens == 0:
        ctx.abort("NothingToBurn")
    ctx.put(K_TOKENS, w32(0))
    ctx.put(K_MINTED, w32(0))
    ctx.emit("Burned", tokens=tokens)


def _relay_withdraw(ctx, args):
    if ctx.origin != r_addr(ctx.get(K_BENEFICIARY)):
        ctx.abort("NotBeneficiary")
    if ctx.chain_id != r32(ctx.get(K_ORIGIN)):
        ctx.abort("NotAtOrigin")
    if r32(ctx.get(K_MINTED)) != 0:
        ctx.abort("TokensOutstanding")
    amount = r32(ctx.get(K_LOCKED))
    if amount == 0:
        ctx.abort("NothingLocked")
    ctx.put(K_LOCKED, w32(0))
    ctx.pay_out(r_addr(ctx.get(K_BENEFICIARY)), amount)
    ctx.emit("Unlocked", amount=amount)


def relay_behavior() -> Behavior:
    return Behavior(
        name=RELAY_NAME,
        code_size=RELAY_CODE_SIZE,
        constructor=_relay_constructor,
        methods={
            "mint": _relay_mint,
            "burn": _relay_burn,
            "withdraw": _relay_withdraw,
        },
        move_to=_relay_move_to,
    )


def _factory_create(ctx, args):
    beneficiary, amount, target_chain = args
    if ctx.tx_value != amount:
        ctx.abort(vm.INSUFFICIENT_BALANCE)
    salt_index = r32(ctx.get(K_FACTORY_SALT))
    ctx.put(K_FACTORY_SALT, w32(salt_index + 1))
    relay = ctx.create(
        RELAY_CODE_HASH, w32(salt_index), (beneficiary, amount, target_chain), value=amount
    )
    ctx.emit("RelayCreated", relay=relay.hex(), amount=amount, target_chain=target_chain)
    return relay


def _factory_constructor(ctx, args):
    ctx.put(K_FACTORY_SALT, w32(0))


def relay_factory_behavior() -> Behavior:
    return Behavior(
        name=RELAY_FACTORY_NAME,
        code_size=RELAY_FACTORY_CODE_SIZE,
        constructor=_factory_constructor,
        methods={"create": _factory_create},
    )


RELAY_CODE_HASH = behavior_code_hash(RELAY_NAME)
RELAY_FACTORY_CODE_HASH = behavior_code_hash(RELAY_FACTORY_NAME)


def make_relay_create(
    sender: bytes,
    factory: bytes,
    beneficiary: bytes,
    amount: int,
    target_chain: int,
    sender_seq: int,
) -> Transaction:
    return Transaction(
        sender=sender,
        kind=vm.CALL,
        target=factory,
        method="create",
        args=(beneficiary, amount, target_chain),
        value=amount,
        sender_seq=sender_seq,
        op_class="relay_create",
    )


def make_relay_call(sender: bytes, relay: bytes, method: str, sender_seq: int) -> Transaction:
    return Transaction(
        sender=sender,
        kind=vm.CALL,
        target=relay,
        method=method,
        args=(),
        sender_seq=sender_seq,
        op_class=f"relay_{method}",
    )
