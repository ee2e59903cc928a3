"""Token whose per-holder balances live in separate, movable account contracts.

The token contract only mints accounts; each account holds one owner's
balance and allowances. Accounts attest each other's origin by recomputing
the counterparty's derived address from (creation chain, parent token,
salt, account code hash): a match proves the counterparty was minted by the
same token, at the cost of one hash.
"""

from __future__ import annotations

from typing import Optional

from .. import vm
from ..hashing import digest
from ..vm import (
    Behavior,
    ContractRecord,
    GenesisContext,
    addr32,
    behavior_code_hash,
    derive_address,
    r32,
    r_addr,
    skey,
    w32,
)

TOKEN_NAME = "scoin-token"
ACCOUNT_NAME = "scoin-account"
TOKEN_CODE_SIZE = 3200
ACCOUNT_CODE_SIZE = 2600

TOKEN_CODE_HASH = behavior_code_hash(TOKEN_NAME)
ACCOUNT_CODE_HASH = behavior_code_hash(ACCOUNT_NAME)

K_TOKEN_OWNER = skey("token.owner")
K_SUPPLY = skey("token.total_supply")
K_NEXT_SALT = skey("token.next_salt")

K_OWNER = skey("acct.owner")
K_PARENT = skey("acct.parent_token")
K_SALT = skey("acct.salt")
K_ORIGIN = skey("acct.origin_chain")
K_BALANCE = skey("acct.balance")
K_MOVED_AT = skey("acct.moved_at")


def allowance_key(spender: bytes) -> bytes:
    return digest(b"acct.allowance:" + spender)


# Token ----------------------------------------------------------------------

def _token_constructor(ctx, args):
    (owner,) = args
    ctx.put(K_TOKEN_OWNER, addr32(owner))
    ctx.put(K_SUPPLY, w32(0))
    ctx.put(K_NEXT_SALT, w32(0))


def _mint_account(ctx, owner: bytes, initial: int):
    if initial < 0:
        ctx.abort("BadAmount")
    if initial > 0 and ctx.origin != r_addr(ctx.get(K_TOKEN_OWNER)):
        # Only the token owner may mint fresh supply into a new account.
        ctx.abort("NotOwner")
    salt_index = r32(ctx.get(K_NEXT_SALT))
    salt = w32(salt_index)
    ctx.put(K_NEXT_SALT, w32(salt_index + 1))
    ctx.put(K_SUPPLY, w32(r32(ctx.get(K_SUPPLY)) + initial))
    account = ctx.create(
        ACCOUNT_CODE_HASH, salt, (owner, ctx.self_address, salt, ctx.chain_id, initial)
    )
    ctx.emit("CreatedAccount", account=account.hex(), salt=salt_index)
    return account, salt_index


def _token_new_account(ctx, args):
    (initial,) = args
    return _mint_account(ctx, ctx.sender, initial)


def _token_new_account_for(ctx, args):
    for_addr, initial = args
    return _mint_account(ctx, for_addr, initial)


def token_behavior() -> Behavior:
    return Behavior(
        name=TOKEN_NAME,
        code_size=TOKEN_CODE_SIZE,
        constructor=_token_constructor,
        methods={
            "newAccount": _token_new_account,
            "newAccountFor": _token_new_account_for,
        },
    )


# Account ---------------------------------------------------------------------

def _account_constructor(ctx, args):
    owner, parent, salt, origin_chain, initial = args
    ctx.put(K_OWNER, addr32(owner))
    ctx.put(K_PARENT, addr32(parent))
    ctx.put(K_SALT, salt)
    ctx.put(K_ORIGIN, w32(origin_chain))
    ctx.put(K_BALANCE, w32(initial))
    ctx.put(K_MOVED_AT, w32(0))


def _ctx_algo(ctx) -> str:
    frame = getattr(ctx, "_frame", None)
    if frame is not None:
        return frame.chain.algo
    return "sha256"


def _attest_origin(ctx, address: bytes, salt: bytes, origin_chain: int) -> bool:
    parent = r_addr(ctx.get(K_PARENT))
    derived = derive_address(origin_chain, parent, salt, ACCOUNT_CODE_HASH, algo=_ctx_algo(ctx))
    return derived == address


def _debit_into(ctx, amount: int, from_salt: bytes, from_origin: int):
    """Credit leg of a transfer; the caller must prove shared parentage."""
    if amount < 0:
        ctx.abort("BadAmount")
    if not _attest_origin(ctx, ctx.sender, from_salt, from_origin):
        ctx.abort("BadOrigin")
    ctx.charge(ctx.schedule.add_op)
    ctx.put(K_BALANCE, w32(r32(ctx.get(K_BALANCE)) + amount))
    return True


def _account_debit(ctx, args):
    amount, from_salt, from_origin = args
    return _debit_into(ctx, amount, from_salt, from_origin)


def _send(ctx, to_addr: bytes, amount: int, to_salt: bytes, to_origin: int):
    if amount < 0:
        ctx.abort("BadAmount")
    balance = r32(ctx.get(K_BALANCE))
    if balance < amount:
        ctx.abort(vm.INSUFFICIENT_BALANCE)
    if not _attest_origin(ctx, to_addr, to_salt, to_origin):
        ctx.abort("BadOrigin")
    ctx.charge(ctx.schedule.add_op)
    ctx.put(K_BALANCE, w32(balance - amount))
    ctx.call(
        to_addr,
        "debit",
        (amount, ctx.get(K_SALT), r32(ctx.get(K_ORIGIN))),
    )
    ctx.emit("Transfer", to=to_addr.hex(), tokens=amount)
    return True


def _account_transfer(ctx, args):
    to_addr, amount, to_salt, to_origin = args
    if ctx.origin != r_addr(ctx.get(K_OWNER)):
        ctx.abort("NotOwner")
    return _send(ctx, to_addr, amount, to_salt, to_origin)


def _account_approve(ctx, args):
    spender, amount = args
    if ctx.origin != r_addr(ctx.get(K_OWNER)):
        ctx.abort("NotOwner")
    if amount < 0:
        ctx.abort("BadAmount")
    ctx.put(allowance_key(spender), w32(amount))
    ctx.emit("Approval", spender=spender.hex(), tokens=amount)
    return True


def _account_transfer_from(ctx, args):
    to_addr, amount, to_salt, to_origin = args
    key = allowance_key(ctx.origin)
    allowance = r32(ctx.get(key))
    if amount > allowance:
        ctx.abort("AllowanceExceeded")
    ctx.put(key, w32(allowance - amount))
    return _send(ctx, to_addr, amount, to_salt, to_origin)


def _account_move_to(ctx, args):
    if ctx.sender != r_addr(ctx.get(K_OWNER)):
        ctx.abort("NotOwner")


def _account_move_finish(ctx, args):
    ctx.put(K_MOVED_AT, w32(int(ctx.now)))


def account_behavior() -> Behavior:
    return Behavior(
        name=ACCOUNT_NAME,
        code_size=ACCOUNT_CODE_SIZE,
        constructor=_account_constructor,
        methods={
            "transfer": _account_transfer,
            "debit": _account_debit,
            "approve": _account_approve,
            "transferFrom": _account_transfer_from,
        },
        move_to=_account_move_to,
        move_finish=_account_move_finish,
    )


# Read-only views over records -----------------------------------------------

def account_balance(record: ContractRecord) -> int:
    return r32(record.storage.get(K_BALANCE))


def account_allowance(record: ContractRecord, spender: bytes) -> int:
    return r32(record.storage.get(allowance_key(spender)))


def account_owner(record: ContractRecord) -> Optional[bytes]:
    return r_addr(record.storage.get(K_OWNER))


def token_supply(record: ContractRecord) -> int:
    return r32(record.storage.get(K_SUPPLY))


# Genesis allocation helpers ---------------------------------------------------

def genesis_token(
    chain_id: int,
    deployer: bytes,
    owner: bytes,
    salt: bytes,
    total_supply: int,
    next_salt: int,
    algo: str = "sha256",
) -> ContractRecord:
    address = derive_address(chain_id, deployer, salt, TOKEN_CODE_HASH, algo)
    rec = ContractRecord(address, TOKEN_CODE_HASH, {}, 0, 0, chain_id, salt)
    ctx = GenesisContext(rec, chain_id, deployer)
    _token_constructor(ctx, (owner,))
    ctx.put(K_SUPPLY, w32(total_supply))
    ctx.put(K_NEXT_SALT, w32(next_salt))
    return rec


def genesis_account(
    creation_chain: int,
    hosting_chain: int,
    token_address: bytes,
    owner: bytes,
    salt_index: int,
    initial: int,
    algo: str = "sha256",
) -> ContractRecord:
    """Account record as if minted on ``creation_chain`` and now hosted elsewhere."""
    salt = w32(salt_index)
    address = derive_address(creation_chain, token_address, salt, ACCOUNT_CODE_HASH, algo)
    rec = ContractRecord(address, ACCOUNT_CODE_HASH, {}, 0, 0, hosting_chain, salt)
    ctx = GenesisContext(rec, creation_chain, token_address)
    _account_constructor(ctx, (owner, token_address, salt, creation_chain, initial))
    return rec
