"""Typed contract machine shared by every simulated chain.

Contract code is a set of native Python callbacks registered under a code
hash; calls are dispatched by the hosting chain and metered with an
EVM-flavored gas schedule. Each transaction executes against an overlay
and commits atomically: an aborted transaction leaves no trace beyond its
receipt.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .hashing import DEFAULT_ALGO, digest
from .proofs import be, contract_leaf_bytes, storage_root
from .wire import encode_value

ChainId = int
Address = bytes

ADDRESS_BYTES = 20
WORD = 32

# Transaction kinds.
CALL = "CALL"
CREATE = "CREATE"
MOVE1 = "MOVE1"
MOVE2 = "MOVE2"

# Abort reasons.
OK = "OK"
ABORT = "ABORT"
OUT_OF_GAS = "OutOfGas"
NO_SUCH_CONTRACT = "NoSuchContract"
CONTRACT_MOVED = "ContractMoved"
UNKNOWN_CODE = "UnknownCodeHash"
ADDRESS_COLLISION = "AddressCollision"
INSUFFICIENT_BALANCE = "InsufficientBalance"
NO_SUCH_METHOD = "NoSuchMethod"
HOOK_REJECTED = "HookRejected"
BAD_TARGET = "BadTarget"
WRONG_TARGET = "WrongTarget"
BAD_ROOT = "BadRoot"
BAD_PROOF = "BadProof"
REPLAY = "Replay"


class TxAbort(Exception):
    """Aborts the current transaction; all its writes are discarded."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass
class GasSchedule:
    add_op: int = 3
    create_contract: int = 32000
    code_deposit_per_byte: int = 200
    sstore_new: int = 20000
    sstore_update: int = 5000
    base_tx: int = 21000

    @classmethod
    def ethereum_like(cls) -> "GasSchedule":
        return cls(code_deposit_per_byte=200)

    @classmethod
    def burrow_like(cls) -> "GasSchedule":
        return cls(code_deposit_per_byte=0)

    @classmethod
    def for_mode(cls, mode: str) -> "GasSchedule":
        if mode == "ETHEREUM_LIKE":
            return cls.ethereum_like()
        if mode == "BURROW_LIKE":
            return cls.burrow_like()
        raise ValueError(f"unknown gas mode {mode!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "GasSchedule":
        sched = cls()
        for key, value in data.items():
            if not hasattr(sched, key):
                raise ValueError(f"unknown gas schedule field {key!r}")
            setattr(sched, key, int(value))
        return sched

    def to_dict(self) -> dict:
        return {
            "add_op": self.add_op,
            "create_contract": self.create_contract,
            "code_deposit_per_byte": self.code_deposit_per_byte,
            "sstore_new": self.sstore_new,
            "sstore_update": self.sstore_update,
            "base_tx": self.base_tx,
        }


class ContractRecord:
    """One contract's full state on one chain.

    ``location`` names the chain where the contract is currently active; a
    record whose location differs from its hosting chain accepts no state
    changes. Committed records are never mutated in place, which makes
    per-height snapshots a shallow dict copy.
    """

    __slots__ = (
        "address",
        "code_hash",
        "storage",
        "balance",
        "nonce",
        "location",
        "created_salt",
        "_leaf_cache",
        "_sroot_cache",
    )

    def __init__(
        self,
        address: Address,
        code_hash: bytes,
        storage: dict[bytes, bytes],
        balance: int,
        nonce: int,
        location: ChainId,
        created_salt: bytes,
    ):
        self.address = address
        self.code_hash = code_hash
        self.storage = storage
        self.balance = balance
        self.nonce = nonce
        self.location = location
        self.created_salt = created_salt
        self._leaf_cache: Optional[bytes] = None
        self._sroot_cache: Optional[bytes] = None

    def copy(self) -> "ContractRecord":
        return ContractRecord(
            self.address,
            self.code_hash,
            dict(self.storage),
            self.balance,
            self.nonce,
            self.location,
            self.created_salt,
        )

    def storage_root(self, algo: str = DEFAULT_ALGO) -> bytes:
        if self._sroot_cache is None:
            self._sroot_cache = storage_root(self.storage, algo)
        return self._sroot_cache

    def leaf_bytes(self, algo: str = DEFAULT_ALGO) -> bytes:
        if self._leaf_cache is None:
            self._leaf_cache = contract_leaf_bytes(
                self.address,
                self.code_hash,
                self.balance,
                self.nonce,
                self.location,
                self.storage_root(algo),
            )
        return self._leaf_cache


@dataclass
class Transaction:
    sender: Address
    kind: str
    target: Optional[Address]
    method: str
    args: tuple
    value: int = 0
    gas_limit: int = 50_000_000
    sender_seq: int = 0
    op_class: str = ""

    def __post_init__(self):
        if not self.op_class:
            self.op_class = self.method or self.kind.lower()
        self._hash: Optional[bytes] = None

    def tx_hash(self, algo: str = DEFAULT_ALGO) -> bytes:
        if self._hash is None:
            body = b"TX1" + encode_value(
                (
                    self.sender,
                    self.kind,
                    self.target or b"",
                    self.method,
                    self.args,
                    self.value,
                    self.gas_limit,
                    self.sender_seq,
                )
            )
            self._hash = digest(body, algo)
        return self._hash


@dataclass
class Receipt:
    status: str
    reason: Optional[str]
    gas_used: int
    code_deposit_gas: int
    events: list
    included_height: int
    included_time: float
    tx_hash: bytes
    op_class: str

    @property
    def ok(self) -> bool:
        return self.status == OK


@dataclass
class Behavior:
    """Native contract code: callbacks keyed by method name.

    ``move_to`` runs on the source chain before a contract is blocked and
    may veto the move; ``move_finish`` runs on the target chain right after
    reconstruction.
    """

    name: str
    code_size: int
    constructor: Optional[Callable] = None
    methods: dict = field(default_factory=dict)
    move_to: Optional[Callable] = None
    move_finish: Optional[Callable] = None

    @property
    def code_hash(self) -> bytes:
        return behavior_code_hash(self.name)


def behavior_code_hash(name: str) -> bytes:
    # Code identity is fixed sha256 regardless of the state-tree algorithm.
    return digest(b"code:" + name.encode("utf-8"), "sha256")


class BehaviorRegistry:
    """Shared execution environment: every chain dispatches through one registry."""

    def __init__(self):
        self._by_hash: dict[bytes, Behavior] = {}

    def register(self, behavior: Behavior) -> None:
        if behavior.code_hash in self._by_hash:
            raise ValueError(f"behavior already registered for code hash of {behavior.name!r}")
        self._by_hash[behavior.code_hash] = behavior

    def get(self, code_hash: bytes) -> Optional[Behavior]:
        return self._by_hash.get(code_hash)

    def __contains__(self, code_hash: bytes) -> bool:
        return code_hash in self._by_hash


def derive_address(
    chain_id: ChainId,
    creator: Address,
    salt: bytes,
    code_hash: bytes,
    algo: str = DEFAULT_ALGO,
) -> Address:
    """create2-style address: first 20 bytes of H(chain || creator || salt || code_hash)."""
    return digest(be(chain_id, 8) + creator + salt + code_hash, algo)[:ADDRESS_BYTES]


class Frame:
    """Per-transaction overlay over the chain state."""

    def __init__(self, chain, tx: Transaction):
        self.chain = chain
        self.tx = tx
        self.schedule: GasSchedule = chain.gas_schedule
        self.records: dict[Address, ContractRecord] = {}
        self.client_balances: dict[Address, int] = {}
        self.invoked: set[Address] = set()
        self.created: set[Address] = set()
        self.nonce_set: set[Address] = set()
        self.moved_out: set[Address] = set()
        self.code_added: set[bytes] = set()
        self.gas_used = 0
        self.deposit_gas = 0
        self.events: list = []

    def charge(self, amount: int, deposit: bool = False) -> None:
        self.gas_used += amount
        if deposit:
            self.deposit_gas += amount
        if self.gas_used > self.tx.gas_limit:
            raise TxAbort(OUT_OF_GAS)

    def record_for_read(self, addr: Address) -> Optional[ContractRecord]:
        rec = self.records.get(addr)
        if rec is not None:
            return rec
        return self.chain.state.contracts.get(addr)

    def record_for_write(self, addr: Address) -> ContractRecord:
        rec = self.records.get(addr)
        if rec is None:
            base = self.chain.state.contracts.get(addr)
            if base is None:
                raise TxAbort(NO_SUCH_CONTRACT)
            rec = base.copy()
            self.records[addr] = rec
        return rec

    def insert_record(self, rec: ContractRecord) -> None:
        self.records[rec.address] = rec

    def client_balance(self, addr: Address) -> int:
        if addr in self.client_balances:
            return self.client_balances[addr]
        return self.chain.state.client_balances.get(addr, 0)

    def move_client_balance(self, addr: Address, delta: int) -> None:
        balance = self.client_balance(addr) + delta
        if balance < 0:
            raise TxAbort(INSUFFICIENT_BALANCE)
        self.client_balances[addr] = balance

    def code_present(self, code_hash: bytes) -> bool:
        return code_hash in self.code_added or code_hash in self.chain.state.code_present

    def sstore(self, rec: ContractRecord, key: bytes, value: bytes) -> None:
        if len(key) != WORD or len(value) != WORD:
            raise ValueError("storage keys and values must be 32 bytes")
        self.charge(self.schedule.sstore_update if key in rec.storage else self.schedule.sstore_new)
        rec.storage[key] = value

    def commit(self) -> None:
        state = self.chain.state
        for addr, rec in self.records.items():
            if addr in self.invoked and addr not in self.created and addr not in self.nonce_set:
                rec.nonce += 1
            state.contracts[addr] = rec
            self.chain.note_commit(addr, rec, moved_out=addr in self.moved_out)
        state.client_balances.update(self.client_balances)
        state.code_present.update(self.code_added)


class ExecutionContext:
    """What a behavior callback sees while running inside one contract."""

    def __init__(self, frame: Frame, record: ContractRecord, sender: Address):
        self._frame = frame
        self._record = record
        self.sender = sender  # immediate caller: a client or a contract address

    # Identity and environment -------------------------------------------------

    @property
    def self_address(self) -> Address:
        return self._record.address

    @property
    def origin(self) -> Address:
        return self._frame.tx.sender

    @property
    def tx_value(self) -> int:
        return self._frame.tx.value

    @property
    def chain_id(self) -> ChainId:
        return self._frame.chain.id

    @property
    def height(self) -> int:
        return self._frame.chain.executing_height

    @property
    def now(self) -> float:
        return self._frame.chain.executing_time

    @property
    def block_seed(self) -> bytes:
        return self._frame.chain.executing_parent_hash

    @property
    def balance(self) -> int:
        return self._record.balance

    @property
    def schedule(self) -> GasSchedule:
        return self._frame.schedule

    # State access ---------------------------------------------------------------

    def get(self, key: bytes) -> Optional[bytes]:
        return self._record.storage.get(key)

    def put(self, key: bytes, value: bytes) -> None:
        self._frame.sstore(self._record, key, value)

    def read_record(self, addr: Address) -> Optional[ContractRecord]:
        """Read any contract's record, including blocked ones. Do not mutate."""
        return self._frame.record_for_read(addr)

    def charge(self, amount: int) -> None:
        self._frame.charge(amount)

    def emit(self, name: str, **fields) -> None:
        self._frame.events.append((name, fields))

    def abort(self, reason: str) -> None:
        raise TxAbort(reason)

    # Cross-contract operations ----------------------------------------------

    def call(self, addr: Address, method: str, args: tuple = ()):
        """Invoke another contract on this chain; blocked targets abort."""
        frame = self._frame
        rec = frame.record_for_read(addr)
        if rec is None:
            raise TxAbort(NO_SUCH_CONTRACT)
        if rec.location != frame.chain.id:
            raise TxAbort(CONTRACT_MOVED)
        behavior = frame.chain.registry.get(rec.code_hash)
        if behavior is None:
            raise TxAbort(UNKNOWN_CODE)
        fn = behavior.methods.get(method)
        if fn is None:
            raise TxAbort(NO_SUCH_METHOD)
        target = frame.record_for_write(addr)
        frame.invoked.add(addr)
        return fn(ExecutionContext(frame, target, self._record.address), args)

    def create(self, code_hash: bytes, salt: bytes, args: tuple = (), value: int = 0) -> Address:
        """Create a child contract funded from this contract's balance."""
        if value:
            if self._record.balance < value:
                raise TxAbort(INSUFFICIENT_BALANCE)
            self._record.balance -= value
        return create_contract(self._frame, self._record.address, code_hash, salt, args, value)

    def pay_out(self, client: Address, amount: int) -> None:
        """Move native units from this contract's balance to a client account."""
        if amount < 0 or self._record.balance < amount:
            raise TxAbort(INSUFFICIENT_BALANCE)
        self._record.balance -= amount
        self._frame.move_client_balance(client, amount)

    def move_self(self, target_chain: ChainId, hook_args: tuple = ()) -> None:
        """Lock this contract for migration as part of the current call."""
        from . import protocol

        protocol.lock_contract(self._frame, self._record, target_chain, hook_args, self.sender)


class GenesisContext:
    """Minimal constructor context used to build genesis-allocated records.

    Shares the storage layout logic with live execution but meters nothing.
    """

    def __init__(self, record: ContractRecord, chain_id: ChainId, origin: Address):
        self._record = record
        self.sender = origin
        self.chain_id = chain_id
        self.origin = origin
        self.now = 0.0
        self.height = 0
        self.tx_value = record.balance

    @property
    def self_address(self) -> Address:
        return self._record.address

    @property
    def balance(self) -> int:
        return self._record.balance

    def get(self, key: bytes) -> Optional[bytes]:
        return self._record.storage.get(key)

    def put(self, key: bytes, value: bytes) -> None:
        if len(key) != WORD or len(value) != WORD:
            raise ValueError("storage keys and values must be 32 bytes")
        self._record.storage[key] = value

    def charge(self, amount: int) -> None:
        pass

    def emit(self, name: str, **fields) -> None:
        pass

    def abort(self, reason: str) -> None:
        raise TxAbort(reason)


def create_contract(
    frame: Frame,
    creator: Address,
    code_hash: bytes,
    salt: bytes,
    args: tuple,
    value: int,
) -> Address:
    behavior = frame.chain.registry.get(code_hash)
    if behavior is None:
        raise TxAbort(UNKNOWN_CODE)
    if len(salt) != WORD:
        raise ValueError("salt must be 32 bytes")
    addr = derive_address(frame.chain.id, creator, salt, code_hash, frame.chain.algo)
    if frame.record_for_read(addr) is not None:
        raise TxAbort(ADDRESS_COLLISION)
    frame.charge(frame.schedule.create_contract)
    deposit = behavior.code_size * frame.schedule.code_deposit_per_byte
    if deposit:
        frame.charge(deposit, deposit=True)
    frame.code_added.add(code_hash)
    rec = ContractRecord(addr, code_hash, {}, value, 0, frame.chain.id, salt)
    frame.insert_record(rec)
    frame.created.add(addr)
    if behavior.constructor is not None:
        behavior.constructor(ExecutionContext(frame, rec, creator), args)
    return addr


def _execute_call(frame: Frame, tx: Transaction) -> None:
    rec = frame.record_for_read(tx.target)
    if rec is None:
        raise TxAbort(NO_SUCH_CONTRACT)
    if rec.location != frame.chain.id:
        raise TxAbort(CONTRACT_MOVED)
    behavior = frame.chain.registry.get(rec.code_hash)
    if behavior is None:
        raise TxAbort(UNKNOWN_CODE)
    fn = behavior.methods.get(tx.method)
    if fn is None:
        raise TxAbort(NO_SUCH_METHOD)
    target = frame.record_for_write(tx.target)
    frame.invoked.add(tx.target)
    if tx.value:
        frame.move_client_balance(tx.sender, -tx.value)
        target.balance += tx.value
    fn(ExecutionContext(frame, target, tx.sender), tx.args)


def _execute_create(frame: Frame, tx: Transaction) -> None:
    code_hash, salt, ctor_args = tx.args
    if tx.value:
        frame.move_client_balance(tx.sender, -tx.value)
    create_contract(frame, tx.sender, code_hash, salt, tuple(ctor_args), tx.value)


def execute_tx(chain, tx: Transaction) -> Receipt:
    """Run one transaction against the chain state; atomic per transaction."""
    frame = Frame(chain, tx)
    try:
        frame.charge(frame.schedule.base_tx)
        if tx.kind == CALL:
            _execute_call(frame, tx)
        elif tx.kind == CREATE:
            _execute_create(frame, tx)
        elif tx.kind in (MOVE1, MOVE2):
            from . import protocol

            if tx.kind == MOVE1:
                protocol.execute_move1(frame, tx)
            else:
                protocol.execute_move2(frame, tx)
        else:
            raise TxAbort(f"BadKind:{tx.kind}")
        frame.commit()
        status, reason = OK, None
    except TxAbort as abort:
        status, reason = ABORT, abort.reason
    return Receipt(
        status=status,
        reason=reason,
        gas_used=min(frame.gas_used, tx.gas_limit),
        code_deposit_gas=frame.deposit_gas if status == OK else 0,
        events=frame.events if status == OK else [],
        included_height=chain.executing_height,
        included_time=chain.executing_time,
        tx_hash=tx.tx_hash(chain.algo),
        op_class=tx.op_class,
    )


# Storage word helpers shared by the native behaviors.

def w32(value: int) -> bytes:
    return value.to_bytes(WORD, "big")


def r32(value: Optional[bytes]) -> int:
    return int.from_bytes(value or b"", "big")


def addr32(addr: Address) -> bytes:
    return addr.ljust(WORD, b"\x00")


def r_addr(value: Optional[bytes]) -> Optional[Address]:
    if not value or value == b"\x00" * WORD:
        return None
    return value[:ADDRESS_BYTES]


def skey(label: str) -> bytes:
    raw = label.encode("utf-8")
    if len(raw) > WORD:
        raise ValueError("storage label too long")
    return raw.ljust(WORD, b"\x00")
