"""One blockchain instance.

A chain owns a FIFO mempool, produces blocks at a fixed interval, keeps its
full header and block history, and maintains a registry of peer-chain
headers so it can validate state roots other chains claim. Finality is
modeled purely by depth: height h is final once the head is at least
``finality_depth`` blocks past it.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import merkle, proofs, vm
from .hashing import DEFAULT_ALGO, digest
from .proofs import ContractProof, ProofError, be
from .wire import pack_timestamp

GENESIS_PARENT = b"\x00" * 32


@dataclass
class ChainConfig:
    chain_id: int
    block_interval: float = 5.0
    finality_depth: int = 2
    gas_mode: str = "BURROW_LIKE"
    block_tx_limit: int = 250
    snapshot_window: int = 64
    hash_algo: str = DEFAULT_ALGO
    gas_schedule: Optional[dict] = None

    def __post_init__(self):
        if self.block_interval <= 0:
            raise ValueError("block_interval must be positive")
        if self.finality_depth < 1:
            raise ValueError("finality_depth must be at least 1")
        if self.block_tx_limit < 1:
            raise ValueError("block_tx_limit must be at least 1")

    @classmethod
    def burrow_like(cls, chain_id: int, **overrides) -> "ChainConfig":
        defaults = dict(block_interval=5.0, finality_depth=2, gas_mode="BURROW_LIKE")
        defaults.update(overrides)
        return cls(chain_id, **defaults)

    @classmethod
    def ethereum_like(cls, chain_id: int, **overrides) -> "ChainConfig":
        defaults = dict(block_interval=15.0, finality_depth=6, gas_mode="ETHEREUM_LIKE")
        defaults.update(overrides)
        return cls(chain_id, **defaults)


@dataclass(frozen=True)
class BlockHeader:
    chain: int
    height: int
    parent_hash: bytes
    state_root: bytes
    tx_root: bytes
    timestamp: float

    def header_bytes(self) -> bytes:
        return b"".join(
            (
                b"HDR1",
                be(self.chain, 8),
                be(self.height, 8),
                self.parent_hash,
                self.state_root,
                self.tx_root,
                pack_timestamp(self.timestamp),
            )
        )

    def header_hash(self, algo: str = DEFAULT_ALGO) -> bytes:
        return digest(self.header_bytes(), algo)


@dataclass
class Block:
    header: BlockHeader
    transactions: list
    receipts: list = field(default_factory=list)
    # Peer-registry heads at production time, so history replay can reproduce
    # every peer-root validation decision exactly.
    registry_cursor: dict = field(default_factory=dict)


class HeaderRegistry:
    """Light-client view of peer chains: their headers and finality depths."""

    def __init__(self):
        self._peers: dict[int, dict] = {}

    def register_peer(self, chain_id: int, finality_depth: int) -> None:
        self._peers.setdefault(
            chain_id, {"finality_depth": finality_depth, "headers": {}, "head": -1}
        )

    def known_peers(self) -> list[int]:
        return sorted(self._peers)

    def add_header(self, header: BlockHeader) -> None:
        peer = self._peers.get(header.chain)
        if peer is None:
            raise ValueError(f"header from unregistered peer chain {header.chain}")
        if header.height != peer["head"] + 1:
            raise ValueError(
                f"header gap for chain {header.chain}: have head {peer['head']}, got {header.height}"
            )
        peer["headers"][header.height] = header
        peer["head"] = header.height

    def get(self, chain_id: int, height: int) -> Optional[BlockHeader]:
        peer = self._peers.get(chain_id)
        if peer is None:
            return None
        return peer["headers"].get(height)

    def head(self, chain_id: int) -> int:
        peer = self._peers.get(chain_id)
        return -1 if peer is None else peer["head"]

    def is_final(self, chain_id: int, height: int) -> bool:
        peer = self._peers.get(chain_id)
        if peer is None:
            return False
        return peer["head"] - height >= peer["finality_depth"]


@dataclass
class ChainState:
    contracts: dict = field(default_factory=dict)
    client_balances: dict = field(default_factory=dict)
    code_present: set = field(default_factory=set)
    nonce_watermarks: dict = field(default_factory=dict)


class ChainError(Exception):
    pass


class Chain:
    """Single-owner state machine; all mutation flows through block execution."""

    def __init__(
        self,
        config: ChainConfig,
        registry: vm.BehaviorRegistry,
        on_event: Optional[Callable[[dict], None]] = None,
        defer: Optional[Callable[[float, Callable], None]] = None,
    ):
        self.config = config
        self.registry = registry
        self.on_event = on_event
        self.defer = defer  # scheduler hook for delayed header delivery
        self.gas_schedule = (
            vm.GasSchedule.from_dict(config.gas_schedule)
            if config.gas_schedule
            else vm.GasSchedule.for_mode(config.gas_mode)
        )
        self.state = ChainState()
        self.blocks: list[Block] = []
        self.receipts: list[vm.Receipt] = []
        self.mempool: deque = deque()
        self._seen_tx: set[bytes] = set()
        self.header_registry = HeaderRegistry()
        self.peers: list[tuple["Chain", float]] = []
        self.snapshots: dict[int, dict] = {}
        self.blocked_heights: dict[bytes, int] = {}
        self.genesis_records: dict = {}
        self.genesis_balances: dict = {}
        self.on_commit: Optional[Callable] = None
        # Block context while executing; exposed to the VM.
        self.executing_height = 0
        self.executing_time = 0.0
        self.executing_parent_hash = GENESIS_PARENT

    # Basic accessors ---------------------------------------------------------

    @property
    def id(self) -> int:
        return self.config.chain_id

    @property
    def algo(self) -> str:
        return self.config.hash_algo

    @property
    def finality_depth(self) -> int:
        return self.config.finality_depth

    @property
    def block_interval(self) -> float:
        return self.config.block_interval

    @property
    def head_height(self) -> int:
        return len(self.blocks) - 1

    @property
    def head(self) -> Optional[BlockHeader]:
        return self.blocks[-1].header if self.blocks else None

    def read_record(self, addr: bytes) -> Optional[vm.ContractRecord]:
        return self.state.contracts.get(addr)

    def is_active(self, addr: bytes) -> bool:
        rec = self.state.contracts.get(addr)
        return rec is not None and rec.location == self.id

    # Wiring -------------------------------------------------------------------

    def add_peer(self, peer: "Chain", delay: float = 0.0) -> None:
        self.peers.append((peer, delay))
        peer.header_registry.register_peer(self.id, self.finality_depth)

    def set_genesis_alloc(self, records: dict, client_balances: dict) -> None:
        if self.blocks:
            raise ChainError("genesis alloc must be set before the genesis block")
        self.state.contracts.update(records)
        self.state.client_balances.update(client_balances)
        for addr, rec in records.items():
            self.state.code_present.add(rec.code_hash)
            self.state.nonce_watermarks[addr] = rec.nonce
        self.genesis_records = dict(records)
        self.genesis_balances = dict(client_balances)

    # Transactions ---------------------------------------------------------------

    def submit_tx(self, tx: vm.Transaction) -> None:
        tx_hash = tx.tx_hash(self.algo)
        if tx_hash in self._seen_tx:
            raise ChainError(f"duplicate transaction {tx_hash.hex()}")
        self._seen_tx.add(tx_hash)
        self.mempool.append(tx)

    # Block production -------------------------------------------------------

    def produce_genesis(self, setup_txs: list | None = None, at_time: float = 0.0) -> Block:
        """Block 0. Setup transactions are exempt from the block size limit."""
        if self.blocks:
            raise ChainError("genesis already produced")
        return self._produce(list(setup_txs or ()), height=0, timestamp=at_time)

    def produce_block(self, now: float) -> Block:
        if not self.blocks:
            raise ChainError("produce the genesis block first")
        last = self.blocks[-1].header.timestamp
        if now < last + self.block_interval:
            raise ChainError(
                f"block requested at {now}, earlier than {last + self.block_interval}"
            )
        txs = []
        while self.mempool and len(txs) < self.config.block_tx_limit:
            txs.append(self.mempool.popleft())
        return self._produce(txs, height=self.head_height + 1, timestamp=now)

    def _produce(self, txs: list, height: int, timestamp: float) -> Block:
        parent = self.blocks[-1].header.header_hash(self.algo) if self.blocks else GENESIS_PARENT
        self.executing_height = height
        self.executing_time = timestamp
        self.executing_parent_hash = parent
        cursor = {
            peer: self.header_registry.head(peer)
            for peer in self.header_registry.known_peers()
        }
        receipts = [vm.execute_tx(self, tx) for tx in txs]
        header = BlockHeader(
            chain=self.id,
            height=height,
            parent_hash=parent,
            state_root=self.state_root(),
            tx_root=self.tx_root(txs),
            timestamp=timestamp,
        )
        block = Block(header, txs, receipts, registry_cursor=cursor)
        self.blocks.append(block)
        self.receipts.extend(receipts)
        self._snapshot(height)
        self._emit_block_events(block, receipts)
        self._broadcast(header)
        return block

    def _snapshot(self, height: int) -> None:
        self.snapshots[height] = dict(self.state.contracts)
        stale = height - self.config.snapshot_window
        if stale in self.snapshots:
            del self.snapshots[stale]

    def _broadcast(self, header: BlockHeader) -> None:
        for peer, delay in self.peers:
            if delay <= 0 or self.defer is None:
                peer.header_registry.add_header(header)
            else:
                self.defer(delay, lambda p=peer, h=header: p.header_registry.add_header(h))

    def _emit_block_events(self, block: Block, receipts: list) -> None:
        if self.on_event is None:
            return
        header = block.header
        self.on_event(
            {
                "event": "block",
                "chain": self.id,
                "height": header.height,
                "time": header.timestamp,
                "tx_count": len(block.transactions),
                "state_root": header.state_root.hex(),
            }
        )
        for receipt in receipts:
            self.on_event(
                {
                    "event": "tx",
                    "chain": self.id,
                    "height": header.height,
                    "time": header.timestamp,
                    "status": receipt.status,
                    "reason": receipt.reason,
                    "op": receipt.op_class,
                    "gas_used": receipt.gas_used,
                    "tx_hash": receipt.tx_hash.hex(),
                }
            )

    def note_commit(self, addr: bytes, rec: vm.ContractRecord, moved_out: bool) -> None:
        watermark = self.state.nonce_watermarks.get(addr, -1)
        if rec.nonce > watermark:
            self.state.nonce_watermarks[addr] = rec.nonce
        if moved_out:
            self.blocked_heights[addr] = self.executing_height
        if self.on_commit is not None:
            self.on_commit(self, addr, rec)

    # Commitments ---------------------------------------------------------------

    def state_root(self) -> bytes:
        return proofs.state_root(self.state.contracts, self.algo)

    def tx_root(self, txs: list) -> bytes:
        return merkle.build_root([tx.tx_hash(self.algo) for tx in txs], self.algo)

    # Finality and peer validation --------------------------------------------

    def is_final(self, height: int) -> bool:
        if height > self.head_height:
            raise ChainError(f"height {height} beyond head {self.head_height}")
        return self.head_height - height >= self.finality_depth

    def verify_peer_root(self, src: int, root: bytes, height: int) -> bool:
        """True iff a finalized header of chain ``src`` at ``height`` commits ``root``."""
        header = self.header_registry.get(src, height)
        if header is None or header.state_root != root:
            return False
        return self.header_registry.is_final(src, height)

    # Proof production -----------------------------------------------------------

    def prove_contract(self, address: bytes, height: int) -> ContractProof:
        if height > self.head_height:
            raise ProofError(f"height {height} beyond head {self.head_height}")
        if not self.is_final(height):
            raise ProofError(f"height {height} is not final yet")
        records = self.snapshots.get(height)
        if records is None:
            raise ProofError(f"no state snapshot retained for height {height}")
        if address not in records:
            raise ProofError(f"unknown contract address {address.hex()}")
        return proofs.prove_contract(records, address, self.id, height, self.algo)

    # Audit helpers --------------------------------------------------------------

    def verify_history(self) -> bool:
        """Re-execute every block from genesis and compare committed state roots."""
        replica = Chain(self.config, self.registry)
        replica.state.contracts.update(
            {addr: rec.copy() for addr, rec in self.genesis_records.items()}
        )
        replica.state.client_balances.update(self.genesis_balances)
        for addr, rec in self.genesis_records.items():
            replica.state.code_present.add(rec.code_hash)
            replica.state.nonce_watermarks[addr] = rec.nonce
        for peer in self.header_registry.known_peers():
            replica.header_registry.register_peer(
                peer, self.header_registry._peers[peer]["finality_depth"]
            )
        for block in self.blocks:
            header = block.header
            # Replay peer-header arrivals up to this block's production instant.
            for peer, head in sorted(block.registry_cursor.items()):
                while replica.header_registry.head(peer) < head:
                    next_height = replica.header_registry.head(peer) + 1
                    replica.header_registry.add_header(
                        self.header_registry.get(peer, next_height)
                    )
            replica.executing_height = header.height
            replica.executing_time = header.timestamp
            replica.executing_parent_hash = header.parent_hash
            for tx in block.transactions:
                vm.execute_tx(replica, tx)
            if replica.state_root() != header.state_root:
                return False
        return True
