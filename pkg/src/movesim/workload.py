"""Workload generation and replay.

Three pieces: a dependency DAG over trace transactions (a transaction is
runnable once every producer of the objects it consumes has executed), an
event-driven replayer that routes trace transactions across shards and
auto-inserts migration pairs when a transaction touches contracts on
different shards, and closed-loop token clients with a controlled
cross-shard rate, in either conflict-free (oracle placement knowledge) or
retry flavor.
"""

from __future__ import annotations

import json
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import protocol, vm
from .apps import kitties
from .hashing import DEFAULT_ALGO, digest
from .proofs import be

TRACE_FORMAT = "kitty-trace/v1"


class WorkloadError(Exception):
    pass


class ReplayError(Exception):
    pass


# Trace and dependency DAG ----------------------------------------------------

@dataclass(frozen=True)
class TraceTx:
    id: int
    op: str
    args: dict
    produces: tuple
    consumes: tuple

    def to_row(self) -> dict:
        return {
            "id": self.id,
            "op": self.op,
            "args": dict(self.args),
            "produces": list(self.produces),
            "consumes": list(self.consumes),
        }

    @classmethod
    def from_row(cls, row: dict) -> "TraceTx":
        return cls(
            id=int(row["id"]),
            op=str(row["op"]),
            args=dict(row["args"]),
            produces=tuple(row["produces"]),
            consumes=tuple(row["consumes"]),
        )


class DependencyDag:
    """Partial order over trace transactions; leaves are runnable."""

    def __init__(self, nodes: dict, deps: dict):
        self.nodes = nodes
        self.deps = deps
        self.dependents: dict[int, list[int]] = {txid: [] for txid in nodes}
        for txid, parents in deps.items():
            for parent in parents:
                self.dependents[parent].append(txid)
        self._unmet = {txid: len(parents) for txid, parents in deps.items()}
        self.initial_leaves = sorted(txid for txid, count in self._unmet.items() if count == 0)
        self._done: set[int] = set()

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def remaining(self) -> int:
        return len(self.nodes) - len(self._done)

    def mark_done(self, txid: int) -> list[int]:
        """Record completion; returns transactions that just became leaves."""
        if txid in self._done:
            raise WorkloadError(f"transaction {txid} completed twice")
        self._done.add(txid)
        ready = []
        for child in self.dependents[txid]:
            self._unmet[child] -= 1
            if self._unmet[child] == 0:
                ready.append(child)
        return sorted(ready)


def build_dag(trace: list[TraceTx]) -> DependencyDag:
    """Edges run from each transaction to the producers of what it consumes."""
    producers: dict[str, int] = {}
    nodes: dict[int, TraceTx] = {}
    deps: dict[int, set] = {}
    for tx in trace:
        if tx.id in nodes:
            raise WorkloadError(f"duplicate transaction id {tx.id}")
        nodes[tx.id] = tx
        parents = set()
        for obj in tx.consumes:
            if obj in tx.produces:
                raise WorkloadError(f"transaction {tx.id} consumes its own product {obj!r}")
            if obj not in producers:
                raise WorkloadError(f"transaction {tx.id} consumes unknown object {obj!r}")
            parents.add(producers[obj])
        for obj in tx.produces:
            if obj in producers:
                raise WorkloadError(f"object {obj!r} produced twice")
            producers[obj] = tx.id
        deps[tx.id] = parents
    return DependencyDag(nodes, deps)


def save_trace(trace: list[TraceTx], path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(json.dumps({"format": TRACE_FORMAT}) + "\n")
        for tx in trace:
            handle.write(json.dumps(tx.to_row(), sort_keys=True) + "\n")


def load_trace(path: str) -> list[TraceTx]:
    trace = []
    with open(path, "r", encoding="utf-8") as handle:
        header_line = handle.readline()
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise WorkloadError(f"{path}:1: bad header: {exc}") from exc
        if not isinstance(header, dict) or header.get("format") != TRACE_FORMAT:
            raise WorkloadError(f"{path}:1: expected format header {TRACE_FORMAT!r}")
        for number, line in enumerate(handle, start=2):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                tx = TraceTx.from_row(row)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise WorkloadError(f"{path}:{number}: malformed trace row: {exc}") from exc
            trace.append(tx)
    build_dag(trace)  # validates produce-before-consume
    return trace


# Synthetic trace generator -----------------------------------------------------

def generate_kitties_trace(
    n_txs: int = 1000,
    seed: int = 0,
    n_owners: int = 40,
    promo_fraction: float = 0.26,
    new_pair_prob: float = 0.30,
    foreign_sire_prob: float = 0.45,
    algo: str = DEFAULT_ALGO,
) -> list[TraceTx]:
    """Breeding-game trace with heavy pair reuse.

    Pair reuse is the knob that controls the cross-shard rate of a sharded
    replay: only a freshly introduced pair is likely to span shards, since a
    reused sire already sits on its dam's shard.
    """
    rng = random.Random(f"kitty-trace:{seed}")
    rows: list[TraceTx] = []
    versions: dict[str, int] = {}
    genes: dict[str, bytes] = {}
    owners: dict[str, str] = {}
    parents: dict[str, tuple] = {}
    births: dict[str, int] = {}
    pairs: list[tuple[str, str]] = []
    cats: list[str] = []
    next_cat = 0
    next_id = 1

    def emit(op, args, consumed=(), written=(), created=()):
        nonlocal next_id
        consumes = tuple(f"{obj}@{versions[obj]}" for obj in consumed)
        produces = []
        for obj in written:
            versions[obj] += 1
            produces.append(f"{obj}@{versions[obj]}")
        for obj in created:
            versions[obj] = 0
            produces.append(f"{obj}@0")
        rows.append(TraceTx(next_id, op, args, tuple(produces), consumes))
        next_id += 1

    def new_cat(owner: str, cat_genes: bytes, cat_parents: tuple) -> str:
        nonlocal next_cat
        obj = f"c{next_cat}"
        next_cat += 1
        genes[obj] = cat_genes
        owners[obj] = owner
        parents[obj] = cat_parents
        births[obj] = 0
        cats.append(obj)
        return obj

    def forbidden(dam: str, sire: str) -> bool:
        if dam == sire:
            return True
        dam_parents = {p for p in parents[dam] if p}
        sire_parents = {p for p in parents[sire] if p}
        if dam_parents & sire_parents:
            return True
        return sire in dam_parents or dam in sire_parents

    def sample_new_pair() -> Optional[tuple[str, str]]:
        for _ in range(64):
            dam = cats[rng.randrange(len(cats))]
            sire = cats[rng.randrange(len(cats))]
            if forbidden(dam, sire):
                continue
            if owners[dam] != owners[sire] and rng.random() >= foreign_sire_prob:
                continue
            return dam, sire
        return None

    promo_target = max(2, round(n_txs * promo_fraction))
    while len(rows) < n_txs:
        if next_cat < promo_target or len(cats) < 2:
            owner = f"client-{rng.randrange(n_owners)}"
            cat_genes = rng.getrandbits(256).to_bytes(32, "big")
            obj = new_cat(owner, cat_genes, (None, None))
            emit(
                "create_promo",
                {"cat": obj, "owner": owner, "genes": cat_genes.hex()},
                created=[obj],
            )
            continue
        pair = None
        if pairs and rng.random() >= new_pair_prob:
            pair = pairs[rng.randrange(len(pairs))]
        else:
            pair = sample_new_pair()
            if pair is None and pairs:
                pair = pairs[rng.randrange(len(pairs))]
        if pair is None:
            continue
        dam, sire = pair
        if owners[dam] != owners[sire]:
            emit(
                "approve",
                {"cat": sire, "for_cat": dam},
                consumed=[sire],
                written=[sire],
            )
        emit("breed", {"dam": dam, "sire": sire}, consumed=[dam, sire], written=[dam, sire])
        litter_genes = kitties.child_genes(genes[dam], genes[sire], births[dam], algo)
        child = new_cat(owners[dam], litter_genes, (dam, sire))
        emit(
            "give_birth",
            {"dam": dam, "child": child, "genes": litter_genes.hex()},
            consumed=[dam],
            written=[dam],
            created=[child],
        )
        births[dam] += 1
        if pair not in pairs:
            pairs.append(pair)
    return rows[:n_txs]


# Identities ----------------------------------------------------------------------

def named_identity(name: str) -> bytes:
    return digest(b"ident:" + name.encode("utf-8"), "sha256")[:20]


def client_identity(index: int) -> bytes:
    return digest(b"client:" + be(index, 8), "sha256")[:20]


def object_shard(obj: str, n_shards: int) -> int:
    """Hash routing of a trace object name to its initial shard."""
    return int.from_bytes(digest(b"obj:" + obj.encode("utf-8"), "sha256"), "big") % n_shards


# DAG replay ----------------------------------------------------------------------

@dataclass
class KittiesCluster:
    games: list  # game contract address per chain index
    game_owner: bytes


@dataclass
class ReplayStats:
    total_trace_txs: int = 0
    completed: int = 0
    moves_inserted: int = 0
    cross_trace_txs: int = 0
    max_outstanding: int = 0
    drained_at: float = 0.0

    def to_dict(self) -> dict:
        return {
            "total_trace_txs": self.total_trace_txs,
            "completed": self.completed,
            "moves_inserted": self.moves_inserted,
            "cross_trace_txs": self.cross_trace_txs,
            "max_outstanding": self.max_outstanding,
            "drained_at": self.drained_at,
        }


class ReplayDriver:
    """Drains a dependency DAG through a sharded simulation.

    Every trace transaction must succeed; a cross-shard breeding pair is
    resolved by moving the sire to the dam's shard first.
    """

    def __init__(self, sim, cluster: KittiesCluster, trace: list[TraceTx],
                 max_outstanding: int = 250, collector=None,
                 on_outstanding: Optional[Callable[[int], None]] = None):
        self.sim = sim
        self.cluster = cluster
        self.dag = build_dag(trace)
        self.trace_by_id = {tx.id: tx for tx in trace}
        self.max_outstanding = max_outstanding
        self.collector = collector
        self.on_outstanding = on_outstanding
        self.n_chains = len(sim.chains)
        self.obj_addr: dict[str, bytes] = {}
        self.obj_chain: dict[str, int] = {}
        self.obj_genes: dict[str, bytes] = {}
        self.obj_owner: dict[str, bytes] = {}
        for tx in trace:
            if tx.op == "create_promo":
                self.obj_genes[tx.args["cat"]] = bytes.fromhex(tx.args["genes"])
                self.obj_owner[tx.args["cat"]] = named_identity(tx.args["owner"])
            elif tx.op == "give_birth":
                self.obj_genes[tx.args["child"]] = bytes.fromhex(tx.args["genes"])
        for tx in trace:
            if tx.op == "give_birth":
                self.obj_owner[tx.args["child"]] = self.obj_owner[tx.args["dam"]]
        self.ready = deque(self.dag.initial_leaves)
        self.outstanding = 0
        self.stats = ReplayStats(total_trace_txs=len(trace))
        self._seqs: dict[bytes, int] = {}

    # Plumbing ------------------------------------------------------------------

    def _next_seq(self, sender: bytes) -> int:
        seq = self._seqs.get(sender, 0)
        self._seqs[sender] = seq + 1
        return seq

    def _submit(self, chain_index: int, tx: vm.Transaction, callback) -> None:
        self.sim.submit(self.sim.chains[chain_index], tx, callback)

    def _expect_ok(self, txid: int, receipt) -> None:
        if not receipt.ok:
            raise ReplayError(
                f"trace tx {txid} ({self.trace_by_id[txid].op}) aborted with "
                f"{receipt.reason} at height {receipt.included_height}"
            )

    # Driving --------------------------------------------------------------------

    def start(self) -> None:
        self.sim.after(0.0, self._pump)

    def _pump(self) -> None:
        while self.ready and self.outstanding < self.max_outstanding:
            txid = self.ready.popleft()
            self.outstanding += 1
            self.stats.max_outstanding = max(self.stats.max_outstanding, self.outstanding)
            if self.on_outstanding is not None:
                self.on_outstanding(self.outstanding)
            self._start_tx(txid)
        if self.outstanding == 0 and not self.ready and self.dag.remaining == 0:
            self.stats.drained_at = self.sim.now
            self.sim.stopped = True

    def _finish(self, txid: int, shard: int, start_time: float, cross: bool) -> None:
        self.outstanding -= 1
        self.stats.completed += 1
        if self.collector is not None:
            now = self.sim.now
            self.collector.record_op(
                shard,
                self.trace_by_id[txid].op,
                now - start_time,
                now,
                cross=cross,
            )
        self.ready.extend(self.dag.mark_done(txid))
        self._pump()

    def _start_tx(self, txid: int) -> None:
        tx = self.trace_by_id[txid]
        start_time = self.sim.now
        handler = {
            "create_promo": self._run_create_promo,
            "approve": self._run_approve,
            "breed": self._run_breed,
            "give_birth": self._run_give_birth,
        }.get(tx.op)
        if handler is None:
            raise ReplayError(f"trace tx {txid} has unknown op {tx.op!r}")
        handler(txid, tx, start_time)

    # Per-op runners ------------------------------------------------------------

    def _run_create_promo(self, txid: int, tx: TraceTx, start_time: float) -> None:
        obj = tx.args["cat"]
        shard = object_shard(obj, self.n_chains)
        sender = self.cluster.game_owner
        call = vm.Transaction(
            sender=sender,
            kind=vm.CALL,
            target=self.cluster.games[shard],
            method="create_promo",
            args=(self.obj_owner[obj], self.obj_genes[obj]),
            sender_seq=self._next_seq(sender),
            op_class="create_promo",
        )

        def done(receipt):
            self._expect_ok(txid, receipt)
            cat_addr = self._event_address(receipt, "CatCreated", "cat")
            self.obj_addr[obj] = cat_addr
            self.obj_chain[obj] = shard
            self._finish(txid, shard, start_time, cross=False)

        self._submit(shard, call, done)

    def _run_approve(self, txid: int, tx: TraceTx, start_time: float) -> None:
        sire, dam = tx.args["cat"], tx.args["for_cat"]
        shard = self.obj_chain[sire]
        sender = self.obj_owner[sire]
        call = vm.Transaction(
            sender=sender,
            kind=vm.CALL,
            target=self.obj_addr[sire],
            method="approve_siring",
            args=(self.obj_genes[dam],),
            sender_seq=self._next_seq(sender),
            op_class="approve_siring",
        )

        def done(receipt):
            self._expect_ok(txid, receipt)
            self._finish(txid, shard, start_time, cross=False)

        self._submit(shard, call, done)

    def _run_breed(self, txid: int, tx: TraceTx, start_time: float) -> None:
        dam, sire = tx.args["dam"], tx.args["sire"]
        dam_chain = self.obj_chain[dam]
        sire_chain = self.obj_chain[sire]
        if dam_chain == sire_chain:
            self._submit_breed(txid, tx, start_time, cross=False)
            return
        # The sire migrates to the dam's shard before the breeding call.
        self.stats.cross_trace_txs += 1
        self.stats.moves_inserted += 2
        sire_owner = self.obj_owner[sire]
        src = self.sim.chains[sire_chain]
        move1 = protocol.make_move1(
            sire_owner, self.obj_addr[sire], self.sim.chains[dam_chain].id,
            self._next_seq(sire_owner),
        )

        def after_move1(receipt):
            self._expect_ok(txid, receipt)
            self.sim.wait_chain_height(
                src, receipt.included_height + src.finality_depth, complete_move
            )

        def complete_move():
            payload = protocol.build_move2(src, self.obj_addr[sire])
            move2 = protocol.make_move2(sire_owner, payload, self._next_seq(sire_owner))

            def after_move2(receipt):
                self._expect_ok(txid, receipt)
                self.obj_chain[sire] = dam_chain
                self._submit_breed(txid, tx, start_time, cross=True)

            self._submit(dam_chain, move2, after_move2)

        self._submit(sire_chain, move1, after_move1)

    def _submit_breed(self, txid: int, tx: TraceTx, start_time: float, cross: bool) -> None:
        dam, sire = tx.args["dam"], tx.args["sire"]
        shard = self.obj_chain[dam]
        sender = self.obj_owner[dam]
        call = vm.Transaction(
            sender=sender,
            kind=vm.CALL,
            target=self.obj_addr[dam],
            method="breed_with",
            args=(self.obj_addr[sire],),
            sender_seq=self._next_seq(sender),
            op_class="breed",
        )

        def done(receipt):
            self._expect_ok(txid, receipt)
            self._finish(txid, shard, start_time, cross=cross)

        self._submit(shard, call, done)

    def _run_give_birth(self, txid: int, tx: TraceTx, start_time: float) -> None:
        dam, child = tx.args["dam"], tx.args["child"]
        shard = self.obj_chain[dam]
        sender = self.obj_owner[dam]
        call = vm.Transaction(
            sender=sender,
            kind=vm.CALL,
            target=self.obj_addr[dam],
            method="give_birth",
            args=(),
            sender_seq=self._next_seq(sender),
            op_class="give_birth",
        )

        def done(receipt):
            self._expect_ok(txid, receipt)
            cat_addr = self._event_address(receipt, "CatBorn", "cat")
            born_genes = self._event_field(receipt, "CatBorn", "genes")
            if bytes.fromhex(born_genes) != self.obj_genes[child]:
                raise ReplayError(
                    f"trace tx {txid}: executed genes diverged from the trace for {child}"
                )
            self.obj_addr[child] = cat_addr
            self.obj_chain[child] = shard
            self._finish(txid, shard, start_time, cross=False)

        self._submit(shard, call, done)

    # Receipt helpers -----------------------------------------------------------

    @staticmethod
    def _event_field(receipt, event_name: str, field_name: str):
        for name, fields in receipt.events:
            if name == event_name:
                return fields[field_name]
        raise ReplayError(f"receipt missing event {event_name}")

    def _event_address(self, receipt, event_name: str, field_name: str) -> bytes:
        return bytes.fromhex(self._event_field(receipt, event_name, field_name))

    # Final application state ----------------------------------------------------

    def final_app_state(self) -> dict:
        """Object-level game state, comparable across different shard counts."""
        addr_to_obj = {addr: obj for obj, addr in self.obj_addr.items()}

        def obj_of(addr: Optional[bytes]) -> Optional[str]:
            return None if addr is None else addr_to_obj[addr]

        out = {}
        for obj in sorted(self.obj_addr):
            chain = self.sim.chains[self.obj_chain[obj]]
            rec = chain.read_record(self.obj_addr[obj])
            if rec is None or rec.location != chain.id:
                raise ReplayError(f"object {obj} has no active record where expected")
            parent_a, parent_b = kitties.cat_parents(rec)
            out[obj] = {
                "genes": kitties.cat_genes(rec).hex(),
                "owner": kitties.cat_owner(rec).hex(),
                "parents": [obj_of(parent_a), obj_of(parent_b)],
                "pregnant_with": obj_of(kitties.cat_pregnant_with(rec)),
            }
        return out


# Closed-loop token clients ------------------------------------------------------

ORACLE_NO_CONFLICT = "ORACLE_NO_CONFLICT"
RETRY = "RETRY"


@dataclass
class ClientConfig:
    clients_per_shard: int = 250
    cross_shard_rate: float = 0.0
    mode: str = ORACLE_NO_CONFLICT
    retry_backoff_blocks: tuple = (0, 10)
    transfer_amount: int = 1
    initial_tokens: int = 1_000_000

    def validate(self) -> None:
        if not 0.0 <= self.cross_shard_rate <= 1.0:
            raise ValueError("cross_shard_rate must be within [0, 1]")
        if self.mode not in (ORACLE_NO_CONFLICT, RETRY):
            raise ValueError(f"unknown client mode {self.mode!r}")
        if self.clients_per_shard < 1:
            raise ValueError("clients_per_shard must be at least 1")
        lo, hi = self.retry_backoff_blocks
        if lo < 0 or hi < lo:
            raise ValueError("retry_backoff_blocks must be a nondecreasing pair")


@dataclass
class AccountInfo:
    index: int
    owner: bytes
    address: bytes
    salt: bytes
    origin_chain: int  # chain id baked into the derived address
    chain: int  # current hosting chain index
    initial_chain: int = 0


class _Pool:
    """Deterministic random-choice set with O(1) add/remove."""

    def __init__(self):
        self.items: list[int] = []
        self.pos: dict[int, int] = {}

    def add(self, item: int) -> None:
        self.pos[item] = len(self.items)
        self.items.append(item)

    def remove(self, item: int) -> None:
        index = self.pos.pop(item)
        last = self.items.pop()
        if last != item:
            self.items[index] = last
            self.pos[last] = index

    def pick(self, rng: random.Random, valid) -> Optional[int]:
        if not self.items:
            return None
        for _ in range(32):
            candidate = self.items[rng.randrange(len(self.items))]
            if valid(candidate):
                return candidate
        for candidate in self.items:
            if valid(candidate):
                return candidate
        return None


class ClosedLoopDriver:
    """One client per account; each submits its next transfer only after the
    previous operation completed.

    In ORACLE_NO_CONFLICT mode, clients coordinate through reservations so a
    destination is never mid-migration when a transfer lands: realized
    behavior is conflict-free. In RETRY mode, clients locate destinations by
    following location pointers and retry after a randomized block backoff
    whenever a transfer hits a moved or still-migrating contract.
    """

    def __init__(self, sim, accounts: list[AccountInfo], cfg: ClientConfig, collector, seed: int):
        cfg.validate()
        self.sim = sim
        self.accounts = accounts
        self.cfg = cfg
        self.collector = collector
        self.n_chains = len(sim.chains)
        self.chain_index = {chain.id: i for i, chain in enumerate(sim.chains)}
        self.pools = [_Pool() for _ in range(self.n_chains)]
        for account in accounts:
            self.pools[account.chain].add(account.index)
        n = len(accounts)
        self.reserved = [0] * n
        self.migrating = [False] * n
        self.release_waiters: dict[int, list] = {}
        self.rngs = [random.Random(f"client:{seed}:{i}") for i in range(n)]
        self.beliefs: list[dict[int, int]] = [dict() for _ in range(n)]
        self._seqs = [0] * n
        self.ops_started = 0
        self.started_by_class = {"single": 0, "cross": 0}

    def start(self) -> None:
        for i in range(len(self.accounts)):
            self.sim.after(0.0, lambda i=i: self._begin(i))

    # Shared helpers ------------------------------------------------------------

    def _next_seq(self, i: int) -> int:
        seq = self._seqs[i]
        self._seqs[i] = seq + 1
        return seq

    def _interval(self, chain_idx: int) -> float:
        return self.sim.chains[chain_idx].block_interval

    def _transfer_tx(self, i: int, dest: int) -> vm.Transaction:
        acc, dst = self.accounts[i], self.accounts[dest]
        return vm.Transaction(
            sender=acc.owner,
            kind=vm.CALL,
            target=acc.address,
            method="transfer",
            args=(dst.address, self.cfg.transfer_amount, dst.salt, dst.origin_chain),
            sender_seq=self._next_seq(i),
            op_class="transfer",
        )

    def _record(self, i: int, op: dict, receipt) -> None:
        acc = self.accounts[i]
        cross = op["class"] == "cross"
        self.collector.record_op(
            acc.chain,
            op["class"],
            receipt.included_time - op["start"],
            receipt.included_time,
            retries=op["retries"],
            cross=cross,
        )

    def _begin(self, i: int) -> None:
        self.ops_started += 1
        rng = self.rngs[i]
        wants_cross = (
            self.n_chains > 1
            and self.cfg.cross_shard_rate > 0
            and rng.random() < self.cfg.cross_shard_rate
        )
        self.started_by_class["cross" if wants_cross else "single"] += 1
        if self.cfg.mode == ORACLE_NO_CONFLICT:
            self._begin_oracle(i, wants_cross)
        else:
            self._begin_retry(i, wants_cross)

    # Oracle mode -----------------------------------------------------------------

    def _begin_oracle(self, i: int, cross: bool) -> None:
        acc = self.accounts[i]
        rng = self.rngs[i]
        if not cross:
            dest = self.pools[acc.chain].pick(
                rng, lambda j: j != i and not self.migrating[j]
            )
            if dest is None:
                self.sim.after(self._interval(acc.chain), lambda: self._begin_oracle(i, cross))
                return
            self.reserved[dest] += 1
            op = {"start": self.sim.now, "class": "single", "retries": 0}
            self._submit_transfer_oracle(i, dest, op)
            return
        # Take the account out of circulation for the whole migration.
        self.migrating[i] = True
        self.pools[acc.chain].remove(i)
        if self.reserved[i] > 0:
            self.release_waiters.setdefault(i, []).append(lambda: self._cross_body(i))
        else:
            self._cross_body(i)

    def _pick_remote(self, i: int) -> Optional[int]:
        rng = self.rngs[i]
        own_chain = self.accounts[i].chain
        n = len(self.accounts)
        for _ in range(64):
            j = rng.randrange(n)
            if j != i and self.accounts[j].chain != own_chain and not self.migrating[j]:
                return j
        for j in range(n):
            if j != i and self.accounts[j].chain != own_chain and not self.migrating[j]:
                return j
        return None

    def _cross_body(self, i: int) -> None:
        acc = self.accounts[i]
        dest = self._pick_remote(i)
        if dest is None:  # no eligible remote destination right now; keep trying
            self.sim.after(self._interval(acc.chain), lambda: self._cross_body(i))
            return
        self.reserved[dest] += 1
        op = {"start": self.sim.now, "class": "cross", "retries": 0}
        dest_chain = self.accounts[dest].chain
        src = self.sim.chains[acc.chain]
        move1 = protocol.make_move1(
            acc.owner, acc.address, self.sim.chains[dest_chain].id, self._next_seq(i)
        )

        def after_move1(receipt):
            if not receipt.ok:
                raise ReplayError(f"oracle-mode move1 aborted: {receipt.reason}")
            self.sim.wait_chain_height(
                src, receipt.included_height + src.finality_depth, complete
            )

        def complete():
            payload = protocol.build_move2(src, acc.address)
            move2 = protocol.make_move2(acc.owner, payload, self._next_seq(i))

            def after_move2(receipt):
                if not receipt.ok:
                    raise ReplayError(f"oracle-mode move2 aborted: {receipt.reason}")
                acc.chain = dest_chain
                self._submit_transfer_oracle(i, dest, op)

            self.sim.submit(self.sim.chains[dest_chain], move2, after_move2)

        self.sim.submit(src, move1, after_move1)

    def _submit_transfer_oracle(self, i: int, dest: int, op: dict) -> None:
        acc = self.accounts[i]

        def done(receipt):
            if not receipt.ok:
                raise ReplayError(f"oracle-mode transfer aborted: {receipt.reason}")
            self._release(dest)
            if self.migrating[i]:
                self.migrating[i] = False
                self.pools[acc.chain].add(i)
            self._record(i, op, receipt)
            self.sim.after(0.0, lambda: self._begin(i))

        self.sim.submit(self.sim.chains[acc.chain], self._transfer_tx(i, dest), done)

    def _release(self, dest: int) -> None:
        self.reserved[dest] -= 1
        if self.reserved[dest] == 0 and dest in self.release_waiters:
            for fn in self.release_waiters.pop(dest):
                self.sim.after(0.0, fn)

    # Retry mode -----------------------------------------------------------------

    def _begin_retry(self, i: int, wants_cross: bool) -> None:
        rng = self.rngs[i]
        acc = self.accounts[i]
        n = len(self.accounts)
        dest = None
        # Location pointers are free to read, so the pick tracks current
        # placements; conflicts come only from moves racing in-flight ops.
        for _ in range(64):
            j = rng.randrange(n)
            if j == i:
                continue
            if (self._resolve_location(i, j) != acc.chain) == wants_cross:
                dest = j
                break
        if dest is None:
            for j in range(n):
                if j != i:
                    dest = j
                    break
        op = {"start": self.sim.now, "class": "single", "retries": 0, "dest": dest}
        self._attempt_retry(i, op)

    def _resolve_location(self, i: int, j: int) -> int:
        """Follow location pointers from the last known host; reads are free."""
        address = self.accounts[j].address
        hop = self.beliefs[i].get(j, self.accounts[j].initial_chain)
        seen = set()
        for _ in range(self.n_chains + 2):
            rec = self.sim.chains[hop].read_record(address)
            if rec is None:
                break  # still in flight toward this chain
            loc = self.chain_index[rec.location]
            if loc == hop or hop in seen:
                break
            seen.add(hop)
            hop = loc
        self.beliefs[i][j] = hop
        return hop

    def _attempt_retry(self, i: int, op: dict) -> None:
        acc = self.accounts[i]
        dest_chain = self._resolve_location(i, op["dest"])
        if dest_chain == acc.chain:
            self._submit_transfer_retry(i, op)
            return
        op["class"] = "cross"
        src = self.sim.chains[acc.chain]
        move1 = protocol.make_move1(
            acc.owner, acc.address, self.sim.chains[dest_chain].id, self._next_seq(i)
        )

        def after_move1(receipt):
            if not receipt.ok:
                raise ReplayError(f"retry-mode move1 aborted: {receipt.reason}")
            self.sim.wait_chain_height(
                src, receipt.included_height + src.finality_depth, complete
            )

        def complete():
            payload = protocol.build_move2(src, acc.address)
            move2 = protocol.make_move2(acc.owner, payload, self._next_seq(i))

            def after_move2(receipt):
                if not receipt.ok:
                    raise ReplayError(f"retry-mode move2 aborted: {receipt.reason}")
                acc.chain = dest_chain
                self._submit_transfer_retry(i, op)

            self.sim.submit(self.sim.chains[dest_chain], move2, after_move2)

        self.sim.submit(src, move1, after_move1)

    def _submit_transfer_retry(self, i: int, op: dict) -> None:
        acc = self.accounts[i]
        rng = self.rngs[i]

        def done(receipt):
            if receipt.ok:
                self._record(i, op, receipt)
                self.sim.after(0.0, lambda: self._begin(i))
                return
            if receipt.reason not in (vm.CONTRACT_MOVED, vm.NO_SUCH_CONTRACT):
                raise ReplayError(f"retry-mode transfer aborted with {receipt.reason}")
            op["retries"] += 1
            lo, hi = self.cfg.retry_backoff_blocks
            backoff = rng.randint(lo, hi) * self._interval(acc.chain)
            self.sim.after(backoff, lambda: self._attempt_retry(i, op))

        self.sim.submit(self.sim.chains[acc.chain], self._transfer_tx(i, op["dest"]), done)
