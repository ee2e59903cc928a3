"""Deterministic discrete-event orchestration of N chains.

A single heap drives the run: block production fires per chain at its
configured interval, and client continuations are scheduled behind every
block event at the same instant. Event order is part of the public
contract: (time, chain id, submission sequence), with client callbacks
ordered after all chain events of that instant.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Callable, Optional

from . import protocol, vm, workload
from .apps import kitties, payload, scoin, standard_registry
from .chain import Chain, ChainConfig
from .hashing import DEFAULT_ALGO, digest, known_algorithms
from .metrics import Collector, MetricsReport
from .workload import (
    AccountInfo,
    ClientConfig,
    ClosedLoopDriver,
    KittiesCluster,
    ReplayDriver,
    client_identity,
    named_identity,
)

CLIENT_ORDER = 1 << 40  # sorts after any chain's block event at the same time
DELIVERY_ORDER = -1  # header deliveries sort before block events at the same time


def shard_of(address: bytes, n_shards: int, algo: str = DEFAULT_ALGO) -> int:
    """Hash partitioning: the shard is decided by the hash of the address."""
    if n_shards < 1:
        raise ValueError("n_shards must be at least 1")
    return int.from_bytes(digest(address, algo), "big") % n_shards


class Simulation:
    """Owns the chains, the clock, and the event heap."""

    def __init__(
        self,
        configs: list[ChainConfig],
        registry: Optional[vm.BehaviorRegistry] = None,
        on_event: Optional[Callable[[dict], None]] = None,
        header_delay: float = 0.0,
        check: bool = False,
    ):
        self.registry = registry or standard_registry()
        self.chains = [
            Chain(cfg, self.registry, on_event=on_event, defer=self._defer_delivery)
            for cfg in configs
        ]
        for a in self.chains:
            for b in self.chains:
                if a is not b:
                    a.add_peer(b, header_delay)
        self.now = 0.0
        self.stopped = False
        self._heap: list = []
        self._seq = 0
        self._tx_callbacks: dict[bytes, Callable] = {}
        self._height_waiters: dict[int, list] = {chain.id: [] for chain in self.chains}
        self._block_listeners: list[Callable] = []
        self.auditor = Auditor(self) if check else None

    # Scheduling ---------------------------------------------------------------

    def schedule(self, time: float, order: int, fn: Callable) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (time, order, self._seq, fn))

    def after(self, delay: float, fn: Callable) -> None:
        self.schedule(self.now + delay, CLIENT_ORDER, fn)

    def _defer_delivery(self, delay: float, fn: Callable) -> None:
        self.schedule(self.now + delay, DELIVERY_ORDER, fn)

    # Setup ---------------------------------------------------------------------

    def genesis(self, allocs: Optional[dict] = None, balances: Optional[dict] = None) -> None:
        """Produce block 0 on every chain, committing any pre-state."""
        allocs = allocs or {}
        balances = balances or {}
        for index, chain in enumerate(self.chains):
            chain.set_genesis_alloc(allocs.get(index, {}), balances.get(index, {}))
            chain.produce_genesis(at_time=self.now)
        if self.auditor is not None:
            self.auditor.capture_baseline()

    # Interaction ---------------------------------------------------------------

    def submit(self, chain: Chain, tx: vm.Transaction, on_receipt: Optional[Callable] = None) -> None:
        chain.submit_tx(tx)
        if on_receipt is not None:
            self._tx_callbacks[tx.tx_hash(chain.algo)] = on_receipt

    def wait_chain_height(self, chain: Chain, height: int, fn: Callable) -> None:
        if chain.head_height >= height:
            self.after(0.0, fn)
        else:
            self._height_waiters[chain.id].append((height, fn))

    def add_block_listener(self, fn: Callable) -> None:
        self._block_listeners.append(fn)

    # Run loop --------------------------------------------------------------------

    def run(self, duration: Optional[float] = None, max_time: Optional[float] = None) -> None:
        """Advance simulated time.

        With ``duration``, block production stops after that instant and the
        run ends once no event at or before it remains. With ``max_time`` the
        run continues until a driver sets ``stopped`` (or max_time trips,
        which raises).
        """
        if duration is not None and duration <= 0:
            return
        for index, chain in enumerate(self.chains):
            self._schedule_production(index, chain, duration)
        while self._heap and not self.stopped:
            time, order, seq, fn = heapq.heappop(self._heap)
            if duration is not None and time > duration:
                break
            if duration is None and max_time is not None and time > max_time:
                raise RuntimeError(f"simulation exceeded max_time {max_time}")
            self.now = time
            fn()

    def _schedule_production(self, index: int, chain: Chain, duration: Optional[float]) -> None:
        def produce():
            if self.stopped:
                return
            block = chain.produce_block(self.now)
            self._on_block(index, chain, block)
            next_time = self.now + chain.block_interval
            if duration is None or next_time <= duration:
                self.schedule(next_time, chain.id, produce)

        first = self.now + chain.block_interval
        if duration is None or first <= duration:
            self.schedule(first, chain.id, produce)

    def _on_block(self, index: int, chain: Chain, block) -> None:
        for receipt in block.receipts:
            callback = self._tx_callbacks.pop(receipt.tx_hash, None)
            if callback is not None:
                self.schedule(self.now, CLIENT_ORDER, lambda cb=callback, r=receipt: cb(r))
        waiters = self._height_waiters[chain.id]
        if waiters:
            still_waiting = []
            for height, fn in waiters:
                if chain.head_height >= height:
                    self.schedule(self.now, CLIENT_ORDER, fn)
                else:
                    still_waiting.append((height, fn))
            self._height_waiters[chain.id] = still_waiting
        for listener in self._block_listeners:
            listener(index, chain, block)
        if self.auditor is not None:
            self.auditor.after_block(chain)


class Auditor:
    """Global invariant checks across all chains of a simulation:
    a contract is active on at most one chain, and its nonce sequence is
    strictly increasing over its whole multi-chain lifetime.
    """

    def __init__(self, sim: Simulation):
        self.sim = sim
        self.violations: list[str] = []
        self._active_on: dict[bytes, set] = {}
        self._last_nonce: dict[bytes, int] = {}
        for chain in sim.chains:
            chain.on_commit = self._on_commit

    def capture_baseline(self) -> None:
        for chain in self.sim.chains:
            for addr, rec in chain.state.contracts.items():
                if rec.location == chain.id:
                    self._active_on.setdefault(addr, set()).add(chain.id)
                self._last_nonce[addr] = max(self._last_nonce.get(addr, -1), rec.nonce)
        for addr, chains in self._active_on.items():
            if len(chains) > 1:
                self.violations.append(
                    f"genesis: contract {addr.hex()} active on {sorted(chains)}"
                )

    def _on_commit(self, chain, addr: bytes, rec) -> None:
        previous = self._last_nonce.get(addr)
        if previous is not None and rec.nonce <= previous:
            self.violations.append(
                f"t={chain.executing_time}: nonce of {addr.hex()} moved {previous} -> {rec.nonce}"
            )
        self._last_nonce[addr] = rec.nonce
        active = self._active_on.setdefault(addr, set())
        if rec.location == chain.id:
            active.add(chain.id)
        else:
            active.discard(chain.id)
        if len(active) > 1:
            self.violations.append(
                f"t={chain.executing_time}: contract {addr.hex()} active on {sorted(active)}"
            )

    def after_block(self, chain) -> None:
        pass  # per-commit checks are sufficient; kept as an extension point


# Experiment configuration --------------------------------------------------------


@dataclass
class ExperimentConfig:
    workload: dict
    n_shards: int = 1
    duration: float = 120.0
    seed: int = 0
    block_interval: float = 5.0
    finality_depth: int = 2
    gas_mode: str = "BURROW_LIKE"
    block_tx_limit: int = 250
    hash_algo: str = DEFAULT_ALGO
    gas_price_gwei: float = 2.0
    token_usd: float = 144.0
    metrics_interval: float = 10.0
    header_delay: float = 0.0
    check: bool = False
    gas_schedule: Optional[dict] = None  # overrides the mode's default constants
    chains: Optional[list] = None  # explicit per-chain configs for heterogeneous runs

    KINDS = ("closed_loop", "ibc", "trace")

    def validate(self) -> None:
        kind = self.workload.get("kind")
        if kind not in self.KINDS:
            raise ValueError(f"workload kind must be one of {self.KINDS}, got {kind!r}")
        if self.n_shards < 1:
            raise ValueError("n_shards must be at least 1")
        if self.duration < 0:
            raise ValueError("duration must be nonnegative")
        if self.block_interval <= 0:
            raise ValueError("block_interval must be positive")
        if self.finality_depth < 1:
            raise ValueError("finality_depth must be at least 1")
        if self.hash_algo not in known_algorithms():
            raise ValueError(f"unknown hash algorithm {self.hash_algo!r}")
        if self.metrics_interval <= 0:
            raise ValueError("metrics_interval must be positive")
        if self.gas_schedule is not None:
            vm.GasSchedule.from_dict(self.gas_schedule)
        if kind == "closed_loop":
            self.client_config().validate()
        if kind == "ibc":
            op = self.workload.get("op")
            if op not in ("scoin", "kitties", "state1", "state10", "state100"):
                raise ValueError(f"unknown ibc op {op!r}")
            direction = self.workload.get("direction", "eth-to-burrow")
            if direction not in ("eth-to-burrow", "burrow-to-eth"):
                raise ValueError(f"unknown ibc direction {direction!r}")
        if kind == "trace":
            if not self.workload.get("path") and not self.workload.get("trace"):
                raise ValueError("trace workload needs a path or an inline trace")

    def client_config(self) -> ClientConfig:
        w = self.workload
        return ClientConfig(
            clients_per_shard=int(w.get("clients_per_shard", 250)),
            cross_shard_rate=float(w.get("cross_shard_rate", 0.0)),
            mode=str(w.get("mode", workload.ORACLE_NO_CONFLICT)),
            retry_backoff_blocks=tuple(w.get("retry_backoff_blocks", (0, 10))),
            transfer_amount=int(w.get("transfer_amount", 1)),
            initial_tokens=int(w.get("initial_tokens", 1_000_000)),
        )

    def to_dict(self) -> dict:
        return {
            "workload": dict(self.workload),
            "n_shards": self.n_shards,
            "duration": self.duration,
            "seed": self.seed,
            "block_interval": self.block_interval,
            "finality_depth": self.finality_depth,
            "gas_mode": self.gas_mode,
            "block_tx_limit": self.block_tx_limit,
            "hash_algo": self.hash_algo,
            "gas_price_gwei": self.gas_price_gwei,
            "token_usd": self.token_usd,
            "metrics_interval": self.metrics_interval,
            "header_delay": self.header_delay,
            "check": self.check,
            "gas_schedule": self.gas_schedule,
            "chains": self.chains,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        config = cls(**data)
        config.validate()
        return config

    def shard_chain_configs(self) -> list[ChainConfig]:
        return [
            ChainConfig(
                chain_id=i,
                block_interval=self.block_interval,
                finality_depth=self.finality_depth,
                gas_mode=self.gas_mode,
                block_tx_limit=self.block_tx_limit,
                hash_algo=self.hash_algo,
                gas_schedule=self.gas_schedule,
            )
            for i in range(self.n_shards)
        ]


def _collector(config: ExperimentConfig, n_shards: int) -> Collector:
    threshold = (config.finality_depth + 2) * config.block_interval
    return Collector(
        n_shards=n_shards,
        interval=config.metrics_interval,
        duration=config.duration,
        gas_price_gwei=config.gas_price_gwei,
        token_usd=config.token_usd,
        cross_shard_threshold=threshold,
    )


def _wire_gas_collection(sim: Simulation, collector: Collector) -> None:
    def on_block(index, chain, block):
        for receipt in block.receipts:
            collector.record_receipt(receipt)

    sim.add_block_listener(on_block)


def _finalize(collector: Collector, config: ExperimentConfig, sim: Simulation,
              extra: Optional[dict] = None) -> MetricsReport:
    violations = sim.auditor.violations if sim.auditor is not None else []
    return collector.finalize(config.seed, config.to_dict(), extra=extra, violations=violations)


# SCoin cluster construction --------------------------------------------------------

DEPLOYER = named_identity("deployer")
TOKEN_SALT = vm.w32(0)


def build_scoin_cluster(
    n_shards: int,
    clients_per_shard: int,
    initial_tokens: int,
    algo: str = DEFAULT_ALGO,
):
    """Token on chain 0 plus hash-placed accounts, capped per shard.

    Accounts are derived as if minted by the token on chain 0 and handed to
    each shard's genesis, which is the steady state an operator would reach
    by minting and migrating; the derivation stays attestation-correct.
    """
    token_addr = vm.derive_address(0, DEPLOYER, TOKEN_SALT, scoin.TOKEN_CODE_HASH, algo)
    accounts: list[AccountInfo] = []
    fill = [0] * n_shards
    salt_index = 0
    while any(count < clients_per_shard for count in fill):
        salt = vm.w32(salt_index)
        address = vm.derive_address(0, token_addr, salt, scoin.ACCOUNT_CODE_HASH, algo)
        shard = shard_of(address, n_shards, algo)
        if fill[shard] < clients_per_shard:
            index = len(accounts)
            accounts.append(
                AccountInfo(
                    index=index,
                    owner=client_identity(index),
                    address=address,
                    salt=salt,
                    origin_chain=0,
                    chain=shard,
                    initial_chain=shard,
                )
            )
            fill[shard] += 1
        salt_index += 1

    allocs: dict[int, dict] = {i: {} for i in range(n_shards)}
    total = initial_tokens * len(accounts)
    token_record = scoin.genesis_token(0, DEPLOYER, DEPLOYER, TOKEN_SALT, total, salt_index, algo)
    allocs[0][token_record.address] = token_record
    for account in accounts:
        record = scoin.genesis_account(
            creation_chain=0,
            hosting_chain=account.chain,
            token_address=token_addr,
            owner=account.owner,
            salt_index=int.from_bytes(account.salt, "big"),
            initial=initial_tokens,
            algo=algo,
        )
        allocs[account.chain][record.address] = record
    return token_addr, accounts, allocs


# Experiments ----------------------------------------------------------------------

def run_sharding_experiment(config: ExperimentConfig,
                            on_event: Optional[Callable[[dict], None]] = None) -> MetricsReport:
    config.validate()
    client_cfg = config.client_config()
    sim = Simulation(
        config.shard_chain_configs(),
        on_event=on_event,
        header_delay=config.header_delay,
        check=config.check,
    )
    collector = _collector(config, config.n_shards)
    _wire_gas_collection(sim, collector)
    _, accounts, allocs = build_scoin_cluster(
        config.n_shards, client_cfg.clients_per_shard, client_cfg.initial_tokens, config.hash_algo
    )
    sim.genesis(allocs)
    driver = ClosedLoopDriver(sim, accounts, client_cfg, collector, config.seed)
    driver.start()
    sim.run(duration=config.duration)
    extra = {"ops_started_by_class": dict(driver.started_by_class)}
    return _finalize(collector, config, sim, extra=extra)


def _ibc_chain_configs(config: ExperimentConfig) -> list[ChainConfig]:
    if config.chains:
        return [ChainConfig(**spec) for spec in config.chains]
    return [
        ChainConfig.ethereum_like(0, hash_algo=config.hash_algo),
        ChainConfig.burrow_like(1, hash_algo=config.hash_algo),
    ]


def run_ibc_experiment(config: ExperimentConfig,
                       on_event: Optional[Callable[[dict], None]] = None) -> MetricsReport:
    """Move one application's contract between two heterogeneous chains and
    time every stage; gas is broken out per operation."""
    config.validate()
    op = config.workload["op"]
    direction = config.workload.get("direction", "eth-to-burrow")
    configs = _ibc_chain_configs(config)
    sim = Simulation(configs, on_event=on_event,
                     header_delay=config.header_delay, check=config.check)
    src_index, dst_index = (0, 1) if direction == "eth-to-burrow" else (1, 0)
    src, dst = sim.chains[src_index], sim.chains[dst_index]
    algo = config.hash_algo

    collector = _collector(config, len(sim.chains))
    _wire_gas_collection(sim, collector)

    client = named_identity("ibc-client")
    peer = named_identity("ibc-peer")
    allocs: dict[int, dict] = {src_index: {}, dst_index: {}}
    timeline: dict[str, float] = {}
    post_ops: list = []  # (op_class, build_tx) run on dst after arrival

    if op == "scoin":
        token_addr = vm.derive_address(src.id, DEPLOYER, TOKEN_SALT, scoin.TOKEN_CODE_HASH, algo)
        token_record = scoin.genesis_token(src.id, DEPLOYER, DEPLOYER, TOKEN_SALT, 100, 2, algo)
        subject = scoin.genesis_account(src.id, src.id, token_addr, client, 0, 100, algo)
        counterparty = scoin.genesis_account(src.id, dst.id, token_addr, peer, 1, 0, algo)
        allocs[src_index][token_record.address] = token_record
        allocs[src_index][subject.address] = subject
        allocs[dst_index][counterparty.address] = counterparty
        post_ops.append(
            (
                "transfer",
                lambda seq: vm.Transaction(
                    sender=client,
                    kind=vm.CALL,
                    target=subject.address,
                    method="transfer",
                    args=(counterparty.address, 10, vm.w32(1), src.id),
                    sender_seq=seq,
                    op_class="transfer",
                ),
            )
        )
    elif op == "kitties":
        game_src = kitties.genesis_game(src.id, DEPLOYER, DEPLOYER, vm.w32(0), 1, algo)
        game_dst = kitties.genesis_game(dst.id, DEPLOYER, DEPLOYER, vm.w32(0), 1, algo)
        sire_genes = digest(b"ibc-sire", algo)[:32]
        dam_genes = digest(b"ibc-dam", algo)[:32]
        subject = kitties.genesis_cat(src.id, game_src.address, 0, client, sire_genes, algo)
        dam = kitties.genesis_cat(dst.id, game_dst.address, 0, client, dam_genes, algo)
        allocs[src_index][game_src.address] = game_src
        allocs[src_index][subject.address] = subject
        allocs[dst_index][game_dst.address] = game_dst
        allocs[dst_index][dam.address] = dam
        post_ops.append(
            (
                "breed",
                lambda seq: vm.Transaction(
                    sender=client,
                    kind=vm.CALL,
                    target=dam.address,
                    method="breed_with",
                    args=(subject.address,),
                    sender_seq=seq,
                    op_class="breed",
                ),
            )
        )
        post_ops.append(
            (
                "give_birth",
                lambda seq: vm.Transaction(
                    sender=client,
                    kind=vm.CALL,
                    target=dam.address,
                    method="give_birth",
                    args=(),
                    sender_seq=seq,
                    op_class="give_birth",
                ),
            )
        )
    else:
        count = {"state1": 1, "state10": 10, "state100": 100}[op]
        subject = payload.genesis_state_contract(src.id, DEPLOYER, vm.w32(7), count, algo)
        allocs[src_index][subject.address] = subject

    sim.genesis(allocs)

    seq_counter = {"next": 0}

    def next_seq() -> int:
        seq_counter["next"] += 1
        return seq_counter["next"] - 1

    eligibility = {"height": None, "seen": False}

    def eligibility_probe(index, chain, block):
        if eligibility["seen"] or eligibility["height"] is None:
            return
        height = eligibility["height"]
        root = src.blocks[height].header.state_root
        if dst.verify_peer_root(src.id, root, height):
            eligibility["seen"] = True
            timeline["move2_eligible_at"] = sim.now
            sim.after(0.0, submit_move2)

    sim.add_block_listener(eligibility_probe)

    def start():
        timeline["move1_submitted_at"] = sim.now
        move1 = protocol.make_move1(client, subject.address, dst.id, next_seq())
        sim.submit(src, move1, after_move1)

    def after_move1(receipt):
        if not receipt.ok:
            raise RuntimeError(f"move1 aborted: {receipt.reason}")
        timeline["move1_included_at"] = receipt.included_time
        collector.record_op(src_index, "move1", receipt.included_time - timeline["move1_submitted_at"],
                            receipt.included_time)
        eligibility["height"] = receipt.included_height

    def submit_move2():
        payload_msg = protocol.build_move2(src, subject.address)
        move2 = protocol.make_move2(client, payload_msg, next_seq())
        timeline["move2_submitted_at"] = sim.now
        sim.submit(dst, move2, after_move2)

    def after_move2(receipt):
        if not receipt.ok:
            raise RuntimeError(f"move2 aborted: {receipt.reason}")
        timeline["move2_included_at"] = receipt.included_time
        collector.record_op(dst_index, "move2", receipt.included_time - timeline["move2_submitted_at"],
                            receipt.included_time)
        run_post_ops(0)

    def run_post_ops(index):
        if index >= len(post_ops):
            timeline["completed_at"] = sim.now
            collector.record_op(
                dst_index,
                "ibc_total",
                sim.now - timeline["move1_submitted_at"],
                sim.now,
                cross=True,
            )
            sim.stopped = True
            return
        op_class, build = post_ops[index]
        submitted = sim.now
        tx = build(next_seq())

        def done(receipt):
            if not receipt.ok:
                raise RuntimeError(f"{op_class} aborted: {receipt.reason}")
            collector.record_op(dst_index, op_class, receipt.included_time - submitted,
                                receipt.included_time)
            run_post_ops(index + 1)

        sim.submit(dst, tx, done)

    sim.after(0.0, start)
    sim.run(max_time=config.duration if config.duration > 0 else 3600.0)
    timeline_extra = {
        "timeline": {key: timeline[key] for key in sorted(timeline)},
        "direction": direction,
        "op": op,
        "finality_wait": (
            timeline.get("move2_eligible_at", 0.0) - timeline.get("move1_included_at", 0.0)
        ),
    }
    return _finalize(collector, config, sim, extra=timeline_extra)


def run_dag_replay(config: ExperimentConfig,
                   on_event: Optional[Callable[[dict], None]] = None,
                   trace: Optional[list] = None) -> MetricsReport:
    config.validate()
    if trace is None:
        inline = config.workload.get("trace")
        if inline:
            trace = [workload.TraceTx.from_row(row) for row in inline]
        else:
            path = config.workload["path"]
            if path.startswith("generated:"):
                # synthesize instead of reading: "generated:<n_txs>"
                trace = workload.generate_kitties_trace(
                    n_txs=int(path.split(":", 1)[1]), seed=config.seed
                )
            else:
                trace = workload.load_trace(path)
    sim = Simulation(
        config.shard_chain_configs(),
        on_event=on_event,
        header_delay=config.header_delay,
        check=config.check,
    )
    collector = _collector(config, config.n_shards)
    _wire_gas_collection(sim, collector)
    allocs: dict[int, dict] = {}
    games = []
    for index, chain in enumerate(sim.chains):
        game = kitties.genesis_game(chain.id, DEPLOYER, DEPLOYER, vm.w32(0), 0, config.hash_algo)
        games.append(game.address)
        allocs[index] = {game.address: game}
    sim.genesis(allocs)
    cluster = KittiesCluster(games=games, game_owner=DEPLOYER)
    driver = ReplayDriver(
        sim,
        cluster,
        trace,
        max_outstanding=int(config.workload.get("max_outstanding", 250)),
        collector=collector,
    )
    driver.start()
    sim.run(max_time=config.duration if config.duration > 0 else 36000.0)
    if driver.dag.remaining:
        raise workload.ReplayError(
            f"replay did not drain: {driver.dag.remaining} transactions left at t={sim.now}"
        )
    extra = {
        "replay": driver.stats.to_dict(),
        "final_state": driver.final_app_state(),
    }
    report = _finalize(collector, config, sim, extra=extra)
    return report


def run(config: ExperimentConfig,
        on_event: Optional[Callable[[dict], None]] = None) -> MetricsReport:
    """Dispatch an experiment by its workload kind; (config, seed) fixes the output."""
    config.validate()
    kind = config.workload["kind"]
    if kind == "closed_loop":
        return run_sharding_experiment(config, on_event=on_event)
    if kind == "ibc":
        return run_ibc_experiment(config, on_event=on_event)
    return run_dag_replay(config, on_event=on_event)
