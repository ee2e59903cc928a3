"""End-to-end acceptance suite.

Each numbered test exercises one exit criterion at its stated tolerance and
prints a single summary line. Every harness experiment here is executed
twice with the same seed through ``run_deterministic``, which asserts byte
identity of the exported reports before handing the result back.
"""

import os
import random
import statistics

from conftest import Net, ident
from movesim import harness, merkle, protocol, vm, workload
from movesim.apps import scoin
from movesim.harness import ExperimentConfig
from movesim.protocol import build_move2
from movesim.vm import Behavior, behavior_code_hash, derive_address, skey, w32
from test_merkle import oracle_root

TRACE_PATH = os.path.join(os.path.dirname(__file__), "..", "data", "traces", "kitties_1k.jsonl")

_DETERMINISM_LEDGER: dict[str, int] = {}


def run_deterministic(config: ExperimentConfig):
    """Run the experiment twice; identical seeds must give identical bytes."""
    first = harness.run(config)
    second = harness.run(config)
    assert first.to_json() == second.to_json(), "same (config, seed) must be byte-identical"
    kind = config.workload["kind"]
    if kind == "closed_loop":
        kind += ":" + config.workload.get("mode", workload.ORACLE_NO_CONFLICT)
    _DETERMINISM_LEDGER[kind] = _DETERMINISM_LEDGER.get(kind, 0) + 1
    return first


def closed_loop(n_shards, clients, rate, duration, seed, mode=workload.ORACLE_NO_CONFLICT):
    return ExperimentConfig(
        workload={
            "kind": "closed_loop",
            "clients_per_shard": clients,
            "cross_shard_rate": rate,
            "mode": mode,
        },
        n_shards=n_shards,
        duration=duration,
        seed=seed,
    )


def _passed(name: str, detail: str = "") -> None:
    print(f"[acceptance] {name}: PASS {detail}".rstrip())


# -----------------------------------------------------------------------------
# 1. Cross-shard latency law


def test_criterion_01_cross_shard_latency_law():
    interval, depth = 5.0, 2
    unloaded = run_deterministic(closed_loop(2, 8, 0.25, 150.0, seed=101))
    cross = unloaded.latencies("cross")
    assert cross, "expected cross-shard samples"
    for sample in cross:
        assert 20.0 <= sample <= 30.0, f"unloaded cross sample {sample}s outside 5±1 intervals"
    loaded = run_deterministic(closed_loop(2, 250, 0.10, 150.0, seed=102))
    loaded_cross = loaded.latencies("cross")
    assert loaded_cross
    for sample in loaded_cross:
        assert 20.0 <= sample <= 35.0, f"loaded cross sample {sample}s above ~35s"
    mean = statistics.mean(cross)
    assert abs(mean - (3 + depth) * interval) <= interval
    _passed(
        "1 cross-shard latency law",
        f"(unloaded mean {mean:.1f}s in [20,30]; loaded max {max(loaded_cross):.1f}s <= 35)",
    )


# -----------------------------------------------------------------------------
# 2. Single-shard latency


def test_criterion_02_single_shard_latency():
    report = run_deterministic(closed_loop(2, 250, 0.10, 150.0, seed=102))
    singles = report.latencies("single")
    assert singles
    for sample in singles:
        assert 5.0 <= sample <= 10.0, f"single-shard sample {sample}s outside 1-2 intervals"
    _passed("2 single-shard latency", f"(all {len(singles)} samples within 1-2 block intervals)")


# -----------------------------------------------------------------------------
# 3. Throughput scaling


def test_criterion_03_throughput_scaling():
    means = {}
    for shards in (1, 2, 4, 8):
        report = run_deterministic(closed_loop(shards, 250, 0.0, 150.0, seed=103))
        means[shards] = report.mean_throughput()
    base = means[1]
    assert base > 0
    floors = {1: 1.0, 2: 1.8, 4: 3.5, 8: 7.0}
    for shards, floor in floors.items():
        ratio = means[shards] / base
        assert ratio >= floor, f"{shards} shards scaled only {ratio:.2f}x (need {floor}x)"
    rate_means = []
    for rate in (0.0, 0.01, 0.05, 0.10):
        report = run_deterministic(closed_loop(4, 250, rate, 150.0, seed=104))
        rate_means.append((rate, report.mean_throughput()))
    for (_, lower_rate_tput), (rate, tput) in zip(rate_means, rate_means[1:]):
        assert tput <= lower_rate_tput, f"throughput rose when cross rate grew to {rate}"
    _passed(
        "3 throughput scaling",
        f"(ratios {[round(means[s] / base, 2) for s in (1, 2, 4, 8)]}; "
        f"monotone over rates {[round(t, 1) for _, t in rate_means]})",
    )


# -----------------------------------------------------------------------------
# 4. Latency CDF shape


def test_criterion_04_latency_cdf_shape():
    report = run_deterministic(closed_loop(4, 250, 0.10, 200.0, seed=105))
    threshold = report.cross_shard_threshold
    fraction = report.fraction_above(threshold)
    assert 0.08 <= fraction <= 0.12, (
        f"{fraction:.3f} of samples above the cross-shard threshold {threshold}s, want 10%±2%"
    )
    _passed("4 latency CDF shape", f"({fraction * 100:.1f}% above {threshold:.0f}s)")


# -----------------------------------------------------------------------------
# 5. IBC timing


def test_criterion_05_ibc_timing():
    forward = run_deterministic(ExperimentConfig(
        workload={"kind": "ibc", "op": "state1", "direction": "eth-to-burrow"},
        duration=400.0, seed=106,
    ))
    wait = forward.extra["timeline"]["move2_eligible_at"] - forward.extra["timeline"]["move1_included_at"]
    assert wait == 90.0, f"forward eligibility wait {wait}s, expected exactly 90s"
    reverse = run_deterministic(ExperimentConfig(
        workload={"kind": "ibc", "op": "state1", "direction": "burrow-to-eth"},
        duration=400.0, seed=106,
    ))
    wait_back = reverse.extra["timeline"]["move2_eligible_at"] - reverse.extra["timeline"]["move1_included_at"]
    assert wait_back == 10.0, f"reverse eligibility wait {wait_back}s, expected exactly 10s"
    _passed("5 IBC timing", "(90.0s forward, 10.0s reverse, exact)")


# -----------------------------------------------------------------------------
# 6. Replay-attack reproduction


def counter_behavior():
    def touch(ctx, args):
        count = int.from_bytes(ctx.get(skey("count")) or bytes(32), "big")
        ctx.put(skey("count"), w32(count + 1))

    return Behavior(name="plain-counter", code_size=120, methods={"touch": touch})


def test_criterion_06_replay_attack_reproduction():
    from movesim.apps import standard_registry

    registry = standard_registry()
    registry.register(counter_behavior())
    net = Net(n=2, registry=registry)
    owner = ident("owner")
    assert net.create(0, owner, behavior_code_hash("plain-counter"), bytes(32)).ok
    address = derive_address(0, owner, bytes(32), behavior_code_hash("plain-counter"))
    assert net[0].read_record(address).nonce == 0

    # T1: lock on the first chain (nonce 0 -> 1)
    assert net.move1(0, owner, address, 1).ok
    net.finalize_lock(0, address)
    stale_payload = build_move2(net[0], address)
    assert stale_payload.proof.record.nonce == 1

    # T2: complete on the second chain (arrives at nonce 2)
    assert net.move2(1, owner, stale_payload).ok
    assert net[1].read_record(address).nonce == 2

    # T3: lock again for the return trip (nonce 2 -> 3)
    assert net.move1(1, owner, address, 0).ok
    assert net[1].state.nonce_watermarks[address] == 3
    net.finalize_lock(1, address)
    return_payload = build_move2(net[1], address)

    # T4: complete the return on the first chain
    assert net.move2(0, owner, return_payload).ok

    # The attack: replay the original completion payload on the second chain.
    receipt = net.move2(1, ident("attacker"), stale_payload)
    assert receipt.status == vm.ABORT and receipt.reason == vm.REPLAY
    assert stale_payload.proof.record.nonce == 1
    assert net[1].state.nonce_watermarks[address] == 3
    _passed("6 replay-attack reproduction", "(proved nonce 1 vs watermark 3 -> ABORT(Replay))")


# -----------------------------------------------------------------------------
# 7. Gas linearity


def test_criterion_07_gas_linearity():
    gas_by_n = {}
    for op, n in (("state1", 1), ("state10", 10), ("state100", 100)):
        report = run_deterministic(ExperimentConfig(
            workload={"kind": "ibc", "op": op, "direction": "eth-to-burrow"},
            duration=400.0, seed=107,
        ))
        row = report.gas_table["move2"]
        gas_by_n[n] = row["gas"]
        assert row["code_deposit_gas"] == 0, "BURROW_LIKE target must charge no code deposit"
    xs = sorted(gas_by_n)
    ys = [gas_by_n[x] for x in xs]
    n = len(xs)
    x_mean = sum(xs) / n
    y_mean = sum(ys) / n
    slope = sum((x - x_mean) * (y - y_mean) for x, y in zip(xs, ys)) / sum(
        (x - x_mean) ** 2 for x in xs
    )
    intercept = y_mean - slope * x_mean
    for x, y in zip(xs, ys):
        residual = abs(y - (intercept + slope * x)) / y
        assert residual < 0.01, f"residual {residual:.4f} at n={x} exceeds 1%"
    _passed(
        "7 gas linearity",
        f"(gas(n) = {intercept:.0f} + {slope:.0f}*n, residuals 0; deposit component 0)",
    )


# -----------------------------------------------------------------------------
# 8. Conservation fuzz


class GlobalLedgerOracle:
    """Brute-force mirror of everything the protocol is allowed to change."""

    def __init__(self, net, token, accounts, owners, factories, native0):
        self.net = net
        self.token = token
        self.supply = sum(a["balance"] for a in accounts.values())
        self.accounts = accounts  # addr -> {balance, owner, chain|None, target, nonce}
        self.owners = owners
        self.factories = factories
        self.relays = {}  # addr -> {locked, minted, tokens, origin, beneficiary, chain|None, target, nonce}
        self.native = {
            i: dict(chain.state.client_balances) for i, chain in enumerate(net.chains)
        }
        self.initial_native = {i: sum(b.values()) for i, b in self.native.items()}
        self.watermarks = [dict() for _ in net.chains]
        self.lock_heights = {}

    # Bookkeeping helpers -------------------------------------------------------

    def bump(self, chain_idx, addr, entry):
        entry["nonce"] += 1
        wm = self.watermarks[chain_idx]
        wm[addr] = max(wm.get(addr, -1), entry["nonce"])

    def entry(self, addr):
        return self.accounts.get(addr) or self.relays[addr]

    # Invariants ------------------------------------------------------------------

    def check_invariants(self):
        # Token conservation across every chain and in-flight window.
        total = 0
        for addr, acct in self.accounts.items():
            record = self._latest_record(addr, acct)
            onchain = scoin.account_balance(record)
            assert onchain == acct["balance"], (
                f"account {addr.hex()} balance {onchain} != oracle {acct['balance']}"
            )
            total += onchain
        assert total == self.supply, f"token supply drifted: {total} != {self.supply}"
        # Native currency conservation per chain of origin.
        for i, chain in enumerate(self.net.chains):
            circulating = sum(chain.state.client_balances.values())
            locked = 0
            for addr, relay in self.relays.items():
                if relay["origin"] == i:
                    locked += self._latest_record(addr, relay).balance
            assert circulating + locked == self.initial_native[i], (
                f"chain {i}: native {circulating} + locked {locked} != {self.initial_native[i]}"
            )
        # Exactly-one-active across all chains; zero while in flight.
        for addr in list(self.accounts) + list(self.relays):
            active = [c.id for c in self.net.chains if c.is_active(addr)]
            entry = self.entry(addr)
            if entry["chain"] is None:
                assert active == [], f"{addr.hex()} active at {active} during its move window"
            else:
                assert active == [entry["chain"]], (
                    f"{addr.hex()} active at {active}, oracle says {entry['chain']}"
                )

    def _latest_record(self, addr, entry):
        chain_idx = entry["chain"] if entry["chain"] is not None else entry["stale_chain"]
        record = self.net.chains[chain_idx].read_record(addr)
        assert record is not None
        return record


def test_criterion_08_conservation_fuzz():
    rng = random.Random(20_08)
    n_accounts = 12
    owners = [ident(f"fuzz-owner-{i}") for i in range(n_accounts)]
    token_owner = ident("fuzz-token-owner")
    balances = {
        i: {owner: 1_000 for owner in owners} for i in range(3)
    }
    net = Net(n=3, balances=balances)
    assert net.create(0, token_owner, scoin.TOKEN_CODE_HASH, bytes(32), (token_owner,)).ok
    token = derive_address(0, token_owner, bytes(32), scoin.TOKEN_CODE_HASH)
    accounts = {}
    for i, owner in enumerate(owners):
        receipt = net.call(0, token_owner, token, "newAccountFor", (owner, 100))
        assert receipt.ok
        addr = bytes.fromhex(dict(receipt.events)["CreatedAccount"]["account"])
        accounts[addr] = {
            "balance": 100, "owner": owner, "chain": 0, "target": None,
            "nonce": 0, "stale_chain": 0, "salt": w32(i), "origin": 0,
        }
    factories = []
    for i in range(3):
        creator = ident(f"factory-deployer-{i}")
        assert net.create(i, creator, protocol.RELAY_FACTORY_CODE_HASH, bytes(32)).ok
        factories.append(derive_address(i, creator, bytes(32), protocol.RELAY_FACTORY_CODE_HASH))

    oracle = GlobalLedgerOracle(net, token, accounts, owners, factories, balances)
    payload_bag = []  # accepted move2 payloads, for replay probes
    predictions = {}  # tx hash -> (status, reason)
    ops_done = 0
    target_ops = 10_000

    def submit(chain_idx, tx, status, reason=None):
        net.chains[chain_idx].submit_tx(tx)
        predictions[tx.tx_hash()] = (status, reason)

    def pick_same_chain_pair():
        by_chain = {}
        for addr, acct in oracle.accounts.items():
            if acct["chain"] is not None:
                by_chain.setdefault(acct["chain"], []).append(addr)
        options = [(c, addrs) for c, addrs in sorted(by_chain.items()) if len(addrs) >= 2]
        if not options:
            return None
        chain_idx, addrs = options[rng.randrange(len(options))]
        a, b = rng.sample(sorted(addrs), 2)
        return chain_idx, a, b

    def op_transfer():
        pick = pick_same_chain_pair()
        if pick is None:
            return False
        chain_idx, a, b = pick
        amount = rng.randrange(0, 40)
        acct_a, acct_b = oracle.accounts[a], oracle.accounts[b]
        tx = vm.Transaction(
            acct_a["owner"], vm.CALL, a, "transfer",
            (b, amount, acct_b["salt"], acct_b["origin"]),
            sender_seq=net.seq(acct_a["owner"]), op_class="transfer",
        )
        if acct_a["balance"] >= amount:
            submit(chain_idx, tx, vm.OK)
            acct_a["balance"] -= amount
            acct_b["balance"] += amount
            oracle.bump(chain_idx, a, acct_a)
            oracle.bump(chain_idx, b, acct_b)
        else:
            submit(chain_idx, tx, vm.ABORT, vm.INSUFFICIENT_BALANCE)
        return True

    def op_transfer_at_stale_host():
        # negative probe: transfers addressed to a blocked or absent record
        moved = [a for a, acct in oracle.accounts.items() if acct["chain"] is None]
        if not moved:
            return False
        victim = moved[rng.randrange(len(moved))]
        acct = oracle.accounts[victim]
        stale_idx = acct["stale_chain"]
        sender = acct["owner"]
        tx = vm.Transaction(sender, vm.CALL, victim, "transfer",
                            (victim, 0, acct["salt"], acct["origin"]),
                            sender_seq=net.seq(sender), op_class="transfer")
        submit(stale_idx, tx, vm.ABORT, vm.CONTRACT_MOVED)
        return True

    def op_move1():
        settled = [a for a, acct in oracle.accounts.items() if acct["chain"] is not None]
        if not settled:
            return False
        addr = settled[rng.randrange(len(settled))]
        acct = oracle.accounts[addr]
        src = acct["chain"]
        dst = (src + 1 + rng.randrange(2)) % 3
        tx = protocol.make_move1(acct["owner"], addr, net.chains[dst].id,
                                 net.seq(acct["owner"]))
        submit(src, tx, vm.OK)
        oracle.bump(src, addr, acct)
        acct["stale_chain"] = src
        acct["chain"] = None
        acct["target"] = dst
        oracle.lock_heights[addr] = (src, net.chains[src].head_height + 1)
        return True

    def op_move2():
        candidates = []
        for addr, acct in oracle.accounts.items():
            if acct["chain"] is None and addr in oracle.lock_heights:
                src, height = oracle.lock_heights[addr]
                if net.chains[src].head_height - height >= net.chains[src].finality_depth:
                    candidates.append(addr)
        if not candidates:
            return False
        addr = candidates[rng.randrange(len(candidates))]
        acct = oracle.accounts[addr]
        src, _ = oracle.lock_heights.pop(addr)
        payload_msg = build_move2(net.chains[src], addr)
        dst = acct["target"]
        sender = acct["owner"] if rng.random() < 0.7 else ident("completer")
        tx = protocol.make_move2(sender, payload_msg, net.seq(sender))
        proved = payload_msg.proof.record.nonce
        wm = oracle.watermarks[dst].get(addr, -1)
        assert proved > wm, "fresh completion should always clear the watermark"
        submit(dst, tx, vm.OK)
        acct["nonce"] = proved + 1
        oracle.watermarks[dst][addr] = acct["nonce"]
        acct["chain"] = dst
        acct["target"] = None
        payload_bag.append((payload_msg, dst))
        return True

    def op_replay():
        if not payload_bag:
            return False
        payload_msg, dst = payload_bag[rng.randrange(len(payload_bag))]
        addr = payload_msg.proof.record.address
        if rng.random() < 0.3:
            wrong = (dst + 1) % 3
            tx = protocol.make_move2(ident("attacker"), payload_msg, net.seq(ident("attacker")))
            submit(wrong, tx, vm.ABORT, vm.WRONG_TARGET)
            return True
        tx = protocol.make_move2(ident("attacker"), payload_msg, net.seq(ident("attacker")))
        proved = payload_msg.proof.record.nonce
        wm = oracle.watermarks[dst].get(addr, -1)
        assert proved <= wm, "bagged payloads were accepted once already"
        submit(dst, tx, vm.ABORT, vm.REPLAY)
        return True

    def op_relay_create():
        if len(oracle.relays) >= 40:  # bound the contract-set growth
            return False
        origin = rng.randrange(3)
        creator = owners[rng.randrange(len(owners))]
        beneficiary = owners[rng.randrange(len(owners))]
        amount = rng.randrange(0, 60)
        target = (origin + 1 + rng.randrange(2)) % 3
        tx = protocol.make_relay_create(creator, oracle.factories[origin], beneficiary,
                                        amount, net.chains[target].id, net.seq(creator))
        have = net.chains[origin].state.client_balances.get(creator, 0)
        pending = oracle.native[origin].get(creator, 0)
        if pending >= amount:
            submit(origin, tx, vm.OK)
            oracle.native[origin][creator] = pending - amount
            # the relay address becomes known from the receipt event
            predictions[tx.tx_hash()] = (vm.OK, ("relay_create", origin, target, beneficiary, amount))
        else:
            submit(origin, tx, vm.ABORT, vm.INSUFFICIENT_BALANCE)
        _ = have
        return True

    def op_relay_move2():
        candidates = []
        for addr, relay in oracle.relays.items():
            if relay["chain"] is None and addr in oracle.lock_heights:
                src, height = oracle.lock_heights[addr]
                if net.chains[src].head_height - height >= net.chains[src].finality_depth:
                    candidates.append(addr)
        if not candidates:
            return False
        addr = candidates[rng.randrange(len(candidates))]
        relay = oracle.relays[addr]
        src, _ = oracle.lock_heights.pop(addr)
        payload_msg = build_move2(net.chains[src], addr)
        dst = relay["target"]
        sender = relay["beneficiary"]
        tx = protocol.make_move2(sender, payload_msg, net.seq(sender))
        submit(dst, tx, vm.OK)
        relay["nonce"] = payload_msg.proof.record.nonce + 1
        oracle.watermarks[dst][addr] = relay["nonce"]
        relay["chain"] = dst
        relay["target"] = None
        payload_bag.append((payload_msg, dst))
        return True

    def op_relay_mint():
        ready = [
            (addr, relay)
            for addr, relay in oracle.relays.items()
            if relay["chain"] is not None and relay["chain"] != relay["origin"]
        ]
        if not ready:
            return False
        addr, relay = ready[rng.randrange(len(ready))]
        chain_idx = relay["chain"]
        if rng.random() < 0.2:
            outsider = ident("not-the-beneficiary")
            tx = protocol.make_relay_call(outsider, addr, "mint", net.seq(outsider))
            submit(chain_idx, tx, vm.ABORT, "NotBeneficiary")
            return True
        tx = protocol.make_relay_call(relay["beneficiary"], addr, "mint",
                                      net.seq(relay["beneficiary"]))
        if relay["minted"]:
            submit(chain_idx, tx, vm.ABORT, "AlreadyMinted")
        else:
            submit(chain_idx, tx, vm.OK)
            relay["minted"] = True
            relay["tokens"] = relay["locked"]
        return True

    ops = [
        (op_transfer, 5),
        (op_transfer_at_stale_host, 1),
        (op_move1, 3),
        (op_move2, 3),
        (op_replay, 1),
        (op_relay_create, 1),
        (op_relay_move2, 1),
        (op_relay_mint, 1),
    ]
    weighted = [fn for fn, weight in ops for _ in range(weight)]

    while ops_done < target_ops:
        submitted = 0
        for _ in range(rng.randrange(1, 4)):
            fn = weighted[rng.randrange(len(weighted))]
            if fn():
                submitted += 1
        blocks = net.step_all()
        for block in blocks:
            for receipt, tx in zip(block.receipts, block.transactions):
                expected = predictions.pop(receipt.tx_hash, None)
                if expected is None:
                    continue
                status, detail = expected
                assert receipt.status == status, (
                    f"{tx.op_class}: got {receipt.status}/{receipt.reason}, expected {status}/{detail}"
                )
                if status == vm.ABORT:
                    assert receipt.reason == detail, (
                        f"{tx.op_class}: abort reason {receipt.reason}, expected {detail}"
                    )
                elif isinstance(detail, tuple) and detail[0] == "relay_create":
                    _, origin, target, beneficiary, amount = detail
                    relay_addr = bytes.fromhex(dict(receipt.events)["RelayCreated"]["relay"])
                    oracle.relays[relay_addr] = {
                        "locked": amount, "minted": False, "tokens": 0,
                        "origin": origin, "beneficiary": beneficiary,
                        "chain": None, "target": target, "nonce": 0,
                        "stale_chain": origin,
                    }
                    oracle.lock_heights[relay_addr] = (origin, receipt.included_height)
        ops_done += submitted
        oracle.check_invariants()

    assert not predictions, "every submitted transaction must have been included"
    assert ops_done >= target_ops
    _passed("8 conservation fuzz", f"({ops_done} ops across 3 chains, all invariants held)")


# -----------------------------------------------------------------------------
# 9. Merkle soundness


def test_criterion_09_merkle_soundness():
    rng = random.Random(20_09)
    trees = 1000
    for _ in range(trees):
        count = rng.randint(1, 256)
        leaves = [rng.getrandbits(8 * 12).to_bytes(12, "big") for _ in range(count)]
        root = merkle.build_root(leaves)
        assert root == oracle_root(leaves), "root must match the brute-force recomputation"
        index = rng.randrange(count)
        proof = merkle.prove(leaves, index)
        assert merkle.verify_proof(root, leaves[index], proof)
        # single-bit mutation of the leaf
        mutated = bytearray(leaves[index])
        bit = rng.randrange(len(mutated) * 8)
        mutated[bit // 8] ^= 1 << (bit % 8)
        assert not merkle.verify_proof(root, bytes(mutated), proof)
        # single-bit mutation of a path sibling
        if proof.path:
            step_index = rng.randrange(len(proof.path))
            step = proof.path[step_index]
            sibling = bytearray(step.sibling)
            bit = rng.randrange(len(sibling) * 8)
            sibling[bit // 8] ^= 1 << (bit % 8)
            tampered = merkle.MerkleProof(
                proof.leaf_index,
                proof.path[:step_index]
                + (merkle.ProofStep(bytes(sibling), step.sibling_on_left),)
                + proof.path[step_index + 1 :],
            )
            assert not merkle.verify_proof(root, leaves[index], tampered)
    _passed("9 merkle soundness", f"({trees} random trees, honest pass, mutations fail)")


# -----------------------------------------------------------------------------
# 10. DAG replay equivalence


def replay_config(n_shards, seed):
    return ExperimentConfig(
        workload={"kind": "trace", "path": TRACE_PATH, "max_outstanding": 250},
        n_shards=n_shards,
        duration=0.0,
        seed=seed,
    )


def test_criterion_10_dag_replay_equivalence():
    trace = workload.load_trace(TRACE_PATH)
    assert len(trace) == 1000
    sharded = run_deterministic(replay_config(4, seed=110))
    oracle = run_deterministic(replay_config(1, seed=110))
    stats = sharded.extra["replay"]
    assert stats["completed"] == len(trace), "every trace transaction must succeed"
    assert stats["max_outstanding"] <= 250
    assert oracle.extra["replay"]["moves_inserted"] == 0
    assert sharded.extra["final_state"] == oracle.extra["final_state"], (
        "sharded final state must equal the single-chain sequential replay"
    )
    _passed(
        "10 DAG replay equivalence",
        f"(1000 txs, {stats['moves_inserted']} moves inserted, outstanding <= "
        f"{stats['max_outstanding']})",
    )


# -----------------------------------------------------------------------------
# 11. Retry skew


def test_criterion_11_retry_skew():
    report = run_deterministic(closed_loop(
        4, 250, 0.001, 400.0, seed=111, mode=workload.RETRY,
    ))
    histogram = report.retry_histogram
    retried = sum(count for retries, count in histogram.items() if retries >= 1)
    conflict_rate = retried / report.completed_ops
    assert conflict_rate <= 0.01, f"conflict rate {conflict_rate:.4f} above the 1% operating point"
    assert retried >= 30, f"not enough retried transactions ({retried}) to judge the skew"
    once = histogram.get(1, 0) / retried
    more_than_three = sum(count for retries, count in histogram.items() if retries > 3) / retried
    assert once >= 0.50, f"only {once:.2f} of retried txs retried exactly once"
    assert more_than_three <= 0.05, f"{more_than_three:.3f} of retried txs retried more than 3 times"
    _passed(
        "11 retry skew",
        f"(conflict rate {conflict_rate * 100:.2f}%; once {once * 100:.0f}%, "
        f">3 retries {more_than_three * 100:.1f}%)",
    )


# -----------------------------------------------------------------------------
# 12. Determinism


def test_criterion_12_determinism():
    # Every harness experiment in this module runs twice through
    # run_deterministic with a byte-identity assertion. When the module runs
    # as a whole the ledger is already full; fill any gap so this test also
    # stands alone.
    expected = {"closed_loop:ORACLE_NO_CONFLICT", "closed_loop:RETRY", "ibc", "trace"}
    if "closed_loop:ORACLE_NO_CONFLICT" not in _DETERMINISM_LEDGER:
        run_deterministic(closed_loop(2, 10, 0.2, 60.0, seed=112))
    if "closed_loop:RETRY" not in _DETERMINISM_LEDGER:
        run_deterministic(closed_loop(2, 10, 0.05, 60.0, seed=112, mode=workload.RETRY))
    if "ibc" not in _DETERMINISM_LEDGER:
        run_deterministic(ExperimentConfig(
            workload={"kind": "ibc", "op": "state1"}, duration=400.0, seed=112))
    if "trace" not in _DETERMINISM_LEDGER:
        run_deterministic(replay_config(2, seed=112))
    assert expected <= set(_DETERMINISM_LEDGER)
    total = sum(_DETERMINISM_LEDGER.values())
    _passed("12 determinism", f"({total} experiments re-run byte-identically)")


# -----------------------------------------------------------------------------
# Desk-scale wall-clock budget (module invariant, not a numbered criterion)


def test_wall_clock_budget_for_large_run():
    import time

    start = time.time()
    report = harness.run(closed_loop(8, 250, 0.0, 600.0, seed=112))
    elapsed = time.time() - start
    assert report.completed_ops == 8 * 250 * 120
    assert elapsed < 120.0, f"8-shard 2000-client 600s run took {elapsed:.0f}s of wall time"
    _passed("wall-clock budget", f"({elapsed:.1f}s wall for 240k transfers)")
