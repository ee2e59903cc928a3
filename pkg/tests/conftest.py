import pytest

from movesim import protocol, vm
from movesim.apps import standard_registry
from movesim.chain import Chain, ChainConfig


class Net:
    """A few manually clocked chains wired as peers, for protocol-level tests."""

    def __init__(self, n=2, interval=5.0, p=2, gas_mode="BURROW_LIKE", algo="sha256",
                 registry=None, balances=None, allocs=None):
        self.registry = registry or standard_registry()
        self.chains = [
            Chain(
                ChainConfig(
                    chain_id=i,
                    block_interval=interval,
                    finality_depth=p,
                    gas_mode=gas_mode,
                    hash_algo=algo,
                ),
                self.registry,
            )
            for i in range(n)
        ]
        for a in self.chains:
            for b in self.chains:
                if a is not b:
                    a.add_peer(b)
        for i, chain in enumerate(self.chains):
            chain.set_genesis_alloc(
                (allocs or {}).get(i, {}), (balances or {}).get(i, {})
            )
            chain.produce_genesis()
        self._seqs = {}

    def __getitem__(self, i):
        return self.chains[i]

    def seq(self, sender: bytes) -> int:
        value = self._seqs.get(sender, 0)
        self._seqs[sender] = value + 1
        return value

    def step(self, i: int):
        """Produce the next block on chain i at its scheduled time."""
        chain = self.chains[i]
        return chain.produce_block(chain.head.timestamp + chain.block_interval)

    def step_all(self, rounds=1):
        blocks = []
        for _ in range(rounds):
            blocks.extend(self.step(i) for i in range(len(self.chains)))
        return blocks

    def run_tx(self, i: int, tx: vm.Transaction):
        """Submit and produce one block; returns the tx's receipt."""
        self.chains[i].submit_tx(tx)
        block = self.step(i)
        for receipt in block.receipts:
            if receipt.tx_hash == tx.tx_hash(self.chains[i].algo):
                return receipt
        raise AssertionError("transaction not included")

    def call(self, i: int, sender, target, method, args=(), value=0, op_class=""):
        tx = vm.Transaction(
            sender=sender,
            kind=vm.CALL,
            target=target,
            method=method,
            args=args,
            value=value,
            sender_seq=self.seq(sender),
            op_class=op_class or method,
        )
        return self.run_tx(i, tx)

    def create(self, i: int, sender, code_hash, salt, ctor_args=(), value=0):
        tx = vm.Transaction(
            sender=sender,
            kind=vm.CREATE,
            target=None,
            method="create",
            args=(code_hash, salt, tuple(ctor_args)),
            value=value,
            sender_seq=self.seq(sender),
        )
        return self.run_tx(i, tx)

    def move1(self, i: int, sender, contract, target_chain):
        return self.run_tx(i, protocol.make_move1(sender, contract, target_chain, self.seq(sender)))

    def finalize_lock(self, i: int, contract):
        """Produce source blocks until the lock height is final."""
        chain = self.chains[i]
        height = chain.blocked_heights[contract]
        while not chain.is_final(height):
            self.step(i)

    def move2(self, i: int, sender, payload):
        return self.run_tx(i, protocol.make_move2(sender, payload, self.seq(sender)))

    def move_contract(self, src: int, dst: int, contract, sender):
        """Full migration src -> dst; returns the move2 receipt."""
        r1 = self.move1(src, sender, contract, self.chains[dst].id)
        assert r1.ok, r1.reason
        self.finalize_lock(src, contract)
        payload = protocol.build_move2(self.chains[src], contract)
        r2 = self.move2(dst, sender, payload)
        assert r2.ok, r2.reason
        return r2


@pytest.fixture
def net():
    return Net(n=2)


@pytest.fixture
def net3():
    return Net(n=3)


def ident(tag: str) -> bytes:
    import hashlib

    return hashlib.sha256(b"test-ident:" + tag.encode()).digest()[:20]
