"""movesim: deterministic multi-blockchain simulator with a two-step
contract migration protocol, built-in example applications, and a
desk-scale experiment harness."""

from .chain import Block, BlockHeader, Chain, ChainConfig, HeaderRegistry
from .harness import ExperimentConfig, Simulation, run, shard_of
from .merkle import MerkleProof, build_root, prove, verify_proof
from .metrics import MetricsReport, export, gas_report
from .proofs import ContractProof, ProvenRecord, prove_contract, verify_contract_proof
from .protocol import Move2Payload, build_move2
from .vm import Behavior, BehaviorRegistry, ContractRecord, GasSchedule, Receipt, Transaction, derive_address
from .workload import (
    ClientConfig,
    DependencyDag,
    TraceTx,
    build_dag,
    generate_kitties_trace,
    load_trace,
    save_trace,
)

__version__ = "0.1.0"

__all__ = [
    "Behavior",
    "BehaviorRegistry",
    "Block",
    "BlockHeader",
    "Chain",
    "ChainConfig",
    "ClientConfig",
    "ContractProof",
    "ContractRecord",
    "DependencyDag",
    "ExperimentConfig",
    "GasSchedule",
    "HeaderRegistry",
    "MerkleProof",
    "MetricsReport",
    "Move2Payload",
    "ProvenRecord",
    "Receipt",
    "Simulation",
    "TraceTx",
    "Transaction",
    "build_dag",
    "build_move2",
    "build_root",
    "derive_address",
    "export",
    "gas_report",
    "generate_kitties_trace",
    "load_trace",
    "prove",
    "prove_contract",
    "run",
    "save_trace",
    "shard_of",
    "verify_contract_proof",
    "verify_proof",
]
