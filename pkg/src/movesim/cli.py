"""Command line interface.

Subcommands:
  run-sharding  closed-loop token clients over N shards
  run-ibc       one cross-chain operation between two heterogeneous chains
  replay-dag    dependency-ordered trace replay over N shards
  gen-trace     emit a synthetic breeding-game trace file
  verify-proof  check a canonical migration payload against trusted headers

Exit codes: 0 success, 1 usage or rejection, 2 invariant violation under --check.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import harness, metrics, protocol, workload
from .hashing import DEFAULT_ALGO, known_algorithms
from .wire import WireFormatError, decode_move2_payload


def _load_config_file(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as handle:
        data = json.load(handle)
    if not isinstance(data, dict):
        raise ValueError("config file must hold a JSON object")
    return data


def _event_sink(path: str | None):
    if path is None:
        return None, None
    handle = open(path, "w", encoding="utf-8")

    def sink(event: dict) -> None:
        handle.write(json.dumps(event, sort_keys=True) + "\n")

    return sink, handle


def _write_outputs(report: metrics.MetricsReport, out: str | None, fmt: str) -> None:
    if out is None:
        print(report.to_json())
        return
    written = []
    if fmt in ("json", "both"):
        written += metrics.export(report, "json", out if out.endswith(".json") else f"{out}/report.json")
    if fmt in ("csv", "both"):
        base = out[: -len(".json")] if out.endswith(".json") else out
        written += metrics.export(report, "csv", base)
    for path in written:
        print(f"wrote {path}")


def _finish_run(report: metrics.MetricsReport, args) -> int:
    _write_outputs(report, args.out, args.format)
    print(
        f"completed_ops={report.completed_ops} "
        f"mean_throughput={report.mean_throughput():.3f} tx/s "
        f"cross_shard={report.cross_shard_count}"
    )
    if args.check and report.invariant_violations:
        for violation in report.invariant_violations:
            print(f"invariant violation: {violation}", file=sys.stderr)
        return 2
    return 0


def _base_config(args, workload_spec: dict) -> harness.ExperimentConfig:
    data = _load_config_file(args.config) if getattr(args, "config", None) else {}
    data.setdefault("workload", {}).update(workload_spec)
    overrides = {
        "n_shards": getattr(args, "shards", None),
        "duration": getattr(args, "duration", None),
        "seed": getattr(args, "seed", None),
        "block_interval": getattr(args, "block_interval", None),
        "finality_depth": getattr(args, "finality_depth", None),
        "gas_mode": getattr(args, "gas_mode", None),
        "hash_algo": getattr(args, "algo", None),
        "check": True if getattr(args, "check", False) else None,
    }
    for key, value in overrides.items():
        if value is not None:
            data[key] = value
    return harness.ExperimentConfig.from_dict(data)


def _cmd_run_sharding(args) -> int:
    if args.app == "scoin":
        spec = {
            "kind": "closed_loop",
            "clients_per_shard": args.clients,
            "cross_shard_rate": args.cross_rate,
            "mode": workload.RETRY if args.retry_mode else workload.ORACLE_NO_CONFLICT,
        }
    else:  # breeding game: replay a synthesized trace across the shards
        spec = {"kind": "trace", "path": f"generated:{args.trace_txs}"}
        args.duration = 0.0  # trace replays run until drained
    config = _base_config(args, spec)
    sink, handle = _event_sink(args.event_log)
    try:
        report = harness.run(config, on_event=sink)
    finally:
        if handle:
            handle.close()
    if args.app == "kitties":
        print(json.dumps({"replay": report.extra.get("replay", {})}, sort_keys=True))
    return _finish_run(report, args)


def _cmd_run_ibc(args) -> int:
    spec = {"kind": "ibc", "op": args.op, "direction": args.direction}
    config = _base_config(args, spec)
    sink, handle = _event_sink(args.event_log)
    try:
        report = harness.run(config, on_event=sink)
    finally:
        if handle:
            handle.close()
    timeline = report.extra.get("timeline", {})
    for key in sorted(timeline):
        print(f"{key}={timeline[key]}")
    for op, row in sorted(report.gas_table.items()):
        print(
            f"gas {op}: total={row['gas']} usd={row['usd']:.6f} "
            f"code_deposit_share={row['code_deposit_share']:.3f}"
        )
    return _finish_run(report, args)


def _cmd_replay_dag(args) -> int:
    spec = {"kind": "trace", "path": args.trace, "max_outstanding": args.max_outstanding}
    config = _base_config(args, spec)
    sink, handle = _event_sink(args.event_log)
    try:
        report = harness.run(config, on_event=sink)
    finally:
        if handle:
            handle.close()
    stats = report.extra.get("replay", {})
    print(json.dumps({"replay": stats}, sort_keys=True))
    return _finish_run(report, args)


def _cmd_gen_trace(args) -> int:
    trace = workload.generate_kitties_trace(n_txs=args.txs, seed=args.seed)
    workload.save_trace(trace, args.out)
    print(f"wrote {len(trace)} transactions to {args.out}")
    return 0


def _cmd_verify_proof(args) -> int:
    with open(args.payload, "rb") as handle:
        blob = handle.read()
    try:
        payload = decode_move2_payload(blob)
    except WireFormatError as exc:
        print(f"REJECT malformed payload: {exc}")
        return 1
    with open(args.headers, "r", encoding="utf-8") as handle:
        trusted = json.load(handle)
    headers = {int(row["height"]): bytes.fromhex(row["state_root"]) for row in trusted["headers"]}
    head = int(trusted["head"])
    depth = int(trusted["finality_depth"])
    source_chain = int(trusted["chain"])

    def header_lookup(chain_id: int, height: int):
        if chain_id != source_chain or height not in headers:
            return None
        return headers[height], (head - height >= depth)

    failure = protocol.check_move2_payload(
        payload,
        payload.target,
        header_lookup,
        watermark=args.watermark,
        algo=args.algo,
    )
    if failure is None:
        record = payload.proof.record
        print(
            "ACCEPT "
            f"contract={record.address.hex()} target_chain={payload.target} "
            f"source_chain={payload.proof.source_chain} height={payload.proof.source_height} "
            f"nonce={record.nonce} storage_words={len(record.storage)}"
        )
        return 0
    print(f"REJECT {failure}")
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="movesim",
        description="Deterministic multi-blockchain simulator with movable contracts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, default_duration):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--duration", type=float, default=default_duration,
                       help="simulated seconds (trace replays treat 0 as run-to-drain)")
        p.add_argument("--config", help="JSON config file; CLI flags override its keys")
        p.add_argument("--out", help="output path (json file or csv directory)")
        p.add_argument("--format", choices=("json", "csv", "both"), default="json")
        p.add_argument("--event-log", help="write chain events as JSON lines to this path")
        p.add_argument("--check", action="store_true",
                       help="audit global invariants; nonzero exit on violation")
        p.add_argument("--algo", choices=known_algorithms(), default=None,
                       help=f"state hash algorithm (default {DEFAULT_ALGO})")

    p = sub.add_parser("run-sharding", help="one application's workload over N shards")
    p.add_argument("--app", choices=("scoin", "kitties"), default="scoin",
                   help="scoin: closed-loop transfers; kitties: synthesized trace replay")
    p.add_argument("--shards", type=int, default=2)
    p.add_argument("--clients", type=int, default=250, help="clients per shard (scoin)")
    p.add_argument("--cross-rate", type=float, default=0.0, dest="cross_rate")
    p.add_argument("--retry-mode", action="store_true",
                   help="clients discover placements lazily and retry on conflict (scoin)")
    p.add_argument("--trace-txs", type=int, default=1000, dest="trace_txs",
                   help="synthesized trace size (kitties)")
    p.add_argument("--block-interval", type=float, default=None, dest="block_interval")
    p.add_argument("--finality-depth", type=int, default=None, dest="finality_depth")
    p.add_argument("--gas-mode", choices=("BURROW_LIKE", "ETHEREUM_LIKE"), default=None,
                   dest="gas_mode")
    add_common(p, 120.0)
    p.set_defaults(func=_cmd_run_sharding)

    p = sub.add_parser("run-ibc", help="one cross-chain operation between two chains")
    p.add_argument("--op", choices=("scoin", "kitties", "state1", "state10", "state100"),
                   default="state10")
    p.add_argument("--direction", choices=("eth-to-burrow", "burrow-to-eth"),
                   default="eth-to-burrow")
    add_common(p, 300.0)
    p.set_defaults(func=_cmd_run_ibc)

    p = sub.add_parser("replay-dag", help="replay a trace over N shards")
    p.add_argument("--trace", required=True)
    p.add_argument("--shards", type=int, default=4)
    p.add_argument("--max-outstanding", type=int, default=250, dest="max_outstanding")
    add_common(p, 0.0)
    p.set_defaults(func=_cmd_replay_dag)

    p = sub.add_parser("gen-trace", help="generate a synthetic breeding-game trace")
    p.add_argument("--txs", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_trace)

    p = sub.add_parser("verify-proof", help="check a canonical migration payload")
    p.add_argument("--payload", required=True, help="binary payload file")
    p.add_argument("--headers", required=True,
                   help="trusted header JSON: {chain, finality_depth, head, headers:[{height, state_root}]}")
    p.add_argument("--watermark", type=int, default=-1,
                   help="highest contract nonce this chain has accepted")
    p.add_argument("--algo", choices=known_algorithms(), default=DEFAULT_ALGO)
    p.set_defaults(func=_cmd_verify_proof)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, workload.WorkloadError, workload.ReplayError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
