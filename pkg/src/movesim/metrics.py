"""Run metrics: throughput series, latency samples, gas accounting, exports.

Reports are plain data with a stable JSON rendering, so two runs of the
same seeded experiment can be compared byte for byte.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Optional


def usd_cost(gas: int, gas_price_gwei: float, token_usd: float) -> float:
    return gas * gas_price_gwei * 1e-9 * token_usd


@dataclass
class MetricsReport:
    seed: int
    duration: float
    n_shards: int
    interval: float
    cross_shard_threshold: float
    gas_price_gwei: float
    token_usd: float
    throughput_per_shard: dict
    throughput_aggregate: list
    latency_samples: list
    gas_table: dict
    retry_histogram: dict
    cross_shard_count: int
    completed_ops: int
    config: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    invariant_violations: list = field(default_factory=list)

    # Derived views ------------------------------------------------------------

    def mean_throughput(self) -> float:
        if self.duration <= 0:
            return 0.0
        return self.completed_ops / self.duration

    def latencies(self, op_class: Optional[str] = None) -> list:
        return [
            seconds
            for cls, seconds in self.latency_samples
            if op_class is None or cls == op_class
        ]

    def cdf(self) -> list:
        """Sorted (latency, cumulative fraction) pairs over all samples."""
        values = sorted(seconds for _, seconds in self.latency_samples)
        n = len(values)
        return [(value, (i + 1) / n) for i, value in enumerate(values)]

    def fraction_above(self, threshold: float) -> float:
        values = self.latencies()
        if not values:
            return 0.0
        return sum(1 for v in values if v > threshold) / len(values)

    # Serialization ---------------------------------------------------------------

    def to_dict(self) -> dict:
        data = asdict(self)
        data["throughput_per_shard"] = {
            str(shard): series for shard, series in self.throughput_per_shard.items()
        }
        data["retry_histogram"] = {
            str(retries): count for retries, count in sorted(self.retry_histogram.items())
        }
        data["latency_samples"] = [[cls, seconds] for cls, seconds in self.latency_samples]
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsReport":
        data = dict(data)
        data["throughput_per_shard"] = {
            int(shard): series for shard, series in data["throughput_per_shard"].items()
        }
        data["retry_histogram"] = {
            int(retries): count for retries, count in data["retry_histogram"].items()
        }
        data["latency_samples"] = [
            (cls, seconds) for cls, seconds in data["latency_samples"]
        ]
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        return cls.from_dict(json.loads(text))


class Collector:
    """Accumulates receipts and completed operations during a run."""

    def __init__(
        self,
        n_shards: int,
        interval: float,
        duration: float,
        gas_price_gwei: float,
        token_usd: float,
        cross_shard_threshold: float,
    ):
        self.n_shards = n_shards
        self.interval = interval
        self.duration = duration
        self.gas_price_gwei = gas_price_gwei
        self.token_usd = token_usd
        self.cross_shard_threshold = cross_shard_threshold
        bins = max(0, math.ceil(duration / interval)) if duration > 0 else 0
        self._bins = bins
        self._per_shard = {shard: [0] * bins for shard in range(n_shards)}
        self._gas: dict[str, dict] = {}
        self._latency: list = []
        self._retries: dict[int, int] = {}
        self.cross_shard_count = 0
        self.completed_ops = 0

    def record_receipt(self, receipt) -> None:
        row = self._gas.setdefault(
            receipt.op_class,
            {"count": 0, "aborted": 0, "gas": 0, "code_deposit_gas": 0},
        )
        row["count"] += 1
        if not receipt.ok:
            row["aborted"] += 1
        row["gas"] += receipt.gas_used
        row["code_deposit_gas"] += receipt.code_deposit_gas

    def record_op(
        self,
        shard: int,
        op_class: str,
        latency: float,
        end_time: float,
        retries: int = 0,
        cross: bool = False,
    ) -> None:
        self._latency.append((op_class, latency))
        self._retries[retries] = self._retries.get(retries, 0) + 1
        self.completed_ops += 1
        if cross:
            self.cross_shard_count += 1
        if self._bins:
            index = min(self._bins - 1, int(end_time / self.interval))
            if 0 <= shard < self.n_shards:
                self._per_shard[shard][index] += 1

    def finalize(self, seed: int, config: dict, extra: Optional[dict] = None,
                 violations: Optional[list] = None) -> MetricsReport:
        per_shard = {
            shard: [count / self.interval for count in series]
            for shard, series in self._per_shard.items()
        }
        aggregate = [
            sum(per_shard[shard][i] for shard in per_shard) for i in range(self._bins)
        ]
        gas_table = {}
        for op, row in sorted(self._gas.items()):
            gas_table[op] = {
                "count": row["count"],
                "aborted": row["aborted"],
                "gas": row["gas"],
                "code_deposit_gas": row["code_deposit_gas"],
                "usd": usd_cost(row["gas"], self.gas_price_gwei, self.token_usd),
                "code_deposit_share": (
                    row["code_deposit_gas"] / row["gas"] if row["gas"] else 0.0
                ),
            }
        return MetricsReport(
            seed=seed,
            duration=self.duration,
            n_shards=self.n_shards,
            interval=self.interval,
            cross_shard_threshold=self.cross_shard_threshold,
            gas_price_gwei=self.gas_price_gwei,
            token_usd=self.token_usd,
            throughput_per_shard=per_shard,
            throughput_aggregate=aggregate,
            latency_samples=list(self._latency),
            gas_table=gas_table,
            retry_histogram=dict(self._retries),
            cross_shard_count=self.cross_shard_count,
            completed_ops=self.completed_ops,
            config=dict(config),
            extra=dict(extra or {}),
            invariant_violations=list(violations or ()),
        )


def gas_report(receipts, gas_price_gwei: float = 2.0, token_usd: float = 144.0) -> dict:
    """Standalone gas table over a batch of receipts."""
    collector = Collector(0, 1.0, 0.0, gas_price_gwei, token_usd, 0.0)
    for receipt in receipts:
        collector.record_receipt(receipt)
    report = collector.finalize(0, {})
    return report.gas_table


# Export -------------------------------------------------------------------------

CSV_HEADERS = {
    "latency.csv": ["op_class", "seconds"],
    "cdf.csv": ["latency_seconds", "cumulative_fraction"],
    "throughput.csv": ["interval_index", "interval_start", "shard", "tx_per_second"],
    "gas.csv": ["op_class", "count", "aborted", "gas", "code_deposit_gas", "usd", "code_deposit_share"],
    "retries.csv": ["retries", "count"],
}


def export(report: MetricsReport, fmt: str, path: str) -> list:
    """Write the report; json to a single file, csv to a directory of tables.

    Returns the list of paths written.
    """
    if fmt == "json":
        parent = os.path.dirname(os.path.abspath(path))
        os.makedirs(parent, exist_ok=True)
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(report.to_json())
            handle.write("\n")
        return [path]
    if fmt != "csv":
        raise ValueError(f"unknown export format {fmt!r}")
    os.makedirs(path, exist_ok=True)
    written = []

    def table(name, rows):
        file_path = os.path.join(path, name)
        with open(file_path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(CSV_HEADERS[name])
            writer.writerows(rows)
        written.append(file_path)

    table("latency.csv", [[cls, seconds] for cls, seconds in report.latency_samples])
    table("cdf.csv", [[value, frac] for value, frac in report.cdf()])
    throughput_rows = []
    for index in range(len(report.throughput_aggregate)):
        start = index * report.interval
        for shard in sorted(report.throughput_per_shard):
            throughput_rows.append(
                [index, start, shard, report.throughput_per_shard[shard][index]]
            )
        throughput_rows.append([index, start, "aggregate", report.throughput_aggregate[index]])
    table("throughput.csv", throughput_rows)
    table(
        "gas.csv",
        [
            [op, row["count"], row["aborted"], row["gas"], row["code_deposit_gas"],
             row["usd"], row["code_deposit_share"]]
            for op, row in sorted(report.gas_table.items())
        ],
    )
    table("retries.csv", [[r, c] for r, c in sorted(report.retry_histogram.items())])
    return written
