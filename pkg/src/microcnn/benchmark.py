"""Single-core inference latency and speedup tables.

Timings are wall-clock (``time.perf_counter_ns``) around one full forward
pass of a single 96x96 image, with every BLAS/OpenMP pool capped at one
thread for the whole measurement.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_info, threadpool_limits

from .architectures import count_flops
from .network import Network

PUBLISHED_REFERENCE_MS = 1200.0


class ParallelismError(RuntimeError):
    pass


@dataclass
class BenchReport:
    name: str
    warmup: int
    runs: int
    latencies_ms: list
    params: int
    flops: int
    mean: float = float("nan")
    std: float = 0.0
    speedup: float | None = None
    reference: str | None = None
    published_ms: float | None = None

    @classmethod
    def from_latencies(cls, name, warmup, latencies_ms, params, flops, **kw):
        lat = list(latencies_ms)
        std = float(np.std(lat)) if len(lat) > 1 else 0.0
        return cls(name, warmup, len(lat), lat, params, flops, float(np.mean(lat)), std, **kw)

    @property
    def published_speedup(self):
        if self.published_ms is None:
            return None
        return speedup(PUBLISHED_REFERENCE_MS, self.published_ms)


def speedup(reference_ms, candidate_ms):
    return reference_ms / candidate_ms


def assert_single_threaded():
    busy = [p for p in threadpool_info() if p.get("num_threads", 1) != 1]
    if busy:
        desc = ", ".join(f"{p.get('internal_api')}={p.get('num_threads')}" for p in busy)
        raise ParallelismError(f"thread pools not limited to one thread: {desc}")


def bench(spec, params=None, warmup=10, runs=50, image=None, seed=0) -> BenchReport:
    """Time ``runs`` single-image forward passes after ``warmup`` untimed ones."""
    if runs < 1 or warmup < 0:
        raise ValueError("need runs >= 1 and warmup >= 0")
    net = Network(spec, params, seed=seed)
    if image is None:
        image = np.random.default_rng(seed).uniform(0, 1, spec.input).astype(np.float32)
    lat = []
    with threadpool_limits(limits=1):
        assert_single_threaded()
        for _ in range(warmup):
            net.forward(image)
        for _ in range(runs):
            t0 = time.perf_counter_ns()
            net.forward(image)
            lat.append((time.perf_counter_ns() - t0) / 1e6)
    cost = count_flops(spec)
    published = spec.published or {}
    return BenchReport.from_latencies(spec.name, warmup, lat, cost.total_params, cost.total_flops,
                                      published_ms=published.get("time_ms"))


@dataclass
class Comparison:
    reference: str
    reports: list = field(default_factory=list)

    def rows(self):
        return [(r.name, r.params, r.flops, r.mean, r.std, r.speedup) for r in self.reports]

    def table(self) -> str:
        head = (f"{'network':<18} {'params':>8} {'FLOPs':>12} {'mean ms':>9} {'std ms':>8} {'speedup':>8}"
                f" {'pub ms':>9} {'pub x':>8}")
        lines = [head, "-" * len(head)]
        for r in self.reports:
            pm = f"{r.published_ms:9.0f}" if r.published_ms else f"{'':>9}"
            ps = f"{r.published_speedup:8.1f}" if r.published_speedup and r.published_ms != PUBLISHED_REFERENCE_MS else f"{'':>8}"
            lines.append(f"{r.name:<18} {r.params:>8} {r.flops:>12} {r.mean:9.3f} {r.std:8.3f} {r.speedup:8.2f} {pm} {ps}")
        lines.append(f"speedup relative to {self.reference}")
        return "\n".join(lines)

    def csv(self) -> str:
        buf = io.StringIO()
        write_csv(self.reports, buf)
        return buf.getvalue()


def compare(reports, reference: str) -> Comparison:
    """Sort by mean latency and fill in each report's speedup over ``reference``."""
    ref = next((r for r in reports if r.name == reference), None)
    if ref is None:
        raise KeyError(f"reference {reference!r} not among the reports")
    for r in reports:
        r.speedup = speedup(ref.mean, r.mean)
        r.reference = reference
    return Comparison(reference, sorted(reports, key=lambda r: r.mean))


def write_csv(reports, fh):
    """``name,params,flops,mean_ms,std_ms,speedup`` rows."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["name", "params", "flops", "mean_ms", "std_ms", "speedup"])
    for r in reports:
        w.writerow([r.name, r.params, r.flops, f"{r.mean:.6f}", f"{r.std:.6f}",
                    "" if r.speedup is None else f"{r.speedup:.6f}"])


def read_csv(fh):
    """Reports written by :func:`write_csv`, as summary-only ``BenchReport`` objects."""
    out = []
    for row in csv.DictReader(fh):
        out.append(BenchReport(
            row["name"], 0, 0, [], int(row["params"]), int(row["flops"]),
            float(row["mean_ms"]), float(row["std_ms"]),
            float(row["speedup"]) if row.get("speedup") else None,
        ))
    return out
