"""
Single-core latency and speedups
================================

Each network classifies one 96x96 image with every BLAS pool capped at a
single thread. Speedups are relative to the baseline CNN.
"""

import microcnn as mc
from microcnn.benchmark import compare

specs = [mc.tinynet(4, 5), mc.tinynet(8, 5), mc.smallfirenet(3), mc.fire_baseline(), mc.baseline_cnn()]
reports = [mc.bench(spec, warmup=5, runs=20) for spec in specs]

table = compare(reports, "baseline-cnn")
print(table.table())

# the same arithmetic applied to the published Raspberry Pi 2 latencies
published = compare(
    [mc.benchmark.BenchReport.from_latencies(name, 0, [ms], 0, 0)
     for name, ms in [("baseline", 1200.0), ("tinynet-4-5", 42.0), ("smallfirenet-3", 61.0)]],
    "baseline",
)
for r in published.reports:
    print(f"{r.name:<16} {r.speedup:5.1f}x")
