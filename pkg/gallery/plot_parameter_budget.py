"""
Parameter and FLOP budgets of the micro networks
=================================================

Every network is described by a list of layer specs; the cost model walks
the built graph and counts trainable parameters and multiply-accumulates
per layer.
"""

import microcnn as mc

# TinyNet with 4 and 8 filters per convolution, one to five modules
for filters in (4, 8):
    counts = [mc.count_params(mc.tinynet(filters, n)).total_params for n in range(1, 6)]
    print(f"tinynet-{filters}: {counts}")

# per-layer view of the smallest TinyNet: 3x3 conv, 1x1 conv, batch norm, head
print(mc.count_params(mc.tinynet(4, 1)).table())

# SmallFireNet counts only its convolutions; the report shows the gap to
# the published totals
report = mc.count_params(mc.smallfirenet(3))
print(report.table().splitlines()[-4:])

# FLOPs (2 x MACs) of the four headline networks
for spec in (mc.tinynet(4, 5), mc.smallfirenet(3), mc.fire_baseline(), mc.baseline_cnn()):
    cost = mc.count_flops(spec)
    print(f"{spec.name:<16} params {cost.total_params:>7}  MFLOPs {cost.total_flops / 1e6:8.1f}")
