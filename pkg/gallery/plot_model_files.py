"""
Descriptors and model files
===========================

Architectures have a line-per-layer text form; a model file stores that
text plus every parameter tensor as little-endian float32.
"""

import tempfile
from pathlib import Path

import numpy as np

import microcnn as mc

spec = mc.tinynet(4, 2)
print(spec.descriptor())

# the text parses back to an equal spec
same = mc.parse_descriptor(spec.descriptor())
print("round trip equal:", same == spec)

# a hand-written descriptor: comments and blank lines are fine
text = """
# two fire modules, then a class-score head
conv 5x5 f=8
relu
fire s=4 e1=4 e3=4
fire s=4 e1=4 e3=4
maxpool 2x2
conv 5x5 f=11
gap
softmax
"""
custom = mc.parse_descriptor(text)
print(mc.count_params(custom).total_params, "parameters")

net = mc.Network(spec, seed=3)
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "tinynet.tnet"
    mc.save(spec, net.params, path)
    print(path.stat().st_size, "bytes")
    spec2, params2 = mc.load(path)
    print("bit-exact:", all(np.array_equal(net.params[k], params2[k]) for k in net.params))
