"""Fire, Tiny and SmallFire blocks assembled from the primitive layers.

Activation placement for every block is decided here and nowhere else:

* Fire: after the squeeze convolution and after the channel merge (the
  two expand convolutions themselves stay linear).
* Tiny: after the 3x3 convolution and after the batch norm, before the
  max-pool.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import graph as G
from .layers import BatchNormSpec, ConvSpec

BLOCK_ACTIVATION = "relu"


@dataclass(frozen=True)
class FireConfig:
    s1x1: int
    e1x1: int
    e3x3: int

    def __post_init__(self):
        for field in ("s1x1", "e1x1", "e3x3"):
            if getattr(self, field) < 1:
                raise ValueError(f"Fire {field} must be >= 1, got {getattr(self, field)}")

    @property
    def out_channels(self):
        return self.e1x1 + self.e3x3


@dataclass(frozen=True)
class TinyConfig:
    filters: int

    def __post_init__(self):
        if self.filters < 1:
            raise ValueError("Tiny filters must be >= 1")


@dataclass(frozen=True)
class SmallFireConfig:
    fire: FireConfig


def _act(name, shape):
    return G.Activation(f"{name}.relu", shape, BLOCK_ACTIVATION)


def build_fire(cfg: FireConfig, in_shape, name="fire") -> G.Sequence:
    """squeeze 1x1 -> [expand 1x1 | expand 3x3] -> concat."""
    block = G.Sequence(name, in_shape)
    squeeze = block.append(G.Conv(f"{name}.squeeze", in_shape, ConvSpec(cfg.s1x1, (1, 1), "same")))
    block.append(_act(f"{name}.squeeze", squeeze.out_shape))
    mid = block.out_shape
    left = G.Conv(f"{name}.expand1x1", mid, ConvSpec(cfg.e1x1, (1, 1), "same"))
    right = G.Conv(f"{name}.expand3x3", mid, ConvSpec(cfg.e3x3, (3, 3), "same"))
    block.append(G.Merge(f"{name}.merge", mid, left, right, BLOCK_ACTIVATION))
    block.kind = "fire"
    return block


def build_tiny(cfg: TinyConfig, in_shape, bn_mode="width_axis", name="tiny") -> G.Sequence:
    """3x3 conv -> 1x1 conv -> batch norm -> 2x2 max-pool."""
    block = G.Sequence(name, in_shape)
    c3 = block.append(G.Conv(f"{name}.conv3x3", in_shape, ConvSpec(cfg.filters, (3, 3), "same")))
    block.append(_act(f"{name}.conv3x3", c3.out_shape))
    c1 = block.append(G.Conv(f"{name}.conv1x1", block.out_shape, ConvSpec(cfg.filters, (1, 1), "same")))
    block.append(G.BatchNorm(f"{name}.bn", c1.out_shape, BatchNormSpec(bn_mode)))
    block.append(_act(f"{name}.bn", block.out_shape))
    block.append(G.MaxPool(f"{name}.pool", block.out_shape))
    block.kind = "tiny"
    return block


def build_smallfire(cfg: SmallFireConfig, in_shape, name="smallfire") -> G.Sequence:
    """Fire -> Fire -> 2x2 max-pool, both Fires sharing one configuration."""
    block = G.Sequence(name, in_shape)
    block.append(build_fire(cfg.fire, in_shape, f"{name}.fire1"))
    block.append(build_fire(cfg.fire, block.out_shape, f"{name}.fire2"))
    block.append(G.MaxPool(f"{name}.pool", block.out_shape))
    block.kind = "smallfire"
    return block
