"""Network descriptions, the four reference builders, and cost accounting.

A :class:`NetworkSpec` is a flat, declarative list of layer specs. It is
shape-checked on construction by building its runtime graph, and it
round-trips through a one-layer-per-line text form (see
:meth:`NetworkSpec.descriptor` and :func:`microcnn.model_store.parse_descriptor`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import blocks
from . import graph as G
from .layers import BN_MODES, BatchNormSpec, ConvSpec
from .tensor_core import ShapeError, check_shape

DEFAULT_INPUT = (1, 1, 96, 96)
DEFAULT_CLASSES = 11


# -- layer specs ---------------------------------------------------------------


@dataclass(frozen=True)
class Conv:
    kernel: int
    filters: int
    padding: str = "same"

    def line(self):
        return f"conv {self.kernel}x{self.kernel} f={self.filters} pad={self.padding}"

    def build(self, name, in_shape, bn_mode):
        return G.Conv(f"{name}.conv", in_shape, ConvSpec(self.filters, (self.kernel, self.kernel), self.padding))


@dataclass(frozen=True)
class BatchNorm:
    def line(self):
        return "batchnorm"

    def build(self, name, in_shape, bn_mode):
        return G.BatchNorm(f"{name}.bn", in_shape, BatchNormSpec(bn_mode))


@dataclass(frozen=True)
class ReLU:
    def line(self):
        return "relu"

    def build(self, name, in_shape, bn_mode):
        return G.Activation(f"{name}.relu", in_shape, "relu")


@dataclass(frozen=True)
class MaxPool:
    def line(self):
        return "maxpool 2x2"

    def build(self, name, in_shape, bn_mode):
        return G.MaxPool(f"{name}.pool", in_shape)


@dataclass(frozen=True)
class Tiny:
    filters: int

    def line(self):
        return f"tiny f={self.filters}"

    def build(self, name, in_shape, bn_mode):
        return blocks.build_tiny(blocks.TinyConfig(self.filters), in_shape, bn_mode, name)


@dataclass(frozen=True)
class Fire:
    s1x1: int
    e1x1: int
    e3x3: int

    def line(self):
        return f"fire s={self.s1x1} e1={self.e1x1} e3={self.e3x3}"

    def build(self, name, in_shape, bn_mode):
        return blocks.build_fire(blocks.FireConfig(self.s1x1, self.e1x1, self.e3x3), in_shape, name)


@dataclass(frozen=True)
class SmallFire:
    s1x1: int
    e1x1: int
    e3x3: int

    def line(self):
        return f"smallfire s={self.s1x1} e1={self.e1x1} e3={self.e3x3}"

    def build(self, name, in_shape, bn_mode):
        cfg = blocks.SmallFireConfig(blocks.FireConfig(self.s1x1, self.e1x1, self.e3x3))
        return blocks.build_smallfire(cfg, in_shape, name)


@dataclass(frozen=True)
class Flatten:
    def line(self):
        return "flatten"

    def build(self, name, in_shape, bn_mode):
        return G.Flatten(f"{name}.flatten", in_shape)


@dataclass(frozen=True)
class Dense:
    units: int

    def line(self):
        return f"dense f={self.units}"

    def build(self, name, in_shape, bn_mode):
        return G.Dense(f"{name}.dense", in_shape, self.units)


@dataclass(frozen=True)
class GAP:
    def line(self):
        return "gap"

    def build(self, name, in_shape, bn_mode):
        return G.GlobalAvgPool(f"{name}.gap", in_shape)


@dataclass(frozen=True)
class Softmax:
    def line(self):
        return "softmax"

    def build(self, name, in_shape, bn_mode):
        return G.Softmax(f"{name}.softmax", in_shape)


class LayerShapeError(ShapeError):
    def __init__(self, index, message):
        super().__init__(f"layer {index}: {message}")
        self.index = index


# -- network spec --------------------------------------------------------------


@dataclass
class NetworkSpec:
    layers: tuple
    input: tuple = DEFAULT_INPUT
    bn_mode: str = "width_axis"
    name: str = field(default="custom", compare=False)
    published: dict | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        self.layers = tuple(self.layers)
        self.input = check_shape(self.input)
        if self.input[0] != 1:
            raise ValueError("network input batch extent must be 1")
        if self.bn_mode not in BN_MODES:
            raise ValueError(f"unknown bn_mode {self.bn_mode!r}")
        self.graph()  # shape check
        self.classes = self._class_count()

    def _class_count(self):
        ls = self.layers
        if len(ls) < 2 or not isinstance(ls[-1], Softmax):
            raise ValueError("a network must end with softmax")
        if isinstance(ls[-2], Dense):
            return ls[-2].units
        if len(ls) >= 3 and isinstance(ls[-2], GAP) and isinstance(ls[-3], Conv):
            return ls[-3].filters
        raise ValueError("a network must end with class-score conv -> gap -> softmax, or dense -> softmax")

    def graph(self) -> G.Sequence:
        seq = G.Sequence(self.name, self.input[1:])
        for i, layer in enumerate(self.layers):
            try:
                seq.append(layer.build(f"L{i}", seq.out_shape, self.bn_mode))
            except (ShapeError, ValueError) as exc:
                raise LayerShapeError(i, str(exc)) from exc
        return seq

    def descriptor(self) -> str:
        c, h, w = self.input[1:]
        head = [f"name {self.name}", f"input {c}x{h}x{w}", f"bn_mode {self.bn_mode}"]
        return "\n".join(head + [layer.line() for layer in self.layers]) + "\n"

    def with_input(self, h, w=None):
        """Same architecture on a different spatial input size."""
        w = h if w is None else w
        return NetworkSpec(self.layers, (1, self.input[1], h, w), self.bn_mode, self.name)

    def with_bn_mode(self, mode):
        return NetworkSpec(self.layers, self.input, mode, self.name)


# -- published reference numbers (metadata only, never asserted against training) --

TINYNET_PUBLISHED = {
    4: {1: (307, 93.5, 28), 2: (571, 95.0, 35), 3: (787, 95.9, 38), 4: (979, 97.0, 40), 5: (1159, 98.8, 42)},
    8: {1: (443, 95.8, 57), 2: (1195, 98.2, 88), 3: (1899, 98.4, 95), 4: (2579, 98.8, 99), 5: (3247, 99.6, 110)},
}
SMALLFIRENET_PUBLISHED = {1: (3163, 99.0, 70), 2: (3643, 99.7, 59), 3: (4087, 99.8, 61)}
FIRE_BASELINE_PUBLISHED = (18_000, 99.6, 600)
BASELINE_CNN_PUBLISHED = (930_000, 98.8, 1200)


def _published(entry, exact=True):
    params, acc, ms = entry
    return {"params": params, "params_exact": exact, "accuracy": acc, "time_ms": ms}


def _check_depth(n_modules, hw, name):
    if n_modules < 1:
        raise ValueError(f"{name} needs at least one module")
    if hw / 2 ** n_modules < 2:
        raise ShapeError(f"spatial extent exhausted: {hw}/2^{n_modules} < 2")


def tinynet(filters=4, n_modules=5, classes=DEFAULT_CLASSES, bn_mode="width_axis", input_hw=96):
    _check_depth(n_modules, input_hw, "tinynet")
    layers = [Tiny(filters) for _ in range(n_modules)]
    layers += [Conv(1, classes), GAP(), Softmax()]
    published = TINYNET_PUBLISHED.get(filters, {}).get(n_modules)
    return NetworkSpec(
        layers, (1, 1, input_hw, input_hw), bn_mode, f"tinynet-{filters}-{n_modules}",
        _published(published) if published and classes == 11 and bn_mode == "width_axis" else None,
    )


def smallfirenet(n_modules=3, classes=DEFAULT_CLASSES, bn_mode="width_axis", input_hw=96):
    _check_depth(n_modules, input_hw, "smallfirenet")
    layers = [Conv(5, 8), ReLU()]
    layers += [SmallFire(4, 4, 4) for _ in range(n_modules)]
    layers += [Conv(5, classes), GAP(), Softmax()]
    published = SMALLFIRENET_PUBLISHED.get(n_modules)
    return NetworkSpec(
        layers, (1, 1, input_hw, input_hw), bn_mode, f"smallfirenet-{n_modules}",
        _published(published) if published and classes == 11 else None,
    )


def fire_baseline(classes=DEFAULT_CLASSES, bn_mode="width_axis", input_hw=96):
    layers = [Conv(5, 8), ReLU(), Fire(16, 16, 16), Fire(16, 16, 16), Conv(5, classes), GAP(), Softmax()]
    return NetworkSpec(
        layers, (1, 1, input_hw, input_hw), bn_mode, "fire-baseline",
        _published(FIRE_BASELINE_PUBLISHED, exact=False) if classes == 11 else None,
    )


def baseline_cnn(classes=DEFAULT_CLASSES, bn_mode="width_axis", input_hw=96):
    layers = [
        Conv(5, 32, "valid"), ReLU(), MaxPool(),
        Conv(5, 32, "valid"), ReLU(), MaxPool(),
        Flatten(), Dense(64), ReLU(), Dense(classes), Softmax(),
    ]
    return NetworkSpec(
        layers, (1, 1, input_hw, input_hw), bn_mode, "baseline-cnn",
        _published(BASELINE_CNN_PUBLISHED, exact=False) if classes == 11 else None,
    )


BUILDERS = {
    "tinynet": tinynet,
    "smallfirenet": smallfirenet,
    "fire-baseline": fire_baseline,
    "baseline-cnn": baseline_cnn,
}


# -- cost accounting -----------------------------------------------------------


@dataclass
class CostReport:
    name: str
    rows: list
    published_params: int | None = None
    published_params_exact: bool = True

    @property
    def total_params(self):
        return sum(r.params for r in self.rows)

    @property
    def total_macs(self):
        return sum(r.macs for r in self.rows)

    @property
    def total_flops(self):
        return 2 * self.total_macs

    @property
    def total_ops(self):
        """Non-MAC elementwise work: activations, pooling, normalization, softmax."""
        return sum(r.ops for r in self.rows)

    def params_by_kind(self, *kinds):
        return sum(r.params for r in self.rows if r.kind in kinds)

    @property
    def conv_params(self):
        return self.params_by_kind("conv")

    @property
    def residual(self):
        """Published total minus the count computed here, if a published total is known."""
        if self.published_params is None:
            return None
        return self.published_params - self.total_params

    def table(self) -> str:
        header = f"{'layer':<28} {'kind':<10} {'params':>8} {'MACs':>12} {'ops':>10}  output"
        lines = [f"# {self.name}", header, "-" * len(header)]
        for r in self.rows:
            shape = "x".join(str(d) for d in r.out_shape)
            lines.append(f"{r.name:<28} {r.kind:<10} {r.params:>8} {r.macs:>12} {r.ops:>10}  {shape}")
        lines.append("-" * len(header))
        lines.append(f"total params        {self.total_params}")
        lines.append(f"conv params         {self.conv_params}")
        lines.append(f"total MACs          {self.total_macs}")
        lines.append(f"total FLOPs         {self.total_flops}")
        lines.append(f"elementwise ops     {self.total_ops}")
        if self.published_params is not None:
            approx = "" if self.published_params_exact else " (rounded)"
            lines.append(f"published params    {self.published_params}{approx}")
            if self.residual and not self.published_params_exact:
                lines.append(f"difference          {self.residual} (published figure is rounded)")
            elif self.residual:
                lines.append(
                    f"residual            {self.residual} (unexplained normalization parameters; "
                    "not reconstructible from the stated architecture)"
                )
        return "\n".join(lines)


def cost_report(spec: NetworkSpec) -> CostReport:
    published = spec.published or {}
    return CostReport(spec.name, spec.graph().cost_rows(), published.get("params"), published.get("params_exact", True))


def count_params(spec: NetworkSpec) -> CostReport:
    """Per-layer trainable parameter counts (batch norm: 2 x axis length)."""
    return cost_report(spec)


def count_flops(spec: NetworkSpec) -> CostReport:
    """Per-layer MACs; ``total_flops`` is twice the MAC total."""
    return cost_report(spec)
