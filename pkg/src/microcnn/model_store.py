"""Architecture descriptor parser and the ``TNET`` binary model format.

Descriptor grammar, one item per line (``#`` starts a comment, blank
lines are ignored)::

    name <identifier>                 optional, default "custom"
    input <C>x<H>x<W>                 optional, default 1x96x96
    bn_mode width_axis|channel_axis   optional, default width_axis
    conv <K>x<K> f=<filters> [pad=same|valid]    K in {1, 3, 5}
    batchnorm
    relu
    maxpool 2x2
    tiny f=<filters>
    fire s=<s1x1> e1=<e1x1> e3=<e3x3>
    smallfire s=<s1x1> e1=<e1x1> e3=<e3x3>
    flatten
    dense f=<units>
    gap
    softmax

``TNET`` layout, all integers unsigned 32-bit little-endian, no padding::

    b"TNET" | version (=1) | descriptor length | descriptor UTF-8 bytes
    then, for every parameter in graph order:
    name length | name UTF-8 | rank | extents[rank] | float32 LE values (row-major)

Running batch-norm statistics are stored like any other parameter so a
loaded model predicts exactly as the saved one did.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from . import architectures as A
from .graph import ParamStore
from .network import Network

MAGIC = b"TNET"
VERSION = 1
_U32 = struct.Struct("<I")


class DescriptorError(ValueError):
    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class ModelFileError(ValueError):
    pass


class BadMagicError(ModelFileError):
    pass


class UnsupportedVersionError(ModelFileError):
    pass


class TruncatedFileError(ModelFileError):
    pass


class ParamMismatchError(ModelFileError):
    pass


# -- descriptor ------------------------------------------------------------------


def _kv(tokens, lineno, required, optional=()):
    out = {}
    for tok in tokens:
        key, sep, value = tok.partition("=")
        if not sep or not key or not value:
            raise DescriptorError(lineno, f"malformed key=value {tok!r}")
        if key not in required and key not in optional:
            raise DescriptorError(lineno, f"unexpected key {key!r}")
        if key in out:
            raise DescriptorError(lineno, f"duplicate key {key!r}")
        out[key] = value
    missing = [k for k in required if k not in out]
    if missing:
        raise DescriptorError(lineno, f"missing {', '.join(missing)}")
    return out


def _int(value, lineno, key):
    try:
        v = int(value)
    except ValueError:
        raise DescriptorError(lineno, f"{key} must be an integer, got {value!r}") from None
    if v < 1:
        raise DescriptorError(lineno, f"{key} must be >= 1, got {v}")
    return v


def _kernel(token, lineno):
    a, sep, b = token.partition("x")
    if not sep or not a.isdigit() or not b.isdigit():
        raise DescriptorError(lineno, f"malformed kernel {token!r}")
    if a != b or int(a) not in (1, 3, 5):
        raise DescriptorError(lineno, f"unsupported kernel {token}")
    return int(a)


def _parse_layer(word, args, lineno):
    if word == "conv":
        if not args:
            raise DescriptorError(lineno, "conv needs a kernel size")
        k = _kernel(args[0], lineno)
        kv = _kv(args[1:], lineno, ("f",), ("pad",))
        pad = kv.get("pad", "same")
        if pad not in ("same", "valid"):
            raise DescriptorError(lineno, f"unknown padding {pad!r}")
        return A.Conv(k, _int(kv["f"], lineno, "f"), pad)
    if word in ("tiny", "dense"):
        kv = _kv(args, lineno, ("f",))
        f = _int(kv["f"], lineno, "f")
        return A.Tiny(f) if word == "tiny" else A.Dense(f)
    if word in ("fire", "smallfire"):
        kv = _kv(args, lineno, ("s", "e1", "e3"))
        vals = [_int(kv[k], lineno, k) for k in ("s", "e1", "e3")]
        return A.Fire(*vals) if word == "fire" else A.SmallFire(*vals)
    if word == "maxpool":
        if args != ["2x2"]:
            raise DescriptorError(lineno, "only 'maxpool 2x2' is supported")
        return A.MaxPool()
    simple = {"batchnorm": A.BatchNorm, "relu": A.ReLU, "flatten": A.Flatten, "gap": A.GAP, "softmax": A.Softmax}
    if word in simple:
        if args:
            raise DescriptorError(lineno, f"{word} takes no arguments")
        return simple[word]()
    raise DescriptorError(lineno, f"unknown layer {word!r}")


def parse_descriptor(text: str) -> A.NetworkSpec:
    name, shape, bn_mode = "custom", A.DEFAULT_INPUT, "width_axis"
    layers, lines = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        word, *args = line.split()
        if word == "name":
            if len(args) != 1:
                raise DescriptorError(lineno, "name takes one identifier")
            name = args[0]
        elif word == "input":
            try:
                c, h, w = (int(v) for v in args[0].split("x"))
            except (ValueError, IndexError):
                raise DescriptorError(lineno, "input must look like CxHxW") from None
            shape = (1, c, h, w)
        elif word == "bn_mode":
            if args not in (["width_axis"], ["channel_axis"]):
                raise DescriptorError(lineno, "bn_mode must be width_axis or channel_axis")
            bn_mode = args[0]
        else:
            layers.append(_parse_layer(word, args, lineno))
            lines.append(lineno)
    if not layers:
        raise DescriptorError(0, "descriptor contains no layers")
    try:
        return A.NetworkSpec(layers, shape, bn_mode, name)
    except A.LayerShapeError as exc:
        raise DescriptorError(lines[exc.index], str(exc.__cause__ or exc)) from exc
    except ValueError as exc:
        raise DescriptorError(lines[-1], str(exc)) from exc


# -- binary model file -------------------------------------------------------------


def _u32(v):
    return _U32.pack(v)


def save(spec: A.NetworkSpec, params: ParamStore, path) -> None:
    """Write ``spec`` and every parameter (trainable and running stats) to ``path``."""
    try:
        Network(spec, params)  # validates names and shapes
    except ValueError as exc:
        raise ParamMismatchError(f"parameters disagree with the architecture: {exc}") from exc
    desc = spec.descriptor().encode("utf-8")
    chunks = [MAGIC, _u32(VERSION), _u32(len(desc)), desc]
    for name, value in params.items():
        nb = name.encode("utf-8")
        arr = np.ascontiguousarray(value, dtype="<f4")
        chunks += [_u32(len(nb)), nb, _u32(arr.ndim)] + [_u32(d) for d in arr.shape] + [arr.tobytes()]
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, data):
        self.data, self.pos = data, 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise TruncatedFileError(f"truncated model file while reading {what}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, what):
        return _U32.unpack(self.take(4, what))[0]

    def done(self):
        return self.pos >= len(self.data)


def load(path):
    """Read a ``TNET`` file; returns ``(spec, params)``."""
    r = _Reader(Path(path).read_bytes())
    if r.data[:4] != MAGIC:
        raise BadMagicError(f"{path}: not a model file")
    r.pos = 4
    version = r.u32("version")
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported model file version {version} (expected {VERSION})")
    desc = r.take(r.u32("descriptor length"), "descriptor").decode("utf-8")
    spec = parse_descriptor(desc)
    params = ParamStore()
    while not r.done():
        name = r.take(r.u32("blob name length"), "blob name").decode("utf-8")
        rank = r.u32(f"rank of {name}")
        shape = tuple(r.u32(f"extents of {name}") for _ in range(rank))
        count = int(np.prod(shape)) if shape else 1
        raw = r.take(4 * count, f"values of blob {name!r}")
        params[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)
    try:
        Network(spec, params)
    except ValueError as exc:
        raise ParamMismatchError(f"{path}: parameters disagree with the descriptor: {exc}") from exc
    return spec, params
