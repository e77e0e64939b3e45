"""Model checkpoints.

Binary layout (all integers little-endian):

    magic            4 bytes  b"CCRF"
    version          u32      currently 1
    label_count      u32
    input_channels   u32
    layer_count      u32
    per layer:       kind u8 (0 conv, 1 relu, 2 maxpool, 3 softmax-readout)
                     conv: kernel u32, in u32, out u32; maxpool: kernel u32
    per conv layer:  weight float64[out*in*k*k], bias float64[out]
    class_count      u32
    per class:       dx i32, dy i32
    per class:       table float64[L*L]

Round-trips are bit-exact: parameters are stored as raw float64.
"""

import struct
from dataclasses import dataclass
from typing import List

import numpy as np

from .errors import FormatError
from .model import OffsetClass, check_offset_classes
from .net import CONV, MAXPOOL, RELU, SOFTMAX, ConvParams, LayerSpec, NetworkSpec

MAGIC = b"CCRF"
VERSION = 1
_KIND_CODE = {CONV: 0, RELU: 1, MAXPOOL: 2, SOFTMAX: 3}
_KIND_NAME = {v: k for k, v in _KIND_CODE.items()}


@dataclass
class Checkpoint:
    num_labels: int
    spec: NetworkSpec
    params: List[ConvParams]
    classes: List[OffsetClass]
    tables: List[np.ndarray]


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", VERSION)
    out += struct.pack("<I", ckpt.num_labels)
    out += struct.pack("<I", ckpt.spec.input_channels)
    out += struct.pack("<I", len(ckpt.spec.layers))
    for layer in ckpt.spec.layers:
        out += struct.pack("<B", _KIND_CODE[layer.kind])
        if layer.kind == CONV:
            out += struct.pack("<III", layer.kernel_size, layer.in_channels,
                               layer.out_channels)
        elif layer.kind == MAXPOOL:
            out += struct.pack("<I", layer.kernel_size)
    for p in ckpt.params:
        out += p.weight.astype("<f8").tobytes()
        out += p.bias.astype("<f8").tobytes()
    out += struct.pack("<I", len(ckpt.classes))
    for oc in ckpt.classes:
        out += struct.pack("<ii", oc.dx, oc.dy)
    for t in ckpt.tables:
        out += t.astype("<f8").tobytes()
    with open(path, "wb") as f:
        f.write(bytes(out))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, count: int, what: str) -> bytes:
        if self.pos + count > len(self.data):
            raise FormatError(f"{what}: truncated checkpoint")
        chunk = self.data[self.pos:self.pos + count]
        self.pos += count
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def i32(self, what: str) -> int:
        return struct.unpack("<i", self.take(4, what))[0]

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def floats(self, count: int, what: str) -> np.ndarray:
        return np.frombuffer(self.take(8 * count, what), dtype="<f8").astype(np.float64)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        r = _Reader(f.read())
    if r.take(4, "magic") != MAGIC:
        raise FormatError("magic: not a CCRF checkpoint")
    version = r.u32("version")
    if version != VERSION:
        raise FormatError(f"version: {version} unsupported (expected {VERSION})")
    num_labels = r.u32("label count")
    if num_labels < 1:
        raise FormatError("label count: must be >= 1")
    input_channels = r.u32("input channels")
    layer_count = r.u32("layer count")
    layers = []
    for i in range(layer_count):
        code = r.u8(f"layer {i} kind")
        if code not in _KIND_NAME:
            raise FormatError(f"layer {i} kind: unknown code {code}")
        kind = _KIND_NAME[code]
        if kind == CONV:
            k = r.u32(f"layer {i} kernel")
            cin = r.u32(f"layer {i} in channels")
            cout = r.u32(f"layer {i} out channels")
            layers.append(LayerSpec(CONV, k, cin, cout))
        elif kind == MAXPOOL:
            layers.append(LayerSpec(MAXPOOL, r.u32(f"layer {i} kernel")))
        else:
            layers.append(LayerSpec(kind))
    spec = NetworkSpec(input_channels=input_channels, layers=tuple(layers))
    if spec.conv_layers() and spec.output_channels != num_labels:
        raise FormatError(
            f"network output channels: {spec.output_channels} != label count "
            f"{num_labels}")
    params = []
    for i, layer in enumerate(spec.conv_layers()):
        k = layer.kernel_size
        n = layer.out_channels * layer.in_channels * k * k
        weight = r.floats(n, f"conv {i} weight").reshape(
            layer.out_channels, layer.in_channels, k, k)
        bias = r.floats(layer.out_channels, f"conv {i} bias")
        params.append(ConvParams(weight=weight, bias=bias))
    class_count = r.u32("class count")
    classes = []
    for i in range(class_count):
        dx = r.i32(f"class {i} dx")
        dy = r.i32(f"class {i} dy")
        classes.append(OffsetClass(dx, dy))
    check_offset_classes(classes)
    tables = []
    for i in range(class_count):
        t = r.floats(num_labels * num_labels, f"table {i}")
        tables.append(t.reshape(num_labels, num_labels))
    if r.pos != len(r.data):
        raise FormatError(f"trailing data: {len(r.data) - r.pos} unexpected bytes")
    return Checkpoint(num_labels=num_labels, spec=spec, params=params,
                      classes=classes, tables=tables)
