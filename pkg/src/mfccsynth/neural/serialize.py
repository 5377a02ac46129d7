"""Binary weight files.

Layout (little-endian), magic "NNW1":
  u32 layer count, then per layer:
    u16 length + utf-8 layer kind
    u32 hyperparameter count, each: u16 length + utf-8 name, f64 value
    u32 parameter count, each: u16 length + utf-8 name, u32 ndim,
        ndim u32 dims, then the values as float32

Weights are float64 in memory and float32 on disk, so save -> load ->
save reproduces the file byte for byte.
"""

import struct

import numpy as np

from ..errors import FormatError
from ..ioutil import atomic_write
from . import layers as L

MAGIC = b"NNW1"

_BUILDERS = {
    "dense": lambda h: L.Dense(int(h["n_in"]), int(h["n_out"])),
    "conv1d": lambda h: L.Conv1d(int(h["c_in"]), int(h["c_out"]),
                                 int(h["width"]), int(h["stride"])),
    "batch_norm": lambda h: L.BatchNorm(int(h["n_features"]),
                                        momentum=h["momentum"],
                                        eps=h["eps"]),
    "relu": lambda h: L.Relu(),
    "leaky_relu": lambda h: L.LeakyRelu(slope=h["slope"]),
    "tanh": lambda h: L.Tanh(),
    "softmax": lambda h: L.Softmax(),
    "standardize": lambda h: L.Standardize(int(h["n_features"])),
    "lstm": lambda h: L.Lstm(int(h["n_in"]), int(h["n_hidden"])),
    "blstm": lambda h: L.Blstm(int(h["n_in"]), int(h["n_hidden"])),
    "gru": lambda h: L.Gru(int(h["n_in"]), int(h["n_hidden"])),
    "fft_magnitude": lambda h: L.FftMagnitude(int(h["n_points"]),
                                              eps=h["eps"],
                                              scale=h["scale"]),
    "global_average": lambda h: L.GlobalAverage(),
}


def _pack_str(s):
    raw = s.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def save_weights(path, layer_list):
    parts = [MAGIC, struct.pack("<I", len(layer_list))]
    for layer in layer_list:
        if layer.kind not in _BUILDERS:
            raise FormatError(f"layer kind {layer.kind!r} is not serializable")
        parts.append(_pack_str(layer.kind))
        hyper = layer.hyper()
        parts.append(struct.pack("<I", len(hyper)))
        for name, value in hyper.items():
            parts.append(_pack_str(name))
            parts.append(struct.pack("<d", float(value)))
        parts.append(struct.pack("<I", len(layer.params)))
        for name, value in layer.params.items():
            parts.append(_pack_str(name))
            parts.append(struct.pack("<I", value.ndim))
            parts.append(struct.pack(f"<{value.ndim}I", *value.shape))
            parts.append(np.asarray(value, dtype="<f4").tobytes())
    atomic_write(path, b"".join(parts))


class _Cursor:
    def __init__(self, blob, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n, what):
        if self.pos + n > len(self.blob):
            raise FormatError(
                f"{self.path}: weights file truncated while reading {what}")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def u16(self, what):
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]

    def f64(self, what):
        return struct.unpack("<d", self.take(8, what))[0]

    def string(self, what):
        n = self.u16(what)
        return self.take(n, what).decode("utf-8")


def load_weights(path):
    """Read a weights file back into a list of layer objects."""
    with open(path, "rb") as f:
        blob = f.read()
    cur = _Cursor(blob, path)
    if cur.take(4, "magic") != MAGIC:
        raise FormatError(f"{path}: bad magic, not a weights file")
    n_layers = cur.u32("layer count")
    out = []
    for li in range(n_layers):
        kind = cur.string(f"layer {li} kind")
        if kind not in _BUILDERS:
            raise FormatError(f"{path}: unknown layer kind {kind!r}")
        hyper = {}
        for _ in range(cur.u32(f"layer {li} hyper count")):
            name = cur.string(f"layer {li} hyper name")
            hyper[name] = cur.f64(f"layer {li} hyper {name}")
        try:
            layer = _BUILDERS[kind](hyper)
        except KeyError as exc:
            raise FormatError(
                f"{path}: layer {li} ({kind}) is missing hyperparameter "
                f"{exc.args[0]!r}") from None
        seen = {}
        for _ in range(cur.u32(f"layer {li} param count")):
            name = cur.string(f"layer {li} param name")
            ndim = cur.u32(f"layer {li} param {name} ndim")
            dims = struct.unpack(
                f"<{ndim}I", cur.take(4 * ndim, f"{name} dims"))
            count = 1
            for d in dims:
                count *= d
            raw = cur.take(4 * count, f"layer {li} param {name} data")
            seen[name] = np.frombuffer(raw, dtype="<f4").astype(
                np.float64).reshape(dims)
        expected = {k: v.shape for k, v in layer.params.items()}
        found = {k: v.shape for k, v in seen.items()}
        if expected != found:
            raise FormatError(
                f"{path}: layer {li} ({kind}) parameter mismatch, expected "
                f"{expected}, found {found}")
        for name, value in seen.items():
            layer.params[name] = value
        out.append(layer)
    if cur.pos != len(blob):
        raise FormatError(f"{path}: {len(blob) - cur.pos} trailing bytes "
                          f"after last layer")
    return out


def describe(layer_list):
    """Compact topology string used in mismatch error messages."""
    parts = []
    for layer in layer_list:
        hyper = layer.hyper()
        inner = ",".join(f"{k}={hyper[k]:g}" for k in sorted(hyper))
        parts.append(f"{layer.kind}({inner})")
    return " -> ".join(parts)
