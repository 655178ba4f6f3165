"""8-bit post-training weight quantization and the ``CKNN`` model container.

Only weight matrices are quantized (symmetric, one scale per tensor, codes
in [-127, 127]).  Biases and normalisation statistics stay float32.  At
inference the codes are expanded back to float32 and the ordinary float
kernels run, which is how the microcontroller interpreter executes a
weight-quantized model.

Container layout, little-endian, no padding::

    magic      4s   b"CKNN"
    version    u16  1
    flags      u16  bit0 = quantized
    n_layers   u8
    norm       22 x f32  in_mean[7] in_std[7] out_mean[4] out_std[4]
    per layer:
      in_dim   u32
      out_dim  u32
      act      u8   0 = linear, 1 = relu
      dtype    u8   0 = f32, 1 = i8
      scale    f32  (dtype 1 only)
      weights  out_dim*in_dim values, row-major
      biases   out_dim x f32
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field

import numpy as np

from .datagen import N_FEATURES, N_TARGETS
from .errors import CorruptModelError, ParseError
from .model import F32, Layer, MlpModel, forward

MAGIC = b"CKNN"
VERSION = 1
FLAG_QUANTIZED = 0x1
QMAX = 127

_ACT_CODES = {"linear": 0, "relu": 1}
_ACT_NAMES = {v: k for k, v in _ACT_CODES.items()}
_HEAD = struct.Struct("<4sHHB")
_NORM = struct.Struct(f"<{2 * N_FEATURES + 2 * N_TARGETS}f")
_LAYER = struct.Struct("<IIBB")
_SCALE = struct.Struct("<f")


@dataclass
class QuantizedLayer:
    q: np.ndarray  # int8 (out_dim, in_dim)
    scale: np.float32
    bias: np.ndarray
    activation: str

    @property
    def in_dim(self) -> int:
        return self.q.shape[1]

    @property
    def out_dim(self) -> int:
        return self.q.shape[0]

    def dequantize(self) -> np.ndarray:
        return self.q.astype(F32) * F32(self.scale)


@dataclass
class QuantizedModel:
    layers: list[QuantizedLayer]
    in_mean: np.ndarray = field(default_factory=lambda: np.zeros(N_FEATURES, F32))
    in_std: np.ndarray = field(default_factory=lambda: np.ones(N_FEATURES, F32))
    out_mean: np.ndarray = field(default_factory=lambda: np.zeros(N_TARGETS, F32))
    out_std: np.ndarray = field(default_factory=lambda: np.ones(N_TARGETS, F32))

    def __post_init__(self):
        for k, layer in enumerate(self.layers):
            if layer.q.dtype != np.int8 or (np.abs(layer.q.astype(np.int16)) > QMAX).any():
                raise CorruptModelError(f"layer {k}: codes must be int8 within +/-{QMAX}")
            if not (np.isfinite(layer.scale) and layer.scale > 0):
                raise CorruptModelError(f"layer {k}: scale must be positive, got {layer.scale}")
            layer.scale = F32(layer.scale)
            layer.bias = np.ascontiguousarray(layer.bias, dtype=F32)
        # dims, activations and normalisation are checked by the float view
        self.dequantized()

    def dequantized(self) -> MlpModel:
        """The float model whose weights are exactly ``q * scale``."""
        layers = [Layer(l.dequantize(), l.bias.copy(), l.activation) for l in self.layers]
        return MlpModel(layers, self.in_mean.copy(), self.in_std.copy(),
                        self.out_mean.copy(), self.out_std.copy())


def quantize_tensor(w: np.ndarray) -> tuple[np.ndarray, np.float32]:
    w = np.asarray(w, dtype=F32)
    if not np.isfinite(w).all():
        raise CorruptModelError("weight tensor contains non-finite values")
    peak = F32(np.abs(w).max()) if w.size else F32(0)
    scale = F32(peak / F32(QMAX)) if peak > 0 else F32(1)
    # np.rint rounds half to even
    q = np.clip(np.rint(w / scale), -QMAX, QMAX).astype(np.int8)
    return q, scale


def quantize(m: MlpModel) -> QuantizedModel:
    layers = []
    for layer in m.layers:
        q, scale = quantize_tensor(layer.weight)
        if not np.isfinite(layer.bias).all():
            raise CorruptModelError("bias contains non-finite values")
        layers.append(QuantizedLayer(q, scale, layer.bias.copy(), layer.activation))
    return QuantizedModel(layers, m.in_mean.copy(), m.in_std.copy(),
                          m.out_mean.copy(), m.out_std.copy())


def dequantized_forward(qm: QuantizedModel, features) -> np.ndarray:
    return forward(qm.dequantized(), features)


# --- container ---------------------------------------------------------------

def serialize(m: MlpModel | QuantizedModel) -> bytes:
    quantized = isinstance(m, QuantizedModel)
    if len(m.layers) > 255:
        raise ValueError("at most 255 layers fit in the container")
    parts = [
        _HEAD.pack(MAGIC, VERSION, FLAG_QUANTIZED if quantized else 0, len(m.layers)),
        _NORM.pack(*np.concatenate([m.in_mean, m.in_std, m.out_mean, m.out_std]).tolist()),
    ]
    for layer in m.layers:
        parts.append(_LAYER.pack(layer.in_dim, layer.out_dim, _ACT_CODES[layer.activation],
                                 1 if quantized else 0))
        if quantized:
            parts.append(_SCALE.pack(layer.scale))
            parts.append(layer.q.astype("<i1").tobytes())
        else:
            parts.append(layer.weight.astype("<f4").tobytes())
        parts.append(layer.bias.astype("<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = memoryview(blob)
        self.pos = 0

    def take(self, n: int, what: str) -> memoryview:
        if self.pos + n > len(self.blob):
            raise ParseError(f"truncated while reading {what} ({n} bytes needed, "
                             f"{len(self.blob) - self.pos} left)", offset=self.pos)
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, st: struct.Struct, what: str):
        return st.unpack(self.take(st.size, what))


def deserialize(blob: bytes) -> MlpModel | QuantizedModel:
    r = _Reader(bytes(blob))
    magic, version, flags, n_layers = r.unpack(_HEAD, "header")
    if magic != MAGIC:
        raise ParseError(f"bad magic {bytes(magic)!r}", offset=0)
    if version != VERSION:
        raise ParseError(f"unsupported format version {version}", offset=4)
    if flags & ~FLAG_QUANTIZED:
        raise ParseError(f"unknown flag bits {flags:#06x}", offset=6)
    quantized = bool(flags & FLAG_QUANTIZED)
    norm = np.array(r.unpack(_NORM, "normalisation block"), dtype=F32)
    i, o = N_FEATURES, N_TARGETS
    stats = (norm[:i], norm[i:2 * i], norm[2 * i:2 * i + o], norm[2 * i + o:])

    layers = []
    for k in range(n_layers):
        start = r.pos
        in_dim, out_dim, act, dtype = r.unpack(_LAYER, f"layer {k} header")
        if act not in _ACT_NAMES:
            raise ParseError(f"layer {k}: unknown activation code {act}", offset=start + 8)
        if dtype != int(quantized):
            raise ParseError(f"layer {k}: dtype {dtype} disagrees with flags", offset=start + 9)
        count = in_dim * out_dim
        if quantized:
            (scale,) = r.unpack(_SCALE, f"layer {k} scale")
            q = np.frombuffer(r.take(count, f"layer {k} weights"), dtype="<i1")
            q = q.astype(np.int8).reshape(out_dim, in_dim)
        else:
            w = np.frombuffer(r.take(4 * count, f"layer {k} weights"), dtype="<f4")
            w = w.astype(F32).reshape(out_dim, in_dim)
        b = np.frombuffer(r.take(4 * out_dim, f"layer {k} biases"), dtype="<f4").astype(F32)
        if quantized:
            layers.append(QuantizedLayer(q, F32(scale), b, _ACT_NAMES[act]))
        else:
            layers.append(Layer(w, b, _ACT_NAMES[act]))
    if r.pos != len(r.blob):
        raise ParseError(f"{len(r.blob) - r.pos} trailing bytes", offset=r.pos)
    try:
        if quantized:
            return QuantizedModel(layers, *stats)
        return MlpModel(layers, *stats)
    except (ValueError, CorruptModelError) as exc:
        raise ParseError(f"invalid model: {exc}", offset=len(r.blob)) from None


# --- C source emission --------------------------------------------------------

_C_KEYWORDS = frozenset("""
auto break case char const continue default do double else enum extern float for
goto if inline int long register restrict return short signed sizeof static struct
switch typedef union unsigned void volatile while _Bool _Complex _Imaginary
""".split())
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
BYTES_PER_LINE = 12


def emit_c_source(blob: bytes, symbol: str = "g_model") -> str:
    if not _IDENT.match(symbol) or symbol in _C_KEYWORDS:
        raise ValueError(f"{symbol!r} is not a valid C identifier")
    lines = [f"const unsigned char {symbol}[] = {{"]
    for i in range(0, len(blob), BYTES_PER_LINE):
        chunk = blob[i:i + BYTES_PER_LINE]
        sep = "," if i + BYTES_PER_LINE < len(blob) else ""
        lines.append("  " + ", ".join(f"0x{b:02x}" for b in chunk) + sep)
    lines.append("};")
    lines.append(f"const unsigned int {symbol}_len = {len(blob)};")
    return "\n".join(lines) + "\n"


_ARRAY_RE = re.compile(r"unsigned char\s+(\w+)\[\]\s*=\s*\{(.*?)\};", re.S)


def parse_c_source(text: str) -> bytes:
    """Recover the byte array from :func:`emit_c_source` output."""
    m = _ARRAY_RE.search(text)
    if not m:
        raise ParseError("no unsigned char array found")
    data = bytes(int(tok, 16) for tok in re.findall(r"0x[0-9a-fA-F]{2}", m.group(2)))
    n = re.search(rf"{m.group(1)}_len\s*=\s*(\d+)", text)
    if n and int(n.group(1)) != len(data):
        raise ParseError(f"length constant {n.group(1)} disagrees with {len(data)} bytes")
    return data
