"""Parameter persistence: versioned binary files and a plain-text import hook.

Binary layout (little-endian throughout):

    magic   8 bytes  b"VTRIPNN1" (7-byte family tag + 1 version byte)
    sha256 32 bytes  fingerprint of the owning NetworkSpec serialization
    u32              layer count
    per layer:
        f32          learning-rate multiplier
        u32          tensor count (0, or 2 for weights+bias)
        per tensor:  u32 rank, u32 * rank extents, f32 raw data (C order)

The text dump accepted by load_text_tensors is block-oriented: a name line
(layerN.weights / layerN.bias), a shape line of space-separated extents, then
whitespace-separated values; blank lines separate blocks. It exists so
externally converted pre-trained weights can seed the conv stack.
"""

import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError
from .network import LayerParams, ParameterSet

MAGIC_FAMILY = b"VTRIPNN"
MAGIC = MAGIC_FAMILY + b"1"


def _write_tensor(fh, arr):
    arr = np.ascontiguousarray(arr, dtype="<f4")
    fh.write(struct.pack("<I", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(arr.tobytes())


class _Reader:
    def __init__(self, data, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n):
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated parameter file {self.path}: wanted {n} bytes at offset {self.pos}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def f32(self):
        return struct.unpack("<f", self.take(4))[0]


def _read_tensor(reader):
    rank = reader.u32()
    if rank > 8:
        raise FormatError(f"implausible tensor rank {rank} in {reader.path}")
    extents = struct.unpack(f"<{rank}I", reader.take(4 * rank))
    count = int(np.prod(extents, dtype=np.int64)) if rank else 1
    raw = reader.take(4 * count)
    return np.frombuffer(raw, dtype="<f4").reshape(extents).copy()


def save_params(params, path, spec=None):
    """Write a ParameterSet; the fingerprint is zero-filled when no spec is given."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fingerprint = spec.fingerprint() if spec is not None else b"\x00" * 32
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(fingerprint)
        fh.write(struct.pack("<I", len(params.layers)))
        for lp in params.layers:
            fh.write(struct.pack("<f", lp.lr_multiplier))
            if lp.weights is None:
                fh.write(struct.pack("<I", 0))
            else:
                fh.write(struct.pack("<I", 2))
                _write_tensor(fh, lp.weights)
                _write_tensor(fh, lp.bias)


def load_params(path, spec=None):
    """Read a ParameterSet back; validates magic, version, and completeness.

    With a spec, the stored fingerprint and all tensor shapes are checked
    against it; a partial set never escapes a corrupt file.
    """
    path = Path(path)
    data = path.read_bytes()
    reader = _Reader(data, path)
    magic = reader.take(8)
    if magic[:7] != MAGIC_FAMILY:
        raise FormatError(f"{path} is not a parameter file (bad magic {magic!r})")
    if magic != MAGIC:
        raise FormatError(
            f"parameter file version mismatch in {path}: expected {MAGIC[7:8]!r}, found {magic[7:8]!r}"
        )
    fingerprint = reader.take(32)
    if spec is not None and fingerprint != b"\x00" * 32 and fingerprint != spec.fingerprint():
        raise FormatError(f"{path} was saved for a different network spec (fingerprint mismatch)")
    n_layers = reader.u32()
    if n_layers > 4096:
        raise FormatError(f"implausible layer count {n_layers} in {path}")
    out = []
    for _ in range(n_layers):
        mult = reader.f32()
        n_tensors = reader.u32()
        if n_tensors == 0:
            out.append(LayerParams(lr_multiplier=mult))
        elif n_tensors == 2:
            weights = _read_tensor(reader)
            bias = _read_tensor(reader)
            out.append(LayerParams(weights, bias, mult))
        else:
            raise FormatError(f"layer tensor count must be 0 or 2, found {n_tensors} in {path}")
    if reader.pos != len(data):
        raise FormatError(f"{path} has {len(data) - reader.pos} trailing bytes")
    params = ParameterSet(out)
    if spec is not None:
        params.validate_for(spec)
    return params


def load_text_tensors(path):
    """Parse a plain-text tensor dump into a name -> float32 array dict."""
    path = Path(path)
    tensors = {}
    block = []

    def flush(block, line_no):
        if not block:
            return
        if len(block) < 2:
            raise FormatError(f"{path}:{line_no}: tensor block needs a name line and a shape line")
        name = block[0].strip()
        try:
            shape = tuple(int(tok) for tok in block[1].split())
        except ValueError as exc:
            raise FormatError(f"{path}: bad shape line for tensor {name!r}: {block[1]!r}") from exc
        values = " ".join(block[2:]).split()
        count = int(np.prod(shape)) if shape else 1
        if len(values) != count:
            raise FormatError(f"{path}: tensor {name!r} declares {count} values, found {len(values)}")
        try:
            arr = np.array([float(v) for v in values], dtype=np.float32).reshape(shape)
        except ValueError as exc:
            raise FormatError(f"{path}: non-numeric value in tensor {name!r}") from exc
        if name in tensors:
            raise FormatError(f"{path}: duplicate tensor name {name!r}")
        tensors[name] = arr

    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        if line.startswith("#"):
            continue
        if line.strip():
            block.append(line)
        else:
            flush(block, line_no)
            block = []
    flush(block, line_no="EOF")
    return tensors


def import_text_params(path, spec, base=None, pretrained_lr_scale=1e-3):
    """Overlay a text tensor dump onto a ParameterSet.

    Tensor names follow layer{i}.weights / layer{i}.bias. Layers that
    receive imported weights get pretrained_lr_scale as their learning-rate
    multiplier; untouched layers keep multiplier 1.0, so a freshly attached
    head trains at the full rate.
    """
    if base is None:
        from .network import init_params

        base = init_params(spec, seed=0)
    params = base.copy()
    tensors = load_text_tensors(path)
    touched = set()
    for name, arr in tensors.items():
        try:
            layer_tok, field = name.split(".")
            index = int(layer_tok.removeprefix("layer"))
        except ValueError as exc:
            raise FormatError(f"unrecognized tensor name {name!r} (want layerN.weights / layerN.bias)") from exc
        if field not in ("weights", "bias"):
            raise FormatError(f"unrecognized tensor field {field!r} in {name!r}")
        if index < 0 or index >= len(params.layers) or params.layers[index].weights is None:
            raise ConfigError(f"tensor {name!r} does not address a trainable layer of spec {spec.name!r}")
        current = getattr(params.layers[index], field)
        if current.shape != arr.shape:
            raise ConfigError(f"tensor {name!r} has shape {arr.shape}, spec wants {current.shape}")
        setattr(params.layers[index], field, arr)
        touched.add(index)
    for index in touched:
        params.layers[index].lr_multiplier = pretrained_lr_scale
    params.validate_for(spec)
    return params
