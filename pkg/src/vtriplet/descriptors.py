"""Sequence embedding and descriptor-set persistence.

Images are decoded with Pillow, scaled to [0, 1] per channel with no mean
subtraction, bilinearly resized to the network input, and embedded in
manifest order. Descriptor files are little-endian binary:

    magic  8 bytes  b"VTRIPDS1"
    u32             descriptor length D
    u32             descriptor count
    f32 * count*D   row-major descriptor data
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError, MissingArtifactError, ShapeError
from .network import network_forward

DESCRIPTOR_MAGIC_FAMILY = b"VTRIPDS"
DESCRIPTOR_MAGIC = DESCRIPTOR_MAGIC_FAMILY + b"1"

DEFAULT_EMBED_BATCH = 32


@dataclass
class DescriptorSet:
    sequence_id: str
    vectors: np.ndarray  # (count, D) float32, manifest frame order

    @property
    def descriptor_length(self):
        return self.vectors.shape[1]

    def __len__(self):
        return self.vectors.shape[0]


def bilinear_resize(image, out_h, out_w):
    """Bilinear resample of an (H, W, C) float array to (out_h, out_w, C).

    Output pixel centers map to input coordinates via the half-pixel
    convention; borders clamp. Pure numpy, so results are identical across
    platforms and image backends.
    """
    in_h, in_w = image.shape[:2]
    if (in_h, in_w) == (out_h, out_w):
        return image.copy()
    ys = (np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, in_h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, in_w - 1)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    fy = np.clip(ys - y0, 0.0, 1.0)[:, None, None]
    fx = np.clip(xs - x0, 0.0, 1.0)[None, :, None]
    a = image[np.ix_(y0, x0)]
    b = image[np.ix_(y0, x1)]
    c = image[np.ix_(y1, x0)]
    d = image[np.ix_(y1, x1)]
    return a * (1 - fy) * (1 - fx) + b * (1 - fy) * fx + c * fy * (1 - fx) + d * fy * fx


def load_image_chw(path, input_shape):
    """Load an image as float32 (C, H, W) in [0, 1] matching `input_shape`."""
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"image not found: {path}")
    try:
        with Image.open(path) as img:
            arr = np.asarray(img)
    except Exception as exc:
        raise FormatError(f"cannot decode image {path}: {exc}") from exc
    if arr.ndim == 2:
        arr = arr[:, :, None]
    channels, height, width = input_shape
    if arr.shape[2] == 4:
        arr = arr[:, :, :3]
    if arr.shape[2] == 1 and channels == 3:
        arr = np.repeat(arr, 3, axis=2)
    if arr.shape[2] != channels:
        raise ShapeError(f"image {path} has {arr.shape[2]} channels, network expects {channels}")
    scaled = arr.astype(np.float32) / 255.0
    resized = bilinear_resize(scaled.astype(np.float64), height, width)
    return np.ascontiguousarray(resized.transpose(2, 0, 1), dtype=np.float32)


def make_image_provider(manifests, input_shape, cache=True):
    """Callable FrameRef -> (C, H, W) float32, with an all-images cache."""
    by_id = {m.sequence_id: m for m in manifests}
    store = {} if cache else None

    def provider(ref):
        key = (ref.sequence_id, ref.frame)
        if store is not None and key in store:
            return store[key]
        manifest = by_id.get(ref.sequence_id)
        if manifest is None:
            raise MissingArtifactError(f"no manifest loaded for sequence {ref.sequence_id!r}")
        img = load_image_chw(manifest.resolve_image(ref.frame), input_shape)
        if store is not None:
            store[key] = img
        return img

    return provider


def embed_sequence(manifest, spec, params, batch=DEFAULT_EMBED_BATCH):
    """One descriptor per manifest frame, in frame order."""
    if batch < 1:
        raise ShapeError(f"batch must be >= 1, got {batch}")
    vectors = np.empty((len(manifest), spec.descriptor_length), dtype=np.float32)
    for start in range(0, len(manifest), batch):
        chunk = manifest.records[start : start + batch]
        try:
            stack = np.stack([load_image_chw(manifest.resolve_image(r.frame), spec.input_shape) for r in chunk])
        except (MissingArtifactError, FormatError) as exc:
            raise type(exc)(f"sequence {manifest.sequence_id}: {exc}") from exc
        vectors[start : start + len(chunk)] = network_forward(stack, spec, params)
    return DescriptorSet(manifest.sequence_id, vectors)


def save_descriptors(dset, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.ascontiguousarray(dset.vectors, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(DESCRIPTOR_MAGIC)
        fh.write(struct.pack("<II", data.shape[1], data.shape[0]))
        fh.write(data.tobytes())


def load_descriptors(path, sequence_id=None):
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"descriptor file not found: {path}")
    data = path.read_bytes()
    if len(data) < 16:
        raise FormatError(f"truncated descriptor file {path}")
    magic = data[:8]
    if magic[:7] != DESCRIPTOR_MAGIC_FAMILY:
        raise FormatError(f"{path} is not a descriptor file (bad magic {magic!r})")
    if magic != DESCRIPTOR_MAGIC:
        raise FormatError(
            f"descriptor file version mismatch in {path}: expected {DESCRIPTOR_MAGIC[7:8]!r}, found {magic[7:8]!r}"
        )
    d, count = struct.unpack("<II", data[8:16])
    expected = 16 + 4 * d * count
    if len(data) != expected:
        raise FormatError(f"descriptor file {path} has {len(data)} bytes, expected {expected}")
    vectors = np.frombuffer(data[16:], dtype="<f4").reshape(count, d).copy()
    return DescriptorSet(sequence_id or path.stem, vectors)
