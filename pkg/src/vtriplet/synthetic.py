"""Procedural desk-scale dataset with controllable appearance changes.

Each "place" is a seeded layout of colored geometric shapes over a textured
background, rendered once on an oversized canvas. Each condition applies a
global appearance transform (brightness/contrast shift, hue rotation,
additive noise) plus a small crop offset that mimics a viewpoint change.
Sequences are aligned frame-for-frame across conditions and poses sit on a
straight line with fixed spacing, so frame index == place index.

Everything derives from one 64-bit seed; identical seeds reproduce
bit-identical image files.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError
from .manifest import ManifestRecord, SequenceManifest, write_manifest

PLACE_SEED_TAG = 0x9A01
CONDITION_SEED_TAG = 0x9A02
NOISE_SEED_TAG = 0x9A03

DEFAULT_SPACING_M = 10.0
_MARGIN_FRACTION = 0.2


@dataclass(frozen=True)
class ConditionTransform:
    brightness: float
    contrast: float
    hue_degrees: float
    noise_sigma: float
    offset: tuple  # (dy, dx) crop shift in margin pixels

    @classmethod
    def identity(cls):
        return cls(0.0, 1.0, 0.0, 0.0, (0, 0))


def _hue_rotation_matrix(degrees):
    """Linear RGB hue rotation about the gray axis (YIQ-space rotation)."""
    theta = np.radians(degrees)
    c, s = np.cos(theta), np.sin(theta)
    return np.array(
        [
            [0.299 + 0.701 * c + 0.168 * s, 0.587 - 0.587 * c + 0.330 * s, 0.114 - 0.114 * c - 0.497 * s],
            [0.299 - 0.299 * c - 0.328 * s, 0.587 + 0.413 * c + 0.035 * s, 0.114 - 0.114 * c + 0.292 * s],
            [0.299 - 0.300 * c + 1.250 * s, 0.587 - 0.588 * c - 1.050 * s, 0.114 + 0.886 * c - 0.203 * s],
        ]
    )


def _smooth_field(rng, height, width, cells=5, amplitude=1.0):
    """Low-resolution noise upsampled bilinearly; cheap background texture."""
    coarse = rng.uniform(-amplitude, amplitude, (cells, cells))
    ys = np.linspace(0, cells - 1, height)
    xs = np.linspace(0, cells - 1, width)
    y0 = np.clip(ys.astype(int), 0, cells - 2)
    x0 = np.clip(xs.astype(int), 0, cells - 2)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    a = coarse[y0][:, x0]
    b = coarse[y0][:, x0 + 1]
    c = coarse[y0 + 1][:, x0]
    d = coarse[y0 + 1][:, x0 + 1]
    return a * (1 - fy) * (1 - fx) + b * (1 - fy) * fx + c * fy * (1 - fx) + d * fy * fx


def render_place(seed, place_index, height, width, n_shapes=8):
    """Render one place's oversized canvas as float RGB in [0, 1]."""
    rng = np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, PLACE_SEED_TAG, place_index]))
    base = rng.uniform(0.25, 0.75, 3)
    img = np.empty((height, width, 3))
    for ch in range(3):
        img[:, :, ch] = base[ch] + _smooth_field(rng, height, width, cells=5, amplitude=0.22)
    yy, xx = np.mgrid[0:height, 0:width]
    for _ in range(n_shapes):
        color = rng.uniform(0.0, 1.0, 3)
        cy = rng.uniform(0.1, 0.9) * height
        cx = rng.uniform(0.1, 0.9) * width
        ry = rng.uniform(0.06, 0.22) * height
        rx = rng.uniform(0.06, 0.22) * width
        if rng.integers(2) == 0:
            mask = (np.abs(yy - cy) < ry) & (np.abs(xx - cx) < rx)
        else:
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 < 1.0
        img[mask] = color
    return np.clip(img, 0.0, 1.0)


def draw_condition_transform(seed, condition_index, margin):
    """Condition 0 is the identity; later conditions draw a global transform."""
    if condition_index == 0:
        return ConditionTransform.identity()
    rng = np.random.default_rng(
        np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, CONDITION_SEED_TAG, condition_index])
    )
    brightness = float(rng.uniform(-0.22, 0.22))
    contrast = float(rng.uniform(0.65, 1.35))
    hue = float(rng.uniform(60.0, 300.0))
    sigma = float(rng.uniform(0.02, 0.05))
    dy = int(rng.integers(-margin, margin + 1))
    dx = int(rng.integers(-margin, margin + 1))
    return ConditionTransform(brightness, contrast, hue, sigma, (dy, dx))


def apply_condition(canvas, transform, margin, height, width, noise_rng):
    """Crop at the condition's offset and apply its appearance transform."""
    dy, dx = transform.offset
    top = margin + dy
    left = margin + dx
    view = canvas[top : top + height, left : left + width, :]
    out = view @ _hue_rotation_matrix(transform.hue_degrees).T
    out = (out - 0.5) * transform.contrast + 0.5 + transform.brightness
    if transform.noise_sigma > 0:
        out = out + noise_rng.normal(0.0, transform.noise_sigma, out.shape)
    return np.clip(out, 0.0, 1.0)


def generate_synthetic_dataset(
    n_places,
    n_conditions,
    image_size,
    seed,
    out_dir,
    spacing=DEFAULT_SPACING_M,
    name="synth",
):
    """Write aligned PNG sequences plus manifests; returns the manifests.

    image_size is (width, height). One sequence per condition, one frame per
    place; poses advance along a line by `spacing` meters per frame.
    """
    if n_places < 2:
        raise ConfigError(f"need at least 2 places, got {n_places}")
    if n_conditions < 1:
        raise ConfigError(f"need at least 1 condition, got {n_conditions}")
    width, height = int(image_size[0]), int(image_size[1])
    margin = max(2, int(round(_MARGIN_FRACTION * min(width, height))))
    out_dir = Path(out_dir)
    transforms = [draw_condition_transform(seed, c, margin) for c in range(n_conditions)]

    manifests = []
    for c, transform in enumerate(transforms):
        condition = f"cond{c}"
        seq_id = f"{name}_{condition}"
        image_dir = out_dir / "images" / seq_id
        image_dir.mkdir(parents=True, exist_ok=True)
        records = []
        for place in range(n_places):
            canvas = render_place(seed, place, height + 2 * margin, width + 2 * margin)
            noise_rng = np.random.default_rng(
                np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, NOISE_SEED_TAG, c, place])
            )
            img = apply_condition(canvas, transform, margin, height, width, noise_rng)
            rel_path = Path("images") / seq_id / f"{place:05d}.png"
            Image.fromarray((img * 255.0).round().astype(np.uint8)).save(out_dir / rel_path)
            records.append(
                ManifestRecord(place, float(place), (place * spacing, 0.0, 0.0), rel_path.as_posix())
            )
        manifest = SequenceManifest(seq_id, condition, records, base_dir=out_dir)
        write_manifest(manifest, out_dir / f"{seq_id}.csv")
        manifests.append(manifest)
    return manifests
