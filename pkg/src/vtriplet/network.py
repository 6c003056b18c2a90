"""Declarative network specs and the composed embedding forward/backward.

A NetworkSpec is an ordered stack of layer specs plus an input shape and a
descriptor length D. Shape propagation is validated at construction, so a
spec that builds is guaranteed to run; forward-time failures are limited to
inputs that do not match the declared input shape.
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import layers
from .errors import ConfigError, ShapeError, UsageError

SPEC_FORMAT = "vtriplet-netspec-1"

# AlexNet-style cross-channel normalization constants; the architecture this
# stack mirrors does not restate them, so its reference values are the default.
LRN_SIZE = 5
LRN_ALPHA = 1e-4
LRN_BETA = 0.75
LRN_BIAS = 2.0


@dataclass(frozen=True)
class ConvSpec:
    out_channels: int
    kernel: int
    stride: int = 1
    pad: int = 0
    kind: str = field(default="conv", init=False)

    def validate(self):
        if self.out_channels < 1:
            raise ConfigError(f"conv out_channels must be >= 1, got {self.out_channels}")
        if self.kernel < 1 or self.stride < 1 or self.pad < 0:
            raise ConfigError(f"invalid conv hyperparameters: kernel={self.kernel} stride={self.stride} pad={self.pad}")


@dataclass(frozen=True)
class ReluSpec:
    kind: str = field(default="relu", init=False)

    def validate(self):
        pass


@dataclass(frozen=True)
class MaxPoolSpec:
    window: int
    stride: int
    kind: str = field(default="maxpool", init=False)

    def validate(self):
        if self.window < 1 or self.stride < 1:
            raise ConfigError(f"invalid pool hyperparameters: window={self.window} stride={self.stride}")


@dataclass(frozen=True)
class LrnSpec:
    size: int = LRN_SIZE
    alpha: float = LRN_ALPHA
    beta: float = LRN_BETA
    bias: float = LRN_BIAS
    kind: str = field(default="lrn", init=False)

    def validate(self):
        if self.size < 1 or self.size % 2 == 0:
            raise ConfigError(f"lrn neighborhood size must be odd and >= 1, got {self.size}")
        if self.bias <= 0:
            raise ConfigError(f"lrn bias must be > 0, got {self.bias}")


@dataclass(frozen=True)
class FullyConnectedSpec:
    out_features: int
    kind: str = field(default="fc", init=False)

    def validate(self):
        if self.out_features < 1:
            raise ConfigError(f"fc out_features must be >= 1, got {self.out_features}")


LayerSpec = ConvSpec | ReluSpec | MaxPoolSpec | LrnSpec | FullyConnectedSpec


def _propagate(input_shape, specs):
    """Yield the output shape of every layer; shapes are (C, H, W) or (F,)."""
    shape = tuple(input_shape)
    shapes = []
    for i, spec in enumerate(specs):
        spec.validate()
        if spec.kind == "fc":
            features = int(np.prod(shape))
            shape = (spec.out_features,)
        elif len(shape) != 3:
            raise ConfigError(f"layer {i} ({spec.kind}) cannot follow a fully-connected layer")
        elif spec.kind == "conv":
            oh, ow = layers.conv_output_shape(shape[1], shape[2], spec.kernel, spec.stride, spec.pad)
            shape = (spec.out_channels, oh, ow)
        elif spec.kind == "maxpool":
            oh, ow = layers.conv_output_shape(shape[1], shape[2], spec.window, spec.stride, 0)
            shape = (shape[0], oh, ow)
        else:  # relu / lrn preserve shape
            shape = shape
        shapes.append(shape)
    return shapes


@dataclass(frozen=True)
class NetworkSpec:
    """Input shape (C, H, W), layer stack, and descriptor length D."""

    input_shape: tuple
    layer_specs: tuple
    descriptor_length: int
    name: str = "custom"

    def __post_init__(self):
        if len(self.input_shape) != 3 or any(int(e) < 1 for e in self.input_shape):
            raise ConfigError(f"input shape must be 3 positive extents (C, H, W), got {self.input_shape}")
        if not self.layer_specs:
            raise ConfigError("a network needs at least one layer")
        object.__setattr__(self, "input_shape", tuple(int(e) for e in self.input_shape))
        object.__setattr__(self, "layer_specs", tuple(self.layer_specs))
        shapes = _propagate(self.input_shape, self.layer_specs)
        last = self.layer_specs[-1]
        if last.kind != "fc" or shapes[-1] != (self.descriptor_length,):
            raise ConfigError(
                f"final layer must be fully-connected with output length {self.descriptor_length}, "
                f"got {last.kind} producing {shapes[-1]}"
            )
        object.__setattr__(self, "_shapes", tuple(shapes))

    @property
    def layer_shapes(self):
        """Output shape of each layer, in order."""
        return self._shapes

    def layer_input_shape(self, index):
        return self.input_shape if index == 0 else self._shapes[index - 1]

    def to_json(self):
        out = {
            "format": SPEC_FORMAT,
            "name": self.name,
            "input": list(self.input_shape),
            "descriptor_length": self.descriptor_length,
            "layers": [],
        }
        for spec in self.layer_specs:
            entry = {"kind": spec.kind}
            for key in ("out_channels", "kernel", "stride", "pad", "window", "size", "alpha", "beta", "bias", "out_features"):
                if hasattr(spec, key):
                    entry[key] = getattr(spec, key)
            out["layers"].append(entry)
        return out

    def fingerprint(self):
        """sha256 digest of the canonical serialization; identifies the spec."""
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).digest()


_LAYER_BUILDERS = {
    "conv": lambda e: ConvSpec(e["out_channels"], e["kernel"], e.get("stride", 1), e.get("pad", 0)),
    "relu": lambda e: ReluSpec(),
    "maxpool": lambda e: MaxPoolSpec(e["window"], e["stride"]),
    "lrn": lambda e: LrnSpec(e.get("size", LRN_SIZE), e.get("alpha", LRN_ALPHA), e.get("beta", LRN_BETA), e.get("bias", LRN_BIAS)),
    "fc": lambda e: FullyConnectedSpec(e["out_features"]),
}


def spec_from_json(obj):
    if obj.get("format") != SPEC_FORMAT:
        raise ConfigError(f"expected spec format {SPEC_FORMAT}, found {obj.get('format')!r}")
    try:
        specs = [_LAYER_BUILDERS[e["kind"]](e) for e in obj["layers"]]
    except KeyError as exc:
        raise ConfigError(f"bad layer entry in network spec: missing {exc}") from exc
    return NetworkSpec(
        input_shape=tuple(obj["input"]),
        layer_specs=tuple(specs),
        descriptor_length=int(obj["descriptor_length"]),
        name=obj.get("name", "custom"),
    )


def tiny_spec():
    """Desk-scale default: two conv stages on 32x24 input, 16-d descriptor."""
    return NetworkSpec(
        input_shape=(3, 24, 32),
        layer_specs=(
            ConvSpec(8, 5, stride=2, pad=2),
            ReluSpec(),
            MaxPoolSpec(2, 2),
            LrnSpec(),
            ConvSpec(16, 3, stride=1, pad=1),
            ReluSpec(),
            MaxPoolSpec(2, 2),
            FullyConnectedSpec(16),
        ),
        descriptor_length=16,
        name="tiny",
    )


def paper_spec():
    """Full-scale stack: four conv stages on 160x120 input, 128-d descriptor."""
    return NetworkSpec(
        input_shape=(3, 120, 160),
        layer_specs=(
            ConvSpec(96, 11, stride=4, pad=0),
            ReluSpec(),
            MaxPoolSpec(3, 2),
            LrnSpec(),
            ConvSpec(256, 5, stride=1, pad=2),
            ReluSpec(),
            MaxPoolSpec(3, 2),
            LrnSpec(),
            ConvSpec(384, 3, stride=1, pad=1),
            ReluSpec(),
            ConvSpec(384, 3, stride=1, pad=1),
            ReluSpec(),
            FullyConnectedSpec(128),
        ),
        descriptor_length=128,
        name="paper",
    )


PRESET_SPECS = {"tiny": tiny_spec, "paper": paper_spec}


@dataclass
class LayerParams:
    """Weights/bias for one layer (None for relu/pool/lrn) plus its lr scale."""

    weights: np.ndarray | None = None
    bias: np.ndarray | None = None
    lr_multiplier: float = 1.0


@dataclass
class ParameterSet:
    layers: list

    def validate_for(self, spec):
        if len(self.layers) != len(spec.layer_specs):
            raise ConfigError(f"parameter set has {len(self.layers)} layers, spec has {len(spec.layer_specs)}")
        for i, (lp, ls) in enumerate(zip(self.layers, spec.layer_specs)):
            expected = _param_shapes(spec, i)
            got = None if lp.weights is None else (lp.weights.shape, lp.bias.shape)
            if expected != got:
                raise ConfigError(f"layer {i} ({ls.kind}): expected parameter shapes {expected}, got {got}")
            if lp.lr_multiplier < 0:
                raise ConfigError(f"layer {i}: lr multiplier must be >= 0, got {lp.lr_multiplier}")

    def trainable(self):
        """Indices of layers that own weights."""
        return [i for i, lp in enumerate(self.layers) if lp.weights is not None]

    def weight_norm(self):
        """L2 norm over every trainable tensor (weights and biases)."""
        total = 0.0
        for lp in self.layers:
            if lp.weights is not None:
                total += float(np.sum(lp.weights.astype(np.float64) ** 2))
                total += float(np.sum(lp.bias.astype(np.float64) ** 2))
        return total ** 0.5

    def copy(self):
        return ParameterSet(
            [LayerParams(None if lp.weights is None else lp.weights.copy(),
                         None if lp.bias is None else lp.bias.copy(),
                         lp.lr_multiplier) for lp in self.layers]
        )

    def astype(self, dtype):
        return ParameterSet(
            [LayerParams(None if lp.weights is None else lp.weights.astype(dtype),
                         None if lp.bias is None else lp.bias.astype(dtype),
                         lp.lr_multiplier) for lp in self.layers]
        )


def _param_shapes(spec, index):
    ls = spec.layer_specs[index]
    if ls.kind == "conv":
        in_c = spec.layer_input_shape(index)[0]
        return ((ls.out_channels, in_c, ls.kernel, ls.kernel), (ls.out_channels,))
    if ls.kind == "fc":
        in_features = int(np.prod(spec.layer_input_shape(index)))
        return ((ls.out_features, in_features), (ls.out_features,))
    return None


def init_params(spec, seed, dtype=np.float32):
    """Fresh parameters: weights ~ U(-s, s), s = sqrt(6/(fan_in+fan_out)), biases 0."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, 0x1217]))
    out = []
    for i, ls in enumerate(spec.layer_specs):
        shapes = _param_shapes(spec, i)
        if shapes is None:
            out.append(LayerParams())
            continue
        w_shape, b_shape = shapes
        if ls.kind == "conv":
            fan_in = w_shape[1] * ls.kernel * ls.kernel
            fan_out = w_shape[0] * ls.kernel * ls.kernel
        else:
            fan_in, fan_out = w_shape[1], w_shape[0]
        s = np.sqrt(6.0 / (fan_in + fan_out))
        weights = rng.uniform(-s, s, size=w_shape).astype(dtype)
        out.append(LayerParams(weights, np.zeros(b_shape, dtype=dtype), 1.0))
    return ParameterSet(out)


def zero_like_grads(params):
    """Gradient accumulator matching a ParameterSet's trainable tensors."""
    return [
        None if lp.weights is None else (np.zeros_like(lp.weights), np.zeros_like(lp.bias))
        for lp in params.layers
    ]


class ForwardTape:
    """Retained activations from one forward pass, consumed by network_backward."""

    def __init__(self, spec, params, records, batch):
        self.spec = spec
        self.params = params
        self.records = records
        self.batch = batch
        self.consumable = True


def network_forward(images, spec, params, retain=False):
    """Embed a batch (B, C, H, W) into descriptors (B, D).

    With retain=True also returns a ForwardTape holding the per-layer
    activations a subsequent network_backward needs.
    """
    if images.ndim != 4:
        raise ShapeError(f"input must be rank 4 (batch, C, H, W), got shape {images.shape}")
    if tuple(images.shape[1:]) != spec.input_shape:
        raise ShapeError(f"input shape {tuple(images.shape[1:])} does not match spec input {spec.input_shape}")
    params.validate_for(spec)
    x = images
    records = [] if retain else None
    for i, ls in enumerate(spec.layer_specs):
        lp = params.layers[i]
        if ls.kind == "conv":
            out = layers.conv2d_forward(x, lp.weights, lp.bias, ls.stride, ls.pad)
            rec = (x,)
        elif ls.kind == "relu":
            out = layers.relu_forward(x)
            rec = (x,)
        elif ls.kind == "maxpool":
            out, idx = layers.maxpool_forward(x, ls.window, ls.stride)
            rec = (idx, x.shape)
        elif ls.kind == "lrn":
            out = layers.lrn_forward(x, ls.size, ls.alpha, ls.beta, ls.bias)
            rec = (x,)
        else:
            out = layers.fc_forward(x, lp.weights, lp.bias)
            rec = (x,)
        if retain:
            records.append(rec)
        x = out
    if retain:
        return x, ForwardTape(spec, params, records, images.shape[0])
    return x


def network_backward(tape, grad_descriptors):
    """Chain-rule parameter gradients for a retained forward pass.

    grad_descriptors is (B, D); returns a per-layer list of None or
    (grad_weights, grad_bias), summed over the batch.
    """
    if not isinstance(tape, ForwardTape) or not tape.consumable:
        raise UsageError("network_backward needs the tape of a retained forward pass")
    spec, params = tape.spec, tape.params
    expected = (tape.batch, spec.descriptor_length)
    if grad_descriptors.shape != expected:
        raise ShapeError(f"grad_descriptors shape {grad_descriptors.shape} does not match {expected}")
    grads = [None] * len(spec.layer_specs)
    g = grad_descriptors
    for i in range(len(spec.layer_specs) - 1, -1, -1):
        ls = spec.layer_specs[i]
        lp = params.layers[i]
        rec = tape.records[i]
        if ls.kind == "conv":
            g, gw, gb = layers.conv2d_backward(rec[0], lp.weights, g, ls.stride, ls.pad)
            grads[i] = (gw, gb)
        elif ls.kind == "relu":
            g = layers.relu_backward(rec[0], g)
        elif ls.kind == "maxpool":
            g = layers.maxpool_backward(rec[0], g, rec[1])
        elif ls.kind == "lrn":
            g = layers.lrn_backward(rec[0], g, ls.size, ls.alpha, ls.beta, ls.bias)
        else:
            g, gw, gb = layers.fc_backward(rec[0], lp.weights, g)
            grads[i] = (gw, gb)
    return grads
