"""Stochastic-gradient training of the embedding network on triplet streams.

Each iteration embeds the batch's images once (triplets share images through
a deduplicated forward pass), accumulates the three per-image cost-gradient
contributions of every triplet, backpropagates the summed gradient, and
applies one SGD step with per-layer learning-rate multipliers and weight
decay on the weights only (biases are excluded unless configured otherwise).
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .loss import triplet_cost, triplet_cost_grad
from .network import network_backward, network_forward

DEFAULT_LEARNING_RATE = 0.001
DEFAULT_BATCH_SIZE = 30
DEFAULT_MARGIN = 1.0
DEFAULT_WEIGHT_DECAY = 0.0005


@dataclass(frozen=True)
class TripletCostConfig:
    margin: float = DEFAULT_MARGIN
    weight_decay: float = DEFAULT_WEIGHT_DECAY
    decay_biases: bool = False

    def __post_init__(self):
        if self.margin <= 0:
            raise ConfigError(f"margin must be > 0, got {self.margin}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight decay must be >= 0, got {self.weight_decay}")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = DEFAULT_LEARNING_RATE
    batch_size: int = DEFAULT_BATCH_SIZE
    iterations: int = 1
    seed: int = 0
    momentum: float = 0.0  # reserved; 0.0 keeps the update plain SGD
    log_interval: int = 10

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        # Iteration budget 0 is the documented empty run (params returned as-is).
        if self.iterations < 0:
            raise ConfigError(f"iteration budget must be >= 0, got {self.iterations}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.log_interval < 1:
            raise ConfigError(f"log interval must be >= 1, got {self.log_interval}")


@dataclass(frozen=True)
class TrainLogRecord:
    iteration: int
    mean_cost: float
    zero_cost_fraction: float
    param_norm: float


@dataclass
class TrainResult:
    params: object
    records: list
    completed_iterations: int
    truncated: bool = False


def sgd_step(params, gradients, global_lr, weight_decay, decay_biases=False):
    """One plain SGD step; returns a new ParameterSet.

    Per trainable layer: w <- w - (global_lr * multiplier) * (grad + 2*wd*w);
    biases skip the decay term unless decay_biases is set.
    """
    updated = params.copy()
    for i, lp in enumerate(updated.layers):
        if lp.weights is None:
            if gradients[i] is not None:
                raise ShapeError(f"layer {i} has no parameters but received a gradient")
            continue
        if gradients[i] is None:
            raise ShapeError(f"layer {i} is trainable but received no gradient")
        gw, gb = gradients[i]
        if gw.shape != lp.weights.shape or gb.shape != lp.bias.shape:
            raise ShapeError(
                f"layer {i}: gradient shapes {gw.shape}/{gb.shape} do not match "
                f"parameters {lp.weights.shape}/{lp.bias.shape}"
            )
        step = global_lr * lp.lr_multiplier
        if step == 0.0:
            continue
        dtype = lp.weights.dtype
        lp.weights = (lp.weights - step * (gw + (2.0 * weight_decay) * lp.weights)).astype(dtype, copy=False)
        gb_eff = gb + (2.0 * weight_decay) * lp.bias if decay_biases else gb
        lp.bias = (lp.bias - step * gb_eff).astype(dtype, copy=False)
    return updated


def _momentum_step(params, gradients, velocity, global_lr, weight_decay, momentum, decay_biases):
    updated = params.copy()
    for i, lp in enumerate(updated.layers):
        if lp.weights is None:
            continue
        gw, gb = gradients[i]
        vw, vb = velocity[i]
        vw *= momentum
        vw += gw + (2.0 * weight_decay) * lp.weights
        vb *= momentum
        vb += gb + ((2.0 * weight_decay) * lp.bias if decay_biases else 0.0)
        step = global_lr * lp.lr_multiplier
        lp.weights = (lp.weights - step * vw).astype(lp.weights.dtype, copy=False)
        lp.bias = (lp.bias - step * vb).astype(lp.bias.dtype, copy=False)
    return updated


def train(spec, initial_params, triplet_stream, images, train_config, cost_config):
    """Run the iteration budget over a triplet stream.

    `triplet_stream` yields Triplet references; `images` maps a
    (sequence_id, frame) ref to a float32 (C, H, W) array matching the spec
    input. If the stream runs dry mid-batch the run halts and the result is
    marked truncated, with the parameters trained so far.

    Returns a TrainResult carrying the final ParameterSet and one
    TrainLogRecord per logging interval (iteration 1 and the final
    iteration are always logged).
    """
    initial_params.validate_for(spec)
    params = initial_params.copy()
    records = []
    stream = iter(triplet_stream)
    velocity = None
    if train_config.momentum > 0.0:
        velocity = [
            None if lp.weights is None else (np.zeros_like(lp.weights), np.zeros_like(lp.bias))
            for lp in params.layers
        ]

    for iteration in range(1, train_config.iterations + 1):
        batch = []
        try:
            while len(batch) < train_config.batch_size:
                batch.append(next(stream))
        except StopIteration:
            return TrainResult(params, records, iteration - 1, truncated=True)

        slots = {}
        for t in batch:
            for ref in (t.query, t.similar, t.dissimilar):
                slots.setdefault(ref, len(slots))
        stack = np.stack([images(ref) for ref in slots])
        descriptors, tape = network_forward(stack, spec, params, retain=True)

        grad_desc = np.zeros(descriptors.shape, dtype=np.float64)
        costs = np.empty(len(batch))
        for b, t in enumerate(batch):
            qi, pi, ni = slots[t.query], slots[t.similar], slots[t.dissimilar]
            cost = triplet_cost(descriptors[qi], descriptors[pi], descriptors[ni], cost_config.margin)
            costs[b] = cost
            if cost > 0.0:
                gi, gj, gk = triplet_cost_grad(
                    descriptors[qi], descriptors[pi], descriptors[ni], cost_config.margin
                )
                grad_desc[qi] += gi
                grad_desc[pi] += gj
                grad_desc[ni] += gk

        gradients = network_backward(tape, grad_desc.astype(descriptors.dtype))
        if velocity is None:
            params = sgd_step(params, gradients, train_config.learning_rate,
                              cost_config.weight_decay, cost_config.decay_biases)
        else:
            params = _momentum_step(params, gradients, velocity, train_config.learning_rate,
                                    cost_config.weight_decay, train_config.momentum,
                                    cost_config.decay_biases)

        if iteration == 1 or iteration == train_config.iterations or iteration % train_config.log_interval == 0:
            records.append(TrainLogRecord(
                iteration=iteration,
                mean_cost=float(costs.mean()),
                zero_cost_fraction=float((costs == 0.0).mean()),
                param_norm=params.weight_norm(),
            ))

    return TrainResult(params, records, train_config.iterations, truncated=False)


def write_train_log(records, path, header_lines=()):
    """Emit the training log as CSV: iteration, mean_cost, zero_cost_fraction, param_norm."""
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["iteration", "mean_cost", "zero_cost_fraction", "param_norm"])
        for rec in records:
            writer.writerow([rec.iteration, repr(rec.mean_cost), repr(rec.zero_cost_fraction), repr(rec.param_norm)])
