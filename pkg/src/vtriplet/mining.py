"""Triplet mining from pose-labeled sequences.

Two regimes cover the training recipes this pipeline supports:

* viewpoint mining inside one sequence — positives are frames spatially
  close to the query but outside a temporal exclusion window, so revisits
  (loop closures) and laterally displaced frames qualify while trivially
  adjacent frames do not;
* cross-condition mining over a pair of aligned sequences — positives are
  the aligned same-place frames of the other condition, negatives come from
  either condition as long as they are spatially far from the query.

Miners are pure functions of (manifests, rule, seed): candidate pools are
precomputed from ground-truth poses, then sampling is plain seeded draws.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, MiningError

STREAM_SEED_TAG = 0x5712


@dataclass(frozen=True)
class FrameRef:
    sequence_id: str
    frame: int


@dataclass(frozen=True)
class Triplet:
    query: FrameRef
    similar: FrameRef
    dissimilar: FrameRef
    rule: str


@dataclass(frozen=True)
class MiningRule:
    """Distance thresholds and sampling policy for one triplet source."""

    r_pos: float = 10.0
    r_neg: float = 50.0
    cross_condition: bool = False
    neighbor_exclusion: int = 2
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.r_pos < self.r_neg:
            raise ConfigError(f"need 0 < r_pos < r_neg, got r_pos={self.r_pos} r_neg={self.r_neg}")
        if self.neighbor_exclusion < 0:
            raise ConfigError(f"neighbor exclusion must be >= 0, got {self.neighbor_exclusion}")


@dataclass
class MiningResult:
    """Mined triplets plus a shortfall report when the request was infeasible."""

    triplets: list
    requested: int
    note: str = ""

    @property
    def shortfall(self):
        return len(self.triplets) < self.requested


def _distance_matrix(poses_a, poses_b):
    diff = poses_a[:, None, :] - poses_b[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


class ViewpointSampler:
    """Same-sequence miner: spatially-near positives, spatially-far negatives."""

    name = "viewpoint"

    def __init__(self, manifest, rule):
        self.manifest = manifest
        self.rule = rule
        poses = manifest.poses()
        n = len(manifest)
        dist = _distance_matrix(poses, poses)
        near = dist < rule.r_pos
        temporal = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :]) <= rule.neighbor_exclusion
        self.positives = [np.flatnonzero(near[q] & ~temporal[q]) for q in range(n)]
        self.negatives = [np.flatnonzero(dist[q] > rule.r_neg) for q in range(n)]
        self.valid_queries = np.array(
            [q for q in range(n) if len(self.positives[q]) and len(self.negatives[q])], dtype=np.int64
        )
        self.label = f"viewpoint:{manifest.sequence_id}"

    def sample(self, rng):
        if len(self.valid_queries) == 0:
            return None
        q = int(self.valid_queries[rng.integers(len(self.valid_queries))])
        p = int(self.positives[q][rng.integers(len(self.positives[q]))])
        k = int(self.negatives[q][rng.integers(len(self.negatives[q]))])
        sid = self.manifest.sequence_id
        return Triplet(FrameRef(sid, q), FrameRef(sid, p), FrameRef(sid, k), self.name)


class CrossConditionSampler:
    """Aligned-pair miner: positives cross conditions, negatives from either."""

    name = "cross-condition"

    def __init__(self, manifest_a, manifest_b, alignment, rule):
        self.manifests = (manifest_a, manifest_b)
        self.rule = rule
        if alignment is None:
            if len(manifest_a) != len(manifest_b):
                raise ConfigError(
                    "identity alignment needs equal-length sequences, got "
                    f"{len(manifest_a)} and {len(manifest_b)}"
                )
            alignment = [(i, i) for i in range(len(manifest_a))]
        poses_a, poses_b = manifest_a.poses(), manifest_b.poses()
        d_pair = np.array(
            [np.linalg.norm(poses_a[ia] - poses_b[ib]) for ia, ib in alignment]
        )
        self.pairs = [tuple(p) for p, d in zip(alignment, d_pair) if d < rule.r_pos]
        pooled = np.concatenate([poses_a, poses_b], axis=0)
        self._split = len(manifest_a)
        self._dist_a = _distance_matrix(poses_a, pooled)
        self._dist_b = _distance_matrix(poses_b, pooled)
        self._toggle = 0
        self.label = f"cross:{manifest_a.sequence_id}:{manifest_b.sequence_id}"

    def _frame_ref(self, pooled_index):
        if pooled_index < self._split:
            return FrameRef(self.manifests[0].sequence_id, int(pooled_index))
        return FrameRef(self.manifests[1].sequence_id, int(pooled_index) - self._split)

    def sample(self, rng):
        if not self.pairs:
            return None
        ia, ib = self.pairs[rng.integers(len(self.pairs))]
        side = self._toggle
        self._toggle ^= 1
        if side == 0:
            query = FrameRef(self.manifests[0].sequence_id, ia)
            similar = FrameRef(self.manifests[1].sequence_id, ib)
            far = np.flatnonzero(self._dist_a[ia] > self.rule.r_neg)
        else:
            query = FrameRef(self.manifests[1].sequence_id, ib)
            similar = FrameRef(self.manifests[0].sequence_id, ia)
            far = np.flatnonzero(self._dist_b[ib] > self.rule.r_neg)
        if len(far) == 0:
            return None
        dissimilar = self._frame_ref(far[rng.integers(len(far))])
        return Triplet(query, similar, dissimilar, self.name)


def _collect(sampler, rule, count, infeasible_note):
    if count < 1:
        raise ConfigError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(np.random.SeedSequence([rule.seed & 0xFFFFFFFFFFFFFFFF, STREAM_SEED_TAG]))
    out = []
    rejections = 0
    while len(out) < count:
        t = sampler.sample(rng)
        if t is None:
            rejections += 1
            if rejections > 1000:
                return MiningResult(out, count, note=infeasible_note)
            continue
        rejections = 0
        out.append(t)
    return MiningResult(out, count)


def mine_viewpoint_triplets(manifest, rule, count):
    """Mine viewpoint-diversity triplets from one sequence.

    Returns a MiningResult; when the geometry admits no valid triplet
    (for example a straight line whose spacing exceeds r_pos, leaving only
    temporally excluded neighbors as positives) the result reports the
    shortfall instead of raising.
    """
    sampler = ViewpointSampler(manifest, rule)
    if len(sampler.valid_queries) == 0:
        return MiningResult([], count, note=f"no frame of {manifest.sequence_id} has both a valid positive and negative")
    return _collect(sampler, rule, count, f"sampling stalled on {manifest.sequence_id}")


def mine_cross_condition_triplets(manifest_a, manifest_b, alignment, rule, count):
    """Mine cross-condition triplets from two aligned sequences.

    `alignment` is a sequence of (frame_a, frame_b) index pairs, or None for
    the identity map over equal-length sequences. Query condition alternates
    between the two sequences draw by draw.
    """
    sampler = CrossConditionSampler(manifest_a, manifest_b, alignment, rule)
    if not sampler.pairs:
        return MiningResult([], count, note="no aligned pair lies within r_pos")
    return _collect(sampler, rule, count, "no negatives beyond r_neg for the aligned pairs")


def triplet_stream(sources, weights, seed):
    """Unbounded deterministic iterator over weighted triplet sources.

    `sources` are sampler objects exposing sample(rng) and a `label`
    (falling back to their class name). Each draw first picks a source by
    weighted choice, then mines one triplet from it. A source that rejects
    more than 1000 consecutive draws aborts the stream.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if len(weights) != len(sources) or len(sources) == 0:
        raise ConfigError(f"need one weight per source, got {len(weights)} weights for {len(sources)} sources")
    if (weights < 0).any() or weights.sum() <= 0:
        raise ConfigError("mixture weights must be non-negative and not all zero")
    p = weights / weights.sum()
    rng = np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, STREAM_SEED_TAG]))
    while True:
        si = int(rng.choice(len(sources), p=p))
        source = sources[si]
        triplet = source.sample(rng)
        rejections = 0
        while triplet is None:
            rejections += 1
            if rejections > 1000:
                label = getattr(source, "label", type(source).__name__)
                raise MiningError(f"triplet source {label!r} persistently failed to yield")
            triplet = source.sample(rng)
        yield triplet


def write_triplets(triplets, path, header_lines=()):
    """Triplet list CSV: q_seq,q_frame,p_seq,p_frame,n_seq,n_frame,rule."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["q_seq", "q_frame", "p_seq", "p_frame", "n_seq", "n_frame", "rule"])
        for t in triplets:
            writer.writerow(
                [t.query.sequence_id, t.query.frame, t.similar.sequence_id, t.similar.frame,
                 t.dissimilar.sequence_id, t.dissimilar.frame, t.rule]
            )


def read_triplets(path):
    path = Path(path)
    out = []
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and not row[0].startswith("#")]
    for row in rows[1:]:
        out.append(
            Triplet(
                FrameRef(row[0], int(row[1])),
                FrameRef(row[2], int(row[3])),
                FrameRef(row[4], int(row[5])),
                row[6],
            )
        )
    return out
