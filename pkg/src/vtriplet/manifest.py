"""Pose-labeled image sequence manifests.

Line-oriented CSV with header
``seq_id,condition,frame,timestamp_s,x_m,y_m,z_m,image_path`` or the
geographic variant ``seq_id,condition,frame,timestamp_s,lat,lon,alt,image_path``;
geographic fixes are converted to local metric coordinates with an
equirectangular approximation about the first record (adequate below
~100 km extents). Image paths may be relative to the manifest's directory.
"""

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ManifestError

METRIC_HEADER = ["seq_id", "condition", "frame", "timestamp_s", "x_m", "y_m", "z_m", "image_path"]
GEO_HEADER = ["seq_id", "condition", "frame", "timestamp_s", "lat", "lon", "alt", "image_path"]

_EARTH_RADIUS_M = 6378137.0


@dataclass(frozen=True)
class ManifestRecord:
    frame: int
    timestamp: float
    pose: tuple
    image_path: str


@dataclass
class SequenceManifest:
    sequence_id: str
    condition: str
    records: list
    base_dir: Path | None = None

    def __len__(self):
        return len(self.records)

    def poses(self):
        """(n, 3) array of local metric poses in record order."""
        return np.array([r.pose for r in self.records], dtype=np.float64)

    def resolve_image(self, frame):
        raw = Path(self.records[frame].image_path)
        if raw.is_absolute() or self.base_dir is None:
            return raw
        return self.base_dir / raw


def geographic_to_local(lat, lon, alt, origin):
    """Equirectangular projection about `origin` = (lat0, lon0, alt0)."""
    lat0, lon0, alt0 = origin
    x = _EARTH_RADIUS_M * math.radians(lon - lon0) * math.cos(math.radians(lat0))
    y = _EARTH_RADIUS_M * math.radians(lat - lat0)
    return (x, y, alt - alt0)


def load_manifest(path, strict=False):
    """Parse and validate a manifest CSV.

    Raises ManifestError naming the offending line for parse failures and
    non-increasing timestamps; with strict=True also verifies that every
    referenced image resolves to an existing file.
    """
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    with open(path, newline="") as fh:
        rows = [(i, row) for i, row in enumerate(csv.reader(fh), start=1) if row and not row[0].startswith("#")]
    if not rows:
        raise ManifestError(f"{path}: empty manifest")
    header_line, header = rows[0]
    header = [h.strip() for h in header]
    if header == METRIC_HEADER:
        geographic = False
    elif header == GEO_HEADER:
        geographic = True
    else:
        raise ManifestError(f"{path}:{header_line}: unrecognized header {header!r}")

    records = []
    seq_id = condition = None
    origin = None
    prev_ts = None
    for line_no, row in rows[1:]:
        if len(row) != 8:
            raise ManifestError(f"{path}:{line_no}: expected 8 fields, found {len(row)}")
        try:
            frame = int(row[2])
            ts = float(row[3])
            a, b, c = float(row[4]), float(row[5]), float(row[6])
        except ValueError as exc:
            raise ManifestError(f"{path}:{line_no}: {exc}") from exc
        if seq_id is None:
            seq_id, condition = row[0], row[1]
        elif row[0] != seq_id or row[1] != condition:
            raise ManifestError(f"{path}:{line_no}: mixed sequence ids or conditions in one manifest")
        if frame != len(records):
            raise ManifestError(f"{path}:{line_no}: frame index {frame} out of order (expected {len(records)})")
        if prev_ts is not None and ts <= prev_ts:
            raise ManifestError(f"{path}:{line_no}: timestamp {ts} is not strictly increasing")
        prev_ts = ts
        if geographic:
            if origin is None:
                origin = (a, b, c)
            pose = geographic_to_local(a, b, c, origin)
        else:
            pose = (a, b, c)
        records.append(ManifestRecord(frame, ts, pose, row[7]))
    if not records:
        raise ManifestError(f"{path}: manifest has a header but no records")

    manifest = SequenceManifest(seq_id, condition, records, base_dir=path.parent)
    if strict:
        missing = [str(manifest.resolve_image(r.frame)) for r in records if not manifest.resolve_image(r.frame).exists()]
        if missing:
            preview = ", ".join(missing[:5])
            raise ManifestError(f"{path}: {len(missing)} referenced images missing: {preview}")
    return manifest


def write_manifest(manifest, path, header_lines=()):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(METRIC_HEADER)
        for r in manifest.records:
            writer.writerow(
                [manifest.sequence_id, manifest.condition, r.frame, repr(r.timestamp),
                 repr(r.pose[0]), repr(r.pose[1]), repr(r.pose[2]), r.image_path]
            )
