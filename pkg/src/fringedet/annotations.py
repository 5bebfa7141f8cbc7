"""Annotation records and the on-disk CSV format.

Layout written by :func:`write_annotations` for a manifest at
``<root>/<name>.csv``::

    <root>/<name>.csv                  frame_index,image_path,annotation_path,split
    <root>/<name>.ini                  [dataset] name / width / height
    <root>/annotations/frame_NNNNNN.csv  cx,cy,a,b,theta_deg,rings

Paths inside the manifest are relative to ``<root>``. This CSV layout is a
stand-in of our own design; the aggregated volunteer-annotation schema
used upstream was never published.
"""

from __future__ import annotations

import configparser
import csv
import io
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from fringedet.errors import ConfigError, IoError, ParseError
from fringedet.geometry import Ellipse

FRAME_HEADER = ["cx", "cy", "a", "b", "theta_deg", "rings"]
DETECTION_HEADER = FRAME_HEADER + ["confidence"]
MANIFEST_HEADER = ["frame_index", "image_path", "annotation_path", "split"]
SPLITS = ("train", "val", "test", "all")
RINGS_MAX = 11


@dataclass(frozen=True)
class Annotation:
    ellipse: Ellipse
    rings: float
    exists: int = 1


@dataclass(frozen=True)
class Detection:
    ellipse: Ellipse
    rings: float
    confidence: float


@dataclass(frozen=True)
class FrameRecord:
    image_path: str
    frame_index: int
    annotations: tuple = ()

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError("frame_index must be >= 0")
        object.__setattr__(self, "annotations", tuple(self.annotations))


@dataclass
class DatasetManifest:
    name: str
    split: str
    records: list = field(default_factory=list)
    image_width: int = 512
    image_height: int = 384

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ConfigError(f"unknown split {self.split!r}; expected one of {SPLITS}")

    def __len__(self):
        return len(self.records)


def _fmt(v: float) -> str:
    s = f"{v:.6f}"
    return "0.000000" if s == "-0.000000" else s


def frame_csv_text(rows: Sequence, with_confidence: bool = False) -> str:
    """Serialize annotations (or detections) to the frame CSV text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DETECTION_HEADER if with_confidence else FRAME_HEADER)
    for r in rows:
        e = r.ellipse
        vals = [e.cx, e.cy, e.a, e.b, e.theta, r.rings]
        if with_confidence:
            vals.append(r.confidence)
        w.writerow([_fmt(float(v)) for v in vals])
    return buf.getvalue()


def _write_text(path: Path, text: str):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def frame_csv_name(frame_index: int) -> str:
    return f"annotations/frame_{frame_index:06d}.csv"


def write_frame_csv(path, rows, with_confidence=False):
    _write_text(Path(path), frame_csv_text(rows, with_confidence))


def write_annotations(manifest: DatasetManifest, path) -> None:
    """Write the manifest CSV, its metadata sidecar, and one CSV per frame.

    ``path`` is the manifest file (``.csv`` is appended when missing); frame
    CSVs live next to it under ``annotations/``. Output is byte-identical for
    identical input.
    """
    path = Path(path)
    if path.suffix != ".csv":
        path = path.with_suffix(".csv")
    root = path.parent
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MANIFEST_HEADER)
    for rec in manifest.records:
        ann_rel = frame_csv_name(rec.frame_index)
        write_frame_csv(root / ann_rel, rec.annotations)
        w.writerow([rec.frame_index, rec.image_path, ann_rel, manifest.split])
    _write_text(path, buf.getvalue())

    meta = configparser.ConfigParser()
    meta["dataset"] = {
        "name": manifest.name,
        "width": str(manifest.image_width),
        "height": str(manifest.image_height),
    }
    out = io.StringIO()
    meta.write(out)
    _write_text(path.with_suffix(".ini"), out.getvalue())


def _parse_float(tok: str, lineno: int, path, column: str) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(f"column {column!r}: not a number: {tok!r}", lineno, path) from None
    if not math.isfinite(v):
        raise ParseError(f"column {column!r}: non-finite value {tok!r}", lineno, path)
    return v


def read_frame_csv(path, rings_max: float | None = None, with_confidence: bool = False):
    """Parse a frame CSV into annotations (or detections with ``with_confidence``).

    Extra columns beyond those requested are ignored, so detection CSVs can
    be read back as plain annotations.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    lines = list(csv.reader(io.StringIO(text)))
    if not lines:
        raise ParseError("missing header", 1, path)
    header = [h.strip() for h in lines[0]]
    need = DETECTION_HEADER if with_confidence else FRAME_HEADER
    if header[: len(need)] != need:
        raise ParseError(f"bad header {header}; expected {need}", 1, path)
    out = []
    for lineno, row in enumerate(lines[1:], start=2):
        if not row or all(not t.strip() for t in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", lineno, path)
        vals = [_parse_float(t, lineno, path, c) for t, c in zip(row, header)]
        cx, cy, a, b, theta, rings = vals[:6]
        if a <= 0 or b <= 0:
            if not with_confidence:
                raise ParseError(f"semi-axes must be positive (a={a}, b={b})", lineno, path)
        if rings < 0:
            raise ParseError(f"negative ring count {rings}", lineno, path)
        if rings_max is not None and rings > rings_max:
            raise ParseError(f"ring count {rings} exceeds rings_max={rings_max}", lineno, path)
        e = Ellipse(cx, cy, a, b, theta)
        if with_confidence:
            out.append(Detection(e, rings, vals[6]))
        else:
            out.append(Annotation(e, rings))
    return out


def read_annotations(path, rings_max: float | None = None) -> DatasetManifest:
    """Load a manifest written by :func:`write_annotations` (or by hand).

    ``path`` may be the manifest CSV or a directory containing ``manifest.csv``.
    """
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.csv"
    root = path.parent
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read manifest {path}: {exc}") from exc

    name, width, height = path.stem, 512, 384
    ini = path.with_suffix(".ini")
    if ini.exists():
        meta = configparser.ConfigParser()
        meta.read(ini, encoding="utf-8")
        if "dataset" in meta:
            sec = meta["dataset"]
            name = sec.get("name", name)
            width = sec.getint("width", width)
            height = sec.getint("height", height)

    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [h.strip() for h in rows[0]] != MANIFEST_HEADER:
        raise ParseError(f"bad manifest header; expected {MANIFEST_HEADER}", 1, path)
    records = []
    split = None
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(MANIFEST_HEADER):
            raise ParseError(f"expected {len(MANIFEST_HEADER)} fields, got {len(row)}", lineno, path)
        try:
            idx = int(row[0])
        except ValueError:
            raise ParseError(f"bad frame_index {row[0]!r}", lineno, path) from None
        if idx < 0:
            raise ParseError(f"negative frame_index {idx}", lineno, path)
        row_split = row[3].strip()
        if row_split not in SPLITS:
            raise ParseError(f"unknown split {row_split!r}", lineno, path)
        if split is None:
            split = row_split
        elif row_split != split:
            raise ParseError(f"mixed splits in one manifest ({split!r} vs {row_split!r})", lineno, path)
        anns = read_frame_csv(root / row[2], rings_max=rings_max)
        records.append(FrameRecord(row[1], idx, tuple(anns)))
    return DatasetManifest(name, split or "all", records, width, height)


def split_dataset(manifest: DatasetManifest, fractions=(0.8, 0.1, 0.1), seed: int = 0):
    """Shuffle records with ``seed`` and cut them into train/val/test manifests.

    Counts are ``floor(f * n)`` for train and val; test takes the remainder.
    """
    fr = tuple(float(f) for f in fractions)
    if len(fr) != 3 or any(f < 0 or not math.isfinite(f) for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must be three nonnegative values summing to 1, got {fractions}")
    n = len(manifest.records)
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(math.floor(fr[0] * n + 1e-9))
    n_val = int(math.floor(fr[1] * n + 1e-9))
    parts = (order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:])
    out = []
    for name, idx in zip(("train", "val", "test"), parts):
        recs = [manifest.records[i] for i in sorted(idx)]
        out.append(replace(manifest, split=name, records=recs))
    return tuple(out)


def resolve_image(manifest_path, record: FrameRecord) -> Path:
    p = Path(record.image_path)
    if p.is_absolute():
        return p
    base = Path(manifest_path)
    if base.is_dir():
        return base / p
    return base.parent / p


def list_frame_csvs(directory) -> list:
    """Sorted frame CSV paths in a detection/annotation directory."""
    d = Path(directory)
    if not d.is_dir():
        raise IoError(f"not a directory: {d}")
    return sorted(p for p in d.iterdir() if p.suffix == ".csv" and p.name.startswith("frame_"))


def frame_index_of(path) -> int:
    stem = Path(path).stem
    try:
        return int(stem.split("_")[-1])
    except ValueError:
        raise ParseError(f"cannot infer frame index from file name {os.fspath(path)!r}") from None
