"""Grid target encoding and prediction decoding.

A grid tensor is a flat vector ordered ``(row, col, predictor, var)`` with
the eight per-predictor variables in the order ``p, x, y, a, b, c, s, r``:

* ``p``     existence (0 or 1 for targets)
* ``x, y``  centroid offset from the cell center, in cell widths/heights
* ``a, b``  semi-axes divided by the image width
* ``c, s``  ``cos 2theta``, ``sin 2theta``
* ``r``     ring count divided by ``rings_max``
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from fringedet.annotations import RINGS_MAX, Annotation, Detection
from fringedet.errors import CellOverflow, ShapeError
from fringedet.geometry import Ellipse, angle_encode, normalize

VARS = ("p", "x", "y", "a", "b", "c", "s", "r")
P, X, Y, A, B, C, S, R = range(8)

# "no antinode" filler: middle of each normalized range
EMPTY_PREDICTOR = np.array([0.0, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 0.5])


@dataclass(frozen=True)
class GridSpec:
    image_width: int = 512
    image_height: int = 384
    rows: int = 6
    cols: int = 6
    predictors_per_cell: int = 2
    vars_per_predictor: int = 8
    rings_max: float = RINGS_MAX

    @property
    def n_predictors(self) -> int:
        return self.rows * self.cols * self.predictors_per_cell

    @property
    def size(self) -> int:
        return self.n_predictors * self.vars_per_predictor

    @property
    def cell_width(self) -> float:
        return self.image_width / self.cols

    @property
    def cell_height(self) -> float:
        return self.image_height / self.rows

    def cell_of(self, cx: float, cy: float) -> tuple[int, int]:
        # half-open cells: a centroid on a boundary belongs to the higher-index cell
        col = min(max(int(math.floor(cx / self.cell_width)), 0), self.cols - 1)
        row = min(max(int(math.floor(cy / self.cell_height)), 0), self.rows - 1)
        return row, col

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        return (col + 0.5) * self.cell_width, (row + 0.5) * self.cell_height


def empty_tensor(spec: GridSpec) -> np.ndarray:
    grid = np.empty((spec.rows, spec.cols, spec.predictors_per_cell, spec.vars_per_predictor))
    grid[...] = EMPTY_PREDICTOR
    return grid.reshape(-1)


def encode(annotations: Sequence[Annotation], spec: GridSpec) -> np.ndarray:
    """Build the flat target vector for one frame.

    Antinodes are sorted by centroid (``cy`` first, then ``cx``), each goes
    to the cell containing its centroid, filling predictor slot 0 then 1.
    Raises :class:`CellOverflow` if a cell receives more antinodes than it
    has predictors.
    """
    grid = empty_tensor(spec).reshape(spec.rows, spec.cols, spec.predictors_per_cell, -1)
    used = np.zeros((spec.rows, spec.cols), dtype=int)
    ordered = sorted(annotations, key=lambda an: (an.ellipse.cy, an.ellipse.cx))
    for ann in ordered:
        e = normalize(ann.ellipse)
        row, col = spec.cell_of(e.cx, e.cy)
        slot = used[row, col]
        if slot >= spec.predictors_per_cell:
            count = sum(1 for o in ordered if spec.cell_of(o.ellipse.cx, o.ellipse.cy) == (row, col))
            raise CellOverflow(row, col, count, spec.predictors_per_cell)
        used[row, col] += 1
        x0, y0 = spec.cell_center(row, col)
        c, s = angle_encode(e.theta)
        grid[row, col, slot] = (
            1.0,
            (e.cx - x0) / spec.cell_width,
            (e.cy - y0) / spec.cell_height,
            e.a / spec.image_width,
            e.b / spec.image_width,
            c,
            s,
            ann.rings / spec.rings_max,
        )
    return grid.reshape(-1)


def decode(tensor, spec: GridSpec, threshold: float = 0.5, mode: str = "normalized") -> list[Detection]:
    """Turn a prediction vector into detections with ``p >= threshold``.

    ``mode="raw"`` keeps the predicted values as-is (``b`` may exceed
    ``a``); ``mode="normalized"`` enforces ``a >= b``, ``theta`` in [0, 180)
    and a non-negative ring count.
    """
    t = np.asarray(tensor, dtype=float)
    if t.ndim != 1 or t.size != spec.size:
        raise ShapeError(f"expected a flat tensor of {spec.size} values, got shape {t.shape}")
    if mode not in ("raw", "normalized"):
        raise ValueError(f"unknown decode mode {mode!r}")
    grid = t.reshape(spec.rows, spec.cols, spec.predictors_per_cell, spec.vars_per_predictor)
    dets = []
    for row, col, slot in zip(*np.nonzero(grid[..., P] >= threshold)):
        v = grid[row, col, slot]
        x0, y0 = spec.cell_center(row, col)
        cx = x0 + v[X] * spec.cell_width
        cy = y0 + v[Y] * spec.cell_height
        a = v[A] * spec.image_width
        b = v[B] * spec.image_width
        if v[C] == 0 and v[S] == 0:
            theta = 0.0
        else:
            theta = (0.5 * math.degrees(math.atan2(v[S], v[C]))) % 180.0
        e = Ellipse(float(cx), float(cy), float(a), float(b), float(theta))
        rings = float(v[R] * spec.rings_max)
        if mode == "normalized":
            e = normalize(Ellipse(e.cx, e.cy, max(abs(a), 1e-9), max(abs(b), 1e-9), theta))
            rings = max(rings, 0.0)
        dets.append(Detection(e, rings, float(v[P])))
    return dets


def batch_encode(frames: Sequence[Sequence[Annotation]], spec: GridSpec) -> np.ndarray:
    if not frames:
        return np.zeros((0, spec.size))
    return np.stack([encode(f, spec) for f in frames])
