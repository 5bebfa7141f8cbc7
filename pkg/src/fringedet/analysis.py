"""Physics post-processing of per-frame detections.

* ring-count time series for a user-declared note region
* constant-amplitude ``|A cos(w t + phi)|`` frequency fit
* area-vs-rings and eccentricity-squared-vs-rings tables
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.optimize import least_squares

from fringedet.errors import EmptySeries, FitDiverged, NoOscillation
from fringedet.geometry import Ellipse, ecc_squared

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Rect:
    x0: float
    y0: float
    x1: float
    y1: float

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1


@dataclass(frozen=True)
class NoteRegion:
    label: str
    roi: Union[Ellipse, Rect]
    expected_freq: Optional[float] = None

    def contains(self, x: float, y: float) -> bool:
        return bool(self.roi.contains(x, y))


@dataclass
class RingSeries:
    times: np.ndarray
    rings: np.ndarray
    source: str = ""

    def __len__(self):
        return len(self.times)


@dataclass(frozen=True)
class FitResult:
    A: float
    f: float
    phase: float
    residual_rms: float
    iterations: int = 0

    @property
    def omega(self) -> float:
        return 2 * math.pi * self.f


def assemble_series(detections_per_frame: Sequence, region: NoteRegion, frame_rate: float) -> RingSeries:
    """Ring count per frame from the most confident detection centered in ``region``.

    Frames without such a detection contribute 0 rings, keeping the
    sampling uniform.
    """
    if not frame_rate > 0:
        raise ValueError("frame_rate must be positive")
    rings = np.zeros(len(detections_per_frame))
    hit = False
    for i, dets in enumerate(detections_per_frame):
        best = None
        for d in dets:
            if region.contains(d.ellipse.cx, d.ellipse.cy) and (best is None or d.confidence > best.confidence):
                best = d
        if best is not None:
            rings[i] = best.rings
            hit = True
    if not hit:
        raise EmptySeries(f"no detections inside region {region.label!r} in any of {len(rings)} frames")
    times = np.arange(len(rings)) / float(frame_rate)
    return RingSeries(times, rings, region.label)


def _abs_cos(params, t):
    a, w, ph = params
    return np.abs(a * np.cos(w * t + ph))


def initial_frequency(times: np.ndarray, rings: np.ndarray, oversample: int = 16) -> float:
    """Frequency guess from the dominant peak of the spectrum of ``rings**2``.

    ``|cos|`` repeats twice per period, so its power oscillates at ``2f``;
    the peak location is halved.
    """
    dt = float(np.median(np.diff(times)))
    x = rings.astype(float) ** 2
    x = (x - x.mean()) * np.hanning(x.size)
    nfft = int(2 ** math.ceil(math.log2(x.size * oversample)))
    spec = np.abs(np.fft.rfft(x, nfft))
    freqs = np.fft.rfftfreq(nfft, dt)
    spec[0] = 0.0
    k = int(np.argmax(spec))
    if spec[k] <= 0:
        raise NoOscillation("no spectral peak in the ring series")
    if 0 < k < spec.size - 1:
        # parabolic refinement on log magnitude
        l, c, r = np.log(spec[k - 1:k + 2] + 1e-300)
        denom = l - 2 * c + r
        shift = 0.5 * (l - r) / denom if denom != 0 else 0.0
        peak = freqs[k] + shift * (freqs[1] - freqs[0])
    else:
        peak = freqs[k]
    return peak / 2.0


def fit_abs_cos(series: RingSeries, f0: Optional[float] = None, xtol: float = 1e-8, max_iter: int = 200) -> FitResult:
    """Least-squares fit of ``r(t) = |A cos(2 pi f t + phase)|``.

    Returns ``A >= 0``, ``f > 0`` and ``phase`` in ``[0, pi)`` (the model is
    pi-periodic in phase).
    """
    t = np.asarray(series.times, dtype=float)
    r = np.asarray(series.rings, dtype=float)
    if t.size < 4:
        raise NoOscillation("need at least 4 samples")
    scale = max(1.0, float(np.max(np.abs(r))))
    if float(np.std(r)) <= 1e-9 * scale:
        raise NoOscillation("ring series is flat")
    if f0 is None:
        f0 = initial_frequency(t, r)
    if not f0 > 0:
        raise NoOscillation("no positive frequency found")
    if (t[-1] - t[0]) * f0 < 4:
        raise NoOscillation(f"series spans fewer than 4 periods of the {f0:.3g} Hz guess")

    tm = 0.5 * (t[0] + t[-1])
    tc = t - tm
    w0 = 2 * math.pi * f0

    # coarse phase scan with the amplitude solved linearly
    best = None
    for ph in np.linspace(0.0, math.pi, 64, endpoint=False):
        basis = np.abs(np.cos(w0 * tc + ph))
        denom = float(basis @ basis)
        a = float(basis @ r) / denom if denom > 0 else 0.0
        res = float(np.sum((a * basis - r) ** 2))
        if best is None or res < best[0]:
            best = (res, a, ph)
    p0 = np.array([best[1], w0, best[2]])

    def resid(p):
        return _abs_cos(p, tc) - r

    def jac(p):
        a, w, ph = p
        arg = w * tc + ph
        c = np.cos(arg)
        sg = np.sign(a * c)
        ds = -a * np.sin(arg) * sg
        return np.column_stack([np.abs(c), ds * tc, ds])

    sol = least_squares(resid, p0, jac=jac, method="lm", xtol=xtol, ftol=1e-15, gtol=1e-15,
                        max_nfev=max_iter * (p0.size + 1))
    a, w, ph = sol.x
    rms = float(np.sqrt(np.mean(sol.fun ** 2)))
    if w < 0:
        w, ph = -w, -ph
    ph = ph - w * tm  # back to the caller's time origin
    result = FitResult(abs(float(a)), float(w / (2 * math.pi)), float(ph % math.pi), rms, int(sol.nfev))
    if not sol.success or not np.all(np.isfinite(sol.x)):
        raise FitDiverged(f"fit did not converge: {sol.message}", best=result)
    return result


def export_area_vs_rings(detection_sets: Sequence, frame_indices: Sequence[int]):
    """Rows ``(frame, pi*a*b, rings)`` from the raw predicted semi-axes."""
    rows = []
    for idx, dets in zip(frame_indices, detection_sets):
        for d in dets:
            rows.append((int(idx), math.pi * abs(d.ellipse.a * d.ellipse.b), float(d.rings)))
    return rows


def export_ecc2_vs_rings(detection_sets: Sequence, frame_indices: Sequence[int]):
    """Rows ``(frame, 1 - b**2/a**2, rings)`` without swapping axes (b > a gives negatives)."""
    rows = []
    for idx, dets in zip(frame_indices, detection_sets):
        for d in dets:
            if d.ellipse.a == 0:
                log.warning("frame %s: skipping detection with a = 0", idx)
                continue
            rows.append((int(idx), ecc_squared(d.ellipse.a, d.ellipse.b), float(d.rings)))
    return rows


def table_csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, (int, str)) else f"{v:.6f}" for v in row])
    return buf.getvalue()


def fit_csv(results: Sequence[tuple]) -> str:
    """``results`` holds ``(note label, FitResult)`` pairs."""
    return table_csv(["note", "A", "f_hz", "phase_rad", "residual_rms"],
                     [(label, r.A, r.f, r.phase, r.residual_rms) for label, r in results])


def read_amplitude_csv(path):
    """Two-column ``time,amplitude`` CSV (e.g. audio envelopes) for plot overlays."""
    t, a = [], []
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.reader(f):
            if not row:
                continue
            try:
                t.append(float(row[0]))
                a.append(float(row[1]))
            except ValueError:
                continue  # header
    return np.array(t), np.array(a)
