"""Detection metrics: matching, ring-count accuracy, precision/recall, mAP.

Detections and ground truths are matched one-to-one within a frame by
elliptical IoU. Ring accuracy counts the matched pairs (IoU >= 0.5 by
default) whose ring counts differ by at most 0.5, divided by the number
of ground-truth antinodes.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from fringedet.errors import Undefined
from fringedet.geometry import ellipse_iou

COCO_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))


@dataclass
class MatchResult:
    pairs: list = field(default_factory=list)  # (detection index, truth index)
    ious: list = field(default_factory=list)
    unmatched_detections: list = field(default_factory=list)
    unmatched_truths: list = field(default_factory=list)

    @property
    def n_true_positive(self) -> int:
        return len(self.pairs)


def iou_matrix(dets, truths) -> np.ndarray:
    m = np.zeros((len(dets), len(truths)))
    for i, d in enumerate(dets):
        for j, t in enumerate(truths):
            m[i, j] = ellipse_iou(d.ellipse, t.ellipse)
    return m


def _confidence_order(dets) -> list:
    # stable sort: equal confidences keep input order
    return sorted(range(len(dets)), key=lambda i: -dets[i].confidence)


def match(dets, truths, iou_threshold: float = 0.5, ious: np.ndarray | None = None) -> MatchResult:
    """Greedy one-to-one matching in descending detection confidence.

    Each detection takes the still-unmatched truth of highest IoU, provided
    that IoU reaches ``iou_threshold``.
    """
    if ious is None:
        ious = iou_matrix(dets, truths)
    taken = np.zeros(len(truths), dtype=bool)
    res = MatchResult()
    for i in _confidence_order(dets):
        best, best_iou = -1, -1.0
        for j in range(len(truths)):
            if not taken[j] and ious[i, j] > best_iou:
                best, best_iou = j, ious[i, j]
        if best >= 0 and best_iou >= iou_threshold:
            taken[best] = True
            res.pairs.append((i, best))
            res.ious.append(float(best_iou))
        else:
            res.unmatched_detections.append(i)
    res.unmatched_truths = [j for j in range(len(truths)) if not taken[j]]
    return res


def ring_accuracy(pairs, n_truths: int, window: float = 0.5) -> float:
    """Fraction of ground truths whose matched detection's ring count is within ``window``.

    ``pairs`` is a sequence of ``(predicted_rings, true_rings)``.
    """
    if n_truths <= 0:
        raise Undefined("ring accuracy needs at least one ground-truth object")
    # tolerance guards against 5.6 - 5.1 = 0.5000000000000004
    hits = sum(1 for rp, rt in pairs if abs(rp - rt) <= window + 1e-9)
    return hits / n_truths


def frame_ring_pairs(dets, truths, iou_threshold=0.5):
    res = match(dets, truths, iou_threshold)
    return [(dets[i].rings, truths[j].rings) for i, j in res.pairs]


def dataset_ring_accuracy(dets_per_frame, truths_per_frame, iou_threshold=0.5, window=0.5) -> float:
    pairs = []
    n = 0
    for dets, truths in zip(dets_per_frame, truths_per_frame):
        pairs += frame_ring_pairs(dets, truths, iou_threshold)
        n += len(truths)
    return ring_accuracy(pairs, n, window)


def precision_recall(dets_per_frame, truths_per_frame, iou_threshold=0.5):
    tp = n_det = n_truth = 0
    for dets, truths in zip(dets_per_frame, truths_per_frame):
        tp += match(dets, truths, iou_threshold).n_true_positive
        n_det += len(dets)
        n_truth += len(truths)
    precision = tp / n_det if n_det else 0.0
    recall = tp / n_truth if n_truth else 0.0
    return precision, recall


def _frame_tp_flags(dets, truths, thr, ious):
    """Per-detection TP flag for one frame at one threshold."""
    res = match(dets, truths, thr, ious)
    flags = np.zeros(len(dets), dtype=bool)
    for i, _ in res.pairs:
        flags[i] = True
    return flags


def average_precision(scores, tp_flags, n_truths: int) -> float:
    """All-point interpolated AP from per-detection confidences and TP flags.

    Detections are ranked by descending score (ties keep input order); the
    precision envelope is integrated over recall.
    """
    if n_truths <= 0:
        raise Undefined("average precision needs at least one ground-truth object")
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        return 0.0
    order = np.argsort(-scores, kind="stable")
    tp = np.asarray(tp_flags, dtype=float)[order]
    ctp = np.cumsum(tp)
    cfp = np.cumsum(1.0 - tp)
    recall = ctp / n_truths
    precision = ctp / (ctp + cfp)
    mrec = np.concatenate([[0.0], recall, [recall[-1]]])
    mpre = np.concatenate([[1.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def mean_average_precision(dets_per_frame, truths_per_frame, thresholds=COCO_THRESHOLDS,
                           per_threshold: bool = False):
    """Average over IoU thresholds of the single-class AP.

    Detections from all frames are pooled and ranked by confidence; ties
    go to the earlier frame, then to the earlier detection within a frame.
    """
    dets_per_frame = [list(d) for d in dets_per_frame]
    truths_per_frame = [list(t) for t in truths_per_frame]
    n_truths = sum(len(t) for t in truths_per_frame)
    if n_truths == 0:
        raise Undefined("mAP needs at least one ground-truth object")
    ious = [iou_matrix(d, t) for d, t in zip(dets_per_frame, truths_per_frame)]
    scores = np.array([d.confidence for dets in dets_per_frame for d in dets], dtype=float)
    aps = []
    for thr in thresholds:
        flags = [_frame_tp_flags(d, t, thr, m) for d, t, m in zip(dets_per_frame, truths_per_frame, ious)]
        flat = np.concatenate(flags) if flags else np.zeros(0, dtype=bool)
        aps.append(average_precision(scores, flat, n_truths))
    value = float(np.mean(aps))
    if per_threshold:
        return value, dict(zip(thresholds, aps))
    return value


def volunteer_baseline(sigma: float) -> float:
    """Probability that a normal(0, sigma) ring-count error falls within +-0.5."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return 1.0
    return math.erf(0.5 / (sigma * math.sqrt(2.0)))


@dataclass
class Report:
    n_frames: int
    n_truths: int
    n_detections: int
    ring_accuracy: float
    precision: float
    recall: float
    mean_iou: float
    map: float
    map_50: float
    volunteer_sigma: float
    volunteer_baseline: float

    def rows(self):
        return [
            ("n_frames", self.n_frames),
            ("n_truths", self.n_truths),
            ("n_detections", self.n_detections),
            ("ring_accuracy", self.ring_accuracy),
            ("precision", self.precision),
            ("recall", self.recall),
            ("mean_iou", self.mean_iou),
            ("map", self.map),
            ("map_50", self.map_50),
            ("volunteer_sigma", self.volunteer_sigma),
            ("volunteer_baseline", self.volunteer_baseline),
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "value"])
        for k, v in self.rows():
            w.writerow([k, f"{v:.6f}" if isinstance(v, float) else v])
        return buf.getvalue()

    def summary(self) -> str:
        return "\n".join([
            "== detection metrics ==",
            f"frames               {self.n_frames}",
            f"ground-truth objects {self.n_truths}",
            f"detections           {self.n_detections}",
            f"ring accuracy (+-0.5) {self.ring_accuracy:.4f}",
            f"precision @0.5       {self.precision:.4f}",
            f"recall @0.5          {self.recall:.4f}",
            f"mean matched IoU     {self.mean_iou:.4f}",
            f"mAP @[.50:.95]       {self.map:.4f}",
            f"AP @.50              {self.map_50:.4f}",
            f"volunteer baseline   {self.volunteer_baseline:.4f} (sigma={self.volunteer_sigma:g})",
        ])


def evaluate(dets_per_frame, truths_per_frame, volunteer_sigma: float = 1.7, iou_threshold: float = 0.5) -> Report:
    dets_per_frame = [list(d) for d in dets_per_frame]
    truths_per_frame = [list(t) for t in truths_per_frame]
    n_truths = sum(len(t) for t in truths_per_frame)
    n_det = sum(len(d) for d in dets_per_frame)
    pairs, ious = [], []
    tp = 0
    for dets, truths in zip(dets_per_frame, truths_per_frame):
        res = match(dets, truths, iou_threshold)
        tp += res.n_true_positive
        ious += res.ious
        pairs += [(dets[i].rings, truths[j].rings) for i, j in res.pairs]
    acc = ring_accuracy(pairs, n_truths) if n_truths else float("nan")
    if n_truths:
        m, per = mean_average_precision(dets_per_frame, truths_per_frame, per_threshold=True)
        m50 = per[0.5]
    else:
        m = m50 = float("nan")
    return Report(
        n_frames=len(truths_per_frame),
        n_truths=n_truths,
        n_detections=n_det,
        ring_accuracy=acc,
        precision=tp / n_det if n_det else 0.0,
        recall=tp / n_truths if n_truths else 0.0,
        mean_iou=float(np.mean(ious)) if ious else 0.0,
        map=m,
        map_50=m50,
        volunteer_sigma=volunteer_sigma,
        volunteer_baseline=volunteer_baseline(volunteer_sigma),
    )
