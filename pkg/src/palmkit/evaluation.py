"""Evaluation protocols: verification score sets, EER, TPR@FAR calibration,
Top-1 identification, keypoint matching, miss-rate/FPPI with LAMR, and mAP.

All operations are pure functions over value inputs. Threshold semantics
everywhere follow the matching module's decision rule (accept iff score >= t),
so thresholds calibrated here reproduce their TPR/FAR counts exactly when fed
back through matching.decide.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence, Union

import numpy as np

from . import matching
from .dataset import DEFAULT_SEED, SampleId
from .geometry import BoxClass, BoxSpec, Point2D
from .matching import FeatureVector
from .pipeline import DetectionBox

KEYPOINT_DELTA = 10.0        # pixels; a detection counts only strictly closer than this
LAMR_FPPI_EXPONENTS = np.linspace(-3.0, 1.0, 9)   # nine log-spaced reference rates
MISS_RATE_FLOOR = 1e-10
AUTO_FULL_PAIR_LIMIT = 10**7
AUTO_SAMPLE_N = 10**6


class EvaluationError(RuntimeError):
    pass


class EmptyScores(EvaluationError):
    """Rate computations need both genuine and impostor scores."""


class MissingFeature(EvaluationError):
    """A listed sample has no feature vector."""


class InsufficientImages(EvaluationError):
    """Top-1 needs at least two images per palm."""


@dataclass(frozen=True)
class ScoreSet:
    genuine: np.ndarray
    impostor: np.ndarray

    def __post_init__(self) -> None:
        g = np.asarray(self.genuine, dtype=np.float64)
        i = np.asarray(self.impostor, dtype=np.float64)
        object.__setattr__(self, "genuine", g)
        object.__setattr__(self, "impostor", i)

    def require_rates(self) -> None:
        if len(self.genuine) == 0 or len(self.impostor) == 0:
            raise EmptyScores("need non-empty genuine and impostor score lists")


@dataclass(frozen=True)
class DetCurve:
    """(FPPI, miss rate) points sorted by FPPI."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        for fppi, mr in self.points:
            if fppi < 0 or not 0.0 <= mr <= 1.0:
                raise EvaluationError(f"bad curve point ({fppi}, {mr})")
        fppis = [p[0] for p in self.points]
        if fppis != sorted(fppis):
            raise EvaluationError("curve points must be sorted by FPPI")


@dataclass(frozen=True)
class CalibrationResult:
    far_target: float
    threshold: float
    achieved_far: float
    tpr: float
    saturated: bool = False   # true when no observed score met the target

    def __post_init__(self) -> None:
        if self.achieved_far > self.far_target:
            raise EvaluationError("achieved FAR exceeds the target")


class SampledImpostors(NamedTuple):
    n: int
    seed: int = DEFAULT_SEED


ImpostorSampling = Union[str, SampledImpostors]


class MatchCounts(NamedTuple):
    true_positives: int
    false_positives: int
    misses: int


class KeypointScene(NamedTuple):
    """One image's ground-truth points and scored detections."""

    gts: tuple[Point2D, ...]
    dets: tuple[tuple[Point2D, float], ...]


def _feature_matrix(
    sample_ids: Sequence[SampleId], features: Mapping[SampleId, FeatureVector]
) -> np.ndarray:
    rows = []
    for sid in sample_ids:
        if sid not in features:
            raise MissingFeature(f"no feature for sample {sid}")
        f = features[sid]
        if not f.normalized:
            raise matching.NotNormalized(f"feature for {sid} is not normalized")
        rows.append(f.values)
    return np.array(rows)


def gen_pairs(
    sample_ids: Sequence[SampleId],
    features: Mapping[SampleId, FeatureVector],
    impostor_sampling: ImpostorSampling = "auto",
) -> ScoreSet:
    """Score all genuine pairs and all (or a seeded sample of) impostor pairs.

    Genuine pairs are unordered same-palm-identity pairs; impostor pairs cross
    identities. "auto" enumerates impostors fully up to 10^7 pairs, then falls
    back to a seeded sample of 10^6.
    """
    sample_ids = list(sample_ids)
    feats = _feature_matrix(sample_ids, features)
    idents = [sid.identity() for sid in sample_ids]
    code_of = {pid: k for k, pid in enumerate(sorted(set(idents)))}
    codes = np.array([code_of[pid] for pid in idents])
    n = len(sample_ids)
    # n x n score matrix: fine at desk scale, revisit before feeding 10^5 samples
    scores = np.clip(feats @ feats.T, -1.0, 1.0)
    iu, ju = np.triu_indices(n, k=1)
    same = codes[iu] == codes[ju]
    genuine = scores[iu, ju][same]

    cross_mask = ~same
    total_cross = int(cross_mask.sum())
    if impostor_sampling == "auto":
        impostor_sampling = (
            "full" if total_cross <= AUTO_FULL_PAIR_LIMIT else SampledImpostors(AUTO_SAMPLE_N)
        )
    if impostor_sampling == "full":
        impostor = scores[iu, ju][cross_mask]
    elif isinstance(impostor_sampling, SampledImpostors):
        want = min(impostor_sampling.n, total_cross)
        rng = np.random.default_rng(impostor_sampling.seed)
        cross_i = iu[cross_mask]
        cross_j = ju[cross_mask]
        pick = rng.choice(total_cross, size=want, replace=False)
        impostor = scores[cross_i[pick], cross_j[pick]]
    else:
        raise EvaluationError(f"bad impostor_sampling {impostor_sampling!r}")
    return ScoreSet(genuine=genuine, impostor=impostor)


def _far_frr(s: ScoreSet, thresholds: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """FAR(t) = fraction of impostors >= t; FRR(t) = fraction of genuines < t.

    Computed as integer counts over one division, so the rates are exactly
    reproducible from accept/reject counts at the same threshold.
    """
    imp = np.sort(s.impostor)
    gen = np.sort(s.genuine)
    far = (len(imp) - np.searchsorted(imp, thresholds, side="left")) / len(imp)
    frr = np.searchsorted(gen, thresholds, side="left") / len(gen)
    return far, frr


def eer(s: ScoreSet) -> float:
    """Equal error rate: sweep all distinct scores, interpolate the crossing.

    FAR - FRR starts at 1 (threshold at the minimum score) and ends at -1
    (threshold above the maximum); the EER is the common rate where the two
    linearly interpolated curves cross.
    """
    s.require_rates()
    thresholds = np.unique(np.concatenate([s.genuine, s.impostor]))
    far, frr = _far_frr(s, thresholds)
    far = np.append(far, 0.0)   # sentinel: threshold above the maximum score
    frr = np.append(frr, 1.0)
    diff = far - frr
    k = int(np.argmax(diff <= 0.0))
    if diff[k] == 0.0:
        return float(far[k])
    lam = diff[k - 1] / (diff[k - 1] - diff[k])
    return float(far[k - 1] + lam * (far[k] - far[k - 1]))


def tpr_at_far(s: ScoreSet, far_targets: Sequence[float]) -> list[CalibrationResult]:
    """Calibrate thresholds: the smallest observed score whose FAR meets each
    target, decided by the score >= threshold rule.

    When no observed score meets the target (tiny impostor sets), the
    threshold is one ulp above the maximum impostor score, achieving FAR 0;
    the result is flagged saturated.
    """
    s.require_rates()
    thresholds = np.unique(np.concatenate([s.genuine, s.impostor]))
    far, _ = _far_frr(s, thresholds)
    gen = np.sort(s.genuine)
    results = []
    for target in far_targets:
        if not 0.0 < target <= 1.0:
            raise EvaluationError(f"FAR target {target} outside (0, 1]")
        ok = far <= target
        if ok.any():
            k = int(np.argmax(ok))
            t = float(thresholds[k])
            achieved = float(far[k])
            saturated = False
        else:
            t = float(np.nextafter(np.max(s.impostor), np.inf))
            achieved = 0.0
            saturated = True
        tpr = (len(gen) - np.searchsorted(gen, t, side="left")) / len(gen)
        results.append(
            CalibrationResult(
                far_target=float(target),
                threshold=t,
                achieved_far=achieved,
                tpr=float(tpr),
                saturated=saturated,
            )
        )
    return results


def top1(
    sample_ids: Sequence[SampleId],
    features: Mapping[SampleId, FeatureVector],
    seed: int = DEFAULT_SEED,
    repeats: int = 10,
) -> float:
    """Top-1 identification accuracy.

    Per repeat r (seeded with seed + r), one random image per palm identity
    is registered as the gallery; every remaining image is a probe identified
    by its best gallery score. Returns the mean accuracy over repeats.
    """
    sample_ids = list(sample_ids)
    _feature_matrix(sample_ids, features)   # validates presence + normalization
    groups: dict = {}
    for sid in sample_ids:
        groups.setdefault(sid.identity(), []).append(sid)
    identities = sorted(groups, key=lambda pid: (pid.subject, pid.hand.value))
    for pid in identities:
        if len(groups[pid]) < 2:
            raise InsufficientImages(f"palm {pid} has {len(groups[pid])} image(s), need >= 2")
    accuracies = []
    for r in range(repeats):
        rng = np.random.default_rng(seed + r)
        gallery_ids = [groups[pid][rng.integers(len(groups[pid]))] for pid in identities]
        gallery = [features[sid] for sid in gallery_ids]
        correct = 0
        total = 0
        for pid in identities:
            for sid in groups[pid]:
                if sid in gallery_ids:
                    continue
                best, _ = matching.match_against_gallery(features[sid], gallery)
                correct += identities[best] == pid
                total += 1
        accuracies.append(correct / total if total else 1.0)
    return float(np.mean(accuracies))


def keypoint_match(
    gts: Sequence[Point2D],
    dets: Sequence[tuple[Point2D, float]],
    delta: float = KEYPOINT_DELTA,
) -> MatchCounts:
    """Greedy one-to-one assignment in descending confidence.

    Each detection takes the nearest unmatched ground truth at distance
    strictly below delta (distance exactly delta does not match); leftover
    detections are false positives, leftover ground truths are misses.
    """
    if delta <= 0:
        raise EvaluationError("delta must be positive")
    order = sorted(range(len(dets)), key=lambda i: -dets[i][1])
    matched: set[int] = set()
    tp = 0
    for i in order:
        p = dets[i][0]
        best_idx = -1
        best_d = math.inf
        for g_idx, g in enumerate(gts):
            if g_idx in matched:
                continue
            d = (p - g).norm()
            if d < best_d:
                best_d = d
                best_idx = g_idx
        if best_idx >= 0 and best_d < delta:
            matched.add(best_idx)
            tp += 1
    fp = len(dets) - tp
    return MatchCounts(true_positives=tp, false_positives=fp, misses=len(gts) - tp)


def miss_rate_fppi(
    scenes: Sequence[KeypointScene],
    thresholds: Sequence[float],
    delta: float = KEYPOINT_DELTA,
) -> DetCurve:
    """Miss rate vs. false positives per image, swept over confidence
    thresholds (detections with confidence >= threshold survive)."""
    if len(scenes) == 0:
        raise EvaluationError("need at least one scene")
    total_gts = sum(len(sc.gts) for sc in scenes)
    points = []
    for t in thresholds:
        fp = 0
        misses = 0
        for sc in scenes:
            kept = [d for d in sc.dets if d[1] >= t]
            counts = keypoint_match(sc.gts, kept, delta)
            fp += counts.false_positives
            misses += counts.misses
        fppi = fp / len(scenes)
        miss_rate = misses / total_gts if total_gts else 0.0
        points.append((fppi, miss_rate))
    return DetCurve(points=tuple(sorted(points)))


def lamr(curve: DetCurve) -> float:
    """Log-average miss rate over the nine FPPI references 10^-3 ... 10^1.

    Each reference takes the miss rate of the curve point with the largest
    FPPI at or below it (lowest miss rate on FPPI ties); references below the
    whole curve take the curve's maximum miss rate. Miss rates are floored at
    1e-10 before the geometric mean.
    """
    if len(curve.points) == 0:
        raise EvaluationError("curve is empty")
    fppis = np.array([p[0] for p in curve.points])
    misses = np.array([p[1] for p in curve.points])
    max_miss = float(misses.max())
    sampled = []
    for ref in 10.0 ** LAMR_FPPI_EXPONENTS:
        at_or_below = fppis <= ref
        if not at_or_below.any():
            m = max_miss
        else:
            best_fppi = fppis[at_or_below].max()
            m = float(misses[at_or_below & (fppis == best_fppi)].min())
        sampled.append(max(m, MISS_RATE_FLOOR))
    return float(np.exp(np.mean(np.log(sampled))))


def box_iou(b1: BoxSpec | DetectionBox, b2: BoxSpec | DetectionBox) -> float:
    ax1, ax2 = b1.center.x - b1.width / 2, b1.center.x + b1.width / 2
    ay1, ay2 = b1.center.y - b1.height / 2, b1.center.y + b1.height / 2
    bx1, bx2 = b2.center.x - b2.width / 2, b2.center.x + b2.width / 2
    by1, by2 = b2.center.y - b2.height / 2, b2.center.y + b2.height / 2
    iw = max(0.0, min(ax2, bx2) - max(ax1, bx1))
    ih = max(0.0, min(ay2, by2) - max(ay1, by1))
    inter = iw * ih
    union = b1.width * b1.height + b2.width * b2.height - inter
    return inter / union if union > 0 else 0.0


def _average_precision(
    gt_scenes: Sequence[Sequence[BoxSpec]],
    det_scenes: Sequence[Sequence[DetectionBox]],
    class_id: BoxClass,
    iou_threshold: float,
) -> float | None:
    gts = [[b for b in scene if b.class_id is class_id] for scene in gt_scenes]
    n_gt = sum(len(g) for g in gts)
    if n_gt == 0:
        return None
    dets = [
        (si, d)
        for si, scene in enumerate(det_scenes)
        for d in scene
        if d.class_id is class_id
    ]
    dets.sort(key=lambda pair: -pair[1].confidence)
    matched = [set() for _ in gt_scenes]
    tps = np.zeros(len(dets))
    for k, (si, det) in enumerate(dets):
        best_iou = 0.0
        best_g = -1
        for g_idx, g in enumerate(gts[si]):
            if g_idx in matched[si]:
                continue
            v = box_iou(det, g)
            if v > best_iou:
                best_iou = v
                best_g = g_idx
        if best_g >= 0 and best_iou >= iou_threshold:
            matched[si].add(best_g)
            tps[k] = 1.0
    tp_cum = np.cumsum(tps)
    fp_cum = np.cumsum(1.0 - tps)
    recall = tp_cum / n_gt
    precision = np.divide(tp_cum, tp_cum + fp_cum, out=np.zeros_like(tp_cum), where=(tp_cum + fp_cum) > 0)
    # all-point interpolation: area under the right-to-left precision envelope
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    idx = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[idx + 1] - mrec[idx]) * mpre[idx + 1]))


def map_detection(
    gt_scenes: Sequence[Sequence[BoxSpec]],
    det_scenes: Sequence[Sequence[DetectionBox]],
    iou_threshold: float = 0.5,
) -> tuple[dict[BoxClass, float], float]:
    """Per-class AP (all-point interpolation, greedy IoU matching against
    unmatched ground truths) and their mean over the two-class scheme.

    Classes with no ground truth anywhere are undefined and excluded from
    the mean.
    """
    if len(gt_scenes) != len(det_scenes):
        raise EvaluationError("gt and detection scene lists must align")
    aps: dict[BoxClass, float] = {}
    for class_id in BoxClass:
        ap = _average_precision(gt_scenes, det_scenes, class_id, iou_threshold)
        if ap is not None:
            aps[class_id] = ap
    if not aps:
        raise EvaluationError("no ground-truth boxes in any scene")
    return aps, float(np.mean(list(aps.values())))


# --- report emission ----------------------------------------------------------

def write_json_report(path: str | Path, metrics: dict) -> None:
    """Machine-readable results document: metric name -> value (curve points
    as lists)."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")


def format_table(title: str, headers: Sequence[str], rows: Sequence[Sequence]) -> str:
    """Plain-text table for human diffing."""
    cells = [[str(h) for h in headers]] + [[_fmt_cell(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    lines = [title, "-" * max(len(title), sum(widths) + 2 * (len(widths) - 1))]
    for r in cells:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    return "\n".join(lines) + "\n"


def _fmt_cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def curve_csv(curve: DetCurve) -> str:
    """CSV-style text export of a DetCurve for external plotting."""
    lines = ["fppi,miss_rate"]
    lines += [f"{fppi:.10g},{mr:.10g}" for fppi, mr in curve.points]
    return "\n".join(lines) + "\n"
