"""End-to-end ROI extraction: detector backend -> keypoints -> frame -> ROI raster.

The detector itself is opaque: anything satisfying DetectorBackend works. This
module ships an oracle backend that replays ground-truth boxes (with optional
Gaussian center jitter) so the whole pipeline can run and be tested without a
trained model.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from . import geometry, raster
from .geometry import (
    BoxClass,
    BoxSizing,
    KeypointTriple,
    PalmAnnotation,
    Point2D,
    RoiQuad,
)

DEFAULT_CONF_MIN = 0.25


class IncompleteDetection(RuntimeError):
    """Not enough surviving detections to place the keypoints.

    ``missing`` names the class that fell short: "double_finger_gap" when
    fewer than two class-0 boxes survive, "palm_center" when no class-1 box
    survives.
    """

    def __init__(self, missing: str, message: str):
        super().__init__(message)
        self.missing = missing


@dataclass(frozen=True)
class DetectionBox:
    """One detector output box."""

    class_id: BoxClass
    confidence: float
    center: Point2D
    width: float
    height: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("box dimensions must be positive")


@runtime_checkable
class DetectorBackend(Protocol):
    """Behavior contract for detectors: image raster in, boxes out.

    Implementations must be deterministic for a fixed configuration and input,
    and either safe for concurrent invocation or documented single-caller.
    """

    def detect(self, image: np.ndarray) -> list[DetectionBox]: ...


@dataclass(frozen=True)
class RoiImage:
    """Extracted square ROI raster plus where it came from."""

    pixels: np.ndarray               # out_size x out_size x 3, uint8
    source_id: str
    quad: RoiQuad

    def __post_init__(self) -> None:
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError("ROI raster must be HxWx3")
        if self.pixels.shape[0] != self.pixels.shape[1] or self.pixels.shape[0] <= 0:
            raise ValueError("ROI raster must be square and non-empty")


def select_keypoints(dets: Sequence[DetectionBox], conf_min: float = DEFAULT_CONF_MIN) -> KeypointTriple:
    """Pick (A, B, C) from raw detections.

    After filtering by confidence >= conf_min, the class-0 centers form the
    candidate set. Two candidates are used directly; more than two are reduced
    to the farthest pair by exhaustive scan (ties: smallest (i, j) index pair
    in input order). C is the center of the highest-confidence class-1 box
    (ties: first in input order).
    """
    if not 0.0 <= conf_min <= 1.0:
        raise ValueError("conf_min must lie in [0, 1]")
    kept = [d for d in dets if d.confidence >= conf_min]
    gaps = [d for d in kept if d.class_id is BoxClass.DOUBLE_FINGER_GAP]
    centers = [d for d in kept if d.class_id is BoxClass.PALM_CENTER]
    if len(gaps) < 2:
        raise IncompleteDetection(
            "double_finger_gap",
            f"need at least 2 double-finger-gap boxes, got {len(gaps)}",
        )
    if not centers:
        raise IncompleteDetection("palm_center", "no palm-center box survived filtering")

    if len(gaps) == 2:
        a, b = gaps[0].center, gaps[1].center
    else:
        best = None
        best_d2 = -1.0
        for i, j in itertools.combinations(range(len(gaps)), 2):
            d = gaps[j].center - gaps[i].center
            d2 = d.dot(d)
            if d2 > best_d2:
                best_d2 = d2
                best = (i, j)
        a, b = gaps[best[0]].center, gaps[best[1]].center

    best_center = max(centers, key=lambda d: d.confidence)  # max keeps the first tie
    return KeypointTriple(a=a, b=b, c=best_center.center)


def extract_roi(
    image: np.ndarray,
    triple: KeypointTriple,
    out_size: int = 224,
    source_id: str = "",
) -> RoiImage:
    """Build the frame and quad from a triple and resample the quad into a
    square raster (bilinear, reads clamped to the image edge)."""
    frame = geometry.frame_from_triple(triple)
    quad = geometry.roi_quad(frame)
    pixels = raster.warp_quad(image, quad.corners, out_size, border="edge")
    return RoiImage(pixels=pixels, source_id=source_id, quad=quad)


def run_pipeline(
    image: np.ndarray,
    detector: DetectorBackend,
    conf_min: float = DEFAULT_CONF_MIN,
    out_size: int = 224,
    source_id: str = "",
) -> RoiImage:
    """Full extraction pipeline: detect, select keypoints, crop the ROI."""
    dets = detector.detect(image)
    triple = select_keypoints(dets, conf_min=conf_min)
    return extract_roi(image, triple, out_size=out_size, source_id=source_id)


class OracleDetector:
    """Test backend replaying ground-truth boxes for one annotation.

    Center jitter (if any) is drawn once at construction, so every detect()
    call returns the same boxes: the backend is deterministic and safe for
    concurrent use. jitter_sigma=0 reproduces the ground truth exactly.
    """

    def __init__(
        self,
        ann: PalmAnnotation,
        sizing: BoxSizing = BoxSizing(),
        jitter_sigma: float = 0.0,
        seed: int = 0,
    ):
        if jitter_sigma < 0:
            raise ValueError("jitter_sigma must be non-negative")
        boxes = geometry.boxes_from_annotation(ann, sizing)
        rng = np.random.default_rng(seed)
        jitter = rng.normal(0.0, jitter_sigma, size=(len(boxes), 2)) if jitter_sigma > 0 else np.zeros((len(boxes), 2))
        self._boxes = [
            DetectionBox(
                class_id=box.class_id,
                confidence=1.0,
                center=Point2D(box.center.x + dx, box.center.y + dy),
                width=box.width,
                height=box.height,
            )
            for box, (dx, dy) in zip(boxes, jitter)
        ]

    def detect(self, image: np.ndarray) -> list[DetectionBox]:
        return list(self._boxes)


def oracle_detector(
    ann: PalmAnnotation,
    sizing: BoxSizing = BoxSizing(),
    jitter_sigma: float = 0.0,
    seed: int = 0,
) -> OracleDetector:
    return OracleDetector(ann, sizing=sizing, jitter_sigma=jitter_sigma, seed=seed)


class StaticDetector:
    """Backend returning a fixed list of boxes, for tests and fixtures."""

    def __init__(self, boxes: Sequence[DetectionBox]):
        self._boxes = list(boxes)

    def detect(self, image: np.ndarray) -> list[DetectionBox]:
        return list(self._boxes)
