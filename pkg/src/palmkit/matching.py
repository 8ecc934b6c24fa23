"""Embedding-based ROI matching: normalize, inner-product score, threshold.

The embedder is opaque behind EmbedderBackend; a deterministic stub backend
(seeded random projection of a downsampled grid) stands in for a trained
model so scoring, calibration, and the service can be exercised end to end.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from . import raster
from .pipeline import RoiImage

FEATURE_DIM = 512
EMBED_INPUT_SIZE = 224
DEFAULT_THRESHOLD = 0.5014   # operating point calibrated at FAR = 1e-4


class MatchingError(RuntimeError):
    pass


class ZeroVector(MatchingError):
    """Feature vector has zero norm: nothing to normalize."""


class NotNormalized(MatchingError):
    """Operation requires l2-normalized inputs."""


class EmptyGallery(MatchingError):
    """Gallery matching needs at least one template."""


class BackendFailure(MatchingError):
    """The embedder backend raised; original error attached as __cause__."""


class Outcome(enum.Enum):
    SUCCESS = "success"
    FAIL = "fail"


@dataclass(frozen=True)
class FeatureVector:
    """A 512-component palmprint embedding."""

    values: np.ndarray
    normalized: bool = False

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (FEATURE_DIM,):
            raise MatchingError(f"feature must have shape ({FEATURE_DIM},), got {v.shape}")
        object.__setattr__(self, "values", v)
        if self.normalized and abs(np.linalg.norm(v) - 1.0) > 1e-6:
            raise MatchingError("vector flagged normalized but its l2 norm is not 1")


@runtime_checkable
class EmbedderBackend(Protocol):
    """Behavior contract for embedders: 224x224 RGB raster in, raw 512-vector out.

    Implementations must be deterministic (identical rasters give identical
    vectors) and either concurrent-safe or documented single-caller.
    """

    def embed(self, image: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class MatchDecision:
    score: float
    threshold: float
    outcome: Outcome

    def __post_init__(self) -> None:
        if (self.outcome is Outcome.SUCCESS) != (self.score >= self.threshold):
            raise MatchingError("outcome inconsistent with score/threshold")


def embed(roi: RoiImage | np.ndarray, embedder: EmbedderBackend) -> FeatureVector:
    """Run the backend on an ROI, resizing to 224x224 first if needed."""
    pixels = roi.pixels if isinstance(roi, RoiImage) else roi
    if pixels.shape[0] != pixels.shape[1]:
        raise MatchingError("ROI raster must be square")
    if pixels.shape[0] != EMBED_INPUT_SIZE:
        pixels = raster.resize(pixels, EMBED_INPUT_SIZE)
    try:
        values = np.asarray(embedder.embed(pixels), dtype=np.float64)
    except Exception as exc:
        raise BackendFailure(f"embedder backend failed: {exc}") from exc
    return FeatureVector(values=values, normalized=False)


def normalize(f: FeatureVector) -> FeatureVector:
    """Scale to unit l2 norm."""
    norm = float(np.linalg.norm(f.values))
    if norm == 0.0:
        raise ZeroVector("cannot normalize the zero vector")
    return FeatureVector(values=f.values / norm, normalized=True)


def score(f1: FeatureVector, f2: FeatureVector) -> float:
    """Inner-product similarity of two normalized features, clamped to [-1, 1]."""
    if not (f1.normalized and f2.normalized):
        raise NotNormalized("score requires both features normalized")
    s = float(np.dot(f1.values, f2.values))
    return min(1.0, max(-1.0, s))


def decide(s: float, t: float) -> MatchDecision:
    """Threshold rule: success iff s >= t."""
    outcome = Outcome.SUCCESS if s >= t else Outcome.FAIL
    return MatchDecision(score=s, threshold=t, outcome=outcome)


def verify_pair(
    roi1: RoiImage | np.ndarray,
    roi2: RoiImage | np.ndarray,
    embedder: EmbedderBackend,
    t: float = DEFAULT_THRESHOLD,
) -> MatchDecision:
    """Embed both ROIs, normalize, score, decide."""
    f1 = normalize(embed(roi1, embedder))
    f2 = normalize(embed(roi2, embedder))
    return decide(score(f1, f2), t)


def match_against_gallery(
    probe: FeatureVector, gallery: Sequence[FeatureVector]
) -> tuple[int, float]:
    """Best gallery entry for the probe: (index, score), ties to the lowest index."""
    if len(gallery) == 0:
        raise EmptyGallery("gallery is empty")
    scores = [score(probe, g) for g in gallery]
    best = int(np.argmax(scores))
    return best, scores[best]


class StubEmbedder:
    """Deterministic stand-in embedder.

    Downsamples the ROI to a 16x16 grayscale grid (block means), subtracts the
    grid mean, flattens to 256 values, and applies a fixed seeded random
    512x256 projection. Mean subtraction makes flat rasters map to the zero
    vector and keeps unrelated rasters near-orthogonal after normalization.
    """

    GRID = 16

    def __init__(self, seed: int = 0):
        rng = np.random.default_rng(seed)
        self._projection = rng.standard_normal((FEATURE_DIM, self.GRID * self.GRID)) / np.sqrt(
            self.GRID * self.GRID
        )

    def grid_values(self, image: np.ndarray) -> np.ndarray:
        """Mean-centered 16x16 block means of the grayscale image."""
        img = np.asarray(image, dtype=np.float64)
        if img.ndim == 3:
            img = img.mean(axis=2)
        g = self.GRID
        h, w = img.shape
        if h % g == 0 and w % g == 0:
            grid = img.reshape(g, h // g, g, w // g).mean(axis=(1, 3))
        else:
            rows = [np.array_split(band, g, axis=1) for band in np.array_split(img, g, axis=0)]
            grid = np.array([[cell.mean() for cell in row] for row in rows])
        return grid - grid.mean()

    def embed(self, image: np.ndarray) -> np.ndarray:
        return self._projection @ self.grid_values(image).ravel()


def stub_embedder(seed: int = 0) -> StubEmbedder:
    return StubEmbedder(seed)
