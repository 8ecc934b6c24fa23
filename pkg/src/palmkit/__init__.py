"""palmkit: palmprint verification toolkit.

Two-stage pipeline (keypoint-detection-driven ROI extraction, normalized
embedding matching) plus the dataset schema, evaluation protocols, and a
template-enrollment HTTP service.
"""

from . import dataset, evaluation, geometry, matching, pipeline, raster, synthetic

__all__ = [
    "dataset",
    "evaluation",
    "geometry",
    "matching",
    "pipeline",
    "raster",
    "synthetic",
]

__version__ = "0.1.0"
