import io

import numpy as np
import pytest
from PIL import Image

from palmkit import synthetic
from palmkit.geometry import Hand, PalmAnnotation, Point2D

TEST_SEED = 20200101


@pytest.fixture
def rng():
    return np.random.default_rng(TEST_SEED)


def trivial_annotation() -> PalmAnnotation:
    """Collinear gaps on a small canvas: a=(1,0), b=(3,0), c=(2,3)."""
    return PalmAnnotation(
        gaps=(Point2D(0, 0), Point2D(2, 0), Point2D(4, 0)),
        image_width=10,
        image_height=10,
        hand=Hand.RIGHT,
        thumb_gap=Point2D(1, 4),
    )


def random_annotation(rng, canvas=416.0, **kwargs) -> PalmAnnotation:
    return synthetic.random_annotation(rng, canvas=canvas, **kwargs)


def png_bytes(raster: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(raster).save(buf, format="PNG")
    return buf.getvalue()
