"""Synthetic palm fixtures: random annotations and textured images.

No real palm data ships with the toolkit, so tests, benchmarks, and the demo
service run on synthetic hands: geometrically plausible random annotations
plus per-palm procedural textures. Two images of the same synthetic palm
share a texture; different palms get independent textures.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import dataset, geometry
from .dataset import Device, Manifest, SampleId, format_name
from .geometry import Hand, PalmAnnotation, Point2D


def random_annotation(
    rng: np.random.Generator,
    canvas: float = 416.0,
    unit_range: tuple[float, float] = (30.0, 60.0),
    with_thumb_gap: bool = True,
) -> PalmAnnotation:
    """A random non-degenerate annotation whose points stay on the canvas.

    The gap points are laid out along a random direction around a random
    center, with mild jitter; the thumb gap (or the palm-side flag) points to
    a random side of the gap line.
    """
    while True:
        u = rng.uniform(*unit_range)
        phi = rng.uniform(0.0, 2.0 * np.pi)
        d = np.array([np.cos(phi), np.sin(phi)])
        n = np.array([-d[1], d[0]])
        sign = 1.0 if rng.random() < 0.5 else -1.0
        lo = canvas * 0.35
        hi = canvas * 0.65
        o = rng.uniform(lo, hi, size=2)

        # midpoints a = o - u/2 d, b = o + u/2 d; solve gap points from them
        p3 = o + d * rng.uniform(-0.2, 0.2) * u + n * sign * rng.uniform(-0.15, 0.15) * u
        p2 = 2.0 * (o - d * (u / 2.0)) - p3
        p4 = 2.0 * (o + d * (u / 2.0)) - p3
        thumb = o + n * sign * rng.uniform(0.6, 1.2) * u + d * rng.uniform(-0.8, 0.8) * u

        pts = dict(p2=p2, p3=p3, p4=p4)
        if with_thumb_gap:
            pts["thumb"] = thumb
        if any(np.any(p < 0) or np.any(p > canvas) for p in pts.values()):
            continue
        try:
            return PalmAnnotation(
                gaps=(
                    Point2D(*p2),
                    Point2D(*p3),
                    Point2D(*p4),
                ),
                image_width=canvas,
                image_height=canvas,
                hand=Hand.LEFT if rng.random() < 0.5 else Hand.RIGHT,
                thumb_gap=Point2D(*thumb) if with_thumb_gap else None,
                palm_side=None if with_thumb_gap else (
                    geometry.PalmSide.POS_NORMAL if sign > 0 else geometry.PalmSide.NEG_NORMAL
                ),
            )
        except geometry.GeometryError:
            continue


def palm_texture(seed: int, size: int) -> np.ndarray:
    """Deterministic smooth RGB texture for one palm identity."""
    rng = np.random.default_rng(seed)
    coarse = rng.uniform(40.0, 215.0, size=(12, 12, 3))
    # bilinear upsample of the coarse grid to the full canvas
    pos = np.linspace(0.0, coarse.shape[0] - 1.0, size)
    i0 = np.floor(pos).astype(int)
    i1 = np.minimum(i0 + 1, coarse.shape[0] - 1)
    t = pos - i0
    rows = coarse[i0] * (1 - t)[:, None, None] + coarse[i1] * t[:, None, None]
    img = (
        rows[:, i0] * (1 - t)[None, :, None]
        + rows[:, i1] * t[None, :, None]
    )
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def identity_seed(subject: int, hand: Hand, base_seed: int) -> int:
    return base_seed * 1_000_003 + subject * 2 + (0 if hand is Hand.LEFT else 1)


def make_synthetic_dataset(
    root: str | Path,
    subjects: int = 4,
    sessions: tuple[int, ...] = (1, 2),
    devices: tuple[Device, ...] = (Device.HUAWEI, Device.XIAOMI),
    hands: tuple[Hand, ...] = (Hand.LEFT, Hand.RIGHT),
    shots: int = 2,
    canvas: int = 256,
    seed: int = dataset.DEFAULT_SEED,
    identical_shots: bool = True,
) -> Manifest:
    """Write a synthetic labeled dataset under ``root`` and return its manifest.

    With identical_shots=True, all images of one palm are byte-identical
    copies (one annotation, one texture), which pins genuine scores of any
    deterministic embedder at exactly 1.0. With identical_shots=False, each
    shot re-renders the palm texture at a freshly drawn annotation pose.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    from PIL import Image

    for subject in range(1, subjects + 1):
        for hand in hands:
            id_seed = identity_seed(subject, hand, seed)
            texture = palm_texture(id_seed, canvas)
            ann_rng = np.random.default_rng(id_seed + 7)
            base_ann = random_annotation(ann_rng, canvas=canvas, unit_range=(canvas * 0.12, canvas * 0.2))
            for session in sessions:
                for device in devices:
                    for index in range(1, shots + 1):
                        sid = SampleId(subject=subject, session=session, device=device, hand=hand, index=index)
                        if identical_shots:
                            ann = base_ann
                        else:
                            # same palm texture seen at a freshly drawn pose
                            ann = random_annotation(
                                ann_rng, canvas=canvas, unit_range=(canvas * 0.12, canvas * 0.2)
                            )
                        img = texture
                        name = format_name(sid)
                        Image.fromarray(img).save(root / name, quality=95)
                        geometry.save_annotation(ann, geometry.sidecar_path(root / name))
    return dataset.scan_directory(root)
