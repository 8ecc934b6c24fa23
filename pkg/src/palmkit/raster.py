"""Deterministic raster resampling: bilinear sampling, quad warps, rotations.

Continuous image coordinates put pixel (ix, iy) at center (ix + 0.5, iy + 0.5),
so the image occupies [0, W] x [0, H]. All resampling is plain float64 numpy,
so identical inputs always produce bit-identical outputs.
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import Point2D


def bilinear_sample(
    image: np.ndarray,
    xs: np.ndarray,
    ys: np.ndarray,
    border: str = "edge",
    fill: float = 0.0,
) -> np.ndarray:
    """Sample an HxWxC (or HxW) image at continuous positions (xs, ys).

    border="edge" clamps reads to the nearest edge pixel; border="constant"
    uses ``fill`` for samples whose position falls outside [0, W] x [0, H].
    """
    if image.ndim == 2:
        image = image[:, :, None]
    h, w = image.shape[:2]
    gx = np.asarray(xs, dtype=np.float64) - 0.5
    gy = np.asarray(ys, dtype=np.float64) - 0.5

    x0 = np.floor(gx)
    y0 = np.floor(gy)
    tx = gx - x0
    ty = gy - y0

    x0i = np.clip(x0, 0, w - 1).astype(np.intp)
    x1i = np.clip(x0 + 1, 0, w - 1).astype(np.intp)
    y0i = np.clip(y0, 0, h - 1).astype(np.intp)
    y1i = np.clip(y0 + 1, 0, h - 1).astype(np.intp)

    img = image.astype(np.float64)
    v00 = img[y0i, x0i]
    v01 = img[y0i, x1i]
    v10 = img[y1i, x0i]
    v11 = img[y1i, x1i]

    tx = tx[..., None]
    ty = ty[..., None]
    out = (
        v00 * (1 - tx) * (1 - ty)
        + v01 * tx * (1 - ty)
        + v10 * (1 - tx) * ty
        + v11 * tx * ty
    )
    if border == "constant":
        outside = (xs < 0) | (xs > w) | (ys < 0) | (ys > h)
        out[outside] = fill
    elif border != "edge":
        raise ValueError(f"unknown border mode {border!r}")
    return out


def _to_uint8(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(values), 0, 255).astype(np.uint8)


def warp_quad(image: np.ndarray, corners, out_size: int, border: str = "edge") -> np.ndarray:
    """Resample the quadrilateral ``corners`` into an out_size x out_size raster.

    corners are (top-left, top-right, bottom-right, bottom-left); output rows
    run top->bottom (TL->BL), columns left->right (TL->TR). Sampling happens
    at output pixel centers via the affine map onto the quad.
    """
    if out_size <= 0:
        raise ValueError("out_size must be positive")
    tl, tr, br, bl = (np.array([p.x, p.y] if isinstance(p, Point2D) else p, dtype=np.float64)
                      for p in corners)
    fr = (np.arange(out_size, dtype=np.float64) + 0.5) / out_size
    u = fr[None, :, None]   # along TL->TR
    v = fr[:, None, None]   # along TL->BL
    src = tl[None, None, :] + u * (tr - tl)[None, None, :] + v * (bl - tl)[None, None, :]
    sampled = bilinear_sample(image, src[..., 0], src[..., 1], border=border)
    return _to_uint8(sampled)


def resize(image: np.ndarray, out_size: int) -> np.ndarray:
    """Bilinear resize of the full image to out_size x out_size."""
    h, w = image.shape[:2]
    corners = ((0.0, 0.0), (float(w), 0.0), (float(w), float(h)), (0.0, float(h)))
    return warp_quad(image, corners, out_size)


def rotate_on_canvas(image: np.ndarray, theta_deg: float, out_size: int, fill: float = 0.0) -> np.ndarray:
    """Resize the image onto an out_size x out_size canvas, then rotate it by
    theta degrees about the canvas center (same convention as
    geometry.rotate_point). Uncovered canvas is filled with ``fill``.
    """
    if out_size <= 0:
        raise ValueError("out_size must be positive")
    h, w = image.shape[:2]
    sx = w / out_size
    sy = h / out_size
    c = out_size / 2.0
    rad = math.radians(theta_deg)
    ct, st = math.cos(rad), math.sin(rad)

    centers = np.arange(out_size, dtype=np.float64) + 0.5
    qx = centers[None, :] - c
    qy = centers[:, None] - c
    # inverse rotation back onto the scaled canvas, then inverse scaling
    px = (ct * qx + st * qy) + c
    py = (-st * qx + ct * qy) + c
    sampled = bilinear_sample(image, px * sx, py * sy, border="constant", fill=fill)
    return _to_uint8(sampled)
