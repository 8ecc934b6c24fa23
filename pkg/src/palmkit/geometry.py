"""Pure geometric core for palm keypoints, local frames, and ROI quads.

Everything in this module works in image pixel coordinates: x grows rightward,
y grows downward (display convention). All types are immutable values and all
operations are pure functions, so they are safe to use from any number of
threads.

The keypoint construction: A and B are the midpoints of the two adjacent
general finger-gap pairs, O is the midpoint of AB, and C sits at distance
1.5 * ||AB|| from O on the palm side of the AB line. The local frame has its
origin at O, unit length ||AB||, Y axis pointing away from the palm (away
from C), and X axis equal to the Y axis rotated 90 degrees clockwise in
display coordinates. The ROI is the axis-aligned square (in the local frame)
of side 2.5 * ||AB|| centered 1.5 * ||AB|| from O toward the palm.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

ROI_SIDE_FACTOR = 2.5       # ROI side length in units of ||AB||
ROI_CENTER_FACTOR = 1.5     # distance from O to the ROI center, in units of ||AB||

DEFAULT_ALPHA = 1.5         # double-finger-gap box side, in units of the gap pair distance
DEFAULT_BETA = 2.0          # palm-center box side, in units of ||AB||


class GeometryError(ValueError):
    """Base class for geometric construction failures."""


class DegenerateAnnotation(GeometryError):
    """Annotation does not admit a keypoint triple (coincident midpoints,
    undeterminable palm side, ...)."""


class DegenerateTriple(GeometryError):
    """Keypoint triple does not admit a local frame (C on the AB line)."""


class PointOutOfCanvas(GeometryError):
    """A transformed annotation point left the target canvas."""


class Hand(str, enum.Enum):
    LEFT = "left"
    RIGHT = "right"


class PalmSide(str, enum.Enum):
    """Which of the two unit normals of the AB line points into the palm.

    The reference normal is the 90-degree counterclockwise rotation (in x/y
    component terms) of the A->B direction, with A and B taken in anatomical
    order: n = (-(b-a).y, (b-a).x) / ||b-a||.
    """

    POS_NORMAL = "pos_normal"
    NEG_NORMAL = "neg_normal"


class BoxClass(enum.IntEnum):
    DOUBLE_FINGER_GAP = 0
    PALM_CENTER = 1


@dataclass(frozen=True)
class Point2D:
    """A point in image pixel coordinates (x rightward, y downward)."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise GeometryError(f"non-finite point ({self.x}, {self.y})")

    def __add__(self, other: "Point2D") -> "Point2D":
        return Point2D(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "Point2D") -> "Point2D":
        return Point2D(self.x - other.x, self.y - other.y)

    def scaled(self, s: float) -> "Point2D":
        return Point2D(self.x * s, self.y * s)

    def dot(self, other: "Point2D") -> float:
        return self.x * other.x + self.y * other.y

    def cross(self, other: "Point2D") -> float:
        return self.x * other.y - self.y * other.x

    def norm(self) -> float:
        return math.hypot(self.x, self.y)


def midpoint(p: Point2D, q: Point2D) -> Point2D:
    return Point2D((p.x + q.x) / 2.0, (p.y + q.y) / 2.0)


@dataclass(frozen=True)
class PalmAnnotation:
    """Ground-truth finger-gap points for one palm image.

    ``gaps`` holds the three general finger-gap points in anatomical order
    (index/middle, middle/ring, ring/little). ``thumb_gap`` is the optional
    thumb gap point; when absent, ``palm_side`` must say on which side of the
    AB line the palm lies.
    """

    gaps: tuple[Point2D, Point2D, Point2D]
    image_width: float
    image_height: float
    hand: Hand
    thumb_gap: Optional[Point2D] = None
    palm_side: Optional[PalmSide] = None

    def __post_init__(self) -> None:
        if len(self.gaps) != 3:
            raise GeometryError(f"expected exactly 3 general gap points, got {len(self.gaps)}")
        if self.image_width <= 0 or self.image_height <= 0:
            raise GeometryError("canvas dimensions must be positive")
        p2, p3, p4 = self.gaps
        if p2 == p3 or p3 == p4 or p2 == p4:
            raise DegenerateAnnotation("general gap points must be pairwise distinct")
        for p in self.points():
            if not (0.0 <= p.x <= self.image_width and 0.0 <= p.y <= self.image_height):
                raise GeometryError(
                    f"point ({p.x}, {p.y}) outside canvas "
                    f"{self.image_width}x{self.image_height}"
                )

    def points(self) -> list[Point2D]:
        """All annotated points, thumb gap first when present."""
        pts = list(self.gaps)
        if self.thumb_gap is not None:
            pts.insert(0, self.thumb_gap)
        return pts


@dataclass(frozen=True)
class KeypointTriple:
    """The A, B, C points driving the local frame."""

    a: Point2D
    b: Point2D
    c: Point2D

    def __post_init__(self) -> None:
        if self.a == self.b:
            raise DegenerateTriple("A and B coincide")
        ab = self.b - self.a
        # c strictly off the AB line, otherwise no frame orientation exists
        if ab.cross(self.c - self.a) == 0.0:
            raise DegenerateTriple("C lies on the AB line")


@dataclass(frozen=True)
class LocalFrame:
    """Palm-anchored coordinate frame: origin O, orthonormal axes, unit ||AB||."""

    origin: Point2D
    x_axis: Point2D
    y_axis: Point2D
    unit: float

    def __post_init__(self) -> None:
        if self.unit <= 0:
            raise GeometryError("frame unit must be positive")
        if abs(self.x_axis.norm() - 1.0) > 1e-9 or abs(self.y_axis.norm() - 1.0) > 1e-9:
            raise GeometryError("frame axes must be unit length")
        if abs(self.x_axis.dot(self.y_axis)) > 1e-9:
            raise GeometryError("frame axes must be orthogonal")

    def to_image(self, fx: float, fy: float) -> Point2D:
        """Map frame coordinates (in pixel units) to image coordinates."""
        return Point2D(
            self.origin.x + fx * self.x_axis.x + fy * self.y_axis.x,
            self.origin.y + fx * self.x_axis.y + fy * self.y_axis.y,
        )


@dataclass(frozen=True)
class RoiQuad:
    """Oriented ROI square: corners ordered top-left, top-right, bottom-right,
    bottom-left as seen in the local frame."""

    corners: tuple[Point2D, Point2D, Point2D, Point2D]
    side: float

    def __post_init__(self) -> None:
        if len(self.corners) != 4:
            raise GeometryError("quad needs exactly 4 corners")
        tl, tr, br, bl = self.corners
        sides = [(tr - tl).norm(), (br - tr).norm(), (bl - br).norm(), (tl - bl).norm()]
        for s in sides:
            if abs(s - self.side) > 1e-6 * max(self.side, 1.0):
                raise GeometryError("quad sides must all equal the declared side length")
        if abs((tr - tl).dot(bl - tl)) > 1e-6 * self.side * self.side:
            raise GeometryError("adjacent quad sides must be orthogonal")

    def center(self) -> Point2D:
        tl, tr, br, bl = self.corners
        return Point2D(
            (tl.x + tr.x + br.x + bl.x) / 4.0,
            (tl.y + tr.y + br.y + bl.y) / 4.0,
        )


@dataclass(frozen=True)
class BoxSpec:
    """Axis-aligned ground-truth detection box."""

    class_id: BoxClass
    center: Point2D
    width: float
    height: float

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise GeometryError("box dimensions must be positive")


@dataclass(frozen=True)
class BoxSizing:
    """Scale factors turning keypoints into detection boxes.

    The source construction gives box centers but no dimensions, so the side
    lengths are parameterized: class-0 boxes get side alpha * (gap pair
    distance), the class-1 box gets side beta * ||AB||.
    """

    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA

    def __post_init__(self) -> None:
        if self.alpha <= 0 or self.beta <= 0:
            raise GeometryError("box sizing factors must be positive")


def _palm_normal(a: Point2D, b: Point2D, ann: PalmAnnotation) -> Point2D:
    """Unit normal to the AB line pointing into the palm."""
    ab = b - a
    u = ab.norm()
    n_pos = Point2D(-ab.y / u, ab.x / u)
    if ann.thumb_gap is not None:
        side = n_pos.dot(ann.thumb_gap - midpoint(a, b))
        if side > 0:
            return n_pos
        if side < 0:
            return n_pos.scaled(-1.0)
        raise DegenerateAnnotation("thumb gap lies on the AB line; palm side undeterminable")
    if ann.palm_side is PalmSide.POS_NORMAL:
        return n_pos
    if ann.palm_side is PalmSide.NEG_NORMAL:
        return n_pos.scaled(-1.0)
    raise DegenerateAnnotation("no thumb gap and no palm-side flag; palm side undeterminable")


def derive_triple(ann: PalmAnnotation) -> KeypointTriple:
    """Derive the (A, B, C) keypoints from an annotation.

    A and B are the midpoints of the two adjacent gap pairs; C sits at
    1.5 * ||AB|| from the AB midpoint, on the palm side of the AB line.
    """
    p2, p3, p4 = ann.gaps
    a = midpoint(p2, p3)
    b = midpoint(p3, p4)
    if a == b:
        raise DegenerateAnnotation("gap pair midpoints coincide")
    o = midpoint(a, b)
    u = (b - a).norm()
    n = _palm_normal(a, b, ann)
    c = o + n.scaled(ROI_CENTER_FACTOR * u)
    return KeypointTriple(a=a, b=b, c=c)


def frame_from_triple(t: KeypointTriple) -> LocalFrame:
    """Build the local frame: origin at the AB midpoint, Y away from C,
    X equal to Y rotated 90 degrees clockwise in display coordinates."""
    origin = midpoint(t.a, t.b)
    ab = t.b - t.a
    unit = ab.norm()
    n = Point2D(-ab.y / unit, ab.x / unit)
    side = n.dot(t.c - origin)
    if side == 0.0:
        raise DegenerateTriple("C lies on the AB line; frame orientation undeterminable")
    y_axis = n if side < 0 else n.scaled(-1.0)
    x_axis = Point2D(-y_axis.y, y_axis.x)
    return LocalFrame(origin=origin, x_axis=x_axis, y_axis=y_axis, unit=unit)


def roi_center(frame: LocalFrame) -> Point2D:
    """ROI center: 1.5 units from the origin along the palm direction (-Y)."""
    return frame.origin - frame.y_axis.scaled(ROI_CENTER_FACTOR * frame.unit)


def roi_quad(frame: LocalFrame) -> RoiQuad:
    """The ROI square of side 2.5 * unit centered at the nominal palm center."""
    center = roi_center(frame)
    side = ROI_SIDE_FACTOR * frame.unit
    h = side / 2.0
    hx = frame.x_axis.scaled(h)
    hy = frame.y_axis.scaled(h)
    tl = center - hx + hy
    tr = center + hx + hy
    br = center + hx - hy
    bl = center - hx - hy
    return RoiQuad(corners=(tl, tr, br, bl), side=side)


def boxes_from_annotation(ann: PalmAnnotation, sizing: BoxSizing = BoxSizing()) -> list[BoxSpec]:
    """Ground-truth detection boxes: two class-0 squares at A and B, one
    class-1 square at C."""
    triple = derive_triple(ann)
    p2, p3, p4 = ann.gaps
    u = (triple.b - triple.a).norm()
    side_a = sizing.alpha * (p3 - p2).norm()
    side_b = sizing.alpha * (p4 - p3).norm()
    side_c = sizing.beta * u
    return [
        BoxSpec(BoxClass.DOUBLE_FINGER_GAP, triple.a, side_a, side_a),
        BoxSpec(BoxClass.DOUBLE_FINGER_GAP, triple.b, side_b, side_b),
        BoxSpec(BoxClass.PALM_CENTER, triple.c, side_c, side_c),
    ]


def rotate_point(p: Point2D, theta_deg: float, pivot: Point2D) -> Point2D:
    """Rotate a point about a pivot by theta degrees.

    The rotation matrix is [[cos, -sin], [sin, cos]] applied to (x, y); with
    y pointing down this looks clockwise on screen for positive theta.
    """
    rad = math.radians(theta_deg)
    ct, st = math.cos(rad), math.sin(rad)
    dx, dy = p.x - pivot.x, p.y - pivot.y
    return Point2D(pivot.x + ct * dx - st * dy, pivot.y + st * dx + ct * dy)


def rotate_annotation(ann: PalmAnnotation, theta_deg: float, out_size: float) -> PalmAnnotation:
    """Rescale the annotation onto an out_size x out_size canvas, then rotate
    all points by theta degrees about the canvas center.

    Raises PointOutOfCanvas if any rotated point leaves the canvas; callers
    may skip the rotated sample or retry with a larger canvas. Downstream
    boxes must be recomputed from the rotated points.
    """
    if out_size <= 0:
        raise GeometryError("out_size must be positive")
    sx = out_size / ann.image_width
    sy = out_size / ann.image_height
    pivot = Point2D(out_size / 2.0, out_size / 2.0)

    def transform(p: Point2D) -> Point2D:
        q = rotate_point(Point2D(p.x * sx, p.y * sy), theta_deg, pivot)
        if not (0.0 <= q.x <= out_size and 0.0 <= q.y <= out_size):
            raise PointOutOfCanvas(
                f"point ({p.x}, {p.y}) maps to ({q.x}, {q.y}) outside the "
                f"{out_size}x{out_size} canvas at theta={theta_deg}"
            )
        return q

    p2, p3, p4 = ann.gaps
    # rotation and positive anisotropic scaling both preserve the sign of the
    # AB-line side test, so hand and palm_side flags carry over unchanged
    return PalmAnnotation(
        gaps=(transform(p2), transform(p3), transform(p4)),
        image_width=out_size,
        image_height=out_size,
        hand=ann.hand,
        thumb_gap=None if ann.thumb_gap is None else transform(ann.thumb_gap),
        palm_side=ann.palm_side,
    )


# --- annotation sidecar files ------------------------------------------------
#
# One JSON document per image, named <image-stem>.ann.json:
#
#   {
#     "points": {"P1": {"x": ..., "y": ...},        # optional
#                "P2": {...}, "P3": {...}, "P4": {...}},
#     "hand": "l" | "r",
#     "image_width": <pixels>, "image_height": <pixels>,
#     "palm_side": "pos_normal" | "neg_normal"      # optional
#   }

_HAND_CODES = {"l": Hand.LEFT, "r": Hand.RIGHT}


class AnnotationFormatError(ValueError):
    """Sidecar document is malformed or missing required fields."""


def annotation_to_dict(ann: PalmAnnotation) -> dict:
    points = {
        name: {"x": p.x, "y": p.y}
        for name, p in zip(("P2", "P3", "P4"), ann.gaps)
    }
    if ann.thumb_gap is not None:
        points["P1"] = {"x": ann.thumb_gap.x, "y": ann.thumb_gap.y}
    doc = {
        "points": points,
        "hand": "l" if ann.hand is Hand.LEFT else "r",
        "image_width": ann.image_width,
        "image_height": ann.image_height,
    }
    if ann.palm_side is not None:
        doc["palm_side"] = ann.palm_side.value
    return doc


def annotation_from_dict(doc: dict) -> PalmAnnotation:
    try:
        points = doc["points"]
        gaps = tuple(
            Point2D(float(points[k]["x"]), float(points[k]["y"]))
            for k in ("P2", "P3", "P4")
        )
        hand = _HAND_CODES[doc["hand"]]
        width = float(doc["image_width"])
        height = float(doc["image_height"])
    except (KeyError, TypeError) as exc:
        raise AnnotationFormatError(f"missing or malformed annotation field: {exc}") from exc
    thumb = None
    if "P1" in points:
        thumb = Point2D(float(points["P1"]["x"]), float(points["P1"]["y"]))
    palm_side = None
    if "palm_side" in doc:
        try:
            palm_side = PalmSide(doc["palm_side"])
        except ValueError as exc:
            raise AnnotationFormatError(f"bad palm_side {doc['palm_side']!r}") from exc
    return PalmAnnotation(
        gaps=gaps,
        image_width=width,
        image_height=height,
        hand=hand,
        thumb_gap=thumb,
        palm_side=palm_side,
    )


def load_annotation(path: str | Path) -> PalmAnnotation:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return annotation_from_dict(doc)


def save_annotation(ann: PalmAnnotation, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(annotation_to_dict(ann), fh, indent=2, sort_keys=True)
        fh.write("\n")


def sidecar_path(image_path: str | Path) -> Path:
    """Annotation file adjacent to an image: <stem>.ann.json."""
    p = Path(image_path)
    return p.with_name(p.stem + ".ann.json")
