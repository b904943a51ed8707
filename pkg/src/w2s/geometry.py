"""Axis-aligned box arithmetic shared across the pipeline.

Boxes are (x1, y1, x2, y2) tuples in pixel coordinates with x1 < x2 and
y1 < y2. All functions are pure.
"""

from __future__ import annotations

Box = tuple[float, float, float, float]


def box_area(box: Box) -> float:
    x1, y1, x2, y2 = box
    return max(0.0, x2 - x1) * max(0.0, y2 - y1)


def validate_box(box: Box) -> None:
    """Raise ValueError unless the box has positive width and height."""
    x1, y1, x2, y2 = box
    if not (x1 < x2 and y1 < y2):
        raise ValueError(f"degenerate box {box!r}: requires x1 < x2 and y1 < y2")


def intersect(a: Box, b: Box) -> Box | None:
    """Positive-area intersection of two boxes, or None when disjoint.

    Boxes that merely touch along an edge do not intersect.
    """
    x1 = max(a[0], b[0])
    y1 = max(a[1], b[1])
    x2 = min(a[2], b[2])
    y2 = min(a[3], b[3])
    if x1 < x2 and y1 < y2:
        return (x1, y1, x2, y2)
    return None


def intersection_area(a: Box, b: Box) -> float:
    inter = intersect(a, b)
    return box_area(inter) if inter is not None else 0.0


def union_area(a: Box, b: Box) -> float:
    return box_area(a) + box_area(b) - intersection_area(a, b)


def iou(a: Box, b: Box) -> float:
    """Intersection over union; 0.0 for disjoint boxes."""
    validate_box(a)
    validate_box(b)
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    return inter / (box_area(a) + box_area(b) - inter)


def hull(a: Box, b: Box) -> Box:
    """Smallest axis-aligned box containing both inputs."""
    return (min(a[0], b[0]), min(a[1], b[1]), max(a[2], b[2]), max(a[3], b[3]))


def clamp_to_image(box: Box, width: float, height: float) -> Box:
    x1, y1, x2, y2 = box
    return (max(0.0, x1), max(0.0, y1), min(float(width), x2), min(float(height), y2))


def contains(outer: Box, inner: Box) -> bool:
    return (
        outer[0] <= inner[0]
        and outer[1] <= inner[1]
        and outer[2] >= inner[2]
        and outer[3] >= inner[3]
    )


def expand_about_center(box: Box, factor: float) -> Box:
    """Scale width and height by `factor`, keeping the center fixed."""
    x1, y1, x2, y2 = box
    cx = (x1 + x2) / 2.0
    cy = (y1 + y2) / 2.0
    hw = (x2 - x1) * factor / 2.0
    hh = (y2 - y1) * factor / 2.0
    return (cx - hw, cy - hh, cx + hw, cy + hh)


def shift(box: Box, dx: float, dy: float) -> Box:
    return (box[0] + dx, box[1] + dy, box[2] + dx, box[3] + dy)
