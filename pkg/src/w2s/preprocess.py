"""Rule-based attribute priors and the two-stage crop machinery.

Size class and grid position are computed from geometry alone so they can
be handed to the captioning backend as reliable priors. The two crops per
instance are (1) a padded instance region and (2) a merged foreground
region giving local context.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from PIL import Image, ImageDraw

from .geometry import Box, box_area, clamp_to_image, expand_about_center, hull, intersect

SIZE_THRESHOLDS = (0.0005, 0.001, 0.01, 0.2)
SIZE_CLASSES = ("tiny", "small", "medium", "big", "large")

HORIZONTAL_LABELS = ("Far Left", "Left", "Center", "Right", "Far Right")
VERTICAL_LABELS = ("Top", "Upper Middle", "Middle", "Lower Middle", "Bottom")

# linear per-axis expansion factor applied to a box when extracting its
# foreground region, keyed by the box's size class
FOREGROUND_SCALE = {"tiny": 4.0, "small": 3.0, "medium": 2.0, "big": 1.5, "large": 1.2}

DEFAULT_INSTANCE_PAD = 0.1


def classify_size(area_ratio: float, thresholds=SIZE_THRESHOLDS) -> str:
    """Map an area ratio to a size class via half-open interval lookup.

    Intervals: tiny [0,t1), small [t1,t2), medium [t2,t3), big [t3,t4),
    large [t4,1]. The upper extreme closes the last interval.
    """
    if not (0.0 < area_ratio <= 1.0):
        raise ValueError(f"area_ratio {area_ratio} outside (0,1]")
    if list(thresholds) != sorted(thresholds) or len(set(thresholds)) != len(thresholds):
        raise ValueError("thresholds must be strictly increasing")
    if not all(0.0 < t < 1.0 for t in thresholds):
        raise ValueError("thresholds must lie in (0,1)")
    for cls, t in zip(SIZE_CLASSES, thresholds):
        if area_ratio < t:
            return cls
    return SIZE_CLASSES[-1]


def classify_size_batch(area_ratios: np.ndarray, thresholds=SIZE_THRESHOLDS) -> list[str]:
    """Vectorized classify_size for large batches."""
    ratios = np.asarray(area_ratios, dtype=float)
    if np.any(ratios <= 0.0) or np.any(ratios > 1.0):
        raise ValueError("area ratios outside (0,1]")
    idx = np.searchsorted(np.asarray(thresholds, dtype=float), ratios, side="right")
    return [SIZE_CLASSES[i] for i in idx]


@dataclass(frozen=True)
class GridPosition:
    """One of the 25 absolute-position cells."""

    horizontal: str
    vertical: str

    @property
    def label(self) -> str:
        return f"{self.horizontal}-{self.vertical}"


def classify_absolute_position(box: Box, image_w: float, image_h: float) -> GridPosition:
    """Assign a box to its 5x5 grid cell by box center.

    column = floor(5*cx/w), row = floor(5*cy/h), each clamped to [0,4], so
    cells are half-open and a center exactly on a boundary falls into the
    higher cell.
    """
    x1, y1, x2, y2 = box
    if not (x1 < x2 and y1 < y2):
        raise ValueError(f"degenerate box {box!r}")
    if x1 < 0 or y1 < 0 or x2 > image_w or y2 > image_h:
        raise ValueError(f"box {box!r} outside image {image_w}x{image_h}")
    cx = (x1 + x2) / 2.0
    cy = (y1 + y2) / 2.0
    col = min(4, max(0, int(5.0 * cx / image_w)))
    row = min(4, max(0, int(5.0 * cy / image_h)))
    return GridPosition(HORIZONTAL_LABELS[col], VERTICAL_LABELS[row])


def instance_crop_window(box: Box, image_w: int, image_h: int,
                         pad: float = DEFAULT_INSTANCE_PAD) -> tuple[int, int, int, int]:
    """Integer crop window for an instance: box padded by `pad` of its own
    dimensions per side, clamped to the image."""
    x1, y1, x2, y2 = box
    if x2 <= x1 or y2 <= y1:
        raise ValueError(f"zero-area box {box!r}")
    bw, bh = x2 - x1, y2 - y1
    padded = clamp_to_image((x1 - pad * bw, y1 - pad * bh, x2 + pad * bw, y2 + pad * bh),
                            image_w, image_h)
    ix1, iy1 = int(np.floor(padded[0])), int(np.floor(padded[1]))
    ix2, iy2 = int(np.ceil(padded[2])), int(np.ceil(padded[3]))
    return ix1, iy1, max(ix1 + 1, ix2), max(iy1 + 1, iy2)


def crop_instance_region(image: Image.Image, box: Box,
                         pad: float = DEFAULT_INSTANCE_PAD) -> tuple[Image.Image, Box]:
    """Crop the padded instance window; returns the crop and the box
    re-expressed in crop coordinates."""
    ix1, iy1, ix2, iy2 = instance_crop_window(box, image.width, image.height, pad)
    crop = image.crop((ix1, iy1, ix2, iy2))
    local = (box[0] - ix1, box[1] - iy1, box[2] - ix1, box[3] - iy1)
    return crop, local


@dataclass
class ForegroundRegion:
    """A merged neighborhood crop covering one or more expanded instances."""

    box: Box
    member_instances: list[str] = field(default_factory=list)


def expand_box(box: Box, image_w: float, image_h: float, scale_fn=None) -> Box:
    """Expand a box about its center by its size-dependent factor, clamped
    to the image. `scale_fn` maps box area (pixels^2) to the linear factor;
    the default derives the factor from the box's size class."""
    if scale_fn is None:
        scale_fn = default_scale_fn(image_w, image_h)
    factor = scale_fn(box_area(box))
    return clamp_to_image(expand_about_center(box, factor), image_w, image_h)


def default_scale_fn(image_w: float, image_h: float):
    image_area = float(image_w) * float(image_h)

    def scale(area: float) -> float:
        return FOREGROUND_SCALE[classify_size(min(1.0, area / image_area))]

    return scale


def extract_foreground_regions(
    boxes: dict[str, Box], image_w: float, image_h: float, scale_fn=None
) -> list[ForegroundRegion]:
    """Expand every box, then merge transitively-overlapping expansions.

    Merging runs to a fixed point: hulls that come to overlap after a merge
    are merged again, so the output regions are pairwise non-overlapping.
    Overlap requires positive intersection area; touching edges stay apart.
    Each instance ends up in exactly one region, and that region contains
    its expanded box. Output is sorted by (x1, y1, x2, y2).
    """
    if not boxes:
        return []
    ids = sorted(boxes)
    expanded = {i: expand_box(boxes[i], image_w, image_h, scale_fn) for i in ids}

    # union-find over the overlap graph, re-run on the merged hulls until
    # no two hulls overlap
    groups: list[tuple[Box, list[str]]] = [(expanded[i], [i]) for i in ids]
    while True:
        parent = list(range(len(groups)))

        def find(i: int) -> int:
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        merged_any = False
        for i in range(len(groups)):
            for j in range(i + 1, len(groups)):
                if intersect(groups[i][0], groups[j][0]) is not None:
                    ri, rj = find(i), find(j)
                    if ri != rj:
                        parent[rj] = ri
                        merged_any = True
        if not merged_any:
            break
        by_root: dict[int, tuple[Box, list[str]]] = {}
        for i, (box, members) in enumerate(groups):
            root = find(i)
            if root in by_root:
                prev_box, prev_members = by_root[root]
                by_root[root] = (hull(prev_box, box), prev_members + members)
            else:
                by_root[root] = (box, list(members))
        groups = list(by_root.values())

    regions = [
        ForegroundRegion(box=box, member_instances=sorted(members))
        for box, members in groups
    ]
    regions.sort(key=lambda r: r.box)
    return regions


def crop_foreground_region(image: Image.Image, region: ForegroundRegion) -> tuple[Image.Image, tuple[int, int]]:
    """Crop a region to integer bounds; returns the crop and its origin."""
    x1 = int(np.floor(region.box[0]))
    y1 = int(np.floor(region.box[1]))
    x2 = min(image.width, int(np.ceil(region.box[2])))
    y2 = min(image.height, int(np.ceil(region.box[3])))
    return image.crop((x1, y1, x2, y2)), (x1, y1)


def highlight_stroke_width(crop_w: int, crop_h: int) -> int:
    return max(2, round(0.01 * min(crop_w, crop_h)))


def render_highlight(crop: Image.Image, target_box: Box) -> Image.Image:
    """Return a copy of the crop with a pure red rectangle stroked around
    the target. The stroke is drawn inward from the rectangle and inset
    when the box is flush with the crop edge, so every stroke pixel stays
    in-bounds; pixels outside the stroke band are untouched.
    """
    x1, y1, x2, y2 = target_box
    if x1 < 0 or y1 < 0 or x2 > crop.width or y2 > crop.height or x2 <= x1 or y2 <= y1:
        raise ValueError(f"target box {target_box!r} not within crop {crop.size}")
    out = crop.convert("RGB") if crop.mode != "RGB" else crop.copy()
    width = highlight_stroke_width(out.width, out.height)
    # PIL rectangle coordinates are inclusive; clamp so the stroke cannot
    # fall on the out-of-range column/row when the box touches the edge
    rx1 = min(max(0, int(round(x1))), out.width - 1)
    ry1 = min(max(0, int(round(y1))), out.height - 1)
    rx2 = min(max(rx1, int(round(x2)) - 1), out.width - 1)
    ry2 = min(max(ry1, int(round(y2)) - 1), out.height - 1)
    draw = ImageDraw.Draw(out)
    draw.rectangle((rx1, ry1, rx2, ry2), outline=(255, 0, 0), width=width)
    return out
