"""Base/novel category partition and image-level split tagging."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .records import ImageRecord

BASE_CLASSES = (
    "aircraft", "aircraft-hangar", "airplane", "baseball-diamond", "baseball-field",
    "bicycle", "bridge", "building", "car", "cargo-car", "cargo-plane",
    "cargo-truck", "cement-mixer", "chimney", "construction-site", "container",
    "container-crane", "container-ship", "crane-truck", "dam", "damaged-building",
    "dump-truck", "engineering-vehicle", "expressway-service-area",
    "expressway-toll-station", "facility", "ferry", "fishing-vessel",
    "fixed-wing-aircraft", "flat-car", "front-loader-or-bulldozer", "golf-field",
    "ground-grader", "harbor", "haul-truck", "helipad", "hut-or-tent",
    "large-vehicle", "locomotive", "oil-tanker", "overpass", "passenger-car",
    "passenger-vehicle", "people", "plane", "pylon", "railway-vehicle",
    "roundabout", "sailboat", "shed", "ship", "shipping-container",
    "small-aircraft", "small-car", "small-vehicle", "soccer-ball-field",
    "stadium", "storage-tank", "straddle-carrier", "tank-car", "tennis-court",
    "tower", "tower-crane", "trailer", "train-station", "truck", "truck-tractor",
    "truck-tractor-with-flatbed-trailer", "truck-tractor-with-liquid-tank",
    "tugboat", "utility-truck", "van", "vehicle", "vehicle-lot", "yacht",
)

NOVEL_CLASSES = (
    "airport", "awning-tricycle", "barge", "basketball-court", "bus",
    "crossroad", "excavator", "ground-track-field", "helicopter",
    "maritime-vessel", "mobile-crane", "motor", "motorboat", "parking-lot",
    "pedestrian", "pickup-truck", "playground", "reach-stacker",
    "scraper-or-tractor", "shipping-container-lot", "swimming-pool",
    "t-junction", "tricycle", "truck-tractor-with-box-trailer", "windmill",
)

SPLIT_TAGS = ("P", "FT", "ValZSD", "ValFT", "Test")


class SplitError(ValueError):
    """A category cannot be classified by the split spec."""


@dataclass
class SplitSpec:
    base_classes: frozenset = frozenset(BASE_CLASSES)
    novel_classes: frozenset = frozenset(NOVEL_CLASSES)

    def __post_init__(self):
        self.base_classes = frozenset(self.base_classes)
        self.novel_classes = frozenset(self.novel_classes)
        overlap = self.base_classes & self.novel_classes
        if overlap:
            raise SplitError(f"base and novel classes overlap: {sorted(overlap)}")

    def is_novel(self, category: str) -> bool:
        if category in self.novel_classes:
            return True
        if category in self.base_classes:
            return False
        raise SplitError(f"category {category!r} is neither base nor novel")

    @classmethod
    def from_json(cls, d: dict) -> "SplitSpec":
        return cls(base_classes=frozenset(d["base"]), novel_classes=frozenset(d["novel"]))


@dataclass
class TaggedRecord:
    record: ImageRecord
    tags: list[str] = field(default_factory=list)


def build_splits(
    records: list[ImageRecord],
    spec: SplitSpec | None = None,
    val_fraction_zsd: float = 1.0,
    seed: int = 0,
) -> list[TaggedRecord]:
    """Tag each record with the experiment splits it belongs to.

    Training-partition records: FT always; P additionally when every
    instance is base-class. Validation-partition records: ValFT always;
    ValZSD for a seeded sample (fraction `val_fraction_zsd`) of those
    containing at least one novel-class instance.
    """
    spec = spec or SplitSpec()
    if not (0.0 <= val_fraction_zsd <= 1.0):
        raise ValueError(f"val_fraction_zsd must be in [0,1], got {val_fraction_zsd}")
    tagged = []
    zsd_candidates = []
    for record in sorted(records, key=lambda r: (r.source, r.id)):
        has_novel = any(spec.is_novel(i.category) for i in record.instances)
        tags: list[str] = []
        if record.partition == "val":
            tags.append("ValFT")
            entry = TaggedRecord(record, tags)
            if has_novel:
                zsd_candidates.append(entry)
        else:
            tags.append("FT")
            if not has_novel:
                tags.append("P")
            entry = TaggedRecord(record, tags)
        tagged.append(entry)

    rng = random.Random(seed)
    n_take = round(val_fraction_zsd * len(zsd_candidates))
    for entry in rng.sample(zsd_candidates, n_take) if n_take < len(zsd_candidates) \
            else zsd_candidates:
        entry.tags.append("ValZSD")
    for entry in tagged:
        entry.tags.sort()
    return tagged
