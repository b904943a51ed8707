"""Unified internal record format and its JSON Lines serialization.

Every stage of the pipeline exchanges data through these records, so the
emit/parse pair here is the round-trip contract for the whole engine.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .geometry import Box, box_area


class RecordError(ValueError):
    """A record violates the unified-format invariants."""


@dataclass
class Instance:
    """One verified object: an axis-aligned box plus its canonical category."""

    id: str
    box: Box
    category: str
    area_ratio: float

    def validate(self, width: int, height: int) -> None:
        x1, y1, x2, y2 = self.box
        if not (x1 < x2 and y1 < y2):
            raise RecordError(f"instance {self.id}: degenerate box {self.box}")
        if x1 < 0 or y1 < 0 or x2 > width or y2 > height:
            raise RecordError(
                f"instance {self.id}: box {self.box} exceeds image {width}x{height}"
            )
        if not (0.0 < self.area_ratio <= 1.0):
            raise RecordError(f"instance {self.id}: area_ratio {self.area_ratio} outside (0,1]")
        if not self.category:
            raise RecordError(f"instance {self.id}: empty category")


@dataclass
class ImageRecord:
    """A standardized image tile with its instances.

    `tile_origin` locates the tile in its parent image; `partition` records
    the source dataset's own train/val membership, which the split builder
    later consumes.
    """

    id: str
    source: str
    width: int
    height: int
    tile_origin: tuple[int, int] = (0, 0)
    partition: str = "train"
    image_path: str = ""
    instances: list[Instance] = field(default_factory=list)

    def validate(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise RecordError(f"record {self.id}: non-positive size {self.width}x{self.height}")
        for inst in self.instances:
            inst.validate(self.width, self.height)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "source": self.source,
            "width": self.width,
            "height": self.height,
            "tile_origin": list(self.tile_origin),
            "partition": self.partition,
            "image_path": self.image_path,
            "instances": [
                {
                    "id": i.id,
                    "box": list(i.box),
                    "category": i.category,
                    "area_ratio": i.area_ratio,
                }
                for i in self.instances
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ImageRecord":
        try:
            rec = cls(
                id=d["id"],
                source=d["source"],
                width=int(d["width"]),
                height=int(d["height"]),
                tile_origin=(int(d["tile_origin"][0]), int(d["tile_origin"][1])),
                partition=d.get("partition", "train"),
                image_path=d.get("image_path", ""),
                instances=[
                    Instance(
                        id=i["id"],
                        box=tuple(float(v) for v in i["box"]),
                        category=i["category"],
                        area_ratio=float(i["area_ratio"]),
                    )
                    for i in d["instances"]
                ],
            )
        except (KeyError, TypeError, IndexError) as exc:
            raise RecordError(f"malformed record dict: {exc}") from exc
        rec.validate()
        return rec


def make_instance(inst_id: str, box: Box, category: str, width: int, height: int) -> Instance:
    """Build an Instance with its area ratio computed against the image."""
    inst = Instance(
        id=inst_id,
        box=box,
        category=category,
        area_ratio=box_area(box) / (width * height),
    )
    inst.validate(width, height)
    return inst


def write_records(records: Iterable[ImageRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            rec.validate()
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


def read_records(path: str | Path) -> list[ImageRecord]:
    records = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            records.append(ImageRecord.from_dict(d))
    return records


def write_jsonl(rows: Iterable[dict], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_jsonl(path: str | Path) -> Iterator[dict]:
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
