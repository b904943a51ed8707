"""Parsers for the supported source-annotation dialects.

Supported dialects:
  voc-xml:   one Pascal-VOC XML document per image
  coco-json: a single COCO instances JSON covering many images
  dota-txt:  one text file per image; lines of 8 quad corners + class + difficulty
  plain-tsv: one TSV covering many images; columns
             image_id, width, height, x1, y1, x2, y2, category

All parsers emit the unified ImageRecord format with categories already
canonicalized through the descriptor's category map. Rotated quads
(dota-txt) are reduced to their axis-aligned hull.
"""

from __future__ import annotations

import io
import json
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Mapping

from ..records import ImageRecord, make_instance


class ParseError(ValueError):
    """Malformed source annotation; carries file name and line where known."""

    def __init__(self, message: str, filename: str = "", line: int | None = None):
        loc = filename
        if line is not None:
            loc += f":{line}"
        super().__init__(f"{loc}: {message}" if loc else message)
        self.filename = filename
        self.line = line


class MappingError(ValueError):
    """A raw category does not resolve through the descriptor's category map."""


_WS_RUN = re.compile(r"\s+")


def slugify(raw: str) -> str:
    """Trim, lowercase, and collapse whitespace runs to single hyphens."""
    return _WS_RUN.sub("-", raw.strip().lower())


def normalize_category(raw: str, category_map: Mapping[str, str]) -> str:
    """Canonicalize a raw category name through the descriptor map.

    The raw name is slugified first; lookup then tries the slug and the
    trimmed raw form. Anything unmapped is an error so label-space drift
    fails loudly instead of leaking into the dataset.
    """
    if not raw or not raw.strip():
        raise MappingError("empty category name")
    slug = slugify(raw)
    if slug in category_map:
        return category_map[slug]
    stripped = raw.strip()
    if stripped in category_map:
        return category_map[stripped]
    raise MappingError(f"category {raw!r} (normalized {slug!r}) not in category map")


@dataclass
class SourceDatasetDescriptor:
    """Declares how one source dataset is read and mapped.

    `category_map` keys may be raw names or slugs; they are slugified on
    construction so lookups are insensitive to case and spacing.
    `partition` tags every emitted record (train or val) for the split
    builder downstream.
    """

    name: str
    annotation_dialect: str
    category_map: dict[str, str] = field(default_factory=dict)
    image_root: str = ""
    partition: str = "train"

    def __post_init__(self):
        if self.annotation_dialect not in DIALECTS:
            raise ValueError(
                f"unknown dialect {self.annotation_dialect!r}; expected one of {sorted(DIALECTS)}"
            )
        if self.partition not in ("train", "val"):
            raise ValueError(f"partition must be 'train' or 'val', got {self.partition!r}")
        normalized = {}
        for key, value in self.category_map.items():
            normalized[slugify(key)] = value
            normalized.setdefault(key.strip(), value)
        self.category_map = normalized

    @classmethod
    def from_json(cls, d: dict) -> "SourceDatasetDescriptor":
        return cls(
            name=d["name"],
            annotation_dialect=d["annotation_dialect"],
            category_map=dict(d.get("category_map", {})),
            image_root=d.get("image_root", ""),
            partition=d.get("partition", "train"),
        )


def _as_text(name: str, stream: BinaryIO | bytes) -> str:
    data = stream if isinstance(stream, bytes) else stream.read()
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not valid UTF-8: {exc}", filename=name) from exc


def _image_id(descriptor: SourceDatasetDescriptor, stem: str) -> str:
    return f"{descriptor.name}/{stem}"


def _parse_voc_xml(descriptor: SourceDatasetDescriptor, name: str, text: str) -> list[ImageRecord]:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise ParseError(f"invalid XML: {exc}", filename=name) from exc

    def req(parent, tag):
        node = parent.find(tag)
        if node is None or node.text is None:
            raise ParseError(f"missing <{tag}>", filename=name)
        return node.text

    stem = req(root, "filename").rsplit(".", 1)[0]
    size = root.find("size")
    if size is None:
        raise ParseError("missing <size>", filename=name)
    width = int(req(size, "width"))
    height = int(req(size, "height"))
    record = ImageRecord(
        id=_image_id(descriptor, stem),
        source=descriptor.name,
        width=width,
        height=height,
        partition=descriptor.partition,
        image_path=req(root, "filename"),
    )
    for k, obj in enumerate(root.iter("object")):
        category = normalize_category(req(obj, "name"), descriptor.category_map)
        bnd = obj.find("bndbox")
        if bnd is None:
            raise ParseError("object without <bndbox>", filename=name)
        try:
            box = (
                float(req(bnd, "xmin")),
                float(req(bnd, "ymin")),
                float(req(bnd, "xmax")),
                float(req(bnd, "ymax")),
            )
        except ValueError as exc:
            raise ParseError(f"non-numeric bndbox: {exc}", filename=name) from exc
        record.instances.append(
            make_instance(f"{record.id}/{k}", box, category, width, height)
        )
    record.validate()
    return [record]


def _parse_coco_json(descriptor: SourceDatasetDescriptor, name: str, text: str) -> list[ImageRecord]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}", filename=name, line=exc.lineno) from exc
    try:
        categories = {c["id"]: c["name"] for c in doc["categories"]}
        images = {im["id"]: im for im in doc["images"]}
    except (KeyError, TypeError) as exc:
        raise ParseError(f"missing COCO section: {exc}", filename=name) from exc

    records: dict[object, ImageRecord] = {}
    for im_id, im in images.items():
        stem = str(im.get("file_name", im_id)).rsplit(".", 1)[0]
        records[im_id] = ImageRecord(
            id=_image_id(descriptor, stem),
            source=descriptor.name,
            width=int(im["width"]),
            height=int(im["height"]),
            partition=descriptor.partition,
            image_path=str(im.get("file_name", "")),
        )
    counters = {im_id: 0 for im_id in records}
    for ann in doc.get("annotations", []):
        try:
            im_id = ann["image_id"]
            record = records[im_id]
            raw_cat = categories[ann["category_id"]]
            x, y, w, h = (float(v) for v in ann["bbox"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed annotation {ann!r}: {exc}", filename=name) from exc
        category = normalize_category(raw_cat, descriptor.category_map)
        k = counters[im_id]
        counters[im_id] += 1
        record.instances.append(
            make_instance(
                f"{record.id}/{k}", (x, y, x + w, y + h), category, record.width, record.height
            )
        )
    out = sorted(records.values(), key=lambda r: r.id)
    for rec in out:
        rec.validate()
    return out


# DOTA meta headers that may precede annotation lines
_DOTA_META = ("imagesource", "gsd")


def _parse_dota_txt(
    descriptor: SourceDatasetDescriptor,
    name: str,
    text: str,
    image_size: tuple[int, int],
) -> list[ImageRecord]:
    width, height = image_size
    stem = name.rsplit("/", 1)[-1].rsplit(".", 1)[0]
    record = ImageRecord(
        id=_image_id(descriptor, stem),
        source=descriptor.name,
        width=width,
        height=height,
        partition=descriptor.partition,
        image_path=f"{stem}.png",
    )
    k = 0
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or any(line.startswith(meta) for meta in _DOTA_META):
            continue
        parts = line.split()
        if len(parts) < 9:
            raise ParseError(f"expected 8 coords + class, got {len(parts)} fields",
                             filename=name, line=line_no)
        try:
            coords = [float(v) for v in parts[:8]]
        except ValueError as exc:
            raise ParseError(f"non-numeric coordinate: {exc}", filename=name, line=line_no) from exc
        xs, ys = coords[0::2], coords[1::2]
        # axis-aligned hull of the rotated quad
        box = (min(xs), min(ys), max(xs), max(ys))
        category = normalize_category(parts[8], descriptor.category_map)
        record.instances.append(make_instance(f"{record.id}/{k}", box, category, width, height))
        k += 1
    record.validate()
    return [record]


def _parse_plain_tsv(descriptor: SourceDatasetDescriptor, name: str, text: str) -> list[ImageRecord]:
    records: dict[str, ImageRecord] = {}
    counters: dict[str, int] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 8:
            raise ParseError(f"expected 8 tab-separated fields, got {len(parts)}",
                             filename=name, line=line_no)
        stem, w_s, h_s, x1_s, y1_s, x2_s, y2_s, raw_cat = parts
        try:
            width, height = int(w_s), int(h_s)
            box = (float(x1_s), float(y1_s), float(x2_s), float(y2_s))
        except ValueError as exc:
            raise ParseError(f"non-numeric field: {exc}", filename=name, line=line_no) from exc
        rec_id = _image_id(descriptor, stem)
        if rec_id not in records:
            records[rec_id] = ImageRecord(
                id=rec_id,
                source=descriptor.name,
                width=width,
                height=height,
                partition=descriptor.partition,
                image_path=f"{stem}.png",
            )
            counters[rec_id] = 0
        record = records[rec_id]
        if (record.width, record.height) != (width, height):
            raise ParseError(f"inconsistent size for image {stem!r}", filename=name, line=line_no)
        category = normalize_category(raw_cat, descriptor.category_map)
        k = counters[rec_id]
        counters[rec_id] += 1
        record.instances.append(make_instance(f"{rec_id}/{k}", box, category, width, height))
    out = sorted(records.values(), key=lambda r: r.id)
    for rec in out:
        rec.validate()
    return out


DIALECTS = ("voc-xml", "coco-json", "dota-txt", "plain-tsv")


def parse_source_annotations(
    descriptor: SourceDatasetDescriptor,
    files: Iterable[tuple[str, BinaryIO | bytes]],
    image_sizes: Mapping[str, tuple[int, int]] | None = None,
) -> list[ImageRecord]:
    """Parse named byte streams of the descriptor's dialect into ImageRecords.

    `files` yields (name, stream) pairs. dota-txt files carry no image size,
    so `image_sizes` must map each file's stem to (width, height) for that
    dialect. An annotation file with no boxes still yields its ImageRecord
    with an empty instance list.
    """
    records: list[ImageRecord] = []
    for name, stream in files:
        text = _as_text(name, stream)
        if descriptor.annotation_dialect == "voc-xml":
            records.extend(_parse_voc_xml(descriptor, name, text))
        elif descriptor.annotation_dialect == "coco-json":
            records.extend(_parse_coco_json(descriptor, name, text))
        elif descriptor.annotation_dialect == "dota-txt":
            stem = name.rsplit("/", 1)[-1].rsplit(".", 1)[0]
            if image_sizes is None or stem not in image_sizes:
                raise ParseError("dota-txt requires image_sizes[stem]", filename=name)
            records.extend(_parse_dota_txt(descriptor, name, text, image_sizes[stem]))
        elif descriptor.annotation_dialect == "plain-tsv":
            records.extend(_parse_plain_tsv(descriptor, name, text))
        else:  # unreachable; __post_init__ validates
            raise ParseError(f"unknown dialect {descriptor.annotation_dialect!r}", filename=name)
    records.sort(key=lambda r: (r.source, r.id))
    return records


def load_stream_from_bytes(name: str, data: bytes) -> tuple[str, BinaryIO]:
    return name, io.BytesIO(data)
