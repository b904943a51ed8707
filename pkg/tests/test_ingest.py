"""Dialect parsing, category normalization, and tiling."""

from __future__ import annotations

import io
import json
import random

import pytest

from w2s.geometry import box_area, intersect
from w2s.ingest.dialects import (
    MappingError,
    ParseError,
    SourceDatasetDescriptor,
    normalize_category,
    parse_source_annotations,
)
from w2s.ingest.tiling import axis_origins, tile_image
from w2s.records import ImageRecord, make_instance, read_records, write_records

IDENTITY_MAP = {c: c for c in ["plane", "car", "airplane", "swimming-pool",
                               "ground-track-field", "harbor"]}


def descriptor(dialect: str, **kwargs) -> SourceDatasetDescriptor:
    return SourceDatasetDescriptor(
        name="src", annotation_dialect=dialect,
        category_map=kwargs.pop("category_map", dict(IDENTITY_MAP)), **kwargs)


# --- normalize_category ---

def test_normalize_trims_and_lowercases():
    assert normalize_category("Airplane ", IDENTITY_MAP) == "airplane"


def test_normalize_spaces_to_hyphens():
    assert normalize_category("swimming pool", IDENTITY_MAP) == "swimming-pool"


def test_normalize_map_entry_for_raw_name():
    mapping = {"Ground Track Field": "ground-track-field"}
    desc = descriptor("plain-tsv", category_map=mapping)
    assert normalize_category("Ground Track Field", desc.category_map) == "ground-track-field"


def test_normalize_empty_is_error():
    with pytest.raises(MappingError):
        normalize_category("", IDENTITY_MAP)
    with pytest.raises(MappingError):
        normalize_category("   ", IDENTITY_MAP)


def test_normalize_unmapped_is_error():
    with pytest.raises(MappingError, match="zeppelin"):
        normalize_category("zeppelin", IDENTITY_MAP)


# --- dota-txt ---

def test_dota_quad_reduces_to_axis_aligned_hull():
    text = b"10 10 50 10 50 40 10 40 plane 0\n"
    records = parse_source_annotations(
        descriptor("dota-txt"), [("P0001.txt", io.BytesIO(text))],
        image_sizes={"P0001": (1024, 1024)})
    assert len(records) == 1
    inst = records[0].instances[0]
    assert inst.box == (10.0, 10.0, 50.0, 40.0)
    assert inst.category == "plane"


def test_dota_rotated_quad_hull():
    # a genuinely rotated quad: hull is min/max over the 4 corners
    text = b"30 10 50 30 30 50 10 30 plane 0\n"
    records = parse_source_annotations(
        descriptor("dota-txt"), [("P0002.txt", io.BytesIO(text))],
        image_sizes={"P0002": (100, 100)})
    assert records[0].instances[0].box == (10.0, 10.0, 50.0, 50.0)


def test_dota_skips_meta_headers_and_empty_file():
    text = b"imagesource:GoogleEarth\ngsd:0.1\n"
    records = parse_source_annotations(
        descriptor("dota-txt"), [("P0003.txt", io.BytesIO(text))],
        image_sizes={"P0003": (64, 64)})
    assert records[0].instances == []


def test_dota_malformed_line_reports_file_and_line():
    text = b"imagesource:x\n10 10 50 nope 50 40 10 40 plane 0\n"
    with pytest.raises(ParseError) as err:
        parse_source_annotations(
            descriptor("dota-txt"), [("P0004.txt", io.BytesIO(text))],
            image_sizes={"P0004": (64, 64)})
    assert "P0004.txt" in str(err.value)
    assert ":2" in str(err.value)


# --- plain-tsv ---

def test_tsv_groups_rows_by_image():
    text = ("img_a\t100\t100\t1\t2\t11\t12\tcar\n"
            "img_a\t100\t100\t20\t20\t30\t40\tcar\n"
            "img_b\t50\t50\t5\t5\t25\t25\tplane\n").encode()
    records = parse_source_annotations(descriptor("plain-tsv"), [("ann.tsv", io.BytesIO(text))])
    assert [r.id for r in records] == ["src/img_a", "src/img_b"]
    assert len(records[0].instances) == 2
    assert records[1].instances[0].category == "plane"


def test_tsv_unknown_category_is_mapping_error():
    text = b"img_a\t100\t100\t1\t2\t11\t12\tglider\n"
    with pytest.raises(MappingError):
        parse_source_annotations(descriptor("plain-tsv"), [("ann.tsv", io.BytesIO(text))])


# --- voc-xml ---

VOC_DOC = """<annotation>
  <filename>scene_1.png</filename>
  <size><width>200</width><height>150</height></size>
  <object><name>Harbor</name>
    <bndbox><xmin>10</xmin><ymin>20</ymin><xmax>60</xmax><ymax>80</ymax></bndbox>
  </object>
</annotation>"""


def test_voc_xml_parses_objects():
    records = parse_source_annotations(
        descriptor("voc-xml"), [("scene_1.xml", VOC_DOC.encode())])
    rec = records[0]
    assert (rec.width, rec.height) == (200, 150)
    assert rec.instances[0].box == (10.0, 20.0, 60.0, 80.0)
    assert rec.instances[0].category == "harbor"


def test_voc_xml_invalid_is_parse_error():
    with pytest.raises(ParseError):
        parse_source_annotations(descriptor("voc-xml"), [("bad.xml", b"<annotation>")])


# --- coco-json ---

def coco_doc() -> bytes:
    return json.dumps({
        "images": [{"id": 1, "file_name": "left.png", "width": 80, "height": 60},
                   {"id": 2, "file_name": "right.png", "width": 40, "height": 40}],
        "annotations": [
            {"image_id": 1, "category_id": 7, "bbox": [5, 5, 20, 10]},
            {"image_id": 2, "category_id": 8, "bbox": [0, 0, 40, 40]},
        ],
        "categories": [{"id": 7, "name": "Car"}, {"id": 8, "name": "plane"}],
    }).encode()


def test_coco_json_converts_xywh_to_corners():
    records = parse_source_annotations(descriptor("coco-json"), [("inst.json", coco_doc())])
    by_id = {r.id: r for r in records}
    assert by_id["src/left"].instances[0].box == (5.0, 5.0, 25.0, 15.0)
    assert by_id["src/left"].instances[0].category == "car"
    assert by_id["src/right"].instances[0].area_ratio == 1.0


def test_empty_annotation_file_yields_empty_record():
    records = parse_source_annotations(
        descriptor("voc-xml"),
        [("empty.xml", b"<annotation><filename>e.png</filename>"
                       b"<size><width>10</width><height>10</height></size></annotation>")])
    assert records[0].instances == []


# --- tiling ---

def test_axis_origins_stride_formula():
    # origin_k = k*(tile-overlap); the terminal origin clamps to dim-tile
    assert axis_origins(2048, 1024, 200) == [0, 824, 1024]
    assert axis_origins(1024, 1024, 200) == [0]
    assert axis_origins(500, 1024, 200) == [0]
    assert axis_origins(2048, 1024, 0) == [0, 1024]


def test_identity_tile():
    rec = ImageRecord(id="s/img", source="s", width=1024, height=1024)
    rec.instances.append(make_instance("s/img/0", (10, 10, 40, 40), "car", 1024, 1024))
    tiles = tile_image(rec, tile=1024, overlap=200, min_visible=0.5)
    assert len(tiles) == 1
    assert tiles[0].instances[0].box == (10.0, 10.0, 40.0, 40.0)
    assert tiles[0].tile_origin == (0, 0)


def test_2048_tiles_to_3x3():
    rec = ImageRecord(id="s/big", source="s", width=2048, height=2048)
    tiles = tile_image(rec, tile=1024, overlap=200, min_visible=0.5)
    assert len(tiles) == 9
    origins = {t.tile_origin for t in tiles}
    assert origins == {(x, y) for x in (0, 824, 1024) for y in (0, 824, 1024)}
    # brute-force coverage: every pixel column/row falls inside some tile
    for dim_origins in (sorted({o[0] for o in origins}),):
        covered = set()
        for o in dim_origins:
            covered.update(range(o, o + 1024))
        assert covered == set(range(2048))


def test_low_visibility_box_dropped():
    rec = ImageRecord(id="s/wide", source="s", width=2048, height=1024)
    rec.instances.append(make_instance("s/wide/0", (1000, 0, 1100, 50), "car", 2048, 1024))
    tiles = tile_image(rec, tile=1024, overlap=200, min_visible=0.5)
    tile_00 = next(t for t in tiles if t.tile_origin == (0, 0))
    # clipped width 24 of 100 -> visible fraction 0.24 < 0.5
    assert tile_00.instances == []


def test_kept_box_is_remapped_to_tile_coordinates():
    rec = ImageRecord(id="s/wide", source="s", width=2048, height=1024)
    rec.instances.append(make_instance("s/wide/0", (1000, 0, 1100, 50), "car", 2048, 1024))
    tiles = tile_image(rec, tile=1024, overlap=200, min_visible=0.5)
    tile_824 = next(t for t in tiles if t.tile_origin == (824, 0))
    assert tile_824.instances[0].box == (176.0, 0.0, 276.0, 50.0)


def test_box_conservation_with_epsilon_visibility():
    rng = random.Random(11)
    for _ in range(50):
        w = rng.randint(300, 2600)
        h = rng.randint(300, 2600)
        rec = ImageRecord(id="s/r", source="s", width=w, height=h)
        for k in range(6):
            bw = rng.randint(3, 200)
            bh = rng.randint(3, 200)
            x1 = rng.randint(0, w - bw - 1)
            y1 = rng.randint(0, h - bh - 1)
            rec.instances.append(
                make_instance(f"s/r/{k}", (x1, y1, x1 + bw, y1 + bh), "car", w, h))
        tiles = tile_image(rec, tile=256, overlap=32, min_visible=1e-9)
        seen = {i.id for t in tiles for i in t.instances}
        assert seen == {i.id for i in rec.instances}
        # tiles cover the parent extent exactly
        for t in tiles:
            ox, oy = t.tile_origin
            assert 0 <= ox and ox + t.width <= w
            assert 0 <= oy and oy + t.height <= h


def test_clip_keep_rule_against_area_arithmetic():
    rng = random.Random(23)
    for _ in range(200):
        w = h = 700
        bw, bh = rng.randint(4, 180), rng.randint(4, 180)
        x1 = rng.randint(0, w - bw - 1)
        y1 = rng.randint(0, h - bh - 1)
        box = (x1, y1, x1 + bw, y1 + bh)
        rec = ImageRecord(id="s/r", source="s", width=w, height=h)
        rec.instances.append(make_instance("s/r/0", box, "car", w, h))
        tiles = tile_image(rec, tile=256, overlap=64, min_visible=0.5)
        for t in tiles:
            ox, oy = t.tile_origin
            extent = (ox, oy, ox + t.width, oy + t.height)
            clipped = intersect(box, extent)
            expected_kept = clipped is not None and \
                box_area(clipped) / box_area(box) >= 0.5
            assert (len(t.instances) == 1) == expected_kept


def test_unified_format_round_trip(tmp_path):
    rec = ImageRecord(id="s/x", source="s", width=128, height=64,
                      tile_origin=(10, 20), partition="val", image_path="images/x.png")
    rec.instances.append(make_instance("s/x/0", (3.5, 4.25, 10.0, 12.0), "car", 128, 64))
    path = tmp_path / "records.jsonl"
    write_records([rec], path)
    again = read_records(path)
    assert again == [rec]
