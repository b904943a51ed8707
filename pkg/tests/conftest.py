"""Shared fixtures: a synthetic two-source corpus and a full pipeline run.

The corpus is generated deterministically (fixed seed, fixed palette) so
every test session sees identical bytes. Source "alpha" is plain-tsv with
train partition; source "bravo" is dota-txt with val partition and novel
categories, which exercises quad parsing and the ValZSD split.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

import pytest
from PIL import Image, ImageDraw

from w2s.annotator.client import MockVLMClient
from w2s.annotator.engine import RetryPolicy
from w2s.pipeline import (
    annotate_run,
    build_run,
    ingest_sources,
    postprocess_run,
    preprocess_run,
)
from w2s.ingest.dialects import SourceDatasetDescriptor

TILE = 256
OVERLAP = 64
MIN_VISIBLE = 0.5

ALPHA_CATEGORIES = ["car", "truck", "airplane", "ship"]
BRAVO_CATEGORIES = ["harbor", "bridge", "bus", "helicopter", "swimming-pool"]

PALETTE = [(200, 40, 40), (40, 200, 40), (40, 40, 200), (220, 220, 60),
           (150, 60, 200), (60, 200, 200)]


def draw_scene(path: Path, width: int, height: int, boxes: list[tuple]) -> None:
    img = Image.new("RGB", (width, height), (120, 120, 120))
    draw = ImageDraw.Draw(img)
    for k, (x1, y1, x2, y2) in enumerate(boxes):
        draw.rectangle((x1, y1, x2 - 1, y2 - 1), fill=PALETTE[k % len(PALETTE)])
    path.parent.mkdir(parents=True, exist_ok=True)
    img.save(path)


def random_boxes(rng: random.Random, width: int, height: int, n: int) -> list[tuple]:
    boxes = []
    for _ in range(n):
        side_x = rng.choice([5, 8, 14, 24, 40])
        side_y = rng.choice([5, 8, 14, 24, 40])
        x1 = rng.randint(0, width - side_x - 1)
        y1 = rng.randint(0, height - side_y - 1)
        boxes.append((x1, y1, x1 + side_x, y1 + side_y))
    return boxes


def build_corpus(root: Path) -> list[tuple[SourceDatasetDescriptor, Path]]:
    rng = random.Random(20240817)
    alpha = root / "alpha"
    bravo = root / "bravo"
    (alpha / "ann").mkdir(parents=True)
    (alpha / "img").mkdir(parents=True)
    (bravo / "ann").mkdir(parents=True)
    (bravo / "img").mkdir(parents=True)

    # alpha: 10 single-tile images + 2 large ones that tile 3x3
    tsv_lines = []
    for i in range(12):
        width = height = 600 if i >= 10 else 256
        n = rng.randint(2, 4)
        boxes = random_boxes(rng, width, height, n)
        stem = f"alpha_{i:03d}"
        draw_scene(alpha / "img" / f"{stem}.png", width, height, boxes)
        for box in boxes:
            cat = rng.choice(ALPHA_CATEGORIES)
            tsv_lines.append("\t".join(
                [stem, str(width), str(height)] + [str(v) for v in box] + [cat]))
    (alpha / "ann" / "alpha.tsv").write_text("\n".join(tsv_lines) + "\n", encoding="utf-8")

    # bravo: 8 val images annotated as rotated quads
    for i in range(8):
        width = height = 256
        n = rng.randint(2, 3)
        boxes = random_boxes(rng, width, height, n)
        stem = f"bravo_{i:03d}"
        draw_scene(bravo / "img" / f"{stem}.png", width, height, boxes)
        lines = ["imagesource:synthetic", "gsd:0.5"]
        for box in boxes:
            x1, y1, x2, y2 = box
            cat = rng.choice(BRAVO_CATEGORIES)
            lines.append(f"{x1} {y1} {x2} {y1} {x2} {y2} {x1} {y2} {cat} 0")
        (bravo / "ann" / f"{stem}.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")

    alpha_desc = SourceDatasetDescriptor(
        name="alpha",
        annotation_dialect="plain-tsv",
        category_map={c: c for c in ALPHA_CATEGORIES},
        image_root=str(alpha / "img"),
        partition="train",
    )
    bravo_desc = SourceDatasetDescriptor(
        name="bravo",
        annotation_dialect="dota-txt",
        category_map={c: c for c in BRAVO_CATEGORIES},
        image_root=str(bravo / "img"),
        partition="val",
    )
    return [(alpha_desc, alpha / "ann"), (bravo_desc, bravo / "ann")]


def run_pipeline(sources, run_dir: Path, concurrency: int = 4, seed: int = 7,
                 quota: int = 12) -> Path:
    ingest_sources(sources, run_dir, tile=TILE, overlap=OVERLAP, min_visible=MIN_VISIBLE)
    preprocess_run(run_dir)
    annotate_run(run_dir, MockVLMClient(), concurrency=concurrency,
                 retry=RetryPolicy(base_delay=0.0))
    postprocess_run(run_dir)
    build_run(run_dir, seed=seed, quota=quota)
    return run_dir


@pytest.fixture(scope="session")
def corpus_sources(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    return build_corpus(root)


@pytest.fixture(scope="session")
def pipeline_run_dir(corpus_sources, tmp_path_factory) -> Path:
    run_dir = tmp_path_factory.mktemp("run")
    return run_pipeline(corpus_sources, run_dir)


def write_descriptor_files(sources, out_dir: Path) -> list[Path]:
    """Materialize descriptor JSON files for CLI invocations."""
    paths = []
    for descriptor, ann_root in sources:
        cfg = {
            "name": descriptor.name,
            "annotation_dialect": descriptor.annotation_dialect,
            "category_map": descriptor.category_map,
            "image_root": descriptor.image_root,
            "partition": descriptor.partition,
            "annotation_root": str(ann_root),
        }
        path = out_dir / f"{descriptor.name}.json"
        path.write_text(json.dumps(cfg, indent=2), encoding="utf-8")
        paths.append(path)
    return paths
