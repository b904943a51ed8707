"""Stage orchestration over a shared run directory.

Each stage reads the artifacts of earlier stages from the run directory
and adds its own, so the directory is the pipeline state:

    images/                 tiles cut from the source imagery (ingest)
    records.jsonl           unified image records (ingest)
    crops/                  instance and foreground crops (preprocess)
    attributes.jsonl        per-instance priors + crop references (preprocess)
    captions.jsonl          per-instance sentence captions (annotate)
    failures.jsonl          instances the backend could not annotate (annotate)
    captions_catalog.jsonl  every caption with expressed attributes (postprocess)
    pairs.jsonl             caption-instance associations (postprocess)
    dataset/                emitted dataset + manifest + review candidates (build)

All recorded paths are relative to the run directory, so two runs over the
same inputs are byte-identical regardless of where they live or how many
workers annotated them.
"""

from __future__ import annotations

import hashlib
import io
import json
import shutil
from pathlib import Path

from PIL import Image

from .annotator.engine import (
    AnnotationFailure,
    InstanceTask,
    RetryPolicy,
    SentenceCaptions,
    annotate_corpus,
)
from .builder import (
    DEFAULT_QUOTA,
    GroundingSample,
    compute_statistics,
    detection_sample,
    emit_dataset,
    grounding_sample,
    sample_captions,
)
from .ingest.dialects import ParseError, SourceDatasetDescriptor, parse_source_annotations
from .ingest.tiling import DEFAULT_MIN_VISIBLE, DEFAULT_OVERLAP, DEFAULT_TILE, tile_records
from .postprocess import (
    Caption,
    CaptionInstancePair,
    DEFAULT_MATCH_THRESHOLD,
    ExactSimilarity,
    MatchableInstance,
    all_captions_for_instance,
    match_caption_instances,
)
from .preprocess import (
    classify_absolute_position,
    classify_size,
    crop_foreground_region,
    crop_instance_region,
    extract_foreground_regions,
    render_highlight,
)
from .records import ImageRecord, read_jsonl, read_records, write_jsonl, write_records
from .splits import SplitSpec, build_splits

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp")


def _find_image(image_root: Path, stem_or_name: str) -> Path:
    candidate = image_root / stem_or_name
    if candidate.exists():
        return candidate
    stem = Path(stem_or_name).stem
    for ext in IMAGE_EXTENSIONS:
        candidate = image_root / f"{stem}{ext}"
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"no image for {stem_or_name!r} under {image_root}")


def discover_annotation_files(descriptor: SourceDatasetDescriptor,
                              annotation_root: Path) -> list[Path]:
    patterns = {
        "voc-xml": "*.xml",
        "coco-json": "*.json",
        "dota-txt": "*.txt",
        "plain-tsv": "*.tsv",
    }
    if annotation_root.is_file():
        return [annotation_root]
    files = sorted(annotation_root.glob(patterns[descriptor.annotation_dialect]))
    if not files:
        raise ParseError(f"no {descriptor.annotation_dialect} files under {annotation_root}")
    return files


def ingest_sources(
    descriptors: list[tuple[SourceDatasetDescriptor, Path]],
    run_dir: str | Path,
    tile: int = DEFAULT_TILE,
    overlap: int = DEFAULT_OVERLAP,
    min_visible: float = DEFAULT_MIN_VISIBLE,
) -> list[ImageRecord]:
    """Parse and tile every source, saving tile images and records.jsonl."""
    run_dir = Path(run_dir)
    all_tiles: list[ImageRecord] = []
    for descriptor, annotation_root in descriptors:
        image_root = Path(descriptor.image_root)
        files = discover_annotation_files(descriptor, annotation_root)
        streams = [(str(f.name), f.read_bytes()) for f in files]
        image_sizes = None
        if descriptor.annotation_dialect == "dota-txt":
            image_sizes = {}
            for f in files:
                with Image.open(_find_image(image_root, f.stem)) as im:
                    image_sizes[f.stem] = im.size
        records = parse_source_annotations(descriptor, streams, image_sizes=image_sizes)
        tiles = tile_records(records, tile=tile, overlap=overlap, min_visible=min_visible)
        for t in tiles:
            parent_name = t.image_path or f"{t.id.split('/', 1)[1].rsplit('__', 1)[0]}.png"
            src_path = _find_image(image_root, parent_name)
            rel = Path("images") / t.source / f"{t.id.rsplit('/', 1)[-1]}.png"
            out_path = run_dir / rel
            out_path.parent.mkdir(parents=True, exist_ok=True)
            ox, oy = t.tile_origin
            with Image.open(src_path) as im:
                im.convert("RGB").crop((ox, oy, ox + t.width, oy + t.height)).save(out_path)
            t.image_path = rel.as_posix()
        all_tiles.extend(tiles)
    all_tiles.sort(key=lambda r: (r.source, r.id, r.tile_origin))
    write_records(all_tiles, run_dir / "records.jsonl")
    return all_tiles


def preprocess_run(run_dir: str | Path) -> list[dict]:
    """Compute priors and the two-stage crops for every instance."""
    run_dir = Path(run_dir)
    records = read_records(run_dir / "records.jsonl")
    rows: list[dict] = []
    for record in records:
        if not record.instances:
            continue
        with Image.open(run_dir / record.image_path) as im:
            image = im.convert("RGB")
        boxes = {i.id: i.box for i in record.instances}
        regions = extract_foreground_regions(boxes, record.width, record.height)
        region_of = {}
        region_origin = {}
        for k, region in enumerate(regions):
            region_id = f"{record.id}/r{k}"
            for member in region.member_instances:
                region_of[member] = region_id
            fg_crop, origin = crop_foreground_region(image, region)
            region_origin[region_id] = origin
            fg_rel = Path("crops") / f"{region_id}.fg.png"
            (run_dir / fg_rel).parent.mkdir(parents=True, exist_ok=True)
            fg_crop.save(run_dir / fg_rel)
        for inst in record.instances:
            self_crop, self_box = crop_instance_region(image, inst.box)
            self_rel = Path("crops") / f"{inst.id}.self.png"
            (run_dir / self_rel).parent.mkdir(parents=True, exist_ok=True)
            self_crop.save(run_dir / self_rel)
            region_id = region_of[inst.id]
            rx, ry = region_origin[region_id]
            fg_box = (inst.box[0] - rx, inst.box[1] - ry, inst.box[2] - rx, inst.box[3] - ry)
            rows.append({
                "instance_id": inst.id,
                "image_id": record.id,
                "category": inst.category,
                "size": classify_size(inst.area_ratio),
                "absolute_position": classify_absolute_position(
                    inst.box, record.width, record.height).label,
                "self_crop": self_rel.as_posix(),
                "self_box": list(self_box),
                "region_id": region_id,
                "fg_crop": (Path("crops") / f"{region_id}.fg.png").as_posix(),
                "fg_box": list(fg_box),
            })
    rows.sort(key=lambda r: r["instance_id"])
    write_jsonl(rows, run_dir / "attributes.jsonl")
    return rows


def _png_bytes(image: Image.Image) -> bytes:
    buf = io.BytesIO()
    image.save(buf, format="PNG")
    return buf.getvalue()


def load_instance_tasks(run_dir: str | Path) -> list[InstanceTask]:
    run_dir = Path(run_dir)
    tasks = []
    for row in read_jsonl(run_dir / "attributes.jsonl"):
        with Image.open(run_dir / row["self_crop"]) as im:
            self_img = render_highlight(im.convert("RGB"), tuple(row["self_box"]))
        with Image.open(run_dir / row["fg_crop"]) as im:
            fg_img = render_highlight(im.convert("RGB"), tuple(row["fg_box"]))
        tasks.append(InstanceTask(
            instance_id=row["instance_id"],
            image_id=row["image_id"],
            category=row["category"],
            size=row["size"],
            grid_label=row["absolute_position"],
            instance_image=_png_bytes(self_img),
            foreground_image=_png_bytes(fg_img),
        ))
    return tasks


def annotate_run(run_dir: str | Path, client, concurrency: int = 8,
                 retry: RetryPolicy = RetryPolicy()) -> tuple[list[SentenceCaptions], list[AnnotationFailure]]:
    run_dir = Path(run_dir)
    tasks = load_instance_tasks(run_dir)
    captions, failures = annotate_corpus(tasks, client, concurrency=concurrency, retry=retry)
    write_jsonl((c.to_dict() for c in captions), run_dir / "captions.jsonl")
    write_jsonl((f.to_dict() for f in failures), run_dir / "failures.jsonl")
    return captions, failures


def postprocess_run(run_dir: str | Path, backend=None,
                    threshold: float = DEFAULT_MATCH_THRESHOLD) -> tuple[list[Caption], list[CaptionInstancePair]]:
    run_dir = Path(run_dir)
    backend = backend or ExactSimilarity()
    sentence_captions = [SentenceCaptions.from_dict(d)
                         for d in read_jsonl(run_dir / "captions.jsonl")]
    captions: list[Caption] = []
    instances: list[MatchableInstance] = []
    for sc in sentence_captions:
        captions.extend(all_captions_for_instance(sc))
        instances.append(MatchableInstance(sc.instance_id, sc.image_id, sc.attributes))
    pairs = match_caption_instances(captions, instances, backend, threshold)
    write_jsonl((c.to_dict() for c in sorted(captions, key=lambda c: c.id)),
                run_dir / "captions_catalog.jsonl")
    write_jsonl((p.to_dict() for p in pairs), run_dir / "pairs.jsonl")
    return captions, pairs


def _image_seed(seed: int, image_id: str) -> int:
    digest = hashlib.sha256(f"{seed}:{image_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def build_run(
    run_dir: str | Path,
    split_spec: SplitSpec | None = None,
    seed: int = 0,
    quota: int = DEFAULT_QUOTA,
    val_fraction_zsd: float = 1.0,
) -> dict:
    """Assemble and emit the dataset from the run directory's artifacts."""
    run_dir = Path(run_dir)
    records = read_records(run_dir / "records.jsonl")
    catalog = {d["id"]: Caption.from_dict(d)
               for d in read_jsonl(run_dir / "captions_catalog.jsonl")}
    pairs_by_caption: dict[str, CaptionInstancePair] = {}
    pairs_by_image: dict[str, list[str]] = {}
    for d in read_jsonl(run_dir / "pairs.jsonl"):
        pair = CaptionInstancePair(d["caption_id"], list(d["instance_ids"]), d["image_id"])
        pairs_by_caption[pair.caption_id] = pair
        pairs_by_image.setdefault(pair.image_id, []).append(pair.caption_id)

    tagged = build_splits(records, split_spec, val_fraction_zsd=val_fraction_zsd, seed=seed)
    samples: list[GroundingSample] = []
    for entry in tagged:
        record = entry.record
        det = detection_sample(record, entry.tags)
        if det is not None:
            samples.append(det)
        caption_ids = pairs_by_image.get(record.id, [])
        image_captions = [catalog[cid] for cid in caption_ids]
        retained = sample_captions(image_captions, quota, _image_seed(seed, record.id))
        for caption in retained:
            samples.append(grounding_sample(record, caption, pairs_by_caption[caption.id],
                                            entry.tags))
    out_dir = run_dir / "dataset"
    manifest = emit_dataset(samples, out_dir)

    candidates = [
        {
            "pair_id": s.id,
            "image_path": s.image_path,
            "caption": s.text,
            "boxes": [list(b) for b in s.boxes],
            "category": s.category,
            "source": s.source,
            "width": s.width,
            "height": s.height,
        }
        for s in sorted(samples, key=lambda s: s.id)
        if s.task == "grounding" and "ValFT" in s.splits
    ]
    write_jsonl(candidates, out_dir / "review_candidates.jsonl")
    return manifest


def stats_run(run_dir: str | Path) -> dict:
    run_dir = Path(run_dir)
    samples = [GroundingSample.from_dict(d)
               for d in read_jsonl(run_dir / "dataset" / "dataset.jsonl")]
    attribute_sets = None
    captions_path = run_dir / "captions.jsonl"
    if captions_path.exists():
        attribute_sets = [d["attributes"] for d in read_jsonl(captions_path)]
    return compute_statistics(samples, attribute_sets)


def run_digest(run_dir: str | Path, names: tuple[str, ...] = (
    "records.jsonl", "attributes.jsonl", "captions.jsonl", "failures.jsonl",
    "captions_catalog.jsonl", "pairs.jsonl",
    "dataset/dataset.jsonl", "dataset/manifest.json",
    "dataset/review_candidates.jsonl",
)) -> dict[str, str]:
    """Content hashes of the run artifacts, for determinism checks."""
    run_dir = Path(run_dir)
    out = {}
    for name in names:
        path = run_dir / name
        if path.exists():
            out[name] = hashlib.sha256(path.read_bytes()).hexdigest()
    crops = sorted((run_dir / "crops").rglob("*.png")) if (run_dir / "crops").exists() else []
    if crops:
        h = hashlib.sha256()
        for crop in crops:
            h.update(crop.relative_to(run_dir).as_posix().encode())
            h.update(crop.read_bytes())
        out["crops"] = h.hexdigest()
    return out


def copy_run_inputs(src: str | Path, dst: str | Path) -> None:
    """Clone a run directory (used by tests to fan out concurrency runs)."""
    shutil.copytree(src, dst)
