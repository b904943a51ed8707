"""Dataset assembly: caption sampling, training prompts, emission, stats."""

from __future__ import annotations

import hashlib
import json
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .postprocess import Caption, CaptionInstancePair
from .records import ImageRecord, write_jsonl
from .splits import SPLIT_TAGS

DEFAULT_QUOTA = 12

# Expected statistics when the engine is run over the complete published
# source corpus (~163k images / ~2M pairs); desk-scale fixtures won't
# reproduce these, they document the full-scale target.
FULL_SCALE_REFERENCE = {
    "mean_caption_words": 10.61,
    "single_instance_fraction": 0.662,
}


class DatasetSchemaError(ValueError):
    """A sample violates the emission schema."""


@dataclass
class GroundingSample:
    """One emitted training/eval record: a detection sample carries the
    image's category list, a grounding sample carries one caption and the
    boxes of every instance it matched."""

    id: str
    image_path: str
    width: int
    height: int
    task: str  # detection | grounding
    text: str | list[str]
    boxes: list[tuple[float, float, float, float]]
    caption_kind: str = ""
    caption_id: str = ""
    source: str = ""
    category: str = ""
    image_categories: list[str] = field(default_factory=list)
    splits: list[str] = field(default_factory=list)

    def validate(self) -> None:
        if self.task not in ("detection", "grounding"):
            raise DatasetSchemaError(f"sample {self.id}: unknown task {self.task!r}")
        if self.task == "grounding" and not self.boxes:
            raise DatasetSchemaError(f"sample {self.id}: grounding sample with no boxes")
        if self.task == "grounding" and not isinstance(self.text, str):
            raise DatasetSchemaError(f"sample {self.id}: grounding text must be a string")
        if self.task == "detection" and not isinstance(self.text, list):
            raise DatasetSchemaError(f"sample {self.id}: detection text must be a category list")
        for tag in self.splits:
            if tag not in SPLIT_TAGS:
                raise DatasetSchemaError(f"sample {self.id}: unknown split tag {tag!r}")
        for box in self.boxes:
            x1, y1, x2, y2 = box
            if not (x1 < x2 and y1 < y2):
                raise DatasetSchemaError(f"sample {self.id}: degenerate box {box}")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "image_path": self.image_path,
            "width": self.width,
            "height": self.height,
            "task": self.task,
            "text": self.text,
            "boxes": [list(b) for b in self.boxes],
            "caption_kind": self.caption_kind,
            "caption_id": self.caption_id,
            "source": self.source,
            "category": self.category,
            "image_categories": list(self.image_categories),
            "splits": list(self.splits),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundingSample":
        sample = cls(
            id=d["id"],
            image_path=d["image_path"],
            width=int(d["width"]),
            height=int(d["height"]),
            task=d["task"],
            text=d["text"],
            boxes=[tuple(float(v) for v in b) for b in d["boxes"]],
            caption_kind=d.get("caption_kind", ""),
            caption_id=d.get("caption_id", ""),
            source=d.get("source", ""),
            category=d.get("category", ""),
            image_categories=list(d.get("image_categories", [])),
            splits=list(d.get("splits", [])),
        )
        sample.validate()
        return sample


def sample_captions(
    image_captions: list[Caption], quota: int, seed: int
) -> list[Caption]:
    """Retain up to `quota` captions for one image, balanced across caption
    kind and category.

    Captions are bucketed by (kind, category); buckets are visited
    round-robin in sorted key order with one seeded uniform draw per visit
    until the quota is reached or all buckets are empty. The cycle starts
    at a seeded phase so partial cycles don't systematically favor
    alphabetically-early buckets across a corpus.
    """
    if quota < 1:
        raise ValueError(f"quota must be >= 1, got {quota}")
    buckets: dict[tuple[str, str], list[Caption]] = {}
    for caption in sorted(image_captions, key=lambda c: c.id):
        key = (caption.kind, caption.attributes.get("category", ""))
        buckets.setdefault(key, []).append(caption)
    rng = random.Random(seed)
    keys = sorted(buckets)
    if keys:
        phase = rng.randrange(len(keys))
        keys = keys[phase:] + keys[:phase]
    retained: list[Caption] = []
    while len(retained) < quota and keys:
        exhausted = []
        for key in keys:
            if len(retained) >= quota:
                break
            bucket = buckets[key]
            pick = rng.randrange(len(bucket))
            retained.append(bucket.pop(pick))
            if not bucket:
                exhausted.append(key)
        keys = [k for k in keys if k not in exhausted]
    retained.sort(key=lambda c: c.id)
    return retained


@dataclass
class PromptSpec:
    """Positive/negative class bookkeeping for one training prompt."""

    c_pos: list[str]
    c_neg: list[str]
    sampled_negatives: list[str]
    rendered: list[str]


def build_training_prompt(
    sample: GroundingSample, source_classes: dict[str, list[str]], rng: random.Random
) -> PromptSpec:
    """Assemble the randomized class-name prompt for one sample.

    Negatives come only from the sample's own source dataset, excluding
    the categories present in the image; their count is uniform on
    [1, |C_neg|]. Grounding samples render the caption in place of the
    positive class names. The rendered list is shuffled with `rng`.
    """
    pool = source_classes.get(sample.source)
    if pool is None:
        raise ValueError(f"no class list for source {sample.source!r}")
    if sample.image_categories:
        positives = sorted(set(sample.image_categories))
    elif sample.task == "detection":
        positives = sorted(set(sample.text))
    else:
        positives = sorted({sample.category}) if sample.category else []
    c_neg = sorted(set(pool) - set(positives))
    if c_neg:
        k = rng.randint(1, len(c_neg))
        sampled = rng.sample(c_neg, k)
    else:
        sampled = []
    if sample.task == "detection":
        rendered = positives + sampled
    else:
        rendered = [str(sample.text)] + sampled
    rng.shuffle(rendered)
    return PromptSpec(c_pos=positives, c_neg=c_neg, sampled_negatives=sampled,
                      rendered=rendered)


def detection_sample(record: ImageRecord, tags: list[str]) -> GroundingSample | None:
    if not record.instances:
        return None
    categories = sorted({i.category for i in record.instances})
    return GroundingSample(
        id=f"{record.id}#det",
        image_path=record.image_path,
        width=record.width,
        height=record.height,
        task="detection",
        text=categories,
        boxes=[i.box for i in record.instances],
        source=record.source,
        image_categories=categories,
        splits=list(tags),
    )


def grounding_sample(
    record: ImageRecord,
    caption: Caption,
    pair: CaptionInstancePair,
    tags: list[str],
) -> GroundingSample:
    boxes_by_id = {i.id: i.box for i in record.instances}
    boxes = [boxes_by_id[iid] for iid in pair.instance_ids if iid in boxes_by_id]
    return GroundingSample(
        id=f"{record.id}#{caption.id.rsplit('/', 1)[-1]}",
        image_path=record.image_path,
        width=record.width,
        height=record.height,
        task="grounding",
        text=caption.text,
        boxes=boxes,
        caption_kind=caption.kind,
        caption_id=caption.id,
        source=record.source,
        category=caption.attributes.get("category", ""),
        image_categories=sorted({i.category for i in record.instances}),
        splits=list(tags),
    )


def emit_dataset(samples: list[GroundingSample], out_dir: str | Path) -> dict:
    """Write samples as sorted JSON Lines plus a manifest with per-split
    counts and a content hash. Any schema violation aborts emission."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for sample in samples:
        sample.validate()
    ordered = sorted(samples, key=lambda s: (s.source, s.id, s.caption_id))
    data_path = out_dir / "dataset.jsonl"
    write_jsonl((s.to_dict() for s in ordered), data_path)
    digest = hashlib.sha256(data_path.read_bytes()).hexdigest()
    split_counts = Counter(tag for s in ordered for tag in s.splits)
    manifest = {
        "samples": len(ordered),
        "per_split": {tag: split_counts.get(tag, 0) for tag in sorted(split_counts)},
        "per_task": dict(Counter(s.task for s in ordered)),
        "sha256": digest,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest


def compute_statistics(samples: list[GroundingSample],
                       attribute_sets: list[dict] | None = None) -> dict:
    """Corpus statistics over grounding samples: caption length, kind and
    instances-per-caption histograms, and (when the annotated attribute
    records are supplied) distinct-value counts per attribute."""
    grounding = [s for s in samples if s.task == "grounding"]
    lengths = [len(s.text.split()) for s in grounding]
    kind_hist = Counter(s.caption_kind for s in grounding)
    per_caption = Counter(len(s.boxes) for s in grounding)
    single = per_caption.get(1, 0)
    report = {
        "captions": len(grounding),
        "mean_caption_words": (sum(lengths) / len(lengths)) if lengths else 0.0,
        "caption_kind_histogram": dict(sorted(kind_hist.items())),
        "instances_per_caption_histogram": {
            str(k): v for k, v in sorted(per_caption.items())
        },
        "single_instance_fraction": (single / len(grounding)) if grounding else 0.0,
    }
    if attribute_sets is not None:
        distinct: dict[str, set] = {}
        for attrs in attribute_sets:
            for name, value in attrs.items():
                if value:
                    distinct.setdefault(name, set()).add(value)
        report["distinct_attribute_values"] = {
            name: len(values) for name, values in sorted(distinct.items())
        }
    return report
