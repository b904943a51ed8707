"""Phrase caption generation and caption-instance association.

Every annotated instance yields a vocabulary caption, up to three phrase
captions, and its three sentence captions. A caption is then matched to
every instance in the same image whose attributes agree with the ones the
caption expresses: category must match exactly, every other expressed
attribute must reach the similarity threshold.
"""

from __future__ import annotations

import logging
import os
import threading
from dataclasses import dataclass, field

import numpy as np
import requests

from .annotator.engine import AttributeSet, SentenceCaptions

log = logging.getLogger(__name__)

ENV_EMB_URL = "W2S_EMB_URL"

DEFAULT_MATCH_THRESHOLD = 0.90
EMBED_BATCH = 64

CAPTION_KINDS = (
    "vocab",
    "phrase_size",
    "phrase_color",
    "phrase_size_color",
    "sent_self",
    "sent_relative",
    "sent_absolute",
)


@dataclass
class Caption:
    id: str
    text: str
    kind: str
    source_instance: str
    image_id: str
    attributes: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "kind": self.kind,
            "source_instance": self.source_instance,
            "image_id": self.image_id,
            "attributes": dict(self.attributes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Caption":
        return cls(id=d["id"], text=d["text"], kind=d["kind"],
                   source_instance=d["source_instance"], image_id=d["image_id"],
                   attributes=dict(d["attributes"]))


@dataclass
class CaptionInstancePair:
    caption_id: str
    instance_ids: list[str]
    image_id: str

    def to_dict(self) -> dict:
        return {
            "caption_id": self.caption_id,
            "instance_ids": list(self.instance_ids),
            "image_id": self.image_id,
        }


def category_text(slug: str) -> str:
    """Presentation form of a category slug: hyphens become spaces."""
    return slug.replace("-", " ")


def generate_phrase_captions(attrs: AttributeSet, source_instance: str,
                             image_id: str) -> list[Caption]:
    """The vocabulary caption plus the phrase captions composable from the
    known attributes. Kinds needing an unknown color are omitted."""
    if not attrs.category or not attrs.size:
        raise ValueError("category and size are required for phrase captions")
    noun = category_text(attrs.category)
    captions = [
        Caption(
            id=f"{source_instance}#vocab",
            text=noun,
            kind="vocab",
            source_instance=source_instance,
            image_id=image_id,
            attributes={"category": attrs.category},
        ),
        Caption(
            id=f"{source_instance}#phrase_size",
            text=f"{attrs.size} {noun}",
            kind="phrase_size",
            source_instance=source_instance,
            image_id=image_id,
            attributes={"category": attrs.category, "size": attrs.size},
        ),
    ]
    if attrs.color:
        captions.append(
            Caption(
                id=f"{source_instance}#phrase_color",
                text=f"{attrs.color} {noun}",
                kind="phrase_color",
                source_instance=source_instance,
                image_id=image_id,
                attributes={"category": attrs.category, "color": attrs.color},
            )
        )
        captions.append(
            Caption(
                id=f"{source_instance}#phrase_size_color",
                text=f"{attrs.size} {attrs.color} {noun}",
                kind="phrase_size_color",
                source_instance=source_instance,
                image_id=image_id,
                attributes={
                    "category": attrs.category,
                    "size": attrs.size,
                    "color": attrs.color,
                },
            )
        )
    return captions


def sentence_captions_as_captions(sc: SentenceCaptions) -> list[Caption]:
    """Wrap the three sentence captions with the attribute subsets they
    express (unknown attributes are simply not expressed)."""
    a = sc.attributes
    base = {"category": a.category, "size": a.size}
    if a.color:
        base["color"] = a.color
    if a.geometry:
        base["geometry"] = a.geometry
    rel = dict(base)
    if a.relative_position:
        rel["relative_position"] = a.relative_position
    absol = dict(rel)
    absol["absolute_position"] = a.absolute_position
    return [
        Caption(f"{sc.instance_id}#sent_self", sc.self_caption, "sent_self",
                sc.instance_id, sc.image_id, base),
        Caption(f"{sc.instance_id}#sent_relative", sc.relative_caption, "sent_relative",
                sc.instance_id, sc.image_id, rel),
        Caption(f"{sc.instance_id}#sent_absolute", sc.absolute_caption, "sent_absolute",
                sc.instance_id, sc.image_id, absol),
    ]


def all_captions_for_instance(sc: SentenceCaptions) -> list[Caption]:
    return generate_phrase_captions(sc.attributes, sc.instance_id, sc.image_id) + \
        sentence_captions_as_captions(sc)


def _normalize(text: str) -> str:
    return " ".join(text.split()).lower()


class ExactSimilarity:
    """Default backend: 1.0 iff case/whitespace-normalized equality."""

    mode = "exact-normalized"

    def similarity(self, a: str, b: str) -> float:
        if not a or not b:
            raise ValueError("similarity inputs must be non-empty")
        return 1.0 if _normalize(a) == _normalize(b) else 0.0


class EmbeddingSimilarity:
    """Embedding-service backend: cosine of served vectors mapped to [0,1].

    Wire protocol: POST {"texts": [...]} -> {"vectors": [[...]]}. Texts are
    batched and memoized by normalized form; vectors are L2-normalized
    before the cosine.
    """

    mode = "embedding"

    def __init__(self, endpoint: str = "", post_fn=None, timeout: float = 60.0):
        self.endpoint = endpoint or os.environ.get(ENV_EMB_URL, "")
        if not self.endpoint:
            raise ValueError(f"embedding endpoint not configured (set {ENV_EMB_URL})")
        self._post = post_fn or requests.post
        self.timeout = timeout
        self._memo: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def _fetch(self, texts: list[str]) -> None:
        for start in range(0, len(texts), EMBED_BATCH):
            batch = texts[start:start + EMBED_BATCH]
            try:
                resp = self._post(self.endpoint, json={"texts": batch}, timeout=self.timeout)
            except requests.exceptions.RequestException as exc:
                raise RuntimeError(f"embedding backend unreachable: {exc}") from exc
            status = getattr(resp, "status_code", 200)
            if status >= 400:
                raise RuntimeError(f"embedding backend returned HTTP {status}")
            vectors = resp.json()["vectors"]
            if len(vectors) != len(batch):
                raise RuntimeError("embedding backend returned wrong vector count")
            for text, vec in zip(batch, vectors):
                arr = np.asarray(vec, dtype=float)
                norm = np.linalg.norm(arr)
                if norm == 0:
                    raise RuntimeError(f"embedding backend returned zero vector for {text!r}")
                self._memo[text] = arr / norm

    def vectors(self, texts: list[str]) -> list[np.ndarray]:
        normalized = [_normalize(t) for t in texts]
        with self._lock:
            missing = sorted({t for t in normalized if t not in self._memo})
            if missing:
                self._fetch(missing)
            return [self._memo[t] for t in normalized]

    def similarity(self, a: str, b: str) -> float:
        if not a or not b:
            raise ValueError("similarity inputs must be non-empty")
        va, vb = self.vectors([a, b])
        return (1.0 + float(np.dot(va, vb))) / 2.0


def attribute_similarity(a: str, b: str, backend) -> float:
    return backend.similarity(a, b)


@dataclass
class MatchableInstance:
    """An instance with its complete attribute set, as matching input."""

    id: str
    image_id: str
    attributes: AttributeSet


def instance_matches_caption(caption: Caption, inst: MatchableInstance, backend,
                             threshold: float = DEFAULT_MATCH_THRESHOLD) -> bool:
    expressed = caption.attributes
    if expressed.get("category") != inst.attributes.category:
        return False
    inst_attrs = inst.attributes.to_dict()
    for name, value in expressed.items():
        if name == "category":
            continue
        candidate = inst_attrs.get(name)
        if not candidate:
            return False
        if attribute_similarity(value, candidate, backend) < threshold:
            return False
    return True


def match_caption_instances(
    captions: list[Caption],
    instances: list[MatchableInstance],
    backend=None,
    threshold: float = DEFAULT_MATCH_THRESHOLD,
) -> list[CaptionInstancePair]:
    """Associate each caption with every same-image instance it describes.

    Captions that match nothing (possible only if attributes drifted from
    their source instance) are dropped with a warning. Pairs with identical
    (text, instance set) within an image collapse to the first caption id.
    """
    backend = backend or ExactSimilarity()
    by_image: dict[str, list[MatchableInstance]] = {}
    for inst in sorted(instances, key=lambda i: i.id):
        by_image.setdefault(inst.image_id, []).append(inst)

    pairs: list[CaptionInstancePair] = []
    seen: set[tuple[str, str, frozenset]] = set()
    for caption in sorted(captions, key=lambda c: c.id):
        matched = [
            inst.id
            for inst in by_image.get(caption.image_id, [])
            if instance_matches_caption(caption, inst, backend, threshold)
        ]
        matched = sorted(set(matched))
        if not matched:
            log.warning(
                "caption %s (%r) matched no instances; source %s has inconsistent attributes",
                caption.id, caption.text, caption.source_instance,
            )
            continue
        key = (caption.image_id, _normalize(caption.text), frozenset(matched))
        if key in seen:
            continue
        seen.add(key)
        pairs.append(CaptionInstancePair(caption.id, matched, caption.image_id))
    return pairs
