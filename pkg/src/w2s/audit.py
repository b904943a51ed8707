"""Judge-model verification of the generated color/geometry/relative-position
attributes on a sampled subset of the corpus."""

from __future__ import annotations

import hashlib
import random
import time
from dataclasses import dataclass

from .annotator.client import ChatBackendError
from .annotator.engine import RetryPolicy, SentenceCaptions
from .annotator.prompts import Message

AUDITED_ATTRIBUTES = ("color", "geometry", "relative_position")

JUDGE_PROMPT = (
    "Does the attribute '{value}' correctly describe the highlighted object? "
    "Answer exactly yes or no."
)


@dataclass
class AuditVerdict:
    instance_id: str
    attribute: str
    verdict: str  # yes | no | abstain
    judge_id: str
    raw_response: str

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "attribute": self.attribute,
            "verdict": self.verdict,
            "judge_id": self.judge_id,
            "raw_response": self.raw_response,
        }


def sample_audit_set(captions: list[SentenceCaptions], n_images: int,
                     seed: int) -> list[SentenceCaptions]:
    """Seeded uniform sample of images; every instance of a sampled image
    is included."""
    by_image: dict[str, list[SentenceCaptions]] = {}
    for sc in sorted(captions, key=lambda c: c.instance_id):
        by_image.setdefault(sc.image_id, []).append(sc)
    if not by_image:
        raise ValueError("empty corpus")
    image_ids = sorted(by_image)
    if n_images > len(image_ids):
        raise ValueError(f"n_images {n_images} exceeds corpus of {len(image_ids)} images")
    rng = random.Random(seed)
    chosen = rng.sample(image_ids, n_images)
    out: list[SentenceCaptions] = []
    for image_id in sorted(chosen):
        out.extend(by_image[image_id])
    return out


def parse_yes_no(text: str) -> str | None:
    token = text.strip().strip(".!,\"'").lower()
    if token in ("yes", "no"):
        return token
    return None


def judge_attribute(judge_client, judge_id: str, crop_png: bytes,
                    instance_id: str, attribute: str, claimed_value: str,
                    retry: RetryPolicy = RetryPolicy(), sleep=time.sleep) -> AuditVerdict:
    """Single-round yes/no check of one claimed attribute value.

    Unparseable or unreachable responses after retries record an abstain,
    which the report excludes from its denominators.
    """
    message = Message("user", JUDGE_PROMPT.format(value=claimed_value), image_png=crop_png)
    raw = ""
    for attempt in range(retry.attempts):
        try:
            raw = judge_client.chat([message])
        except ChatBackendError:
            if attempt < retry.attempts - 1:
                sleep(retry.delay(attempt))
            continue
        parsed = parse_yes_no(raw)
        if parsed is not None:
            return AuditVerdict(instance_id, attribute, parsed, judge_id, raw)
        if attempt < retry.attempts - 1:
            sleep(retry.delay(attempt))
    return AuditVerdict(instance_id, attribute, "abstain", judge_id, raw)


class MockJudgeClient:
    """Deterministic judge double: answers no for roughly one prompt in
    ten, keyed by a hash of the prompt and image."""

    def __init__(self, no_every: int = 10):
        self.no_every = max(1, no_every)

    def chat(self, messages: list[Message]) -> str:
        last = messages[-1]
        h = hashlib.sha256(last.text.encode("utf-8") + (last.image_png or b""))
        return "no" if int.from_bytes(h.digest()[:4], "big") % self.no_every == 0 else "yes"


def audit_report(verdicts: list[AuditVerdict]) -> dict:
    """Per-judge, per-attribute accuracy: yes / (yes + no), abstains excluded.

    The report depends only on the verdict multiset, not its order.
    """
    if not verdicts:
        raise ValueError("no verdicts to report")
    table: dict[str, dict[str, dict[str, float | int]]] = {}
    counts: dict[tuple[str, str], dict[str, int]] = {}
    for v in verdicts:
        cell = counts.setdefault((v.judge_id, v.attribute), {"yes": 0, "no": 0, "abstain": 0})
        cell[v.verdict] += 1
    for (judge_id, attribute), cell in sorted(counts.items()):
        denom = cell["yes"] + cell["no"]
        if denom == 0:
            raise ValueError(
                f"judge {judge_id!r}, attribute {attribute!r}: all verdicts abstained"
            )
        table.setdefault(judge_id, {})[attribute] = {
            "yes": cell["yes"],
            "no": cell["no"],
            "abstain": cell["abstain"],
            "accuracy": cell["yes"] / denom,
        }
    return table
