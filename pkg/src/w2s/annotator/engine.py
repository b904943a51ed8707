"""Four-round annotation flow per instance, with retries and a bounded pool.

Per instance the conversation is strictly sequential (intro, r1, r2, r3);
across instances a thread pool runs a bounded number of conversations and
results are reduced in instance-id order so output never depends on
completion order. A failing instance is recorded and skipped; a batch
never aborts.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .client import ChatBackendError
from .parsing import ROUND_SCHEMAS, ResponseParseError, parse_vlm_response, word_count
from .prompts import ConversationState, Message, build_prompt

DEFAULT_CONCURRENCY = 8


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 3
    base_delay: float = 0.5
    backoff: float = 2.0

    def delay(self, attempt: int) -> float:
        return self.base_delay * (self.backoff ** attempt)


@dataclass
class AttributeSet:
    """The six instance attributes. category, size, and absolute_position
    are rule-computed priors and are never overwritten by backend output;
    color, geometry, and relative_position come from the conversation."""

    category: str
    size: str
    absolute_position: str
    color: str | None = None
    geometry: str | None = None
    relative_position: str | None = None

    def to_dict(self) -> dict:
        return {
            "category": self.category,
            "size": self.size,
            "absolute_position": self.absolute_position,
            "color": self.color,
            "geometry": self.geometry,
            "relative_position": self.relative_position,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttributeSet":
        return cls(**{k: d.get(k) for k in
                      ("category", "size", "absolute_position",
                       "color", "geometry", "relative_position")})


@dataclass
class SentenceCaptions:
    instance_id: str
    image_id: str
    self_caption: str
    relative_caption: str
    absolute_caption: str
    attributes: AttributeSet
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "image_id": self.image_id,
            "self_caption": self.self_caption,
            "relative_caption": self.relative_caption,
            "absolute_caption": self.absolute_caption,
            "attributes": self.attributes.to_dict(),
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SentenceCaptions":
        return cls(
            instance_id=d["instance_id"],
            image_id=d["image_id"],
            self_caption=d["self_caption"],
            relative_caption=d["relative_caption"],
            absolute_caption=d["absolute_caption"],
            attributes=AttributeSet.from_dict(d["attributes"]),
            flags=list(d.get("flags", [])),
        )


@dataclass
class AnnotationFailure:
    instance_id: str
    round: str
    error_kind: str
    raw_response: str
    partial: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "round": self.round,
            "error_kind": self.error_kind,
            "raw_response": self.raw_response,
            "partial": dict(self.partial),
        }


@dataclass
class InstanceTask:
    """Everything the engine needs to annotate one instance."""

    instance_id: str
    image_id: str
    category: str
    size: str
    grid_label: str
    instance_image: bytes
    foreground_image: bytes

    def priors(self) -> dict:
        return {
            "gt_category": self.category,
            "gt_size": self.size,
            "box_pos": self.grid_label,
        }


def _ask_round(client, state: ConversationState, round_id: str,
               retry: RetryPolicy, sleep=time.sleep) -> dict[str, str]:
    """Run one round with retries; on success the exchange is appended to
    the state. Raises _RoundFailed carrying the last error otherwise."""
    schema = ROUND_SCHEMAS.get(round_id)
    last_kind, last_raw = "unknown", ""
    for attempt in range(retry.attempts):
        if attempt == retry.attempts - 1 and attempt > 0:
            # final attempt: replay the conversation fresh from the intro,
            # reusing accepted outputs of completed rounds
            _replay_from_intro(client, state)
        prompt_messages = build_prompt(round_id, state)
        try:
            raw = client.chat(prompt_messages)
        except ChatBackendError as exc:
            last_kind, last_raw = exc.kind, ""
            if attempt < retry.attempts - 1:
                sleep(retry.delay(attempt))
            continue
        if schema is None:  # intro: the acknowledgement is not validated
            state.messages = prompt_messages + [Message("assistant", raw)]
            return {}
        try:
            fields = parse_vlm_response(raw, schema)
        except ResponseParseError as exc:
            last_kind, last_raw = exc.kind, raw
            if attempt < retry.attempts - 1:
                sleep(retry.delay(attempt))
            continue
        state.messages = prompt_messages + [Message("assistant", raw)]
        state.partial[f"{round_id}_raw"] = raw
        return fields
    raise _RoundFailed(round_id, last_kind, last_raw)


class _RoundFailed(Exception):
    def __init__(self, round_id: str, kind: str, raw: str):
        super().__init__(f"{round_id} failed: {kind}")
        self.round_id = round_id
        self.kind = kind
        self.raw = raw


def _replay_from_intro(client, state: ConversationState) -> None:
    """Rebuild the message history from scratch: re-send the intro, then
    re-append each completed round's prompt with its accepted response."""
    completed = [r for r in ("r1", "r2", "r3") if f"{r}_raw" in state.partial]
    fresh = ConversationState(
        instance_id=state.instance_id,
        priors=state.priors,
        instance_image=state.instance_image,
        foreground_image=state.foreground_image,
        partial=dict(state.partial),
    )
    intro_messages = build_prompt("intro", fresh)
    try:
        ack = client.chat(intro_messages)
    except ChatBackendError:
        ack = ""
    fresh.messages = intro_messages + [Message("assistant", ack)]
    for round_id in completed:
        prompt_messages = build_prompt(round_id, fresh)
        fresh.messages = prompt_messages + [Message("assistant", state.partial[f"{round_id}_raw"])]
    state.messages = fresh.messages


def annotate_instance(task: InstanceTask, client,
                      retry: RetryPolicy = RetryPolicy(),
                      sleep=time.sleep) -> SentenceCaptions | AnnotationFailure:
    """Drive the four rounds for one instance.

    Returns SentenceCaptions on success. On persistent failure returns an
    AnnotationFailure carrying the failing round and whatever earlier
    rounds produced; it never raises for backend or parse trouble.
    """
    state = ConversationState(
        instance_id=task.instance_id,
        priors=task.priors(),
        instance_image=task.instance_image,
        foreground_image=task.foreground_image,
    )
    attrs = AttributeSet(category=task.category, size=task.size,
                         absolute_position=task.grid_label)
    flags: list[str] = []
    try:
        _ask_round(client, state, "intro", retry, sleep)
        state.advance("r1")
        r1 = _ask_round(client, state, "r1", retry, sleep)
        state.partial["self_caption"] = r1["caption"]
        attrs.color = r1.get("Color")
        attrs.geometry = r1.get("Geometry")
        if word_count(r1["caption"]) > ROUND_SCHEMAS["r1"].word_limit:
            flags.append("r1_over_limit")

        state.advance("r2")
        r2 = _ask_round(client, state, "r2", retry, sleep)
        state.partial["relative_caption"] = r2["caption"]
        attrs.relative_position = r2["relative_location"]
        if word_count(r2["caption"]) > ROUND_SCHEMAS["r2"].word_limit:
            flags.append("r2_over_limit")

        state.advance("r3")
        r3 = _ask_round(client, state, "r3", retry, sleep)
        if word_count(r3["caption"]) > ROUND_SCHEMAS["r3"].word_limit:
            flags.append("r3_over_limit")
    except _RoundFailed as failure:
        partial = {k: v for k, v in state.partial.items() if not k.endswith("_raw")}
        partial["attributes"] = attrs.to_dict()
        return AnnotationFailure(
            instance_id=task.instance_id,
            round=failure.round_id,
            error_kind=failure.kind,
            raw_response=failure.raw,
            partial=partial,
        )
    return SentenceCaptions(
        instance_id=task.instance_id,
        image_id=task.image_id,
        self_caption=state.partial["self_caption"],
        relative_caption=state.partial["relative_caption"],
        absolute_caption=r3["caption"],
        attributes=attrs,
        flags=flags,
    )


def annotate_corpus(tasks: list[InstanceTask], client,
                    concurrency: int = DEFAULT_CONCURRENCY,
                    retry: RetryPolicy = RetryPolicy(),
                    sleep=time.sleep) -> tuple[list[SentenceCaptions], list[AnnotationFailure]]:
    """Annotate a batch with a bounded pool; outputs sorted by instance id."""
    tasks = sorted(tasks, key=lambda t: t.instance_id)
    if concurrency <= 1:
        results = [annotate_instance(t, client, retry, sleep) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            results = list(pool.map(
                lambda t: annotate_instance(t, client, retry, sleep), tasks))
    captions = [r for r in results if isinstance(r, SentenceCaptions)]
    failures = [r for r in results if isinstance(r, AnnotationFailure)]
    captions.sort(key=lambda c: c.instance_id)
    failures.sort(key=lambda f: f.instance_id)
    return captions, failures
