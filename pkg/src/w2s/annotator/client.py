"""Chat-backend clients: the HTTP wire client and the deterministic mock.

Wire protocol: HTTP POST of a JSON body holding the full message array;
image attachments ride inside message content as base64 data-URIs; the
assistant text comes back under choices[0].message.content. Conversation
state lives client-side: every round resends the whole message list.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import re
from dataclasses import dataclass

import requests

from .prompts import Message

ENV_URL = "W2S_VLM_URL"
ENV_TOKEN = "W2S_VLM_TOKEN"


class ChatBackendError(RuntimeError):
    """Transport failure, non-success status, or malformed response body."""

    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


@dataclass
class BackendConfig:
    url: str = ""
    model: str = ""
    token: str = ""
    temperature: float = 0.0
    timeout: float = 120.0
    kind: str = "http"  # http | mock

    @classmethod
    def from_env(cls, **overrides) -> "BackendConfig":
        cfg = cls(
            url=os.environ.get(ENV_URL, ""),
            token=os.environ.get(ENV_TOKEN, ""),
        )
        for key, value in overrides.items():
            setattr(cfg, key, value)
        return cfg

    @classmethod
    def from_json(cls, d: dict) -> "BackendConfig":
        cfg = cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})
        if cfg.kind == "http" and not cfg.url:
            cfg.url = os.environ.get(ENV_URL, "")
        if not cfg.token:
            cfg.token = os.environ.get(ENV_TOKEN, "")
        return cfg


def message_to_wire(msg: Message) -> dict:
    if msg.image_png is None:
        return {"role": msg.role, "content": msg.text}
    data_uri = "data:image/png;base64," + base64.b64encode(msg.image_png).decode("ascii")
    return {
        "role": msg.role,
        "content": [
            {"type": "text", "text": msg.text},
            {"type": "image_url", "image_url": {"url": data_uri}},
        ],
    }


class HttpChatClient:
    """Chat client speaking the chat-completion convention.

    `post_fn` is injectable for tests; it must accept (url, json=, headers=,
    timeout=) like requests.post.
    """

    def __init__(self, config: BackendConfig, post_fn=None):
        if not config.url:
            raise ValueError(f"backend URL not configured (set {ENV_URL} or the config file)")
        self.config = config
        self._post = post_fn or requests.post

    def chat(self, messages: list[Message]) -> str:
        body = {
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [message_to_wire(m) for m in messages],
        }
        headers = {"Content-Type": "application/json"}
        if self.config.token:
            headers["Authorization"] = f"Bearer {self.config.token}"
        try:
            resp = self._post(self.config.url, json=body, headers=headers,
                              timeout=self.config.timeout)
        except requests.exceptions.Timeout as exc:
            raise ChatBackendError("timeout", f"backend timed out: {exc}") from exc
        except requests.exceptions.RequestException as exc:
            raise ChatBackendError("transport", f"backend unreachable: {exc}") from exc
        status = getattr(resp, "status_code", 200)
        if status >= 400:
            raise ChatBackendError("status", f"backend returned HTTP {status}")
        try:
            payload = resp.json()
            content = payload["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ChatBackendError("malformed", f"unexpected response body: {exc}") from exc
        if not isinstance(content, str):
            raise ChatBackendError("malformed", "assistant content is not text")
        return content


_CATEGORY_RE = re.compile(r'Category: "([^"]*)"')
_SIZE_RE = re.compile(r'Size: "([^"]*)"')
_STEP1_RE = re.compile(r'Based on the caption from Step 1: "(.*?)", refine', re.S)
_STEP2_RE = re.compile(r'Review the caption from Step 2: "(.*?)", enhance', re.S)
_BOXPOS_RE = re.compile(r'Absolute Location: "([^"]*)"')

MOCK_COLORS = ("white", "gray", "dark", "red", "green")
MOCK_GEOMETRIES = ("rectangular", "square", "elongated", "round")
MOCK_RELATIVE = (
    "near a paved road",
    "beside a large building",
    "next to a parking area",
    "close to a row of trees",
    "along the water's edge",
)


def _pick(options: tuple[str, ...], *keys: object) -> str:
    h = hashlib.sha256()
    for key in keys:
        h.update(repr(key).encode("utf-8"))
        h.update(b"\x00")
    return options[int.from_bytes(h.digest()[:4], "big") % len(options)]


class MockVLMClient:
    """Deterministic stand-in backend: replies are a pure function of the
    request, so identical conversations always produce identical text."""

    def chat(self, messages: list[Message]) -> str:
        last = messages[-1]
        text = last.text
        image_key = hashlib.sha256(last.image_png or b"").hexdigest()
        if "We will proceed in three steps" in text:
            return "Understood. I will follow the three-step annotation workflow."
        if "Must using the provided Category:" in text:
            category = _CATEGORY_RE.search(text).group(1)
            size = _SIZE_RE.search(text).group(1)
            color = _pick(MOCK_COLORS, "color", category, size, image_key)
            geometry = _pick(MOCK_GEOMETRIES, "geometry", category, size, image_key)
            noun = category.replace("-", " ")
            return json.dumps(
                {
                    "caption": f"a {size} {color} {noun} with a {geometry} shape",
                    "Category": category,
                    "Size": size,
                    "Color": color,
                    "Geometry": geometry,
                }
            )
        if "Based on the caption from Step 1:" in text:
            self_caption = _STEP1_RE.search(text).group(1)
            rel = _pick(MOCK_RELATIVE, "relative", self_caption, image_key)
            return json.dumps(
                {"caption": f"{self_caption}, {rel}", "relative_location": rel}
            )
        if "Review the caption from Step 2:" in text:
            relative_caption = _STEP2_RE.search(text).group(1)
            box_pos = _BOXPOS_RE.search(text).group(1)
            return json.dumps(
                {
                    "caption": f"{relative_caption}, in the {box_pos} area of the image",
                    "absolute_location": box_pos,
                }
            )
        return "I do not recognize this request."


def make_client(config: BackendConfig, post_fn=None):
    if config.kind == "mock":
        return MockVLMClient()
    return HttpChatClient(config, post_fn=post_fn)
