"""Structured-output validation for chat-backend responses.

The backend is asked for a JSON object but may wrap it in code fences or
prose; extraction takes the first balanced JSON object found anywhere in
the text. Parsing is total: any input yields either a validated field dict
or a typed ResponseParseError.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

# template placeholder the backend may echo for an optional field it is
# not certain about
OPTIONAL_PLACEHOLDER = "[Include if certain]"


class ResponseParseError(ValueError):
    """Response text did not yield a schema-conforming object."""

    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


@dataclass(frozen=True)
class RoundSchema:
    round_id: str
    required_fields: tuple[str, ...]
    optional_fields: tuple[str, ...]
    word_limit: int


ROUND_SCHEMAS = {
    "r1": RoundSchema("r1", ("caption", "Category", "Size"), ("Color", "Geometry"), 20),
    "r2": RoundSchema("r2", ("caption", "relative_location"), (), 40),
    "r3": RoundSchema("r3", ("caption", "absolute_location"), (), 60),
}


def extract_json_object(text: str) -> dict | None:
    """First balanced JSON object in the text, or None.

    Scans for '{' and attempts a decode at each position, so fences and
    surrounding prose are tolerated and braces inside strings cannot
    unbalance the scan.
    """
    decoder = json.JSONDecoder()
    idx = text.find("{")
    while idx != -1:
        try:
            obj, _ = decoder.raw_decode(text, idx)
        except (json.JSONDecodeError, ValueError):
            idx = text.find("{", idx + 1)
            continue
        if isinstance(obj, dict):
            return obj
        idx = text.find("{", idx + 1)
    return None


def parse_vlm_response(text: str | bytes, schema: RoundSchema) -> dict[str, str]:
    """Extract and validate one round's fields from raw response text.

    Returns the schema's required and optional fields; fields from other
    rounds are silently ignored. Optional fields echoing the template
    placeholder are dropped.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    if not isinstance(text, str):
        raise ResponseParseError("no-json", f"expected text, got {type(text).__name__}")
    obj = extract_json_object(text)
    if obj is None:
        raise ResponseParseError("no-json", "no balanced JSON object found in response")
    out: dict[str, str] = {}
    for name in schema.required_fields:
        if name not in obj:
            raise ResponseParseError(f"missing-field:{name}", f"required field {name!r} absent")
        value = obj[name]
        if not isinstance(value, str):
            raise ResponseParseError(
                f"non-string-field:{name}", f"field {name!r} is {type(value).__name__}, not string"
            )
        if not value.strip():
            raise ResponseParseError(f"missing-field:{name}", f"required field {name!r} empty")
        out[name] = value
    for name in schema.optional_fields:
        value = obj.get(name)
        if isinstance(value, str) and value.strip() and value.strip() != OPTIONAL_PLACEHOLDER:
            out[name] = value
    return out


def word_count(text: str) -> int:
    return len(text.split())
