"""Chat-backend orchestration for per-instance caption generation."""

from .client import BackendConfig, ChatBackendError, HttpChatClient, MockVLMClient
from .engine import (
    AnnotationFailure,
    AttributeSet,
    InstanceTask,
    RetryPolicy,
    SentenceCaptions,
    annotate_corpus,
    annotate_instance,
)
from .parsing import ROUND_SCHEMAS, ResponseParseError, RoundSchema, parse_vlm_response
from .prompts import Message, build_prompt

__all__ = [
    "BackendConfig",
    "ChatBackendError",
    "HttpChatClient",
    "MockVLMClient",
    "AnnotationFailure",
    "AttributeSet",
    "InstanceTask",
    "RetryPolicy",
    "SentenceCaptions",
    "annotate_corpus",
    "annotate_instance",
    "ROUND_SCHEMAS",
    "ResponseParseError",
    "RoundSchema",
    "parse_vlm_response",
    "Message",
    "build_prompt",
]
