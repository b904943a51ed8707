"""Round prompt templates and message assembly.

build_prompt is a pure function of the conversation state: equal states
yield byte-identical message lists. Rounds r1 and r2 attach exactly one
image; the intro and r3 attach none.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Message:
    role: str
    text: str
    image_png: bytes | None = None


INTRO_TEMPLATE = """Hello InterVL,

I need your assistance in annotating aerial images. We will proceed in three steps:

1. Initial Captioning: I will provide an image of an aerial target. Please generate a caption describing its attributes including {gt_size} and {gt_category}.
2. Caption Refinement with Context: Next, I'll provide an image showing the target within its surroundings. Please refine the caption by adding information about the target's relative location within its environment.
3. Caption Enhancement with Absolute Location: Finally, I'll provide the region of the image where the target is located (for example: top, left of the image). Based on this information and the caption from Step 2, please incorporate the absolute location attribute.

Important: The red box in the provided images is only for your reference to identify the target. Do not mention the red box or any red-box-related information in the final caption."""

CAPTION1_TEMPLATE = """{{
    "caption": "[A brief sentence describing the target using the provided Category and Size. Include **Color** and **Geometry** only if you are certain about them.]",
    "Category": "{gt_category}",
    "Size": "{gt_size}",
    "Color": "[Include if certain]",
    "Geometry": "[Include if certain]"
}}"""

CAPTION2_TEMPLATE = """{
    "caption": "[Refined caption including the target's relative location attribute.]",
    "relative_location": "[The target's relative location within its surroundings.]"
}"""

CAPTION3_TEMPLATE = """{{
    "caption": "[The caption by incorporating the absolute location.]",
    "absolute_location": "{box_pos}"
}}"""

R1_TEMPLATE = """You are provided with an aerial image of a target. The red box highlights the target.
- Generate a caption describing the target.
- Must using the provided Category: "{gt_category}" and Size: "{gt_size}" in caption.
- Include Color and Geometry only if you are certain about them.
- Do not mention the red box or any red box-related information in final caption.
- Keep the caption under 20 words.
- Only include information you can confidently determine from the image. Avoid speculative or aesthetic descriptions.

Must format your answer as a JSON object with the following structure and strictly adhere to the JSON format:
{caption1_template}"""

R2_TEMPLATE = """You are provided with an instance's foreground region image showing its surrounding environment. The red box highlights the target (for your reference, do not mention it).

- Based on the caption from Step 1: "{self_caption}", refine the description by incorporating relative location information about the target with respect to its surrounding environment or nearby objects.
- Maintain the original attributes (Category, Size, Color, Geometry).
- Do not mention the red box or any red box-related information in final caption.
- Do not describe the target's location relative to the image boundaries (e.g., 'top left of the image').
- Keep the caption under 40 words.
- Only include information you can confidently determine from the image. Avoid speculative or aesthetic descriptions.

Must format your answer as a JSON object with the following structure and strictly adhere to the JSON format:
{caption2_template}"""

R3_TEMPLATE = """You are provided the instance's absolute position in the image.

Absolute Location: "{box_pos}".
- Review the caption from Step 2: "{relative_caption}", enhance the caption by incorporating the provided absolute location information.
- Keep the caption under 60 words.
- Only include information you can confidently determine from the image. Avoid speculative or aesthetic descriptions.

Must format your answer as a JSON object with the following structure and strictly adhere to the JSON format:
{caption3_template}"""


class MissingPromptValue(KeyError):
    """A placeholder required by the round template has no value."""


def _require(values: dict, *keys: str) -> dict:
    missing = [k for k in keys if values.get(k) in (None, "")]
    if missing:
        raise MissingPromptValue(f"missing placeholder value(s): {', '.join(missing)}")
    return {k: values[k] for k in keys}


def build_prompt(round_id: str, state: "ConversationState") -> list[Message]:
    """Render the user message(s) for one round of the conversation.

    Returns the full message list to send: prior history plus the new user
    turn. The caller appends the assistant reply to the state afterwards.
    """
    priors = state.priors
    if round_id == "intro":
        vals = _require(priors, "gt_category", "gt_size")
        text = INTRO_TEMPLATE.format(**vals)
        msg = Message("user", text)
    elif round_id == "r1":
        vals = _require(priors, "gt_category", "gt_size")
        if state.instance_image is None:
            raise MissingPromptValue("r1 requires the instance crop image")
        template = CAPTION1_TEMPLATE.format(**vals)
        text = R1_TEMPLATE.format(caption1_template=template, **vals)
        msg = Message("user", text, image_png=state.instance_image)
    elif round_id == "r2":
        vals = _require(dict(state.partial), "self_caption")
        if state.foreground_image is None:
            raise MissingPromptValue("r2 requires the highlighted foreground crop image")
        text = R2_TEMPLATE.format(caption2_template=CAPTION2_TEMPLATE, **vals)
        msg = Message("user", text, image_png=state.foreground_image)
    elif round_id == "r3":
        vals = _require(dict(state.partial), "relative_caption")
        box_pos = _require(priors, "box_pos")["box_pos"]
        template = CAPTION3_TEMPLATE.format(box_pos=box_pos)
        text = R3_TEMPLATE.format(caption3_template=template, box_pos=box_pos, **vals)
        msg = Message("user", text)
    else:
        raise ValueError(f"unknown round {round_id!r}")
    return list(state.messages) + [msg]


@dataclass
class ConversationState:
    """Accumulated conversation for one instance."""

    instance_id: str
    priors: dict
    instance_image: bytes | None = None
    foreground_image: bytes | None = None
    round: str = "intro"
    messages: list[Message] = None
    partial: dict = None

    def __post_init__(self):
        if self.messages is None:
            self.messages = []
        if self.partial is None:
            self.partial = {}

    ROUND_ORDER = ("intro", "r1", "r2", "r3")

    def advance(self, next_round: str) -> None:
        order = self.ROUND_ORDER
        if order.index(next_round) < order.index(self.round):
            raise ValueError(f"round may not regress from {self.round} to {next_round}")
        self.round = next_round
