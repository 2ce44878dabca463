"""Grammar for model text outputs: bbox-as-text and yes/no answers.

Parsing is tolerant where the serialization is sloppy but the intent is
clear (surrounding prose, missing braces, swapped corners) and fails
closed otherwise. Failures are values, not exceptions, so batch scoring
keeps moving.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .boxes import NormalizedBox

_BOX_RE = re.compile(
    r"\{?\s*<\s*(\d{1,3})\s*>\s*<\s*(\d{1,3})\s*>\s*<\s*(\d{1,3})\s*>\s*<\s*(\d{1,3})\s*>\s*\}?"
)
_YESNO_RE = re.compile(r"\b(yes|no)\b", re.IGNORECASE)


@dataclass(frozen=True)
class ParsedBox:
    box: NormalizedBox
    repaired: bool = False  # corners arrived swapped and were sorted


@dataclass(frozen=True)
class ParseFailure:
    reason: str


Parsed = ParsedBox | str | ParseFailure  # str is "yes" | "no"


def parse_box(raw_text: str) -> ParsedBox | ParseFailure:
    match = _BOX_RE.search(raw_text)
    if match is None:
        return ParseFailure("no bbox pattern found")
    a, b, c, d = (int(g) for g in match.groups())
    if any(v > 100 for v in (a, b, c, d)):
        return ParseFailure(f"coordinate outside [0, 100] in {match.group(0)!r}")
    repaired = a > c or b > d
    x_left, x_right = sorted((a, c))
    y_top, y_bottom = sorted((b, d))
    return ParsedBox(NormalizedBox(x_left, y_top, x_right, y_bottom), repaired=repaired)


def parse_yesno(raw_text: str) -> str | ParseFailure:
    tokens = {t.lower() for t in _YESNO_RE.findall(raw_text)}
    if tokens == {"yes"}:
        return "yes"
    if tokens == {"no"}:
        return "no"
    if tokens:
        return ParseFailure("text contains both yes and no")
    return ParseFailure("no yes/no token found")


def parse_output(raw_text: str, expected: str) -> Parsed:
    """Parse raw model text under the expected grammar ("bbox" or "yesno")."""
    if expected == "bbox":
        return parse_box(raw_text)
    if expected == "yesno":
        return parse_yesno(raw_text)
    raise ValueError(f"expected must be 'bbox' or 'yesno', got {expected!r}")
