"""Bounding-box types, coordinate normalization, and IoU scoring.

Two coordinate spaces exist side by side: pixel space (image columns/rows,
origin top-left) and the normalized [0, 100] integer space used by the
bbox-as-text encoding. Areas follow the (max - min) * (max - min) convention
throughout, without the +1 pixel-count correction.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, ROUND_HALF_UP, Decimal

from .errors import PanctError


class OutOfBoundsError(PanctError):
    """Box coordinates fall outside the image frame."""


class CoordinateSpaceMismatchError(PanctError):
    """IoU requested between boxes of different coordinate spaces."""


@dataclass(frozen=True)
class PixelBox:
    """Tight pixel-space box: min/max column (x) and row (y), inclusive corners."""

    min_x: int
    min_y: int
    max_x: int
    max_y: int

    def __post_init__(self) -> None:
        if self.min_x > self.max_x or self.min_y > self.max_y:
            raise ValueError(f"inverted box {self}")

    @property
    def area(self) -> int:
        return (self.max_x - self.min_x) * (self.max_y - self.min_y)

    def as_list(self) -> list[int]:
        return [self.min_x, self.min_y, self.max_x, self.max_y]


@dataclass(frozen=True)
class NormalizedBox:
    """Box with integer coordinates normalized onto [0, 100]."""

    x_left: int
    y_top: int
    x_right: int
    y_bottom: int

    def __post_init__(self) -> None:
        for c in (self.x_left, self.y_top, self.x_right, self.y_bottom):
            if not 0 <= c <= 100:
                raise ValueError(f"coordinate {c} outside [0, 100]")
        if self.x_left > self.x_right or self.y_top > self.y_bottom:
            raise ValueError(f"inverted box {self}")

    @property
    def area(self) -> int:
        return (self.x_right - self.x_left) * (self.y_bottom - self.y_top)


ROUNDING_MODES = {"half-up": ROUND_HALF_UP, "half-even": ROUND_HALF_EVEN}


def scale_round(value: int, numerator: int, denominator: int, mode: str = "half-up") -> int:
    """Round value * numerator / denominator to an integer, exactly.

    The quotient is formed with Decimal rationals so ties are detected
    exactly; "half-up" rounds ties away from zero.
    """
    quotient = Decimal(value) * Decimal(numerator) / Decimal(denominator)
    return int(quotient.quantize(Decimal("1"), rounding=ROUNDING_MODES[mode]))


def round_ratio(numerator: int, denominator: int) -> float:
    """Two-decimal ratio with ties away from zero; 0.0 for a zero denominator."""
    if denominator == 0:
        return 0.0
    quotient = Decimal(numerator) / Decimal(denominator)
    return float(quotient.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def normalize_box(box: PixelBox, width: int, height: int, mode: str = "half-up") -> NormalizedBox:
    """Map a pixel box onto the [0, 100] integer space of a width x height frame."""
    if not (0 <= box.min_x <= box.max_x <= width and 0 <= box.min_y <= box.max_y <= height):
        raise OutOfBoundsError(f"{box} exceeds {width}x{height} frame")
    return NormalizedBox(
        x_left=scale_round(box.min_x, 100, width, mode),
        y_top=scale_round(box.min_y, 100, height, mode),
        x_right=scale_round(box.max_x, 100, width, mode),
        y_bottom=scale_round(box.max_y, 100, height, mode),
    )


def denormalize_box(nbox: NormalizedBox, width: int, height: int, mode: str = "half-up") -> PixelBox:
    """Map a normalized box back onto pixel coordinates of a width x height frame."""
    return PixelBox(
        min_x=scale_round(nbox.x_left, width, 100, mode),
        min_y=scale_round(nbox.y_top, height, 100, mode),
        max_x=scale_round(nbox.x_right, width, 100, mode),
        max_y=scale_round(nbox.y_bottom, height, 100, mode),
    )


def render_bbox_text(nbox: NormalizedBox) -> str:
    """Serialize a normalized box as the {<a><b><c><d>} grounding string."""
    return f"{{<{nbox.x_left}><{nbox.y_top}><{nbox.x_right}><{nbox.y_bottom}>}}"


def _corners(box: PixelBox | NormalizedBox) -> tuple[int, int, int, int]:
    if isinstance(box, PixelBox):
        return box.min_x, box.min_y, box.max_x, box.max_y
    return box.x_left, box.y_top, box.x_right, box.y_bottom


def iou(a: PixelBox | NormalizedBox, b: PixelBox | NormalizedBox) -> float:
    """Intersection over union under the continuous area convention.

    Degenerate (zero-area) boxes score 0 against anything except an
    identical degenerate box, which scores 1 by identity.
    """
    if type(a) is not type(b):
        raise CoordinateSpaceMismatchError(f"{type(a).__name__} vs {type(b).__name__}")
    ax1, ay1, ax2, ay2 = _corners(a)
    bx1, by1, bx2, by2 = _corners(b)
    area_a = (ax2 - ax1) * (ay2 - ay1)
    area_b = (bx2 - bx1) * (by2 - by1)
    if area_a == 0 or area_b == 0:
        return 1.0 if a == b else 0.0
    inter_w = min(ax2, bx2) - max(ax1, bx1)
    inter_h = min(ay2, by2) - max(ay1, by1)
    if inter_w <= 0 or inter_h <= 0:
        return 0.0
    inter = inter_w * inter_h
    return inter / (area_a + area_b - inter)
