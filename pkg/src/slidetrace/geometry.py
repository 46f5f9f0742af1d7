"""Axis-aligned box arithmetic used by segmentation, matching, and losses.

All coordinates are level-0 slide pixels, origin at the top-left corner,
x growing rightward and y growing downward. Everything stays in floating
point; nothing is snapped to integer pixels here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Box:
    """Rectangle given by its top-left corner and positive side lengths."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box sides must be positive, got w={self.w} h={self.h}")

    @property
    def right(self) -> float:
        return self.x + self.w

    @property
    def bottom(self) -> float:
        return self.y + self.h

    @property
    def cx(self) -> float:
        return self.x + self.w / 2.0

    @property
    def cy(self) -> float:
        return self.y + self.h / 2.0

    @property
    def area(self) -> float:
        return self.w * self.h

    def to_json(self) -> dict:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h}

    @classmethod
    def from_json(cls, obj: dict) -> "Box":
        return cls(float(obj["x"]), float(obj["y"]), float(obj["w"]), float(obj["h"]))


def _overlap(lo_a: float, len_a: float, lo_b: float, len_b: float) -> float:
    # equivalent to min(hi) - max(lo), written so identical or nested
    # intervals give exact results instead of losing an ulp to edge
    # reconstruction
    if lo_a == lo_b and len_a == len_b:
        return len_a
    return min(len_a, len_b, lo_a + len_a - lo_b, lo_b + len_b - lo_a)


def intersection_area(a: Box, b: Box) -> float:
    iw = _overlap(a.x, a.w, b.x, b.w)
    ih = _overlap(a.y, a.h, b.y, b.h)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou(a: Box, b: Box) -> float:
    """Intersection over union; 0.0 for disjoint boxes.

    Clamped into [0, 1]: reconstructing box edges from width can overshoot
    the true ratio by an ulp, and downstream thresholds rely on the bound.
    """
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    return min(1.0, inter / (a.area + b.area - inter))


def union_box(a: Box, b: Box) -> Box:
    """Minimal box covering both inputs."""
    x = min(a.x, b.x)
    y = min(a.y, b.y)
    return Box(x, y, max(a.right, b.right) - x, max(a.bottom, b.bottom) - y)


def contains(outer: Box, inner: Box) -> bool:
    """True when ``inner`` lies fully inside ``outer`` (closed bounds)."""
    return (
        outer.x <= inner.x
        and outer.y <= inner.y
        and outer.right >= inner.right
        and outer.bottom >= inner.bottom
    )


def containment_fraction(a: Box, b: Box) -> float:
    """Intersection area divided by the area of the smaller box."""
    return intersection_area(a, b) / min(a.area, b.area)


def ciou_loss(pred: Box, gt: Box) -> float:
    """Complete-IoU loss between a predicted and a ground-truth box.

        loss = 1 - IoU + rho^2 / c^2 + alpha * v

    rho is the distance between box centers, c the diagonal of the smallest
    enclosing box, v = (4/pi^2) * (atan(w_gt/h_gt) - atan(w/h))^2 the aspect
    penalty and alpha = v / ((1 - IoU) + v). alpha is taken as 0 when the
    denominator vanishes (identical aspect ratios at IoU 1), which makes the
    loss exactly 0 for identical boxes.
    """
    i = iou(pred, gt)
    rho2 = (pred.cx - gt.cx) ** 2 + (pred.cy - gt.cy) ** 2
    cw = max(pred.right, gt.right) - min(pred.x, gt.x)
    ch = max(pred.bottom, gt.bottom) - min(pred.y, gt.y)
    c2 = cw * cw + ch * ch
    v = (4.0 / math.pi**2) * (math.atan(gt.w / gt.h) - math.atan(pred.w / pred.h)) ** 2
    denom = (1.0 - i) + v
    alpha = v / denom if denom > 0 else 0.0
    return (1.0 - i) + rho2 / c2 + alpha * v
