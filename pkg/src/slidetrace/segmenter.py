"""Five-stage pipeline turning a viewport event stream into discrete actions.

Stage 1 segments the raw stream into stay/pan inspections and native-power
peeks. Stages 2-4 filter oversized overview boxes, merge highly overlapping
actions, and prune large actions made redundant by more specific ones inside
them. Stage 5 snaps every surviving inspection onto a discrete magnification
bin with a standard square box, mirroring the fixed objective lenses of a
physical microscope.

Conventions this module pins down (raw logs carry only center + power):

* The viewport of an event at objective power ``m`` is modeled as a square of
  side ``height_px / m`` centered on the event. A 5x bin therefore has a
  nominal side of ``height_px / 5``, which is exactly the standard size that
  stage 5 snaps to.
* Two consecutive events count as "the same viewport" when the power is
  unchanged and the center moved less than 1% of the field-of-view side;
  exact equality would never fire on a ~10 Hz log.
* A run's dwell extends to the timestamp of the first event after it (the
  moment the viewport demonstrably changed); the last run of a session ends
  at its own final sample.
* Events at native power belong exclusively to peek detection; dwelling
  there yields a peek, never a stay inspection.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

from .geometry import Box, containment_fraction, iou, union_box
from .logs import EmptySession, SessionLog, SlideMeta, ViewportEvent

STAY_INSPECT = "stay_inspect"
PAN_INSPECT = "pan_inspect"
PEEK = "peek"
ACTION_KINDS = (STAY_INSPECT, PAN_INSPECT, PEEK)

_MAG_EQ_RTOL = 1e-9


@dataclass(frozen=True)
class SegmenterConfig:
    """Thresholds for the five stages; defaults follow the reference setup."""

    stay_dwell_s: float = 1.0
    pan_duration_s: float = 2.0
    peek_min_dwell_s: float = 0.2
    big_box_fraction: float = 0.4
    merge_iou_threshold: float = 0.8
    containment_threshold: float = 0.9
    standard_bins: tuple[float, ...] = (5.0, 10.0)
    peek_crop_px: int = 1024
    stay_center_tolerance: float = 0.01

    def __post_init__(self) -> None:
        positive = (
            ("stay_dwell_s", self.stay_dwell_s),
            ("pan_duration_s", self.pan_duration_s),
            ("peek_min_dwell_s", self.peek_min_dwell_s),
            ("big_box_fraction", self.big_box_fraction),
            ("peek_crop_px", self.peek_crop_px),
            ("stay_center_tolerance", self.stay_center_tolerance),
        )
        for name, value in positive:
            if value <= 0:
                raise ValueError(f"{name} must be > 0, got {value}")
        if not 0 < self.merge_iou_threshold <= 1:
            raise ValueError(f"merge_iou_threshold must be in (0, 1], got {self.merge_iou_threshold}")
        if not 0 < self.containment_threshold <= 1:
            raise ValueError(f"containment_threshold must be in (0, 1], got {self.containment_threshold}")
        if not self.standard_bins or any(b <= 0 for b in self.standard_bins):
            raise ValueError(f"standard_bins must be non-empty positive powers, got {self.standard_bins}")

    @classmethod
    def from_json(cls, obj: dict) -> "SegmenterConfig":
        known = {f: obj[f] for f in cls.__dataclass_fields__ if f in obj}
        if "standard_bins" in known:
            known["standard_bins"] = tuple(float(b) for b in known["standard_bins"])
        return cls(**known)


@dataclass(frozen=True)
class VlmAction:
    """One discretized behavioral command with its standardized ROI box."""

    kind: str
    box: Box
    magnification_bin: float
    t_start_ms: int
    t_end_ms: int
    source_event_range: tuple[int, int]

    def __post_init__(self) -> None:
        if self.kind not in ACTION_KINDS:
            raise ValueError(f"unknown action kind {self.kind!r}")
        if self.t_end_ms < self.t_start_ms:
            raise ValueError("t_end_ms must be >= t_start_ms")

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "box": self.box.to_json(),
            "magnification_bin": self.magnification_bin,
            "t_start_ms": self.t_start_ms,
            "t_end_ms": self.t_end_ms,
            "source_event_range": list(self.source_event_range),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "VlmAction":
        return cls(
            kind=obj["kind"],
            box=Box.from_json(obj["box"]),
            magnification_bin=float(obj["magnification_bin"]),
            t_start_ms=int(obj["t_start_ms"]),
            t_end_ms=int(obj["t_end_ms"]),
            source_event_range=tuple(obj["source_event_range"]),
        )


def fov_side(slide: SlideMeta, magnification: float) -> float:
    """Nominal field-of-view side at an objective power, in level-0 px."""
    return slide.height_px / magnification


def viewport_box(slide: SlideMeta, event: ViewportEvent) -> Box:
    """Viewport square of an event, clipped to the slide rectangle."""
    side = fov_side(slide, event.magnification)
    x0 = max(0.0, event.center_x - side / 2.0)
    y0 = max(0.0, event.center_y - side / 2.0)
    x1 = min(float(slide.width_px), event.center_x + side / 2.0)
    y1 = min(float(slide.height_px), event.center_y + side / 2.0)
    return Box(x0, y0, x1 - x0, y1 - y0)


def centered_square(slide: SlideMeta, cx: float, cy: float, side: float) -> Box:
    """Square of fixed side on (cx, cy), translated (never shrunk) into bounds."""
    x = min(max(cx - side / 2.0, 0.0), max(float(slide.width_px) - side, 0.0))
    y = min(max(cy - side / 2.0, 0.0), max(float(slide.height_px) - side, 0.0))
    return Box(x, y, side, side)


def _same_magnification(a: float, b: float) -> bool:
    return abs(a - b) <= _MAG_EQ_RTOL * max(abs(a), abs(b))


def _transition(slide: SlideMeta, prev: ViewportEvent, cur: ViewportEvent, cfg: SegmenterConfig) -> str:
    if not _same_magnification(prev.magnification, cur.magnification):
        return "zoom"
    dist = ((cur.center_x - prev.center_x) ** 2 + (cur.center_y - prev.center_y) ** 2) ** 0.5
    if dist < cfg.stay_center_tolerance * fov_side(slide, cur.magnification):
        return "stay"
    return "pan"


def _dwell_end(events: Sequence[ViewportEvent], last_index: int) -> int:
    if last_index + 1 < len(events):
        return events[last_index + 1].t_ms
    return events[last_index].t_ms


def _stay_runs(
    slide: SlideMeta, events: Sequence[ViewportEvent], lo: int, hi: int, cfg: SegmenterConfig
) -> list[tuple[int, int]]:
    """Maximal spans [a, b] within [lo, hi] whose internal transitions are all 'stay'."""
    runs = []
    a = lo
    for i in range(lo + 1, hi + 1):
        if _transition(slide, events[i - 1], events[i], cfg) != "stay":
            runs.append((a, i - 1))
            a = i
    runs.append((a, hi))
    return runs


def segment_actions(log: SessionLog, cfg: SegmenterConfig) -> list[VlmAction]:
    """Stage 1: extract stay/pan inspections and peeks from the event stream."""
    events = log.events
    if not events:
        raise EmptySession(f"session {log.session_id!r} has no events")
    slide = log.slide
    native = slide.native_magnification
    n = len(events)

    actions: list[VlmAction] = []

    # split the stream into maximal native-power vs below-native spans
    spans: list[tuple[int, int, bool]] = []
    span_lo = 0
    at_native = events[0].magnification >= native * (1 - _MAG_EQ_RTOL)
    for i in range(1, n):
        flag = events[i].magnification >= native * (1 - _MAG_EQ_RTOL)
        if flag != at_native:
            spans.append((span_lo, i - 1, at_native))
            span_lo, at_native = i, flag
    spans.append((span_lo, n - 1, at_native))

    for lo, hi, is_native in spans:
        if is_native:
            for a, b in _stay_runs(slide, events, lo, hi, cfg):
                dwell_ms = _dwell_end(events, b) - events[a].t_ms
                if dwell_ms >= cfg.peek_min_dwell_s * 1000.0:
                    actions.append(
                        VlmAction(
                            kind=PEEK,
                            box=centered_square(
                                slide, events[a].center_x, events[a].center_y, float(cfg.peek_crop_px)
                            ),
                            magnification_bin=native,
                            t_start_ms=events[a].t_ms,
                            t_end_ms=_dwell_end(events, b),
                            source_event_range=(a, b),
                        )
                    )
            continue

        for a, b in _stay_runs(slide, events, lo, hi, cfg):
            dwell_ms = _dwell_end(events, b) - events[a].t_ms
            if dwell_ms >= cfg.stay_dwell_s * 1000.0:
                actions.append(
                    VlmAction(
                        kind=STAY_INSPECT,
                        box=viewport_box(slide, events[a]),
                        magnification_bin=events[a].magnification,
                        t_start_ms=events[a].t_ms,
                        t_end_ms=_dwell_end(events, b),
                        source_event_range=(a, b),
                    )
                )

        # pan runs: maximal sequences of consecutive 'pan' transitions
        i = lo + 1
        while i <= hi:
            if _transition(slide, events[i - 1], events[i], cfg) != "pan":
                i += 1
                continue
            j = i
            while j + 1 <= hi and _transition(slide, events[j], events[j + 1], cfg) == "pan":
                j += 1
            first, last = i - 1, j
            if events[last].t_ms - events[first].t_ms >= cfg.pan_duration_s * 1000.0:
                cover = viewport_box(slide, events[first])
                for k in range(first + 1, last + 1):
                    cover = union_box(cover, viewport_box(slide, events[k]))
                actions.append(
                    VlmAction(
                        kind=PAN_INSPECT,
                        box=cover,
                        magnification_bin=events[first].magnification,
                        t_start_ms=events[first].t_ms,
                        t_end_ms=events[last].t_ms,
                        source_event_range=(first, last),
                    )
                )
            i = j + 1

    actions.sort(key=lambda a: (a.t_start_ms, a.source_event_range[0]))
    return actions


def filter_big_bboxes(
    actions: Iterable[VlmAction], slide: SlideMeta, cfg: SegmenterConfig
) -> list[VlmAction]:
    """Stage 2: drop birds-eye overviews wider than the set fraction of slide height.

    Box width is deliberately compared against slide *height*, not width;
    peeks have a fixed small crop and are never dropped.
    """
    limit = cfg.big_box_fraction * slide.height_px
    return [a for a in actions if a.kind == PEEK or not (a.box.w > limit)]


def _ordered(tagged: list[tuple[int, VlmAction]]) -> list[tuple[int, VlmAction]]:
    return sorted(tagged, key=lambda ta: (ta[1].t_start_ms, ta[0]))


def merge_similar(actions: Sequence[VlmAction], cfg: SegmenterConfig) -> list[VlmAction]:
    """Stage 3: repeatedly merge the first pair of inspections with IoU above threshold.

    Scan order is ascending start time then insertion order, so the fixpoint
    is deterministic. Peeks are exempt: their crop has fixed semantics.
    """
    work = _ordered(list(enumerate(actions)))
    changed = True
    while changed:
        changed = False
        for i in range(len(work)):
            tag_i, a = work[i]
            if a.kind == PEEK:
                continue
            for j in range(i + 1, len(work)):
                tag_j, b = work[j]
                if b.kind == PEEK:
                    continue
                if iou(a.box, b.box) > cfg.merge_iou_threshold:
                    merged = VlmAction(
                        kind=STAY_INSPECT if STAY_INSPECT in (a.kind, b.kind) else PAN_INSPECT,
                        box=union_box(a.box, b.box),
                        magnification_bin=min(a.magnification_bin, b.magnification_bin),
                        t_start_ms=min(a.t_start_ms, b.t_start_ms),
                        t_end_ms=max(a.t_end_ms, b.t_end_ms),
                        source_event_range=(
                            min(a.source_event_range[0], b.source_event_range[0]),
                            max(a.source_event_range[1], b.source_event_range[1]),
                        ),
                    )
                    rest = [work[k] for k in range(len(work)) if k not in (i, j)]
                    rest.append((min(tag_i, tag_j), merged))
                    work = _ordered(rest)
                    changed = True
                    break
            if changed:
                break
    return [a for _, a in work]


def _prune_victim(a: VlmAction, b: VlmAction, cfg: SegmenterConfig) -> Optional[int]:
    """Index (0 or 1) of the action to remove from the pair, or None."""
    if a.kind == PEEK and b.kind == PEEK:
        return None
    if containment_fraction(a.box, b.box) <= cfg.containment_threshold:
        return None
    if a.kind == PEEK:
        return 1  # peek counts as the smaller, more specific view
    if b.kind == PEEK:
        return 0
    if a.box.area == b.box.area:
        return None
    return 0 if a.box.area > b.box.area else 1


def filter_mostly_contained(actions: Sequence[VlmAction], cfg: SegmenterConfig) -> list[VlmAction]:
    """Stage 4: remove larger actions mostly covering a smaller, more specific one."""
    work = _ordered(list(enumerate(actions)))
    changed = True
    while changed:
        changed = False
        for i in range(len(work)):
            for j in range(i + 1, len(work)):
                victim = _prune_victim(work[i][1], work[j][1], cfg)
                if victim is not None:
                    del work[(i, j)[victim]]
                    changed = True
                    break
            if changed:
                break
    return [a for _, a in work]


def standardize_action_bboxes(
    actions: Iterable[VlmAction], slide: SlideMeta, cfg: SegmenterConfig
) -> list[VlmAction]:
    """Stage 5: snap each inspection to the nearest standard objective bin.

    The bin's nominal square side is ``height_px / bin``; the chosen bin is
    the one whose side is closest to the box's larger dimension (ties go to
    the broader view). The output box keeps the input center and is
    translated, never resized, to stay inside the slide.
    """
    out = []
    for a in actions:
        if a.kind == PEEK:
            out.append(a)
            continue
        target = max(a.box.w, a.box.h)
        bin_power = min(cfg.standard_bins, key=lambda b: (abs(fov_side(slide, b) - target), b))
        side = fov_side(slide, bin_power)
        out.append(
            replace(
                a,
                box=centered_square(slide, a.box.cx, a.box.cy, side),
                magnification_bin=bin_power,
            )
        )
    return out


def run_pipeline(log: SessionLog, cfg: SegmenterConfig | None = None) -> list[VlmAction]:
    """All five stages in order; deterministic for fixed inputs."""
    cfg = cfg or SegmenterConfig()
    actions = segment_actions(log, cfg)
    actions = filter_big_bboxes(actions, log.slide, cfg)
    actions = merge_similar(actions, cfg)
    actions = filter_mostly_contained(actions, cfg)
    return standardize_action_bboxes(actions, log.slide, cfg)
