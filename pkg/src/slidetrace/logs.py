"""Canonical session-log schema: parse, validate, and serialize viewer logs.

The on-disk format is line-delimited JSON. Line one is a header carrying the
session and slide metadata; every following line is one timestamped viewport
sample. Viewer-specific exports are expected to be adapted into this format
before they reach the rest of the toolkit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Optional

EVENT_KINDS = ("pan", "zoom", "stay")


class MalformedLine(ValueError):
    """A line could not be parsed as JSON or a field has the wrong type."""

    def __init__(self, line_no: int, detail: str = ""):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {detail}" if detail else f"line {line_no}")


class SchemaError(ValueError):
    """A required field is missing."""


class EmptySession(ValueError):
    """The log contains a header but no events."""


@dataclass(frozen=True)
class SlideMeta:
    slide_id: str
    width_px: int
    height_px: int
    native_magnification: float
    microns_per_pixel: Optional[float] = None

    def to_json(self) -> dict:
        obj: dict[str, Any] = {
            "slide_id": self.slide_id,
            "width_px": self.width_px,
            "height_px": self.height_px,
            "native_magnification": self.native_magnification,
        }
        if self.microns_per_pixel is not None:
            obj["microns_per_pixel"] = self.microns_per_pixel
        return obj


@dataclass(frozen=True)
class ViewportEvent:
    t_ms: int
    center_x: float
    center_y: float
    magnification: float
    kind: Optional[str] = None

    def to_json(self) -> dict:
        obj: dict[str, Any] = {
            "t_ms": self.t_ms,
            "center_x": self.center_x,
            "center_y": self.center_y,
            "magnification": self.magnification,
        }
        if self.kind is not None:
            obj["kind"] = self.kind
        return obj


@dataclass(frozen=True)
class SessionLog:
    session_id: str
    pathologist_id: str
    slide: SlideMeta
    events: tuple[ViewportEvent, ...]
    annotations: Optional[dict] = None


@dataclass(frozen=True)
class Violation:
    """One failed invariant; violations are data, not exceptions."""

    rule: str
    field: str
    event_index: Optional[int]
    detail: str


def _require(obj: dict, key: str, line_no: int):
    if key not in obj:
        raise SchemaError(f"line {line_no}: missing required field '{key}'")
    return obj[key]


def _as_int(value, key: str, line_no: int) -> int:
    # bool is an int subclass; reject it explicitly
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MalformedLine(line_no, f"field '{key}' must be a number, got {value!r}")
    if isinstance(value, float) and not value.is_integer():
        raise MalformedLine(line_no, f"field '{key}' must be an integer, got {value!r}")
    return int(value)


def _as_number(value, key: str, line_no: int) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MalformedLine(line_no, f"field '{key}' must be a number, got {value!r}")
    return float(value)


def parse_session_log(text: str) -> SessionLog:
    """Parse a JSONL document into a SessionLog.

    Events are sorted by ``t_ms``; the sort is stable, so samples with equal
    timestamps keep their input order. Unknown fields are ignored. Raises
    MalformedLine / SchemaError / EmptySession.
    """
    numbered = [(i, line) for i, line in enumerate(text.splitlines(), start=1) if line.strip()]
    if not numbered:
        raise SchemaError("empty document")

    header_no, header_line = numbered[0]
    try:
        header = json.loads(header_line)
    except json.JSONDecodeError as exc:
        raise MalformedLine(header_no, str(exc)) from exc
    if not isinstance(header, dict):
        raise MalformedLine(header_no, "header must be a JSON object")

    slide_obj = _require(header, "slide", header_no)
    if not isinstance(slide_obj, dict):
        raise MalformedLine(header_no, "'slide' must be a JSON object")
    slide = SlideMeta(
        slide_id=str(_require(slide_obj, "slide_id", header_no)),
        width_px=_as_int(_require(slide_obj, "width_px", header_no), "width_px", header_no),
        height_px=_as_int(_require(slide_obj, "height_px", header_no), "height_px", header_no),
        native_magnification=_as_number(
            _require(slide_obj, "native_magnification", header_no), "native_magnification", header_no
        ),
        microns_per_pixel=(
            _as_number(slide_obj["microns_per_pixel"], "microns_per_pixel", header_no)
            if slide_obj.get("microns_per_pixel") is not None
            else None
        ),
    )

    events: list[ViewportEvent] = []
    for line_no, line in numbered[1:]:
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedLine(line_no, str(exc)) from exc
        if not isinstance(obj, dict):
            raise MalformedLine(line_no, "event must be a JSON object")
        kind = obj.get("kind")
        if kind is not None and kind not in EVENT_KINDS:
            raise MalformedLine(line_no, f"unknown event kind {kind!r}")
        events.append(
            ViewportEvent(
                t_ms=_as_int(_require(obj, "t_ms", line_no), "t_ms", line_no),
                center_x=_as_number(_require(obj, "center_x", line_no), "center_x", line_no),
                center_y=_as_number(_require(obj, "center_y", line_no), "center_y", line_no),
                magnification=_as_number(
                    _require(obj, "magnification", line_no), "magnification", line_no
                ),
                kind=kind,
            )
        )

    if not events:
        raise EmptySession(f"session {header.get('session_id')!r} has no events")

    events.sort(key=lambda e: e.t_ms)  # stable: equal timestamps keep input order
    return SessionLog(
        session_id=str(_require(header, "session_id", header_no)),
        pathologist_id=str(_require(header, "pathologist_id", header_no)),
        slide=slide,
        events=tuple(events),
        annotations=header.get("annotations"),
    )


def serialize_session_log(log: SessionLog) -> str:
    """Emit the canonical JSONL form; parse(serialize(x)) == x for valid logs."""
    header: dict[str, Any] = {
        "session_id": log.session_id,
        "pathologist_id": log.pathologist_id,
        "slide": log.slide.to_json(),
    }
    if log.annotations is not None:
        header["annotations"] = log.annotations
    lines = [json.dumps(header, sort_keys=True)]
    lines.extend(json.dumps(e.to_json(), sort_keys=True) for e in log.events)
    return "\n".join(lines) + "\n"


def validate_session(log: SessionLog) -> list[Violation]:
    """Check every type invariant; returns an empty list for a valid session."""
    out: list[Violation] = []
    slide = log.slide
    if slide.width_px <= 0:
        out.append(Violation("NonPositiveDimension", "width_px", None, f"width_px={slide.width_px}"))
    if slide.height_px <= 0:
        out.append(Violation("NonPositiveDimension", "height_px", None, f"height_px={slide.height_px}"))
    if slide.native_magnification <= 0:
        out.append(
            Violation(
                "NonPositiveMagnification",
                "native_magnification",
                None,
                f"native_magnification={slide.native_magnification}",
            )
        )
    if not log.events:
        out.append(Violation("EmptySession", "events", None, "session has no events"))

    prev_t: Optional[int] = None
    for i, e in enumerate(log.events):
        if not 0 <= e.center_x <= slide.width_px:
            out.append(Violation("OutOfBounds", "center_x", i, f"center_x={e.center_x}"))
        if not 0 <= e.center_y <= slide.height_px:
            out.append(Violation("OutOfBounds", "center_y", i, f"center_y={e.center_y}"))
        if e.magnification <= 0:
            out.append(
                Violation("NonPositiveMagnification", "magnification", i, f"magnification={e.magnification}")
            )
        if prev_t is not None and e.t_ms < prev_t:
            out.append(Violation("NonMonotonicTime", "t_ms", i, f"t_ms={e.t_ms} after {prev_t}"))
        prev_t = e.t_ms
    return out
