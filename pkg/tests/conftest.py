from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from slidetrace.logs import SessionLog, SlideMeta, ViewportEvent


@pytest.fixture
def slide() -> SlideMeta:
    return SlideMeta(
        slide_id="S1",
        width_px=20000,
        height_px=10000,
        native_magnification=40.0,
        microns_per_pixel=0.25,
    )


def make_session(slide: SlideMeta, events, session_id="sess-1", pathologist_id="p1") -> SessionLog:
    return SessionLog(
        session_id=session_id,
        pathologist_id=pathologist_id,
        slide=slide,
        events=tuple(events),
    )


def hold(t0_ms: int, t1_ms: int, cx: float, cy: float, mag: float, step_ms: int = 100):
    """Samples of one held viewport every step_ms from t0 through t1 inclusive."""
    return [
        ViewportEvent(t_ms=t, center_x=cx, center_y=cy, magnification=mag)
        for t in range(t0_ms, t1_ms + 1, step_ms)
    ]


def pan(t0_ms: int, cx0: float, cy0: float, cx1: float, cy1: float, mag: float, steps: int, step_ms: int = 100):
    """Samples moving linearly from (cx0, cy0) to (cx1, cy1) over `steps` transitions."""
    return [
        ViewportEvent(
            t_ms=t0_ms + k * step_ms,
            center_x=cx0 + (cx1 - cx0) * k / steps,
            center_y=cy0 + (cy1 - cy0) * k / steps,
            magnification=mag,
        )
        for k in range(steps + 1)
    ]
