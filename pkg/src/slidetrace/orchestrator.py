"""Three-stage diagnostic loop over one slide: thumbnail overview, proposed
region analyses, and a final structured summary.

The region proposer and the model endpoint are both pluggable contracts, so a
detector checkpoint, a file of pre-computed boxes, or a scripted mock all
drive the same loop. Per-region analyses are independent of each other by
construction (each gets the overview exchange plus its own turn only); the
final summary sees every successful exchange in region order. That keeps
results identical whether regions are analyzed sequentially or concurrently.
"""

from __future__ import annotations

import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

from .gateway import (
    DEFAULT_TASK,
    ChatTurn,
    DiagnosticInfo,
    EndpointFailure,
    ModelEndpoint,
    PromptContext,
    PromptStage,
    TagNotFound,
    UnclosedTag,
    build_prompt,
    parse_diagnostic_info,
    parse_tagged,
    send_with_retry,
)
from .geometry import Box
from .images import CropProvider, CropRequest, thumbnail_request
from .logs import SlideMeta
from .segmenter import centered_square

ORDER_POLICIES = ("forward", "reverse", "random")


class MissingSeed(ValueError):
    pass


class ParseFailure(ValueError):
    def __init__(self, stage: str, detail: str):
        self.stage = stage
        super().__init__(f"{stage}: {detail}")


@dataclass(frozen=True)
class OrderPolicy:
    policy: str = "forward"
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.policy not in ORDER_POLICIES:
            raise ValueError(f"unknown order policy {self.policy!r}")


def permute_rois(rois: Sequence, policy: OrderPolicy) -> list:
    """Reorder proposals: identity, exact reversal, or a seeded shuffle."""
    items = list(rois)
    if policy.policy == "forward":
        return items
    if policy.policy == "reverse":
        return items[::-1]
    if policy.seed is None:
        raise MissingSeed("random order requires a seed")
    random.Random(policy.seed).shuffle(items)
    return items


class RegionProposer(Protocol):
    def propose(self, slide: SlideMeta, thumbnail) -> list[tuple[Box, float]]: ...


class StaticProposer:
    """Serves a fixed proposal list, e.g. pre-computed detector output."""

    def __init__(self, proposals: Sequence[tuple[Box, float]]):
        self.proposals = list(proposals)

    def propose(self, slide: SlideMeta, thumbnail) -> list[tuple[Box, float]]:
        return list(self.proposals)

    @classmethod
    def from_file(cls, path: str | Path) -> "StaticProposer":
        entries = json.loads(Path(path).read_text())
        return cls([(Box.from_json(e["box"]), float(e.get("score", 1.0))) for e in entries])


@dataclass(frozen=True)
class CaseCost:
    input_tokens: int = 0
    output_tokens: int = 0
    input_cost: float = 0.0
    output_cost: float = 0.0
    calls: int = 0

    def to_json(self) -> dict:
        return {
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "input_cost": self.input_cost,
            "output_cost": self.output_cost,
            "calls": self.calls,
        }


@dataclass(frozen=True)
class CaseResult:
    slide_id: str
    overview_impression: str
    roi_analyses: tuple[tuple[Box, str], ...]
    final_impression: str
    recommendations: str
    diagnostic: DiagnosticInfo
    cost: CaseCost
    latency_ms: int
    flags: tuple[str, ...] = ()
    roi_failures: tuple[int, ...] = ()

    def to_json(self) -> dict:
        return {
            "slide_id": self.slide_id,
            "overview_impression": self.overview_impression,
            "roi_analyses": [{"box": box.to_json(), "text": text} for box, text in self.roi_analyses],
            "final_impression": self.final_impression,
            "recommendations": self.recommendations,
            "diagnostic": self.diagnostic.to_json(),
            "cost": self.cost.to_json(),
            "latency_ms": self.latency_ms,
            "flags": list(self.flags),
            "roi_failures": list(self.roi_failures),
        }


def case_result_to_json(result: CaseResult) -> str:
    """Canonical serialization; byte-stable for identical results."""
    return json.dumps(result.to_json(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _select_top(proposals: Sequence[tuple[Box, float]], cap: Optional[int]) -> list[tuple[Box, float]]:
    if cap is None or len(proposals) <= cap:
        return list(proposals)
    ranked = sorted(range(len(proposals)), key=lambda i: (-proposals[i][1], i))[:cap]
    return [proposals[i] for i in sorted(ranked)]  # keep detector order among the kept


def run_case(
    slide: SlideMeta,
    proposer: RegionProposer,
    endpoint: ModelEndpoint,
    provider: CropProvider,
    order: OrderPolicy = OrderPolicy(),
    cap: Optional[int] = None,
    task: str = DEFAULT_TASK,
    crop_px: int = 1024,
    max_concurrency: int = 1,
    retry_attempts: int = 3,
    sleep: Callable[[float], None] = lambda s: None,
) -> CaseResult:
    """Run overview, capped+ordered region analyses, and the final summary.

    A region whose endpoint call still fails after retries is recorded in
    ``roi_failures`` and skipped; the case carries on. ``cap`` bounds the
    number of region calls, so total endpoint calls are at most cap + 2.
    """
    flags: list[str] = []
    records_before = len(endpoint.call_records)

    thumbnail = provider.get_crop(thumbnail_request(slide, crop_px))
    overview_turns = build_prompt(PromptStage.OVERVIEW, PromptContext(task=task, thumbnail=thumbnail))
    overview_reply = send_with_retry(endpoint, overview_turns, attempts=retry_attempts, sleep=sleep)
    try:
        overview_impression = parse_tagged(overview_reply, "impression")
    except (TagNotFound, UnclosedTag) as exc:
        raise ParseFailure("overview", str(exc)) from exc
    base_history = list(overview_turns) + [ChatTurn("model", overview_reply)]

    proposals = proposer.propose(slide, thumbnail)
    if not proposals:
        flags.append("proposer_empty")
    rois = [box for box, _ in permute_rois(_select_top(proposals, cap), order)]

    def analyze(box: Box) -> tuple[list[ChatTurn], Optional[str]]:
        roi_crop = provider.get_crop(CropRequest(slide.slide_id, box, crop_px))
        cyto_box = centered_square(slide, box.cx, box.cy, float(crop_px))
        cyto_crop = provider.get_crop(CropRequest(slide.slide_id, cyto_box, crop_px))
        turns = build_prompt(
            PromptStage.ROI_ANALYSIS, PromptContext(roi_crop=roi_crop, cyto_crop=cyto_crop)
        )
        try:
            reply = send_with_retry(endpoint, base_history + turns, attempts=retry_attempts, sleep=sleep)
        except EndpointFailure:
            reply = None
        return turns, reply

    if max_concurrency > 1 and len(rois) > 1:
        with ThreadPoolExecutor(max_workers=max_concurrency) as pool:
            outcomes = list(pool.map(analyze, rois))
    else:
        outcomes = [analyze(box) for box in rois]

    analyses: list[tuple[Box, str]] = []
    failures: list[int] = []
    history = list(base_history)
    for i, (box, (turns, reply)) in enumerate(zip(rois, outcomes)):
        if reply is None:
            failures.append(i)
            continue
        analyses.append((box, reply))
        history.extend(turns)
        history.append(ChatTurn("model", reply))
    if failures:
        history.append(
            ChatTurn("user", f"Note: {len(analyses)} of {len(rois)} regions were analyzed successfully.")
        )

    final_turns = build_prompt(PromptStage.FINAL_SUMMARY, PromptContext())
    final_reply = send_with_retry(endpoint, history + final_turns, attempts=retry_attempts, sleep=sleep)
    try:
        final_impression = parse_tagged(final_reply, "final_impression")
        recommendations = parse_tagged(final_reply, "recommendations")
        diagnostic = parse_diagnostic_info(final_reply)
    except ValueError as exc:
        raise ParseFailure("final_summary", str(exc)) from exc

    new_records = endpoint.call_records[records_before:]
    cost = CaseCost(
        input_tokens=sum(r.input_tokens for r in new_records),
        output_tokens=sum(r.output_tokens for r in new_records),
        input_cost=sum(r.input_cost for r in new_records),
        output_cost=sum(r.output_cost for r in new_records),
        calls=len(new_records),
    )
    return CaseResult(
        slide_id=slide.slide_id,
        overview_impression=overview_impression,
        roi_analyses=tuple(analyses),
        final_impression=final_impression,
        recommendations=recommendations,
        diagnostic=diagnostic,
        cost=cost,
        latency_ms=sum(r.latency_ms for r in new_records),
        flags=tuple(flags),
        roi_failures=tuple(failures),
    )
