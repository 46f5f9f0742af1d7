"""Assemble standardized actions, rationales, and review decisions into
conversational training rounds, and compute corpus statistics.

A round stores both halves of a zoom exchange (the decision to zoom and the
findings) as two text fields on one record; consumers that want two turns can
split on those fields. Word counts are whitespace-delimited tokens over the
per-round text (why-zoom plus findings).
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .images import ImageRef, crop_relpath
from .logs import SlideMeta
from .segmenter import PEEK, VlmAction

RATIONALE_SOURCES = ("model_draft", "expert_edited")
VERDICTS = ("accepted", "edited", "rejected")

_TOKEN_RE = re.compile(r"<(\d+(?:\.\d+)?)x-(inspect|peek)>")


class AlignmentError(KeyError):
    def __init__(self, action_id: str, detail: str):
        self.action_id = action_id
        super().__init__(f"action {action_id!r}: {detail}")


@dataclass(frozen=True)
class Rationale:
    thumbnail_impression: str
    why_zoom: str
    findings: str
    sentences: tuple[str, ...]
    source: str = "model_draft"

    def __post_init__(self) -> None:
        if self.source not in RATIONALE_SOURCES:
            raise ValueError(f"unknown rationale source {self.source!r}")

    def to_json(self) -> dict:
        return {
            "thumbnail_impression": self.thumbnail_impression,
            "why_zoom": self.why_zoom,
            "findings": self.findings,
            "sentences": list(self.sentences),
            "source": self.source,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Rationale":
        return cls(
            thumbnail_impression=obj.get("thumbnail_impression", ""),
            why_zoom=obj.get("why_zoom", ""),
            findings=obj.get("findings", ""),
            sentences=tuple(obj.get("sentences", ())),
            source=obj.get("source", "model_draft"),
        )


@dataclass(frozen=True)
class ReviewDecision:
    verdict: str
    deleted_sentence_indices: tuple[int, ...] = ()
    edit_durations_ms: int = 0
    reviewer_id: str = ""

    def __post_init__(self) -> None:
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict,
            "deleted_sentence_indices": list(self.deleted_sentence_indices),
            "edit_durations_ms": self.edit_durations_ms,
            "reviewer_id": self.reviewer_id,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ReviewDecision":
        return cls(
            verdict=obj["verdict"],
            deleted_sentence_indices=tuple(obj.get("deleted_sentence_indices", ())),
            edit_durations_ms=int(obj.get("edit_durations_ms", 0)),
            reviewer_id=obj.get("reviewer_id", ""),
        )


@dataclass(frozen=True)
class CotRound:
    round_id: str
    session_id: str
    action: VlmAction
    rationale: Rationale
    decision: ReviewDecision
    order_index: int

    def to_json(self) -> dict:
        return {
            "round_id": self.round_id,
            "session_id": self.session_id,
            "action": self.action.to_json(),
            "rationale": self.rationale.to_json(),
            "decision": self.decision.to_json(),
            "order_index": self.order_index,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CotRound":
        return cls(
            round_id=obj["round_id"],
            session_id=obj["session_id"],
            action=VlmAction.from_json(obj["action"]),
            rationale=Rationale.from_json(obj["rationale"]),
            decision=ReviewDecision.from_json(obj["decision"]),
            order_index=int(obj["order_index"]),
        )


@dataclass(frozen=True)
class RoundSplit:
    """Training rounds plus the audit split holding rejected rounds."""

    training: tuple[CotRound, ...]
    audit: tuple[CotRound, ...]


@dataclass(frozen=True)
class DatasetStats:
    session_count: int
    round_count: int
    mean_words_inspect: Optional[float]
    mean_words_peek: Optional[float]
    rounds_per_kind: dict
    rounds_per_pathologist: dict
    sankey: tuple[tuple[str, str, int], ...]

    def to_json(self) -> dict:
        obj: dict = {
            "session_count": self.session_count,
            "round_count": self.round_count,
            "rounds_per_kind": dict(self.rounds_per_kind),
            "rounds_per_pathologist": dict(self.rounds_per_pathologist),
            "sankey": [list(t) for t in self.sankey],
        }
        if self.mean_words_inspect is not None:
            obj["mean_words_inspect"] = self.mean_words_inspect
        if self.mean_words_peek is not None:
            obj["mean_words_peek"] = self.mean_words_peek
        return obj


def assemble_rounds(
    session_id: str,
    actions: Mapping[str, VlmAction],
    rationales: Mapping[str, Rationale],
    decisions: Mapping[str, ReviewDecision],
) -> RoundSplit:
    """Join the three aligned inputs into rounds, splitting rejects into audit.

    Every action id must appear in all three mappings and vice versa;
    ``order_index`` follows the actions' start times.
    """
    for action_id in actions:
        if action_id not in rationales:
            raise AlignmentError(action_id, "no rationale")
        if action_id not in decisions:
            raise AlignmentError(action_id, "no decision")
    for source_name, mapping in (("rationale", rationales), ("decision", decisions)):
        for action_id in mapping:
            if action_id not in actions:
                raise AlignmentError(action_id, f"{source_name} has no matching action")

    ordered = sorted(actions.items(), key=lambda kv: (kv[1].t_start_ms, kv[0]))
    training: list[CotRound] = []
    audit: list[CotRound] = []
    for order_index, (action_id, action) in enumerate(ordered):
        decision = decisions[action_id]
        round_ = CotRound(
            round_id=action_id,
            session_id=session_id,
            action=action,
            rationale=rationales[action_id],
            decision=decision,
            order_index=order_index,
        )
        (audit if decision.verdict == "rejected" else training).append(round_)
    return RoundSplit(training=tuple(training), audit=tuple(audit))


def _format_bin(power: float) -> str:
    return str(int(power)) if float(power).is_integer() else str(power)


def command_token(magnification_bin: float, kind: str) -> str:
    """Behavioral command token, e.g. ``<10x-inspect>`` or ``<40x-peek>``."""
    word = "peek" if kind == PEEK else "inspect"
    return f"<{_format_bin(magnification_bin)}x-{word}>"


def parse_command_token(token: str) -> tuple[float, str]:
    m = _TOKEN_RE.fullmatch(token)
    if m is None:
        raise ValueError(f"not a command token: {token!r}")
    return float(m.group(1)), m.group(2)


def _round_text(rationale: Rationale) -> str:
    return "\n\n".join(part for part in (rationale.why_zoom, rationale.findings) if part)


def emit_conversation(
    rounds: Sequence[CotRound],
    slide_meta: SlideMeta,
    task: str,
    crops: Optional[Mapping[str, ImageRef]] = None,
) -> str:
    """Render one session's rounds as a conversational JSON document.

    Output is deterministic (sorted keys, fixed separators) so re-emission is
    byte-identical. Image references are relative crop paths plus a content
    hash when the crop index supplies one; pixels are never embedded.
    """
    turns: list[dict] = [{"role": "system", "text": task}]
    for round_ in rounds:
        path = crop_relpath(slide_meta.slide_id, round_.action.box)
        image: dict = {"path": path}
        if crops and path in crops:
            image["content_hash"] = crops[path].content_hash
        turns.append(
            {
                "role": "user",
                "text": command_token(round_.action.magnification_bin, round_.action.kind),
                "box": round_.action.box.to_json(),
                "images": [image],
            }
        )
        turns.append({"role": "model", "text": _round_text(round_.rationale)})
    doc = {
        "session_id": rounds[0].session_id if rounds else None,
        "slide": slide_meta.to_json(),
        "turns": turns,
    }
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def round_word_count(round_: CotRound) -> int:
    return len(_round_text(round_.rationale).split())


def dataset_stats(
    rounds: Sequence[CotRound],
    session_pathologists: Optional[Mapping[str, str]] = None,
    tags: Optional[Mapping[str, tuple[Sequence[str], Sequence[str]]]] = None,
) -> DatasetStats:
    """Corpus statistics over all sessions' rounds.

    ``tags`` maps round ids to their (box tags, 40x tags) classification; when
    present it feeds the flow triples (action kind -> tag -> count) that back
    the distribution diagram. Means over empty kinds are reported absent.
    """
    per_kind: Counter = Counter()
    per_pathologist: Counter = Counter()
    inspect_words: list[int] = []
    peek_words: list[int] = []
    sankey: Counter = Counter()

    for round_ in rounds:
        per_kind[round_.action.kind] += 1
        if session_pathologists and round_.session_id in session_pathologists:
            per_pathologist[session_pathologists[round_.session_id]] += 1
        words = round_word_count(round_)
        group = "peek" if round_.action.kind == PEEK else "inspect"
        (peek_words if group == "peek" else inspect_words).append(words)
        if tags and round_.round_id in tags:
            box_tags, cell_tags = tags[round_.round_id]
            for tag in box_tags if group == "inspect" else cell_tags:
                sankey[(group, tag)] += 1

    sessions = {r.session_id for r in rounds}
    return DatasetStats(
        session_count=len(sessions),
        round_count=len(rounds),
        mean_words_inspect=sum(inspect_words) / len(inspect_words) if inspect_words else None,
        mean_words_peek=sum(peek_words) / len(peek_words) if peek_words else None,
        rounds_per_kind=dict(per_kind),
        rounds_per_pathologist=dict(per_pathologist),
        sankey=tuple(sorted((src, dst, count) for (src, dst), count in sankey.items())),
    )
