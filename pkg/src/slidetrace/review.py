"""Human-in-the-loop review: sentence segmentation, per-session task state,
and the append-only decision log.

Draft text is segmented into sentence *spans* that partition the original
string exactly, so joining untouched spans reproduces the draft byte for
byte. State is event-sourced: the JSONL decision log is the source of truth
and replaying it reconstructs a session's state exactly.
"""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

from .dataset import Rationale, ReviewDecision
from .metrics import REVISE, VERIFY, TimingRecord

# words whose trailing period does not end a sentence
ABBREVIATIONS = frozenset(
    {"e.g", "i.e", "vs", "etc", "no", "fig", "figs", "dr", "mr", "mrs", "st", "ca", "cf", "approx", "al"}
)

_TERMINATOR_RE = re.compile(r"[.!?]+")
_WORD_BEFORE_RE = re.compile(r"([A-Za-z][A-Za-z.]*)$")


class NoPendingTasks(LookupError):
    pass


class StaleTask(ValueError):
    pass


class InvalidIndices(ValueError):
    pass


def _is_abbreviation(text: str, terminator_start: int) -> bool:
    m = _WORD_BEFORE_RE.search(text[:terminator_start])
    if m is None:
        return False
    return m.group(1).rstrip(".").lower() in ABBREVIATIONS


def sentence_segment(text: str) -> list[str]:
    """Split text into sentence spans whose concatenation equals the input.

    A sentence ends at a run of ``. ! ?`` followed by whitespace and an
    uppercase letter, or at the end of the text. Trailing whitespace stays
    with the sentence it follows. Abbreviations such as "e.g." or "No."
    never split.
    """
    if not text:
        return []
    spans: list[str] = []
    start = 0
    n = len(text)
    for m in _TERMINATOR_RE.finditer(text):
        j = m.end()
        while j < n and text[j].isspace():
            j += 1
        at_end = j >= n
        if not at_end and (j == m.end() or not text[j].isupper()):
            continue  # needs whitespace then an uppercase start
        if _is_abbreviation(text, m.start()):
            continue
        spans.append(text[start:j])
        start = j
    if start < n:
        spans.append(text[start:])
    return spans


def segment_rationale(
    thumbnail_impression: str, why_zoom: str, findings: str
) -> tuple[Rationale, tuple[int, int, int]]:
    """Build a draft Rationale with span sentences plus per-panel span counts."""
    panels = [sentence_segment(p) for p in (thumbnail_impression, why_zoom, findings)]
    rationale = Rationale(
        thumbnail_impression=thumbnail_impression,
        why_zoom=why_zoom,
        findings=findings,
        sentences=tuple(s for panel in panels for s in panel),
        source="model_draft",
    )
    return rationale, (len(panels[0]), len(panels[1]), len(panels[2]))


@dataclass(frozen=True)
class ReviewTask:
    """One ROI served for review, with its sentence-segmented draft."""

    task_id: str
    case_id: str
    roi_index: int
    progress: str
    thumbnail: str
    roi_box: dict
    roi_crop: str
    cyto_crop: Optional[str]
    draft: Rationale
    panel_sentence_counts: tuple[int, int, int]
    served_at_ms: int

    def to_json(self) -> dict:
        return {
            "task_id": self.task_id,
            "case_id": self.case_id,
            "roi_index": self.roi_index,
            "progress": self.progress,
            "thumbnail": self.thumbnail,
            "roi_box": self.roi_box,
            "roi_crop": self.roi_crop,
            "cyto_crop": self.cyto_crop,
            "draft": self.draft.to_json(),
            "panel_sentence_counts": list(self.panel_sentence_counts),
            "served_at_ms": self.served_at_ms,
        }


def _now_ms() -> int:
    return int(time.time() * 1000)


def rebuild_panels(
    sentences: Sequence[str],
    panel_counts: Sequence[int],
    deleted_indices: Sequence[int],
    edited_sentences: Optional[Sequence[str]] = None,
) -> tuple[str, str, str]:
    """Reassemble the three panel texts after deletions and in-place edits.

    ``edited_sentences``, when given, must align one-to-one with the draft
    sentences; deletions are applied on top of it. With no edits or deletions
    the reassembly is byte-identical to the draft.
    """
    source = list(edited_sentences) if edited_sentences is not None else list(sentences)
    if len(source) != len(sentences):
        raise InvalidIndices(
            f"edited_sentences must align with the draft ({len(sentences)} sentences, got {len(source)})"
        )
    deleted = set(deleted_indices)
    for idx in deleted:
        if not 0 <= idx < len(sentences):
            raise InvalidIndices(f"deleted index {idx} out of range")
    panels: list[str] = []
    offset = 0
    for count in panel_counts:
        kept = [source[i] for i in range(offset, offset + count) if i not in deleted]
        panels.append("".join(kept))
        offset += count
    return panels[0], panels[1], panels[2]


@dataclass
class _TaskSpec:
    case_id: str
    roi_index: int
    thumbnail: str
    roi_box: dict
    roi_crop: str
    cyto_crop: Optional[str]
    draft: Rationale
    panel_counts: tuple[int, int, int]


class ReviewStore:
    """State of one reviewer session, derived from its decision log.

    Tasks come from ``<data_dir>/sessions/<session_id>.json``; every decision
    is appended to ``<data_dir>/decisions/<session_id>.jsonl`` and replayed on
    construction.
    """

    def __init__(
        self,
        data_dir: str | Path,
        session_id: str,
        reviewer_id: str = "reviewer",
        clock: Callable[[], int] = _now_ms,
    ):
        self.data_dir = Path(data_dir)
        self.session_id = session_id
        self.reviewer_id = reviewer_id
        self.clock = clock
        self.tasks = self._load_tasks()
        self.decisions: dict[str, dict] = {}
        self._open_task: Optional[ReviewTask] = None
        for event in self._read_log():
            self.decisions[event["task_id"]] = event

    # --- wiring ---------------------------------------------------------

    def _log_path(self) -> Path:
        return self.data_dir / "decisions" / f"{self.session_id}.jsonl"

    def _load_tasks(self) -> list[_TaskSpec]:
        path = self.data_dir / "sessions" / f"{self.session_id}.json"
        doc = json.loads(path.read_text())
        specs = []
        for i, entry in enumerate(doc["tasks"]):
            draft, counts = segment_rationale(
                entry.get("thumbnail_impression", ""),
                entry.get("why_zoom", ""),
                entry.get("findings", ""),
            )
            specs.append(
                _TaskSpec(
                    case_id=entry.get("case_id", doc.get("case_id", self.session_id)),
                    roi_index=int(entry.get("roi_index", i)),
                    thumbnail=entry.get("thumbnail", ""),
                    roi_box=entry.get("roi_box", {}),
                    roi_crop=entry.get("roi_crop", ""),
                    cyto_crop=entry.get("cyto_crop"),
                    draft=draft,
                    panel_counts=counts,
                )
            )
        specs.sort(key=lambda s: s.roi_index)
        return specs

    def _read_log(self) -> list[dict]:
        path = self._log_path()
        if not path.is_file():
            return []
        return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]

    def _append_log(self, event: dict) -> None:
        path = self._log_path()
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")

    # --- workflow ---------------------------------------------------------

    def _task_id(self, spec: _TaskSpec) -> str:
        return f"{self.session_id}:{spec.roi_index}"

    def pending(self) -> list[_TaskSpec]:
        return [s for s in self.tasks if self._task_id(s) not in self.decisions]

    def next_task(self) -> ReviewTask:
        """Serve the lowest-index undecided ROI; idempotent while it stays open."""
        if self._open_task is not None and self._open_task.task_id not in self.decisions:
            return self._open_task
        remaining = self.pending()
        if not remaining:
            raise NoPendingTasks(f"session {self.session_id!r} has no undecided tasks")
        spec = remaining[0]
        task = ReviewTask(
            task_id=self._task_id(spec),
            case_id=spec.case_id,
            roi_index=spec.roi_index,
            progress=f"{len(self.decisions) + 1} of {len(self.tasks)}",
            thumbnail=spec.thumbnail,
            roi_box=spec.roi_box,
            roi_crop=spec.roi_crop,
            cyto_crop=spec.cyto_crop,
            draft=spec.draft,
            panel_sentence_counts=spec.panel_counts,
            served_at_ms=self.clock(),
        )
        self._open_task = task
        return task

    def submit_decision(
        self,
        task_id: str,
        verdict: str,
        edited_sentences: Optional[Sequence[str]] = None,
        deleted_indices: Optional[Sequence[int]] = None,
    ) -> dict:
        """Record a decision for the open task and append it to the log.

        An "accepted" verdict with any deletion or text change is promoted to
        "edited". Rejected tasks carry no final rationale.
        """
        if self._open_task is None or self._open_task.task_id != task_id or task_id in self.decisions:
            raise StaleTask(f"task {task_id!r} is not the open task")
        task = self._open_task
        deleted = tuple(sorted(set(deleted_indices or ())))
        edited = list(edited_sentences) if edited_sentences is not None else None

        if verdict not in ("accepted", "edited", "rejected"):
            raise ValueError(f"unknown verdict {verdict!r}")
        if verdict != "rejected":
            changed_text = edited is not None and list(task.draft.sentences) != edited
            if deleted or changed_text:
                verdict = "edited"
            # raises InvalidIndices before anything is persisted
            rebuild_panels(task.draft.sentences, task.panel_sentence_counts, deleted, edited)
        else:
            for idx in deleted:
                if not 0 <= idx < len(task.draft.sentences):
                    raise InvalidIndices(f"deleted index {idx} out of range")

        event = {
            "task_id": task_id,
            "roi_index": task.roi_index,
            "verdict": verdict,
            "deleted_indices": list(deleted),
            "edited_sentences": edited,
            "served_at_ms": task.served_at_ms,
            "decided_at_ms": self.clock(),
            "reviewer_id": self.reviewer_id,
        }
        self._append_log(event)
        self.decisions[task_id] = event
        self._open_task = None
        return event

    # --- derived views ------------------------------------------------------

    def final_rationale(self, task_id: str) -> Optional[Rationale]:
        """Post-review rationale for a decided task; None when rejected."""
        event = self.decisions[task_id]
        if event["verdict"] == "rejected":
            return None
        spec = next(s for s in self.tasks if self._task_id(s) == task_id)
        thumb, why, findings = rebuild_panels(
            spec.draft.sentences,
            spec.panel_counts,
            event["deleted_indices"],
            event["edited_sentences"],
        )
        kept = [
            (event["edited_sentences"] or list(spec.draft.sentences))[i]
            for i in range(len(spec.draft.sentences))
            if i not in set(event["deleted_indices"])
        ]
        source = "model_draft" if event["verdict"] == "accepted" else "expert_edited"
        return Rationale(thumb, why, findings, tuple(kept), source)

    def decision_for(self, task_id: str) -> ReviewDecision:
        event = self.decisions[task_id]
        return ReviewDecision(
            verdict=event["verdict"],
            deleted_sentence_indices=tuple(event["deleted_indices"]),
            edit_durations_ms=event["decided_at_ms"] - event["served_at_ms"],
            reviewer_id=event["reviewer_id"],
        )

    def timing_records(self) -> list[TimingRecord]:
        """Verify/revise timings from the log; rejects carry no review mode."""
        records = []
        for task_id, event in sorted(self.decisions.items(), key=lambda kv: kv[1]["roi_index"]):
            if event["verdict"] == "rejected":
                continue
            records.append(
                TimingRecord(
                    round_id=task_id,
                    mode=VERIFY if event["verdict"] == "accepted" else REVISE,
                    t_write_ms=event["decided_at_ms"] - event["served_at_ms"],
                )
            )
        return records

    def export_log(self) -> str:
        # decisions dict preserves append order, both live and replayed
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.decisions.values())

    def state_fingerprint(self) -> dict:
        """Replay-comparable snapshot of everything derived from the log."""
        finals = {}
        for task_id in self.decisions:
            rationale = self.final_rationale(task_id)
            finals[task_id] = None if rationale is None else rationale.to_json()
        return {
            "decisions": dict(sorted(self.decisions.items())),
            "pending": [self._task_id(s) for s in self.pending()],
            "final_rationales": finals,
        }
