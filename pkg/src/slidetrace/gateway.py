"""Diagnostic prompt construction, tagged-response grammars, and the
model-endpoint contract.

Prompt text lives in byte-stable resource files under ``templates/``; the
builders only fill the named slots, so output for a fixed context is fully
deterministic. Response parsers are lenient about whitespace, quoting, and
boolean casing but strict about enum domains, because the enums gate
downstream logic.

Vendor specifics (SDKs, auth, transport) stay out of this module: an adapter
implements ``ModelEndpoint`` and is configured through environment variables
whose names are documented by the adapter. Values are never logged here.
"""

from __future__ import annotations

import logging
import re
import time
from dataclasses import dataclass
from enum import Enum
from importlib.resources import files
from typing import Callable, Optional, Protocol, Sequence

from .images import ImageRef

logger = logging.getLogger(__name__)

DEFAULT_TASK = "This is an H&E WSI of a CRC case. The task is to find all positive lymph nodes."

BOX_CLASSES = (
    "Tumor deposit",
    "Gland formation",
    "Tumor stroma",
    "Necrosis",
    "Germinal center",
    "Lymphoid follicle",
    "Medullary cord",
    "Sinus",
    "Paracortex",
    "Sinus histiocytosis",
    "Fibrosis",
    "Congestion",
    "Hemorrhage",
    "Fatty replacement",
    "other",
)

CELL_CLASSES_40X = (
    "Tumor cell",
    "Mitotic figure",
    "Atypical glandular cell",
    "Signet ring cell",
    "Lymphocyte",
    "Plasma cell",
    "Macrophage",
    "Endothelial cell",
    "Fibroblast",
    "Erythrocyte",
    "Fat cell",
    "Extracellular matrix",
    "Apoptotic body",
    "Dead cell",
    "Inflammatory cell",
    "other",
)


class PromptStage(Enum):
    OVERVIEW = "overview"
    ROI_ANALYSIS = "roi_analysis"
    FINAL_SUMMARY = "final_summary"
    MULTILABEL_CLASSIFY = "multilabel_classify"


_TEMPLATE_FILES = {
    PromptStage.OVERVIEW: "overview.txt",
    PromptStage.ROI_ANALYSIS: "roi_analysis.txt",
    PromptStage.FINAL_SUMMARY: "final_summary.txt",
    PromptStage.MULTILABEL_CLASSIFY: "multilabel.txt",
}


def load_template(stage: PromptStage) -> str:
    return files("slidetrace.templates").joinpath(_TEMPLATE_FILES[stage]).read_text(encoding="utf-8")


class MissingContext(ValueError):
    def __init__(self, field_name: str):
        self.field = field_name
        super().__init__(f"prompt context is missing required field '{field_name}'")


class TagNotFound(ValueError):
    def __init__(self, tag: str):
        self.tag = tag
        super().__init__(f"no <{tag}> tag in response")


class UnclosedTag(ValueError):
    def __init__(self, tag: str):
        self.tag = tag
        super().__init__(f"<{tag}> opened but never closed")


class FieldMissing(ValueError):
    def __init__(self, key: str):
        self.key = key
        super().__init__(f"diagnostic block is missing '{key}'")


class FieldUnparseable(ValueError):
    def __init__(self, key: str, detail: str = ""):
        self.key = key
        super().__init__(f"cannot parse diagnostic field '{key}'" + (f": {detail}" if detail else ""))


class MissingDelimiter(ValueError):
    pass


@dataclass(frozen=True)
class ChatTurn:
    role: str  # system | user | model
    text: str
    images: tuple[ImageRef, ...] = ()

    def __post_init__(self) -> None:
        if self.role not in ("system", "user", "model"):
            raise ValueError(f"unknown role {self.role!r}")
        if self.images and self.role != "user":
            raise ValueError("images may only be attached to user turns")


@dataclass(frozen=True)
class PromptContext:
    """Fields the stage templates draw from; each stage needs only a subset."""

    task: Optional[str] = None
    roi_index: Optional[int] = None
    thumbnail: Optional[ImageRef] = None
    roi_crop: Optional[ImageRef] = None
    cyto_crop: Optional[ImageRef] = None
    conversation_text: Optional[str] = None


def _need(ctx: PromptContext, field_name: str):
    value = getattr(ctx, field_name)
    if value is None:
        raise MissingContext(field_name)
    return value


def build_prompt(stage: PromptStage, ctx: PromptContext) -> list[ChatTurn]:
    """Render the stage template against the context as user turns.

    For ROI analysis the broad region image comes first and the
    center max-magnification crop second, matching the template wording.
    """
    template = load_template(stage)
    if stage is PromptStage.OVERVIEW:
        text = template.replace("{task}", _need(ctx, "task"))
        return [ChatTurn("user", text, (_need(ctx, "thumbnail"),))]
    if stage is PromptStage.ROI_ANALYSIS:
        roi = _need(ctx, "roi_crop")
        cyto = _need(ctx, "cyto_crop")
        return [ChatTurn("user", template, (roi, cyto))]
    if stage is PromptStage.FINAL_SUMMARY:
        return [ChatTurn("user", template)]
    text = template.replace("{text}", _need(ctx, "conversation_text"))
    return [ChatTurn("user", text)]


def parse_tagged(text: str, tag: str) -> str:
    """Content of the first well-formed ``<tag>...</tag>`` span, trimmed."""
    open_tok, close_tok = f"<{tag}>", f"</{tag}>"
    start = text.find(open_tok)
    if start < 0:
        raise TagNotFound(tag)
    end = text.find(close_tok, start + len(open_tok))
    if end < 0:
        raise UnclosedTag(tag)
    return text[start + len(open_tok) : end].strip()


@dataclass(frozen=True)
class DiagnosticInfo:
    pt_or_ln: str  # "PT" | "LN"
    t_stage: int
    lymph_node_positive: bool
    positive_regions: tuple[int, ...]
    suspicious_regions: tuple[int, ...]

    def to_json(self) -> dict:
        return {
            "pt_or_ln": self.pt_or_ln,
            "t_stage": self.t_stage,
            "lymph_node_positive": self.lymph_node_positive,
            "positive_regions": list(self.positive_regions),
            "suspicious_regions": list(self.suspicious_regions),
        }


_DIAG_KEYS = ("PT_or_LN", "t_stage", "lymph_node_positive", "positive_regions", "suspicious_regions")


def _find_field(block: str, key: str) -> str:
    m = re.search(rf"(?im)^[^\S\n]*\"?{re.escape(key)}\"?\s*:\s*(.*?)\s*$", block)
    if m is None:
        raise FieldMissing(key)
    return m.group(1).strip()


def _strip_quotes(raw: str) -> str:
    return raw.strip().strip(",").strip().strip("\"'").strip()


def _parse_int_list(raw: str, key: str) -> tuple[int, ...]:
    m = re.search(r"\[([^\]]*)\]", raw)
    if m is None:
        raise FieldUnparseable(key, f"expected a [..] list, got {raw!r}")
    body = m.group(1).strip()
    if not body:
        return ()
    try:
        return tuple(int(_strip_quotes(part)) for part in body.split(","))
    except ValueError as exc:
        raise FieldUnparseable(key, str(exc)) from exc


def parse_diagnostic_info(text: str) -> DiagnosticInfo:
    """Parse the ``<diagnostic_info>`` block from a final-summary response.

    Tolerates surrounding prose, quoted values, and boolean case variation.
    Enum domains and the cross-field invariants (t_stage 0 for LN sections,
    no positive regions on a negative call) are enforced strictly.
    """
    block = parse_tagged(text, "diagnostic_info")

    raw = {key: _find_field(block, key) for key in _DIAG_KEYS}

    pt_or_ln = _strip_quotes(raw["PT_or_LN"]).upper()
    if pt_or_ln not in ("PT", "LN"):
        raise FieldUnparseable("PT_or_LN", f"expected PT or LN, got {raw['PT_or_LN']!r}")

    try:
        t_stage = int(_strip_quotes(raw["t_stage"]))
    except ValueError as exc:
        raise FieldUnparseable("t_stage", raw["t_stage"]) from exc
    if not 0 <= t_stage <= 4:
        raise FieldUnparseable("t_stage", f"out of range 0-4: {t_stage}")
    if pt_or_ln == "LN" and t_stage != 0:
        raise FieldUnparseable("t_stage", "must be 0 for a lymph node section")

    flag = _strip_quotes(raw["lymph_node_positive"]).lower()
    if flag not in ("true", "false"):
        raise FieldUnparseable("lymph_node_positive", raw["lymph_node_positive"])
    positive = flag == "true"

    positive_regions = _parse_int_list(raw["positive_regions"], "positive_regions")
    suspicious_regions = _parse_int_list(raw["suspicious_regions"], "suspicious_regions")
    if not positive and positive_regions:
        raise FieldUnparseable("positive_regions", "non-empty list on a negative call")

    return DiagnosticInfo(pt_or_ln, t_stage, positive, positive_regions, suspicious_regions)


def _match_taxonomy(label: str, taxonomy: Sequence[str]) -> Optional[str]:
    needle = label.strip().lower()
    for entry in taxonomy:
        if entry.lower() == needle:
            return entry
    return None


def _parse_tag_side(side: str, taxonomy: Sequence[str]) -> list[str]:
    labels = [part for part in (p.strip() for p in side.split(",")) if part]
    if not labels:
        return ["other"]
    out = []
    for label in labels:
        canonical = _match_taxonomy(_strip_quotes(label), taxonomy)
        if canonical is None:
            logger.warning("unknown classification label %r mapped to 'other'", label)
            canonical = "other"
        out.append(canonical)
    return out


def parse_multilabel(
    text: str,
    box_taxonomy: Sequence[str] = BOX_CLASSES,
    cell_taxonomy: Sequence[str] = CELL_CLASSES_40X,
) -> tuple[list[str], list[str]]:
    """Split a ``box|40x`` classification reply into two canonical tag lists.

    Unknown labels map to "other" (with a warning record in the log); an
    empty side also becomes ["other"].
    """
    if "|" not in text:
        raise MissingDelimiter(f"no '|' delimiter in {text!r}")
    left, right = text.split("|", 1)
    return _parse_tag_side(left, box_taxonomy), _parse_tag_side(right, cell_taxonomy)


# --- endpoint contract -------------------------------------------------------


@dataclass(frozen=True)
class CostModel:
    """Unit prices plus the per-image token equivalent at the standard size."""

    input_token_price: float = 0.0
    output_token_price: float = 0.0
    image_token_equivalent: int = 0


@dataclass(frozen=True)
class CallRecord:
    input_tokens: int
    output_tokens: int
    input_cost: float
    output_cost: float
    latency_ms: int


class TransientEndpointError(RuntimeError):
    """Transport-level failure worth retrying."""


class EndpointFailure(RuntimeError):
    """Raised once retries are exhausted."""


class ModelEndpoint(Protocol):
    """Text+images in, text out, with per-call accounting in ``call_records``."""

    cost: CostModel
    call_records: list[CallRecord]

    def send(self, turns: Sequence[ChatTurn]) -> str: ...


def estimate_tokens(turns: Sequence[ChatTurn], cost: CostModel) -> int:
    """Whitespace token count over all turn texts plus the image equivalents."""
    tokens = sum(len(t.text.split()) for t in turns)
    tokens += sum(len(t.images) for t in turns) * cost.image_token_equivalent
    return tokens


class ScriptedEndpoint:
    """Deterministic endpoint for tests and offline runs.

    ``rules`` is an ordered list of (anchor substring, response); the first
    anchor found in the final user turn wins. Token accounting uses the
    whitespace estimate, latency is constant, and every send is recorded.
    """

    def __init__(
        self,
        rules: Sequence[tuple[str, str]],
        default: Optional[str] = None,
        cost: CostModel = CostModel(),
        latency_ms: int = 0,
    ):
        self.rules = list(rules)
        self.default = default
        self.cost = cost
        self.latency_ms = latency_ms
        self.call_records: list[CallRecord] = []

    def _respond(self, turns: Sequence[ChatTurn]) -> str:
        prompt = turns[-1].text if turns else ""
        for anchor, response in self.rules:
            if anchor in prompt:
                return response
        if self.default is not None:
            return self.default
        raise TransientEndpointError(f"no scripted rule matches prompt {prompt[:60]!r}")

    def send(self, turns: Sequence[ChatTurn]) -> str:
        response = self._respond(turns)
        input_tokens = estimate_tokens(turns, self.cost)
        output_tokens = len(response.split())
        self.call_records.append(
            CallRecord(
                input_tokens=input_tokens,
                output_tokens=output_tokens,
                input_cost=input_tokens * self.cost.input_token_price,
                output_cost=output_tokens * self.cost.output_token_price,
                latency_ms=self.latency_ms,
            )
        )
        return response


def send_with_retry(
    endpoint: ModelEndpoint,
    turns: Sequence[ChatTurn],
    attempts: int = 3,
    base_delay_s: float = 0.25,
    sleep: Callable[[float], None] = time.sleep,
) -> str:
    """Send with exponential backoff on transient failures; at most ``attempts`` tries."""
    last: Exception | None = None
    for attempt in range(attempts):
        try:
            return endpoint.send(turns)
        except TransientEndpointError as exc:
            last = exc
            if attempt < attempts - 1:
                sleep(base_delay_s * 2**attempt)
    raise EndpointFailure(f"endpoint failed after {attempts} attempts") from last
