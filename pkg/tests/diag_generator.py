"""Random generator for diagnostic-info response blocks.

Fills the final-summary response grammar with randomized field values and
surface variation (quotes, boolean casing, list spacing, surrounding prose)
while honoring the cross-field invariants, so every produced string must
parse. Returns the string together with the values it encodes.
"""

from __future__ import annotations

import random

_PROSE = [
    "",
    "Overall this is a well-prepared section. ",
    "Analysis follows.\n",
    "The regions were reviewed in order.\n\n",
]

_TAILS = ["", "\nThank you.", "\n\nEnd of report.", " trailing remark"]


def _fmt_bool(value: bool, rng: random.Random) -> str:
    word = "true" if value else "false"
    return rng.choice([word, word.capitalize(), word.upper()])


def _fmt_enum(value: str, rng: random.Random) -> str:
    quoted = rng.choice(['"{}"', "'{}'", "{}"])
    cased = rng.choice([value, value.lower()])
    return quoted.format(cased)


def _fmt_list(values: list[int], rng: random.Random) -> str:
    if not values:
        return "[]"
    sep = rng.choice([",", ", ", " , "])
    return "[" + sep.join(str(v) for v in values) + "]"


def generate_diagnostic_response(rng: random.Random) -> tuple[str, dict]:
    pt_or_ln = rng.choice(["PT", "LN"])
    t_stage = rng.randint(1, 4) if pt_or_ln == "PT" else 0
    positive = rng.random() < 0.5
    positive_regions = sorted(rng.sample(range(1, 9), rng.randint(1, 4))) if positive else []
    suspicious_regions = sorted(rng.sample(range(1, 9), rng.randint(0, 3)))

    lines = [
        f"PT_or_LN: {_fmt_enum(pt_or_ln, rng)}",
        f"t_stage: {t_stage}",
        f"lymph_node_positive: {_fmt_bool(positive, rng)}",
        f"positive_regions: {_fmt_list(positive_regions, rng)}",
        f"suspicious_regions: {_fmt_list(suspicious_regions, rng)}",
    ]
    if rng.random() < 0.3:
        lines.insert(rng.randint(0, len(lines)), "note: generated fixture line")

    text = (
        rng.choice(_PROSE)
        + "<final_impression>No definitive carcinoma identified.</final_impression>\n"
        + "<recommendations>Correlate with levels.</recommendations>\n"
        + "<diagnostic_info>\n"
        + "\n".join(lines)
        + "\n</diagnostic_info>"
        + rng.choice(_TAILS)
    )
    expected = {
        "pt_or_ln": pt_or_ln,
        "t_stage": t_stage,
        "lymph_node_positive": positive,
        "positive_regions": tuple(positive_regions),
        "suspicious_regions": tuple(suspicious_regions),
    }
    return text, expected
