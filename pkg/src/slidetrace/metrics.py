"""Evaluation mathematics: classification metrics, behavior matching, bootstrap
confidence intervals, paired significance testing, reference BCE, and the
timing-study summary.

Ratios with a zero denominator are reported as *absent* (the key is omitted
from the returned mapping) rather than coerced to 0.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from .geometry import Box, contains, iou

PROB_EPS = 1e-12

VERIFY = "verify"
REVISE = "revise"
MANUAL_TYPING = "manual_typing"
MANUAL_DICTATION = "manual_dictation"
TIMING_MODES = (VERIFY, REVISE, MANUAL_TYPING, MANUAL_DICTATION)
_MANUAL_MODES = (MANUAL_TYPING, MANUAL_DICTATION)


class EmptyCounts(ValueError):
    pass


class EmptyInput(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def classification_metrics(c: ConfusionCounts) -> dict[str, float]:
    """Accuracy, precision, recall, and F1 from confusion counts.

    accuracy = (TP+TN)/total, precision = TP/(TP+FP), recall = TP/(TP+FN),
    f1 = 2PR/(P+R). Undefined ratios are omitted from the result.
    """
    if c.total == 0:
        raise EmptyCounts("all confusion counts are zero")
    out: dict[str, float] = {"accuracy": (c.tp + c.tn) / c.total}
    if c.tp + c.fp > 0:
        out["precision"] = c.tp / (c.tp + c.fp)
    if c.tp + c.fn > 0:
        out["recall"] = c.tp / (c.tp + c.fn)
    if "precision" in out and "recall" in out and out["precision"] + out["recall"] > 0:
        p, r = out["precision"], out["recall"]
        out["f1"] = 2 * p * r / (p + r)
    return out


@dataclass(frozen=True)
class HitMatching:
    """One-to-one matching between predicted and expert-visited boxes."""

    hits: tuple[tuple[int, int], ...]
    unmatched_predictions: tuple[int, ...]
    unmatched_expert: tuple[int, ...]


def _qualifies(p: Box, e: Box, iou_threshold: float) -> bool:
    return iou(p, e) > iou_threshold or contains(p, e) or contains(e, p)


def match_hits(
    predicted: Sequence[Box], expert: Sequence[Box], iou_threshold: float = 0.3
) -> HitMatching:
    """Greedy one-to-one matching of predictions to expert regions.

    A pair qualifies as a hit when its IoU exceeds the threshold or one box
    fully contains the other; the containment clause absorbs magnification
    mismatch between observers. Qualifying pairs are taken in descending IoU
    order, ties broken by ascending index pair.
    """
    candidates = [
        (iou(p, e), pi, ei)
        for pi, p in enumerate(predicted)
        for ei, e in enumerate(expert)
        if _qualifies(p, e, iou_threshold)
    ]
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    used_p: set[int] = set()
    used_e: set[int] = set()
    hits: list[tuple[int, int]] = []
    for _, pi, ei in candidates:
        if pi in used_p or ei in used_e:
            continue
        hits.append((pi, ei))
        used_p.add(pi)
        used_e.add(ei)
    return HitMatching(
        hits=tuple(hits),
        unmatched_predictions=tuple(i for i in range(len(predicted)) if i not in used_p),
        unmatched_expert=tuple(i for i in range(len(expert)) if i not in used_e),
    )


def efficiency_completeness(m: HitMatching, n_pred: int, n_expert: int) -> dict[str, float]:
    """Behavior efficiency = hits / predicted, completeness = hits / expert."""
    hits = len(m.hits)
    if hits > n_pred or hits > n_expert:
        raise ValueError("hit count exceeds a population size")
    out: dict[str, float] = {}
    if n_pred > 0:
        out["efficiency"] = hits / n_pred
    if n_expert > 0:
        out["completeness"] = hits / n_expert
    return out


def _resample_indices(seed: int, iteration: int, n: int) -> np.ndarray:
    # substream per iteration so results are identical at any parallelism level
    return np.random.default_rng([seed, iteration]).integers(0, n, size=n)


def _percentile_linear(sorted_values: np.ndarray, level: float) -> float:
    rank = (level / 100.0) * (len(sorted_values) - 1)
    lo = math.floor(rank)
    hi = math.ceil(rank)
    if lo == hi:
        return float(sorted_values[lo])
    frac = rank - lo
    return float(sorted_values[lo] * (1 - frac) + sorted_values[hi] * frac)


def bootstrap_ci(
    per_case_outcomes: Sequence,
    metric: Callable[[Sequence], float],
    n_iter: int = 1000,
    seed: int = 0,
    levels: tuple[float, float] = (2.5, 97.5),
    workers: int = 1,
) -> dict[str, float]:
    """Percentile bootstrap CI of a metric over case resamples.

    Iteration ``k`` resamples with replacement using the RNG substream
    ``default_rng([seed, k])``; that derivation is part of the contract, so
    results are reproducible regardless of execution order or parallelism.
    Percentiles interpolate linearly between order statistics.
    """
    outcomes = list(per_case_outcomes)
    if not outcomes:
        raise EmptyInput("need at least one case outcome")
    n = len(outcomes)

    def one(k: int) -> float:
        idx = _resample_indices(seed, k, n)
        return float(metric([outcomes[i] for i in idx]))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = np.fromiter(pool.map(one, range(n_iter)), dtype=float, count=n_iter)
    else:
        values = np.fromiter((one(k) for k in range(n_iter)), dtype=float, count=n_iter)

    values.sort()
    return {
        "lo": _percentile_linear(values, levels[0]),
        "hi": _percentile_linear(values, levels[1]),
        "point": float(metric(outcomes)),
    }


def paired_bootstrap_test(
    outcomes_a: Sequence,
    outcomes_b: Sequence,
    metric: Callable[[Sequence], float],
    n_iter: int = 1000,
    seed: int = 0,
) -> float:
    """Two-sided p-value for the bootstrap distribution of metric(A) - metric(B).

    Both arms share each iteration's resample indices; the difference samples
    feed a one-sample t-test against zero. A zero-variance difference
    distribution short-circuits to p = 1.0 (mean zero) or p = 0.0, where the
    t statistic itself is undefined.
    """
    a = list(outcomes_a)
    b = list(outcomes_b)
    if len(a) != len(b):
        raise LengthMismatch(f"paired outcomes differ in length: {len(a)} vs {len(b)}")
    if not a:
        raise EmptyInput("need at least one paired outcome")
    n = len(a)
    diffs = np.empty(n_iter, dtype=float)
    for k in range(n_iter):
        idx = _resample_indices(seed, k, n)
        diffs[k] = metric([a[i] for i in idx]) - metric([b[i] for i in idx])

    mean = float(diffs.mean())
    sd = float(diffs.std(ddof=1))
    if sd == 0.0:
        return 1.0 if mean == 0.0 else 0.0
    t = mean / (sd / math.sqrt(n_iter))
    return float(2.0 * stats.t.sf(abs(t), df=n_iter - 1))


def bce_loss(labels: Sequence[int], probs: Sequence[float]) -> float:
    """Binary cross-entropy: -(1/N) * sum(y*log(p) + (1-y)*log(1-p)).

    Probabilities are clipped to [eps, 1-eps] with eps = 1e-12 before the log.
    """
    if len(labels) != len(probs):
        raise LengthMismatch(f"{len(labels)} labels vs {len(probs)} probabilities")
    if not labels:
        raise EmptyInput("need at least one label")
    y = np.asarray(labels, dtype=float)
    p = np.clip(np.asarray(probs, dtype=float), PROB_EPS, 1.0 - PROB_EPS)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


@dataclass(frozen=True)
class TimingRecord:
    round_id: str
    mode: str
    t_write_ms: int
    t_nav_expert_ms: Optional[int] = None

    def __post_init__(self) -> None:
        if self.mode not in TIMING_MODES:
            raise ValueError(f"unknown timing mode {self.mode!r}")
        if self.t_write_ms < 0 or (self.t_nav_expert_ms is not None and self.t_nav_expert_ms < 0):
            raise ValueError("durations must be non-negative")
        if self.t_nav_expert_ms is not None and self.mode not in _MANUAL_MODES:
            raise ValueError("t_nav_expert_ms only applies to manual modes")


def adjusted_seconds(record: TimingRecord) -> float:
    """Per-round seconds; manual modes add the source expert's navigation time."""
    total_ms = record.t_write_ms
    if record.mode in _MANUAL_MODES:
        total_ms += record.t_nav_expert_ms or 0
    return total_ms / 1000.0


def timing_summary(records: Sequence[TimingRecord]) -> dict:
    """Mean adjusted seconds per mode, revision rate, and manual-vs-review speedups.

    The review workflow baseline pools verify and revise rounds; the speedup
    of a manual mode is its adjusted mean divided by that baseline.
    """
    by_mode: dict[str, list[float]] = {m: [] for m in TIMING_MODES}
    for r in records:
        by_mode[r.mode].append(adjusted_seconds(r))

    report: dict = {"mode_mean_s": {}, "speedup": {}}
    for mode, values in by_mode.items():
        if values:
            report["mode_mean_s"][mode] = sum(values) / len(values)

    n_verify = len(by_mode[VERIFY])
    n_revise = len(by_mode[REVISE])
    if n_verify + n_revise > 0:
        report["revision_rate"] = n_revise / (n_verify + n_revise)
        workflow = by_mode[VERIFY] + by_mode[REVISE]
        workflow_mean = sum(workflow) / len(workflow)
        if workflow_mean > 0:
            for mode in _MANUAL_MODES:
                if by_mode[mode]:
                    report["speedup"][mode] = report["mode_mean_s"][mode] / workflow_mean
    return report
