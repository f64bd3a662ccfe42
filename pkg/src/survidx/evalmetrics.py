"""Retrieval and detection metrics: Average Precision for concept queries,
Actual/Minimum NDCR for event detection.

NDCR is the miss probability plus a cost-weighted false-alarm rate per hour:

    NDCR = P_miss + (cost_fa / (cost_miss * r_target)) * R_FA

With the default costs (10, 1, 20 events/hour) a system that outputs nothing
scores exactly 1.  Minimum NDCR sweeps the confidence threshold over every
distinct confidence (plus +inf = output nothing) and keeps the best.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

from .errors import DataError

ALIGN_WINDOW_SECONDS = 0.5  # detection-to-reference midpoint alignment window


@dataclass(frozen=True)
class RankedList:
    target: str
    shot_ids: tuple[str, ...]  # ordered, scores descending
    scores: tuple[float, ...]
    relevance: dict[str, bool] | None = None  # judgments; None until eval time

    def __post_init__(self):
        if len(self.shot_ids) != len(self.scores):
            raise DataError("ranked list ids/scores length mismatch")
        if any(self.scores[i] < self.scores[i + 1] for i in range(len(self.scores) - 1)):
            raise DataError("ranked list scores must be non-increasing")
        if self.relevance is not None:
            missing = [s for s in self.shot_ids if s not in self.relevance]
            if missing:
                raise DataError(f"missing relevance judgments for {missing[:3]}")

    def judged(self, relevance: dict[str, bool]) -> "RankedList":
        return RankedList(self.target, self.shot_ids, self.scores, relevance)


@dataclass(frozen=True)
class Interval:
    start: float
    end: float

    def __post_init__(self):
        if not self.start < self.end:
            raise DataError(f"bad interval [{self.start}, {self.end})")

    @property
    def mid(self) -> float:
        return 0.5 * (self.start + self.end)


@dataclass(frozen=True)
class DetectionSet:
    event: str
    detections: tuple[tuple[Interval, float], ...]  # (interval, confidence)
    references: tuple[Interval, ...]
    duration_hours: float

    def __post_init__(self):
        if self.duration_hours <= 0:
            raise DataError("source duration must be positive")


@dataclass(frozen=True)
class NdcrCosts:
    cost_miss: float = 10.0
    cost_fa: float = 1.0
    r_target: float = 20.0  # expected events per hour

    def __post_init__(self):
        if self.cost_miss <= 0 or self.cost_fa <= 0 or self.r_target <= 0:
            raise DataError("NDCR costs and target rate must be positive")


def average_precision(r: RankedList) -> float:
    """Mean of precision-at-rank over the relevant items' ranks."""
    if r.relevance is None:
        raise DataError("ranked list carries no relevance judgments")
    n_rel = sum(1 for s in r.shot_ids if r.relevance[s])
    if n_rel == 0:
        raise DataError(f"no relevant shots for target {r.target}; AP undefined")
    hits = 0
    acc = 0.0
    for rank, shot in enumerate(r.shot_ids, start=1):
        if r.relevance[shot]:
            hits += 1
            acc += hits / rank
    return acc / n_rel


def _match_greedy(dets: list[Interval], refs: list[Interval]) -> int:
    """One-to-one greedy matching by midpoint distance within the alignment
    window; returns the number of matched references."""
    pairs = []
    for di, d in enumerate(dets):
        for ri, ref in enumerate(refs):
            dist = abs(d.mid - ref.mid)
            if dist <= ALIGN_WINDOW_SECONDS:
                pairs.append((dist, di, ri))
    pairs.sort()
    used_d: set[int] = set()
    used_r: set[int] = set()
    for _, di, ri in pairs:
        if di in used_d or ri in used_r:
            continue
        used_d.add(di)
        used_r.add(ri)
    return len(used_r)


def ndcr(d: DetectionSet, threshold: float, costs: NdcrCosts | None = None) -> float:
    """NDCR at a fixed operating threshold (detections with confidence >=
    threshold are emitted)."""
    if costs is None:
        costs = NdcrCosts()
    if not d.references:
        raise DataError(f"no references for event {d.event}; NDCR undefined")
    kept = [iv for iv, conf in d.detections if conf >= threshold]
    matched = _match_greedy(kept, list(d.references))
    p_miss = (len(d.references) - matched) / len(d.references)
    r_fa = (len(kept) - matched) / d.duration_hours
    return p_miss + (costs.cost_fa / (costs.cost_miss * costs.r_target)) * r_fa


def minimum_ndcr(
    d: DetectionSet, costs: NdcrCosts | None = None
) -> tuple[float, float]:
    """Best achievable (threshold, NDCR) over thresholds at every distinct
    confidence plus +inf (output nothing)."""
    candidates = sorted({conf for _, conf in d.detections}) + [float("inf")]
    best_t, best_v = float("inf"), None
    for t in candidates:
        v = ndcr(d, t, costs)
        if best_v is None or v < best_v:
            best_t, best_v = t, v
    return best_t, best_v


# ---------------------------------------------------------------------------
# line-oriented I/O: event id, start seconds, end seconds [, confidence]


def read_detections(path) -> dict[str, list[tuple[Interval, float]]]:
    out: dict[str, list[tuple[Interval, float]]] = {}
    for ln, parts in _read_rows(path):
        if len(parts) != 4:
            raise DataError(f"{path}:{ln}: detections need 4 fields")
        out.setdefault(parts[0], []).append(
            (Interval(float(parts[1]), float(parts[2])), float(parts[3]))
        )
    return out


def read_references(path) -> dict[str, list[Interval]]:
    out: dict[str, list[Interval]] = {}
    for ln, parts in _read_rows(path):
        if len(parts) not in (3, 4):
            raise DataError(f"{path}:{ln}: references need 3 or 4 fields")
        out.setdefault(parts[0], []).append(Interval(float(parts[1]), float(parts[2])))
    return out


def _read_rows(path):
    with open(path, encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            yield ln, line.split()


@dataclass
class EvalReport:
    """Collects per-target rows and renders the aligned-column text table
    and the machine-readable CSV."""

    concept_rows: list[tuple[str, str]] = field(default_factory=list)  # (target, AP or n/a)
    event_rows: list[tuple[str, str, str]] = field(default_factory=list)  # (event, actual, minimum)

    def add_concept(self, target: str, ap: float | None):
        self.concept_rows.append((target, "n/a" if ap is None else f"{ap:.4f}"))

    def add_event(self, event: str, actual: float | None, minimum: float | None):
        self.event_rows.append(
            (
                event,
                "n/a" if actual is None else f"{actual:.3f}",
                "n/a" if minimum is None else f"{minimum:.3f}",
            )
        )

    def render_text(self) -> str:
        lines = []
        if self.concept_rows:
            w = max(len(t) for t, _ in self.concept_rows)
            lines.append("Concept retrieval (Average Precision)")
            lines.append(f"{'Concept':<{w}}  AP")
            for t, ap in self.concept_rows:
                lines.append(f"{t:<{w}}  {ap}")
            lines.append("")
        if self.event_rows:
            w = max(len(e) for e, _, _ in self.event_rows)
            lines.append("Event detection results")
            lines.append(f"{'Event':<{w}}  A.NDCR  M.NDCR")
            for e, a, m in self.event_rows:
                lines.append(f"{e:<{w}}  {a:>6}  {m:>6}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "target", "ap", "actual_ndcr", "minimum_ndcr"])
            for t, ap in self.concept_rows:
                w.writerow(["concept", t, ap, "", ""])
            for e, a, m in self.event_rows:
                w.writerow(["event", e, "", a, m])
