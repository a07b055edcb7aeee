"""Confusion accounting and report emission for detector runs.

Each detector family gets the accounting shape its verdicts support:

* ``per-message``: one prediction per frame after the first of its ID.
  A flagged legitimate frame whose same-ID predecessor was injected is
  excused as a true negative — the preceding gap really was shortened
  by the attacker, the frame itself is blameless.
* ``otsuka-group``: grouped early-frame verdicts.  A group containing
  at least one injected frame scores one hit per injected member; a
  group of only legitimate frames scores a single false positive.
  Suspicious-late per-message verdicts stay out of the tally.
* ``moore-group``: like otsuka-group for consecutive-alert windows.
* ``missing-id``: hits are missed-deadline alarms for the removed ID
  inside the removal window, capped at the number of removed frames;
  the uncapped ratio is reported as a detection rate.

F-measure is left blank when a row has no positive predictions or
actual positives at all; percentile aggregation uses nearest-rank.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

from .frames import Trace, ValidationError
from .detectors import KIND_MISSING, Verdict

log = logging.getLogger(__name__)

POLICIES = ("per-message", "otsuka-group", "moore-group", "missing-id")

PERCENTILES = (10, 25, 50, 75, 90)

CSV_HEADER = ("detector,attack,target_id,frequency,trace,"
              "tp,fp,fn,tn,precision,recall,fmeasure,detection_rate")


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0
    detection_rate: float | None = None

    @property
    def precision(self) -> float | None:
        if self.tp + self.fp == 0:
            return None
        return self.tp / (self.tp + self.fp)

    @property
    def recall(self) -> float | None:
        if self.tp + self.fn == 0:
            return None
        return self.tp / (self.tp + self.fn)

    @property
    def fmeasure(self) -> float | None:
        if self.tp + self.fp + self.fn == 0:
            return None
        if self.tp == 0:
            return 0.0
        p, r = self.precision, self.recall
        return 2.0 * p * r / (p + r)


def _anomalous(verdicts) -> list[Verdict]:
    return [v for v in verdicts if v.anomalous]


def _injected_mask(trace: Trace) -> list[bool]:
    return [f.label == "injected" for f in trace.frames]


def _score_per_message(verdicts, trace: Trace) -> ConfusionCounts:
    injected = _injected_mask(trace)
    flagged = set()
    for v in _anomalous(verdicts):
        flagged.update(v.members)
    # a legit frame right behind an injected one saw a genuinely short
    # gap; flagging it is charged to nobody
    prev_injected = [False] * len(injected)
    last_by_id: dict[int, bool] = {}
    for i, f in enumerate(trace.frames):
        prev_injected[i] = last_by_id.get(f.can_id, False)
        last_by_id[f.can_id] = injected[i]

    c = ConfusionCounts()
    n_injected = sum(injected)
    for i in flagged:
        if injected[i]:
            c.tp += 1
        elif not prev_injected[i]:
            c.fp += 1
    c.fn = n_injected - c.tp
    c.tn = (len(injected) - n_injected) - c.fp
    return c


def _score_grouped(verdicts, trace: Trace) -> ConfusionCounts:
    injected = _injected_mask(trace)
    covered = set()
    c = ConfusionCounts()
    for v in _anomalous(verdicts):
        if not v.members:
            continue
        hits = [i for i in v.members if injected[i]]
        if hits:
            covered.update(hits)
        else:
            c.fp += 1
    c.tp = len(covered)
    n_injected = sum(injected)
    c.fn = n_injected - c.tp
    c.tn = max(0, (len(injected) - n_injected) - c.fp)
    return c


def _score_missing(verdicts, trace: Trace) -> ConfusionCounts:
    attack = trace.meta.attack
    if not attack or "removed_count" not in attack:
        raise ValidationError("missing-id scoring needs removal metadata")
    removed = attack["removed_count"]
    if removed == 0:
        raise ValidationError("removal window deleted no frames")
    target = attack["target_id"]
    start_us, end_us = attack["start_us"], attack["end_us"]

    in_span = 0
    c = ConfusionCounts()
    for v in verdicts:
        if v.kind != KIND_MISSING or not v.anomalous:
            continue
        if v.can_id == target and start_us <= v.t_start_us <= end_us:
            in_span += 1
        else:
            c.fp += 1
    c.tp = min(in_span, removed)
    c.fp += in_span - c.tp
    c.fn = removed - c.tp
    c.detection_rate = 100.0 * in_span / removed
    if c.detection_rate > 100.0:
        log.warning("detection rate %.1f%% exceeds 100%% for 0x%x "
                    "(%d alarms, %d removed); capping hits",
                    c.detection_rate, target, in_span, removed)
    return c


def score_run(verdicts, trace: Trace, policy: str) -> ConfusionCounts:
    if policy == "per-message":
        return _score_per_message(verdicts, trace)
    if policy in ("otsuka-group", "moore-group"):
        return _score_grouped(verdicts, trace)
    if policy == "missing-id":
        return _score_missing(verdicts, trace)
    raise ValidationError(f"unknown scoring policy {policy!r}")


def percentile(values: list[float], p: int) -> float:
    """Nearest-rank: the smallest element with at least p percent of the
    sample at or below it."""
    if not values:
        raise ValidationError("percentile of empty sample")
    ordered = sorted(values)
    rank = max(1, math.ceil(p * len(ordered) / 100))
    return ordered[rank - 1]


@dataclass
class EvalRow:
    detector: str
    attack: str
    target_id: int
    frequency: float
    trace: str
    counts: ConfusionCounts = field(default_factory=ConfusionCounts)

    def sort_key(self):
        return (self.detector, self.attack, self.target_id,
                self.frequency, self.trace)

    def to_json(self) -> dict:
        c = self.counts
        return {"detector": self.detector, "attack": self.attack,
                "target_id": self.target_id, "frequency": self.frequency,
                "trace": self.trace, "tp": c.tp, "fp": c.fp, "fn": c.fn,
                "tn": c.tn, "precision": c.precision, "recall": c.recall,
                "fmeasure": c.fmeasure,
                "detection_rate": c.detection_rate}


def _fmt(x: float | None) -> str:
    return "" if x is None else f"{x:.6f}"


def _csv_line(row: dict) -> str:
    return ",".join([
        row["detector"], row["attack"], f"0x{row['target_id']:x}",
        f"{row['frequency']:g}", row["trace"],
        str(row["tp"]), str(row["fp"]), str(row["fn"]), str(row["tn"]),
        _fmt(row["precision"]), _fmt(row["recall"]),
        _fmt(row["fmeasure"]), _fmt(row["detection_rate"]),
    ])


def aggregate_rows(rows: list[EvalRow]) -> list[dict]:
    """Percentile summaries per (detector, attack, target, frequency)
    cell, written as pseudo-rows with the percentile in the trace
    column."""
    cells: dict[tuple, list[EvalRow]] = {}
    for r in rows:
        cells.setdefault(
            (r.detector, r.attack, r.target_id, r.frequency), []).append(r)
    out = []
    for key in sorted(cells):
        detector, attack, target_id, frequency = key
        fvals = [r.counts.fmeasure for r in cells[key]
                 if r.counts.fmeasure is not None]
        dvals = [r.counts.detection_rate for r in cells[key]
                 if r.counts.detection_rate is not None]
        for p in PERCENTILES:
            out.append({
                "detector": detector, "attack": attack,
                "target_id": target_id, "frequency": frequency,
                "trace": f"p{p}",
                "tp": 0, "fp": 0, "fn": 0, "tn": 0,
                "precision": None, "recall": None,
                "fmeasure": percentile(fvals, p) if fvals else None,
                "detection_rate": percentile(dvals, p) if dvals else None,
            })
    return out


def render_report(rows: list[EvalRow], fmt: str = "csv") -> str:
    ordered = sorted(rows, key=EvalRow.sort_key)
    dicts = [r.to_json() for r in ordered]
    aggregates = aggregate_rows(ordered)
    if fmt == "json":
        return json.dumps({"rows": dicts, "aggregates": aggregates},
                          indent=1, sort_keys=True)
    if fmt != "csv":
        raise ValidationError(f"unknown report format {fmt!r}")
    lines = [CSV_HEADER]
    lines.extend(_csv_line(d) for d in dicts)
    lines.extend(_csv_line(d) for d in aggregates)
    return "\n".join(lines) + "\n"
