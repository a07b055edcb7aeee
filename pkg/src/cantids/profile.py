"""Per-ID timing profiles learned from clean traffic.

Every detector in this package keys off the same primitive: the nominal
cycle time of a periodic CAN ID. The profiler pools inter-arrival deltas
per ID across one or more clean traces, keeps exact integer-microsecond
accumulators (so results are identical no matter how the input files are
ordered), and rounds the mean to the nearest millisecond half-up. An ID
counts as cyclic when its coefficient of variation (sample std over mean)
stays at or below a threshold, 0.5 by default.

Also reconstructs worst-case frame transmission times from the wire
layout: a standard data frame occupies 47 bits plus 8 per payload byte
(including the 3-bit interframe space), an extended one 67 plus 8 per
byte. Worst-case bit stuffing adds floor((stuffable - 1) / 4) bits on
top; the fields subject to stuffing span start-of-frame through the CRC
sequence, 34 + 8*dlc bits for standard IDs and 54 + 8*dlc for extended.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .frames import DEFAULT_BITRATE, CanFrame, Trace, ValidationError

log = logging.getLogger(__name__)

CV_THRESHOLD = 0.5

STANDARD_FRAME_BITS = 47       # dlc = 0, with interframe space
EXTENDED_FRAME_BITS = 67
STANDARD_STUFFABLE_BITS = 34   # start-of-frame through CRC sequence
EXTENDED_STUFFABLE_BITS = 54


def frame_bit_size(dlc: int, extended: bool = False, stuffing: bool = True) -> int:
    """Bits on the wire for one data frame, worst case when stuffing=True."""
    if not 0 <= dlc <= 8:
        raise ValidationError(f"dlc {dlc} out of range")
    base = EXTENDED_FRAME_BITS if extended else STANDARD_FRAME_BITS
    bits = base + 8 * dlc
    if stuffing:
        stuffable = (EXTENDED_STUFFABLE_BITS if extended
                     else STANDARD_STUFFABLE_BITS) + 8 * dlc
        bits += (stuffable - 1) // 4
    return bits


def worst_case_tx_time(frames: Sequence[CanFrame], bitrate: int,
                       stuffing: bool = True) -> float:
    """Max transmission time in milliseconds over the observed frames."""
    if not frames:
        raise ValidationError("worst_case_tx_time needs at least one frame")
    if bitrate <= 0:
        raise ValidationError(f"bitrate {bitrate} must be positive")
    worst = max(frame_bit_size(f.dlc, f.extended, stuffing) for f in frames)
    return worst * 1000.0 / bitrate


@dataclass
class IdTiming:
    """Pooled inter-arrival statistics for one CAN ID.

    Integer fields are exact microseconds; millisecond floats derive from
    them on demand so serialization stays lossless.
    """

    can_id: int
    count: int                 # number of pooled deltas
    ct_ms: int                 # mean delta rounded half-up to ms
    cyclic: bool
    sum_dt_us: int
    min_dt_us: int
    max_dt_us: int
    max_abs_error_us: int      # max |delta - ct| over training data
    std_dt_ms: float
    worst_case_tx_ms: float

    @property
    def ct_us(self) -> int:
        return self.ct_ms * 1000

    @property
    def mean_dt_ms(self) -> float:
        return self.sum_dt_us / (self.count * 1000.0)

    @property
    def min_dt_ms(self) -> float:
        return self.min_dt_us / 1000.0

    @property
    def max_dt_ms(self) -> float:
        return self.max_dt_us / 1000.0

    @property
    def max_deviation_pct(self) -> float:
        if self.ct_us == 0:
            return math.inf
        return 100.0 * self.max_abs_error_us / self.ct_us

    def to_json(self) -> dict:
        return {
            "id": self.can_id,
            "count": self.count,
            "ct_ms": self.ct_ms,
            "cyclic": self.cyclic,
            "sum_dt_us": self.sum_dt_us,
            "min_dt_us": self.min_dt_us,
            "max_dt_us": self.max_dt_us,
            "max_abs_error_us": self.max_abs_error_us,
            "std_dt_ms": self.std_dt_ms,
            "worst_case_tx_ms": self.worst_case_tx_ms,
        }

    @classmethod
    def from_json(cls, data: dict) -> "IdTiming":
        return cls(
            can_id=data["id"],
            count=data["count"],
            ct_ms=data["ct_ms"],
            cyclic=data["cyclic"],
            sum_dt_us=data["sum_dt_us"],
            min_dt_us=data["min_dt_us"],
            max_dt_us=data["max_dt_us"],
            max_abs_error_us=data["max_abs_error_us"],
            std_dt_ms=data["std_dt_ms"],
            worst_case_tx_ms=data["worst_case_tx_ms"],
        )


class CycleTimeModel:
    """Mapping of CAN ID -> IdTiming plus the knobs used to build it."""

    def __init__(self, timings: dict[int, IdTiming],
                 bitrate: int = DEFAULT_BITRATE,
                 cv_threshold: float = CV_THRESHOLD):
        self.timings = timings
        self.bitrate = bitrate
        self.cv_threshold = cv_threshold

    def __contains__(self, can_id: int) -> bool:
        return can_id in self.timings

    def __getitem__(self, can_id: int) -> IdTiming:
        return self.timings[can_id]

    def get(self, can_id: int) -> IdTiming | None:
        return self.timings.get(can_id)

    def __len__(self) -> int:
        return len(self.timings)

    def ids(self) -> list[int]:
        return sorted(self.timings)

    def cyclic_ids(self) -> list[int]:
        return sorted(i for i, t in self.timings.items() if t.cyclic)

    def to_json(self) -> dict:
        return {
            "bitrate": self.bitrate,
            "cv_threshold": self.cv_threshold,
            "ids": [self.timings[i].to_json() for i in self.ids()],
        }

    @classmethod
    def from_json(cls, data: dict) -> "CycleTimeModel":
        timings = {}
        for rec in data["ids"]:
            t = IdTiming.from_json(rec)
            timings[t.can_id] = t
        return cls(timings, data["bitrate"], data["cv_threshold"])

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "CycleTimeModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def _round_half_up_ms(sum_us: int, count: int) -> int:
    # exact integer rounding of (sum_us / count) / 1000
    den = count * 1000
    return (2 * sum_us + den) // (2 * den)


def estimate_cycle_times(traces: Iterable[Trace],
                         bitrate: int | None = None,
                         cv_threshold: float = CV_THRESHOLD,
                         stuffing: bool = True) -> CycleTimeModel:
    """Build a CycleTimeModel from clean traces.

    Deltas never span trace boundaries. IDs that are seen but never twice
    in any single trace yield no delta and are dropped with a warning.
    """
    traces = list(traces)
    if bitrate is None:
        bitrate = traces[0].meta.bitrate if traces else DEFAULT_BITRATE

    sums: dict[int, int] = {}
    sumsqs: dict[int, int] = {}
    counts: dict[int, int] = {}
    mins: dict[int, int] = {}
    maxs: dict[int, int] = {}
    max_dlc: dict[int, int] = {}
    seen: set[int] = set()

    for trace in traces:
        last: dict[int, int] = {}
        for frame in trace.frames:
            cid = frame.can_id
            seen.add(cid)
            if cid not in max_dlc or frame.dlc > max_dlc[cid]:
                max_dlc[cid] = frame.dlc
            prev = last.get(cid)
            if prev is not None:
                dt = frame.t_us - prev
                sums[cid] = sums.get(cid, 0) + dt
                sumsqs[cid] = sumsqs.get(cid, 0) + dt * dt
                counts[cid] = counts.get(cid, 0) + 1
                if cid not in mins or dt < mins[cid]:
                    mins[cid] = dt
                if cid not in maxs or dt > maxs[cid]:
                    maxs[cid] = dt
            last[cid] = frame.t_us

    timings: dict[int, IdTiming] = {}
    for cid in sorted(seen):
        n = counts.get(cid, 0)
        if n == 0:
            log.warning("id 0x%x seen fewer than twice per trace, skipped", cid)
            continue
        s = sums[cid]
        ct_ms = _round_half_up_ms(s, n)
        mean_us = s / n
        if n > 1:
            # exact integer numerator keeps this immune to pooling order
            var_num = sumsqs[cid] * n - s * s
            var_us2 = var_num / (n * (n - 1))
            std_us = math.sqrt(var_us2) if var_us2 > 0 else 0.0
        else:
            std_us = 0.0
        cyclic = mean_us > 0 and ct_ms > 0 and std_us / mean_us <= cv_threshold
        ct_us = ct_ms * 1000
        max_err = max(abs(mins[cid] - ct_us), abs(maxs[cid] - ct_us))
        extended = cid > 0x7FF
        tx_ms = frame_bit_size(max_dlc[cid], extended, stuffing) * 1000.0 / bitrate
        timings[cid] = IdTiming(
            can_id=cid,
            count=n,
            ct_ms=ct_ms,
            cyclic=cyclic,
            sum_dt_us=s,
            min_dt_us=mins[cid],
            max_dt_us=maxs[cid],
            max_abs_error_us=max_err,
            std_dt_ms=std_us / 1000.0,
            worst_case_tx_ms=tx_ms,
        )
    return CycleTimeModel(timings, bitrate, cv_threshold)
