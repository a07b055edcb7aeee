"""Hand-built fixtures for detector tests.

Detector behavior tests want total control over the timing model, so
these build IdTiming records directly instead of estimating them from
traffic.
"""

from __future__ import annotations

from cantids.frames import CanFrame, Trace, TraceMeta
from cantids.profile import CycleTimeModel, IdTiming

TX_MS_STD_DLC8 = 0.272   # 136 worst-case bits at 500 kbit/s


def make_timing(can_id: int, ct_ms: int, cyclic: bool = True,
                min_dt_us: int | None = None, max_dt_us: int | None = None,
                max_abs_error_us: int = 0,
                worst_case_tx_ms: float = TX_MS_STD_DLC8) -> IdTiming:
    ct_us = ct_ms * 1000
    return IdTiming(
        can_id=can_id,
        count=100,
        ct_ms=ct_ms,
        cyclic=cyclic,
        sum_dt_us=ct_us * 100,
        min_dt_us=ct_us if min_dt_us is None else min_dt_us,
        max_dt_us=ct_us if max_dt_us is None else max_dt_us,
        max_abs_error_us=max_abs_error_us,
        std_dt_ms=0.0,
        worst_case_tx_ms=worst_case_tx_ms,
    )


def make_model(timings: list[IdTiming]) -> CycleTimeModel:
    return CycleTimeModel({t.can_id: t for t in timings})


def trace_of(arrivals: list[tuple[int, int]], source: str = "fixture") -> Trace:
    """Trace from (t_us, can_id) pairs; payloads are empty, dlc 0."""
    frames = [CanFrame(t, cid, 0) for t, cid in arrivals]
    return Trace(frames, TraceMeta(source=source))


def periodic(can_id: int, ct_us: int, n: int, t0_us: int = 0) -> list[tuple[int, int]]:
    return [(t0_us + k * ct_us, can_id) for k in range(n)]
