"""Flag any frame arriving in less than half its ID's cycle time.

The comparison is exact integer arithmetic (2*dt < ct in microseconds),
strict at the boundary: dt == ct/2 is clean. One verdict per frame after
the first of each ID, which is trusted.
"""

from __future__ import annotations

from ..frames import CanFrame
from .base import KIND_MESSAGE, Detector


class GapHalvingDetector(Detector):

    def begin_trace(self, t_start_us: int) -> None:
        self._last: dict[int, int] = {}

    def process(self, idx: int, frame: CanFrame) -> None:
        self.stats["frames"] += 1
        timing = self.timing_for(frame.can_id)
        if timing is None:
            return
        prev = self._last.get(frame.can_id)
        self._last[frame.can_id] = frame.t_us
        if prev is None:
            return
        dt = frame.t_us - prev
        ct_us = timing.ct_us
        self.emit(KIND_MESSAGE, frame.can_id, frame.t_us, frame.t_us,
                  anomalous=2 * dt < ct_us, score=dt / ct_us,
                  members=(idx,))
