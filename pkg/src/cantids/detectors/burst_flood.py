"""Flood detector: a run of sub-0.2 ms gaps on one ID raises the alarm.

Needs no timing model at all, so it also covers IDs never seen in
training (a flood under an unused ID is the classic DoS shape). The
per-ID counter grows on every gap below the threshold and resets to zero
on the first normal gap; a frame is anomalous while the counter exceeds
the configured run length.
"""

from __future__ import annotations

from ..frames import CanFrame
from .base import KIND_MESSAGE, Detector


class BurstFloodDetector(Detector):

    def begin_trace(self, t_start_us: int) -> None:
        self._last: dict[int, int] = {}
        self._run: dict[int, int] = {}

    def process(self, idx: int, frame: CanFrame) -> None:
        self.stats["frames"] += 1
        cid = frame.can_id
        prev = self._last.get(cid)
        self._last[cid] = frame.t_us
        if prev is None:
            return
        dt = frame.t_us - prev
        if dt < self.config.song_dos_dt_us:
            run = self._run.get(cid, 0) + 1
        else:
            run = 0
        self._run[cid] = run
        self.emit(KIND_MESSAGE, cid, frame.t_us, frame.t_us,
                  anomalous=run > self.config.song_dos_threshold,
                  score=float(run), members=(idx,))
