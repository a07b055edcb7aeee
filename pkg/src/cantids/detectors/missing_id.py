"""Absence detector: a cyclic ID silent for k * ct is reported missing.

Every monitored ID owns a deadline, armed at trace start and re-armed at
each sighting to arrival + k*ct. When time reaches a deadline with no
sighting, one missing-id verdict fires for that slot and the deadline
moves forward by ct, so a long outage produces one alarm per missed
cycle. k comes from tuning: the smallest value generating zero false
alarms on the clean set.
"""

from __future__ import annotations

from ..frames import CanFrame
from .base import KIND_MISSING, Detector


class MissingIdDetector(Detector):

    policy = "missing-id"

    def begin_trace(self, t_start_us: int) -> None:
        self._deadline: dict[int, int] = {}
        for cid in self.model.cyclic_ids():
            k = self.config.stabili_k.get(cid)
            if k is not None:
                self._deadline[cid] = t_start_us + k * self.model[cid].ct_us
        self._watched = sorted(self._deadline)

    def process(self, idx: int, frame: CanFrame) -> None:
        self.stats["frames"] += 1
        if self.timing_for(frame.can_id) is None:
            return
        cid = frame.can_id
        if cid in self._deadline:
            k = self.config.stabili_k[cid]
            self._deadline[cid] = frame.t_us + k * self.model[cid].ct_us

    def advance(self, now_us: int) -> None:
        for cid in self._watched:
            deadline = self._deadline[cid]
            if now_us < deadline:
                continue
            ct_us = self.model[cid].ct_us
            while now_us >= deadline:
                self.emit(KIND_MISSING, cid, deadline, deadline,
                          anomalous=True)
                deadline += ct_us
            self._deadline[cid] = deadline
