"""Arrival-window detector built on the sporadic message model.

Each cyclic ID gets an expected-arrival window derived from training:
the next frame should land within +/-(jitter + worst-case transmission
time) of the last accepted arrival plus the minimum observed gap. Early
frames are anomalous; with the update protection on (default) they leave
the reference point untouched, so a burst of injections cannot drag the
window along with it — switching protection off reproduces the cascade
of false positives that motivated the mechanism. A frame past the upper
bound is also anomalous but always re-seeds the reference, since a stale
reference would otherwise flag every later frame of that ID forever.
"""

from __future__ import annotations

from ..frames import CanFrame
from .base import KIND_MESSAGE, Detector


class ArrivalWindowDetector(Detector):

    def begin_trace(self, t_start_us: int) -> None:
        self._t_ref: dict[int, int] = {}
        self._k: dict[int, int] = {}
        self._ptilde: dict[int, int] = {}
        self._slack: dict[int, float] = {}
        cfg = self.config
        for cid in self.model.cyclic_ids():
            timing = self.model[cid]
            self._ptilde[cid] = cfg.olufowobi_ptilde_us.get(
                cid, timing.min_dt_us)
            jitter = cfg.olufowobi_jitter_us.get(
                cid, timing.max_dt_us - timing.min_dt_us)
            self._slack[cid] = jitter + timing.worst_case_tx_ms * 1000.0

    def process(self, idx: int, frame: CanFrame) -> None:
        self.stats["frames"] += 1
        if self.timing_for(frame.can_id) is None:
            return
        cid = frame.can_id
        t = frame.t_us
        ref = self._t_ref.get(cid)
        if ref is None:
            self._t_ref[cid] = t
            self._k[cid] = 1
            return
        expected = ref + self._k[cid] * self._ptilde[cid]
        slack = self._slack[cid]
        deviation_ms = (t - expected) / 1000.0
        if t < expected - slack:
            self.emit(KIND_MESSAGE, cid, t, t, anomalous=True,
                      score=deviation_ms, members=(idx,))
            if not self.config.olufowobi_protection:
                self._t_ref[cid] = t
                self._k[cid] = 1
        elif t > expected + slack:
            self.emit(KIND_MESSAGE, cid, t, t, anomalous=True, late=True,
                      score=deviation_ms, members=(idx,))
            self._t_ref[cid] = t
            self._k[cid] = 1
        else:
            self.emit(KIND_MESSAGE, cid, t, t, anomalous=False,
                      score=deviation_ms, members=(idx,))
            self._t_ref[cid] = t
            self._k[cid] = 1
