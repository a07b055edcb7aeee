"""Delayed-decision detector with a per-ID hold buffer.

A frame whose gap falls inside the tolerance band [ct*(1-delta),
ct*(1+delta)] is accepted immediately and becomes the new reference
point. A too-early frame is not judged on the spot: it is parked in the
ID's hold buffer, and everything parked is released as one grouped
suspicious verdict when the buffer's deadline (reference arrival plus
ct*(1+delta), frozen when the first frame is parked) passes. Whether the
group counts as an attack or a single false alarm is the scorer's call,
based on ground truth; the detector only marks the group.

Frames arriving after the band are reported one by one as late
suspicious verdicts; they never enter the buffer and never move the
reference point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..frames import CanFrame
from .base import KIND_MESSAGE, KIND_WINDOW, Detector


@dataclass
class _IdState:
    anchor_us: int | None = None
    deadline: float = 0.0
    held_idx: list[int] = field(default_factory=list)
    held_t: list[int] = field(default_factory=list)


class HoldWindowDetector(Detector):

    policy = "otsuka-group"

    def begin_trace(self, t_start_us: int) -> None:
        self._states: dict[int, _IdState] = {}
        self._bands: dict[int, tuple[float, float]] = {}
        self._group = 0
        delta = self.config.otsuka_delta
        for cid in self.model.cyclic_ids():
            ct_us = self.model[cid].ct_us
            self._bands[cid] = (ct_us * (1.0 - delta), ct_us * (1.0 + delta))

    def process(self, idx: int, frame: CanFrame) -> None:
        self.stats["frames"] += 1
        if self.timing_for(frame.can_id) is None:
            return
        st = self._states.setdefault(frame.can_id, _IdState())
        if st.held_idx and frame.t_us >= st.deadline:
            self._flush(frame.can_id, st)
        if st.anchor_us is None:
            st.anchor_us = frame.t_us
            return
        lo, hi = self._bands[frame.can_id]
        dt = frame.t_us - st.anchor_us
        ct_us = self.model[frame.can_id].ct_us
        if dt < lo:
            if not st.held_idx:
                st.deadline = st.anchor_us + hi
            st.held_idx.append(idx)
            st.held_t.append(frame.t_us)
        elif dt > hi:
            self.emit(KIND_MESSAGE, frame.can_id, frame.t_us, frame.t_us,
                      anomalous=True, late=True, score=dt / ct_us,
                      members=(idx,))
        else:
            self.emit(KIND_MESSAGE, frame.can_id, frame.t_us, frame.t_us,
                      anomalous=False, score=dt / ct_us, members=(idx,))
            st.anchor_us = frame.t_us

    def advance(self, now_us: int) -> None:
        for cid in sorted(self._states):
            st = self._states[cid]
            if st.held_idx and now_us >= st.deadline:
                self._flush(cid, st)

    def finalize(self, t_end_us: int) -> None:
        for cid in sorted(self._states):
            st = self._states[cid]
            if st.held_idx:
                self._flush(cid, st)

    def _flush(self, cid: int, st: _IdState) -> None:
        self.emit(KIND_WINDOW, cid, st.held_t[0], st.held_t[-1],
                  anomalous=True, score=float(len(st.held_idx)),
                  group=self._group, members=tuple(st.held_idx))
        self._group += 1
        st.held_idx.clear()
        st.held_t.clear()
