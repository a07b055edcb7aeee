"""Margin detector: gaps straying past 15% of ct plus the trained error.

An arrival whose gap deviates from the cycle time by more than
ct * moore_margin_factor + m raises an alert, where m is the largest
deviation seen in the first five seconds of clean training traffic.
Three consecutive alerts make an anomaly verdict carrying those three
frames; a within-margin gap resets the streak.

With `moore_alert_settle` on (the default) an alert is not confirmed at
its own frame: it needs its settling time — the threshold itself — to
pass without another arrival of the same ID. An arrival inside the
settling window withdraws the alert (without resetting the streak, since
nothing clean was observed either); an arrival after it confirms the
alert first and is then judged on its own gap. Dense bursts therefore
withdraw every alert they trigger and the streak never forms, which is
exactly the blind spot this detector is known for at high injection
rates. With the flag off, alerts confirm immediately.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..frames import CanFrame
from .base import KIND_WINDOW, Detector


@dataclass
class _IdState:
    last_t_us: int | None = None
    pending: tuple[int, int] | None = None   # (frame idx, arrival)
    streak_idx: list[int] = field(default_factory=list)
    streak_t: list[int] = field(default_factory=list)


class DeviationMarginDetector(Detector):

    policy = "moore-group"

    def begin_trace(self, t_start_us: int) -> None:
        self._states: dict[int, _IdState] = {}
        self._thr: dict[int, float] = {}
        for cid in self.model.cyclic_ids():
            ct_us = self.model[cid].ct_us
            m_us = self.config.moore_m_us.get(
                cid, self.model[cid].max_abs_error_us)
            self._thr[cid] = self.config.moore_margin_factor * ct_us + m_us

    def process(self, idx: int, frame: CanFrame) -> None:
        self.stats["frames"] += 1
        timing = self.timing_for(frame.can_id)
        if timing is None:
            return
        cid = frame.can_id
        st = self._states.setdefault(cid, _IdState())
        thr = self._thr[cid]
        if st.pending is not None:
            p_idx, p_t = st.pending
            st.pending = None
            if frame.t_us > p_t + thr:
                self._confirm(cid, st, p_idx, p_t)
            # else withdrawn: neither an alert nor a streak reset
        if st.last_t_us is None:
            st.last_t_us = frame.t_us
            return
        dt = frame.t_us - st.last_t_us
        st.last_t_us = frame.t_us
        alert = abs(dt - timing.ct_us) > thr
        if alert:
            if self.config.moore_alert_settle:
                st.pending = (idx, frame.t_us)
            else:
                self._confirm(cid, st, idx, frame.t_us)
        else:
            st.streak_idx.clear()
            st.streak_t.clear()

    def _confirm(self, cid: int, st: _IdState, idx: int, t_us: int) -> None:
        st.streak_idx.append(idx)
        st.streak_t.append(t_us)
        if len(st.streak_idx) == self.config.moore_consecutive:
            self.emit(KIND_WINDOW, cid, st.streak_t[0], st.streak_t[-1],
                      anomalous=True, score=float(len(st.streak_idx)),
                      members=tuple(st.streak_idx))
            st.streak_idx.clear()
            st.streak_t.clear()

    def finalize(self, t_end_us: int) -> None:
        for cid in sorted(self._states):
            st = self._states[cid]
            if st.pending is not None:
                p_idx, p_t = st.pending
                st.pending = None
                if t_end_us - p_t > self._thr[cid]:
                    self._confirm(cid, st, p_idx, p_t)
