"""Windowed t-statistic detector for fast cyclic IDs.

Applies only to IDs whose cycle time is below a cutoff (50 ms default);
slower IDs are marked inapplicable and produce nothing. Per ID, gaps are
bucketed into tumbling one-second windows anchored at that ID's first
arrival. Each closed window with at least two gap samples yields a
one-sample t statistic of the window mean against the trained cycle
time; windows with fewer samples are dropped without advancing the
sequence. Every `taylor_seq_len` retained windows form a block scored as
the mean of ln(1 + |t|), anomalous at or above the threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..frames import US_PER_SECOND, CanFrame
from .base import KIND_WINDOW, Detector


@dataclass
class _IdState:
    win_start_us: int = 0
    last_t_us: int = 0
    # Welford accumulators; a raw sum of squared gaps can overflow
    # 64-bit on long traces, this stays bounded in both backends
    n: int = 0
    mean_dt: float = 0.0
    m2_dt: float = 0.0
    members: list[int] = field(default_factory=list)
    started: bool = False
    # retained windows awaiting a full block
    seq_t: list[float] = field(default_factory=list)
    seq_members: list[int] = field(default_factory=list)
    seq_start_us: int = 0


class WindowTStatDetector(Detector):

    def begin_trace(self, t_start_us: int) -> None:
        self._states: dict[int, _IdState] = {}
        self._inapplicable: set[int] = set()

    def _timing(self, cid: int):
        timing = self.timing_for(cid)
        if timing is None:
            return None
        if timing.ct_ms >= self.config.taylor_applicability_ct_max:
            if cid not in self._inapplicable:
                self._inapplicable.add(cid)
                self.stats["inapplicable"] += 1
            return None
        return timing

    def process(self, idx: int, frame: CanFrame) -> None:
        self.stats["frames"] += 1
        timing = self._timing(frame.can_id)
        if timing is None:
            return
        st = self._states.setdefault(frame.can_id, _IdState())
        if not st.started:
            st.started = True
            st.win_start_us = frame.t_us
            st.seq_start_us = frame.t_us
            st.last_t_us = frame.t_us
            return
        self._close_due(frame.can_id, st, frame.t_us, timing.ct_us)
        dt = frame.t_us - st.last_t_us
        st.last_t_us = frame.t_us
        st.n += 1
        delta = dt - st.mean_dt
        st.mean_dt += delta / st.n
        st.m2_dt += delta * (dt - st.mean_dt)
        st.members.append(idx)

    def advance(self, now_us: int) -> None:
        for cid in sorted(self._states):
            st = self._states[cid]
            if st.started:
                self._close_due(cid, st, now_us, self.model[cid].ct_us)

    def _close_due(self, cid: int, st: _IdState, now_us: int,
                   ct_us: int) -> None:
        while now_us >= st.win_start_us + US_PER_SECOND:
            if st.n >= 2:
                self._retain_window(cid, st, ct_us)
            st.n = 0
            st.mean_dt = 0.0
            st.m2_dt = 0.0
            st.members.clear()
            st.win_start_us += US_PER_SECOND

    def _retain_window(self, cid: int, st: _IdState, ct_us: int) -> None:
        n = st.n
        mean = st.mean_dt
        var = st.m2_dt / (n - 1)
        if var > 0.0:
            t = (mean - ct_us) / math.sqrt(var / n)
        elif mean == ct_us:
            t = 0.0
        else:
            t = math.copysign(math.inf, mean - ct_us)
        if not st.seq_t:
            st.seq_start_us = st.win_start_us
        st.seq_t.append(t)
        st.seq_members.extend(st.members)
        if len(st.seq_t) == self.config.taylor_seq_len:
            score = sum(math.log1p(abs(x)) for x in st.seq_t) / len(st.seq_t)
            self.emit(KIND_WINDOW, cid, st.seq_start_us,
                      st.win_start_us + US_PER_SECOND,
                      anomalous=score >= self.config.taylor_threshold,
                      score=score, members=tuple(st.seq_members))
            st.seq_t.clear()
            st.seq_members.clear()
