"""Clock-skew tracker: RLS regression of accumulated offset plus CUSUM.

Per ID, arrivals are consumed in batches of `cho_window`. Each batch's
average clock offset — measured against the previous batch's mean gap —
is accumulated (in absolute value) and regressed on elapsed time with
recursive least squares, so the slope estimates the transmitter's clock
skew. The identification error of that regression is normalized by its
running mean and deviation (updated before normalizing, which damps the
first samples) and fed to a two-sided CUSUM; crossing the control limit
marks the batch anomalous and restarts both sums.

Fitting on clean traffic replays it through the same code and snapshots
the per-ID regression state (mean gap, skew, covariance, error moments)
into the config, so detection starts from the learned baseline rather
than from scratch. With a baseline present the error moments are frozen
references: attack-time residuals are judged against the clean-traffic
scale instead of being absorbed into it. Batch anchors, accumulated
offset and CUSUM sums are per-trace quantities and reset at every trace
start.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..frames import CanFrame
from .base import KIND_WINDOW, Detector


@dataclass
class _IdState:
    # learned across traces
    mu_us: float = 0.0
    skew: float = 0.0
    cov: float = 0.0
    err_count: int = 0
    err_mean: float = 0.0
    err_m2: float = 0.0
    # per-trace
    o_acc_ms: float = 0.0
    l_pos: float = 0.0
    l_neg: float = 0.0
    batch_idx: list[int] = field(default_factory=list)
    batch_t: list[int] = field(default_factory=list)


class ClockSkewDetector(Detector):

    def __init__(self, model, config):
        super().__init__(model, config)
        self._t0_us = 0
        self._states: dict[int, _IdState] = {}
        baseline = self.config.cho_baseline
        self._frozen = bool(baseline)
        for cid in self.model.cyclic_ids():
            st = _IdState()
            snap = baseline.get(cid)
            if snap is not None:
                st.mu_us = snap["mu_us"]
                st.skew = snap["s"]
                st.cov = snap["p"]
                st.err_count = snap["err_count"]
                st.err_mean = snap["err_mean"]
                st.err_m2 = snap["err_m2"]
            else:
                st.mu_us = float(self.model[cid].ct_us)
                st.cov = self.config.cho_p_init
            self._states[cid] = st

    def begin_trace(self, t_start_us: int) -> None:
        # regression state carries over between traces; batch anchors,
        # accumulated offset and CUSUM sums do not
        self._t0_us = t_start_us
        for st in self._states.values():
            st.o_acc_ms = 0.0
            st.l_pos = 0.0
            st.l_neg = 0.0
            st.batch_idx.clear()
            st.batch_t.clear()

    def process(self, idx: int, frame: CanFrame) -> None:
        self.stats["frames"] += 1
        if self.timing_for(frame.can_id) is None:
            return
        st = self._states[frame.can_id]
        st.batch_idx.append(idx)
        st.batch_t.append(frame.t_us)
        if len(st.batch_t) == self.config.cho_window:
            self._close_batch(frame.can_id, st)

    def _close_batch(self, cid: int, st: _IdState) -> None:
        n = len(st.batch_t)
        a1 = st.batch_t[0]
        off_sum = 0.0
        for i in range(1, n):
            off_sum += (st.batch_t[i] - a1) - i * st.mu_us
        o_k_ms = off_sum / (n - 1) / 1000.0
        st.mu_us = (st.batch_t[-1] - a1) / (n - 1)
        st.o_acc_ms += abs(o_k_ms)

        t = (st.batch_t[-1] - self._t0_us) / 1e6
        e = st.o_acc_ms - st.skew * t
        lam = self.config.cho_forgetting
        gain = st.cov * t / (lam + t * t * st.cov)
        st.skew += gain * e
        st.cov = (st.cov - gain * t * st.cov) / lam

        if not self._frozen:
            st.err_count += 1
            d = e - st.err_mean
            st.err_mean += d / st.err_count
            st.err_m2 += d * (e - st.err_mean)
        sigma = math.sqrt(st.err_m2 / st.err_count) if st.err_count else 0.0

        if sigma > 0.0:
            z = (e - st.err_mean) / sigma
            kappa = self.config.cho_kappa
            st.l_pos = max(0.0, st.l_pos + z - kappa)
            st.l_neg = max(0.0, st.l_neg - z - kappa)
        score = max(st.l_pos, st.l_neg)
        anomalous = score > self.config.cho_cusum_limit
        self.emit(KIND_WINDOW, cid, st.batch_t[0], st.batch_t[-1],
                  anomalous=anomalous, score=score,
                  members=tuple(st.batch_idx))
        if anomalous:
            st.l_pos = 0.0
            st.l_neg = 0.0
        st.batch_idx.clear()
        st.batch_t.clear()

    def export_baseline(self) -> dict[int, dict]:
        out = {}
        for cid in sorted(self._states):
            st = self._states[cid]
            out[cid] = {"mu_us": st.mu_us, "s": st.skew, "p": st.cov,
                        "err_count": st.err_count, "err_mean": st.err_mean,
                        "err_m2": st.err_m2}
        return out
