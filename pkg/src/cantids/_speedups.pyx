# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Whole-trace replay kernels, one per detector.

Each kernel replays a full trace through the same state machine as the
streaming detector of the same behaviour and must reproduce its output
bit for bit: identical verdicts in identical order, identical floating
point operation order, identical group numbering. The pure-Python
detectors stay the reference implementation; these kernels copy their
structure line by line, including the sorted-by-ID sweeps that the
driver's advance/finalize hooks perform (a std::map iterates in key
order, which is exactly ``sorted(self._states)``).

Inputs arrive as aligned numpy arrays prepared in ``replay``: the trace
columns (timestamps, CAN ids) plus per-ID model and config columns
indexed like ``ids``. Every kernel returns ``(columns, stats)`` where
columns are the ten result arrays and stats the counter dict every
detector keeps.
"""

from cython.operator cimport dereference as deref, preincrement as inc
from libc.math cimport INFINITY, copysign, fabs, log1p, sqrt
from libc.stdint cimport int8_t, int32_t, int64_t, uint8_t
from libcpp.map cimport map as cmap
from libcpp.set cimport set as cset
from libcpp.vector cimport vector

import numpy as np

cdef int8_t KIND_MESSAGE = 0
cdef int8_t KIND_WINDOW = 1
cdef int8_t KIND_MISSING = 2

cdef int64_t US_PER_SECOND = 1000000


cdef extern from *:
    """
    #include <cstdint>
    #include <vector>

    struct FloodSt {
        std::int64_t last; std::int64_t run;
        FloodSt(): last(-1), run(0) {}
    };
    struct HoldSt {
        std::int64_t anchor; double deadline;
        std::vector<std::int64_t> held_idx;
        std::vector<std::int64_t> held_t;
        HoldSt(): anchor(-1), deadline(0.0) {}
    };
    struct TStatSt {
        std::int64_t win_start; std::int64_t last_t; std::int64_t n;
        double mean; double m2;
        std::int64_t ct; std::int64_t seq_start;
        std::vector<std::int64_t> members;
        std::vector<double> seq_t;
        std::vector<std::int64_t> seq_members;
        TStatSt(): win_start(0), last_t(0), n(0), mean(0.0), m2(0.0),
                   ct(0), seq_start(0) {}
    };
    struct ChoSt {
        double mu; double skew; double cov;
        std::int64_t err_count; double err_mean; double err_m2;
        double o_acc; double l_pos; double l_neg;
        std::vector<std::int64_t> batch_idx;
        std::vector<std::int64_t> batch_t;
        ChoSt(): mu(0.0), skew(0.0), cov(0.0), err_count(0), err_mean(0.0),
                 err_m2(0.0), o_acc(0.0), l_pos(0.0), l_neg(0.0) {}
    };
    struct MooreSt {
        std::int64_t last_t; std::int64_t pend_idx; std::int64_t pend_t;
        std::vector<std::int64_t> streak_idx;
        std::vector<std::int64_t> streak_t;
        MooreSt(): last_t(-1), pend_idx(-1), pend_t(0) {}
    };
    struct MissSt {
        std::int64_t deadline; std::int64_t k; std::int64_t ct;
        MissSt(): deadline(0), k(0), ct(0) {}
    };
    """
    cppclass FloodSt:
        int64_t last
        int64_t run
    cppclass HoldSt:
        int64_t anchor
        double deadline
        vector[int64_t] held_idx
        vector[int64_t] held_t
    cppclass TStatSt:
        int64_t win_start
        int64_t last_t
        int64_t n
        double mean
        double m2
        int64_t ct
        int64_t seq_start
        vector[int64_t] members
        vector[double] seq_t
        vector[int64_t] seq_members
    cppclass ChoSt:
        double mu
        double skew
        double cov
        int64_t err_count
        double err_mean
        double err_m2
        double o_acc
        double l_pos
        double l_neg
        vector[int64_t] batch_idx
        vector[int64_t] batch_t
    cppclass MooreSt:
        int64_t last_t
        int64_t pend_idx
        int64_t pend_t
        vector[int64_t] streak_idx
        vector[int64_t] streak_t
    cppclass MissSt:
        int64_t deadline
        int64_t k
        int64_t ct


cdef class Sink:
    """Verdict accumulator matching RunResult's column layout."""

    cdef vector[int8_t] kind
    cdef vector[int32_t] cid
    cdef vector[int64_t] ta
    cdef vector[int64_t] tb
    cdef vector[uint8_t] anom
    cdef vector[uint8_t] late
    cdef vector[double] score
    cdef vector[int64_t] group
    cdef vector[int64_t] mflat
    cdef vector[int64_t] moff

    def __cinit__(self):
        self.moff.push_back(0)

    cdef void put(self, int8_t kind, int64_t cid, int64_t ta, int64_t tb,
                  bint anom, bint late, double score, int64_t group):
        # caller appends members afterwards and must finish with seal()
        # the flag bytes go through named locals: handing push_back an
        # int-to-byte conversion temporary straight off the ternary gets
        # miscompiled by g++ 11 at -O2 (the temp's init store is dropped)
        cdef uint8_t a8 = 1 if anom else 0
        cdef uint8_t l8 = 1 if late else 0
        cdef int32_t c32 = <int32_t>cid
        self.kind.push_back(kind)
        self.cid.push_back(c32)
        self.ta.push_back(ta)
        self.tb.push_back(tb)
        self.anom.push_back(a8)
        self.late.push_back(l8)
        self.score.push_back(score)
        self.group.push_back(group)

    cdef void member(self, int64_t idx):
        self.mflat.push_back(idx)

    cdef void seal(self):
        cdef int64_t end = <int64_t>self.mflat.size()
        self.moff.push_back(end)

    cdef void put1(self, int8_t kind, int64_t cid, int64_t ta, int64_t tb,
                   bint anom, bint late, double score, int64_t group,
                   int64_t member):
        self.put(kind, cid, ta, tb, anom, late, score, group)
        self.member(member)
        self.seal()

    cdef void putv(self, int8_t kind, int64_t cid, int64_t ta, int64_t tb,
                   bint anom, bint late, double score, int64_t group,
                   vector[int64_t]* members):
        self.put(kind, cid, ta, tb, anom, late, score, group)
        cdef size_t i
        for i in range(members.size()):
            self.mflat.push_back(deref(members)[i])
        self.seal()

    cdef tuple finish(self):
        cdef Py_ssize_t n = <Py_ssize_t>self.kind.size()
        cdef Py_ssize_t m = <Py_ssize_t>self.mflat.size()
        cdef Py_ssize_t i
        kind_a = np.empty(n, dtype=np.int8)
        cid_a = np.empty(n, dtype=np.int32)
        ta_a = np.empty(n, dtype=np.int64)
        tb_a = np.empty(n, dtype=np.int64)
        an_a = np.empty(n, dtype=np.uint8)
        la_a = np.empty(n, dtype=np.uint8)
        sc_a = np.empty(n, dtype=np.float64)
        gr_a = np.empty(n, dtype=np.int64)
        mf_a = np.empty(m, dtype=np.int64)
        mo_a = np.empty(n + 1, dtype=np.int64)
        cdef int8_t[::1] kv = kind_a
        cdef int32_t[::1] cv = cid_a
        cdef int64_t[::1] tav = ta_a
        cdef int64_t[::1] tbv = tb_a
        cdef uint8_t[::1] anv = an_a
        cdef uint8_t[::1] lav = la_a
        cdef double[::1] scv = sc_a
        cdef int64_t[::1] grv = gr_a
        cdef int64_t[::1] mfv = mf_a
        cdef int64_t[::1] mov = mo_a
        for i in range(n):
            kv[i] = self.kind[i]
            cv[i] = self.cid[i]
            tav[i] = self.ta[i]
            tbv[i] = self.tb[i]
            anv[i] = self.anom[i]
            lav[i] = self.late[i]
            scv[i] = self.score[i]
            grv[i] = self.group[i]
        for i in range(m):
            mfv[i] = self.mflat[i]
        for i in range(n + 1):
            mov[i] = self.moff[i]
        return (kind_a, cid_a, ta_a, tb_a, an_a.view(np.bool_),
                la_a.view(np.bool_), sc_a, gr_a, mf_a, mo_a)


cdef dict _stats(int64_t frames, int64_t unknown, int64_t noncyc,
                 int64_t inapp):
    return {"frames": frames, "unknown_id": unknown,
            "non_cyclic": noncyc, "inapplicable": inapp}


cdef void _index_ids(const int64_t[::1] ids,
                     cmap[int64_t, Py_ssize_t]* out):
    cdef Py_ssize_t j
    for j in range(ids.shape[0]):
        deref(out)[ids[j]] = j


def gap_halving(const int64_t[::1] t_us, const int64_t[::1] can_id,
                const int64_t[::1] ids, const int64_t[::1] ct,
                const uint8_t[::1] cyclic):
    cdef Sink out = Sink()
    cdef cmap[int64_t, Py_ssize_t] idx_of
    _index_ids(ids, &idx_of)
    cdef cmap[int64_t, Py_ssize_t].iterator jt
    cdef cmap[int64_t, int64_t] last
    cdef cmap[int64_t, int64_t].iterator lt
    cdef Py_ssize_t i, j
    cdef int64_t n = t_us.shape[0], unknown = 0, noncyc = 0
    cdef int64_t cid, t, prev, dt, c
    for i in range(n):
        cid = can_id[i]
        t = t_us[i]
        jt = idx_of.find(cid)
        if jt == idx_of.end():
            unknown += 1
            continue
        j = deref(jt).second
        if not cyclic[j]:
            noncyc += 1
            continue
        lt = last.find(cid)
        if lt == last.end():
            last[cid] = t
            continue
        prev = deref(lt).second
        deref(lt).second = t
        dt = t - prev
        c = ct[j]
        out.put1(KIND_MESSAGE, cid, t, t, 2 * dt < c, False,
                 (<double>dt) / (<double>c), -1, i)
    return out.finish(), _stats(n, unknown, noncyc, 0)


def burst_flood(const int64_t[::1] t_us, const int64_t[::1] can_id,
                int64_t dt_max_us, int64_t run_limit):
    cdef Sink out = Sink()
    cdef cmap[int64_t, FloodSt] states
    cdef FloodSt* st
    cdef Py_ssize_t i
    cdef int64_t n = t_us.shape[0], cid, t, dt, run
    for i in range(n):
        cid = can_id[i]
        t = t_us[i]
        st = &states[cid]
        if st.last < 0:
            st.last = t
            continue
        dt = t - st.last
        st.last = t
        if dt < dt_max_us:
            run = st.run + 1
        else:
            run = 0
        st.run = run
        out.put1(KIND_MESSAGE, cid, t, t, run > run_limit, False,
                 <double>run, -1, i)
    return out.finish(), _stats(n, 0, 0, 0)


cdef int64_t _hold_flush(Sink out, int64_t cid, HoldSt* st, int64_t group):
    out.putv(KIND_WINDOW, cid, st.held_t.front(), st.held_t.back(),
             True, False, <double>st.held_idx.size(), group, &st.held_idx)
    st.held_idx.clear()
    st.held_t.clear()
    return group + 1


def hold_window(const int64_t[::1] t_us, const int64_t[::1] can_id,
                const int64_t[::1] ids, const int64_t[::1] ct,
                const uint8_t[::1] cyclic, double delta):
    cdef Sink out = Sink()
    cdef cmap[int64_t, Py_ssize_t] idx_of
    _index_ids(ids, &idx_of)
    cdef cmap[int64_t, Py_ssize_t].iterator jt
    cdef Py_ssize_t m = ids.shape[0]
    cdef vector[double] lo, hi
    lo.resize(m)
    hi.resize(m)
    cdef Py_ssize_t j
    for j in range(m):
        lo[j] = (<double>ct[j]) * (1.0 - delta)
        hi[j] = (<double>ct[j]) * (1.0 + delta)
    cdef cmap[int64_t, HoldSt] states
    cdef cmap[int64_t, HoldSt].iterator it
    cdef HoldSt* st
    cdef int64_t group = 0
    cdef Py_ssize_t i = 0
    cdef int64_t n = t_us.shape[0], unknown = 0, noncyc = 0
    cdef int64_t cid, t, now, dt
    while i < n:
        now = t_us[i]
        while i < n and t_us[i] == now:
            cid = can_id[i]
            t = t_us[i]
            jt = idx_of.find(cid)
            if jt == idx_of.end():
                unknown += 1
                i += 1
                continue
            j = deref(jt).second
            if not cyclic[j]:
                noncyc += 1
                i += 1
                continue
            st = &states[cid]
            if st.held_idx.size() > 0 and <double>t >= st.deadline:
                group = _hold_flush(out, cid, st, group)
            if st.anchor < 0:
                st.anchor = t
                i += 1
                continue
            dt = t - st.anchor
            if <double>dt < lo[j]:
                if st.held_idx.size() == 0:
                    st.deadline = (<double>st.anchor) + hi[j]
                st.held_idx.push_back(i)
                st.held_t.push_back(t)
            elif <double>dt > hi[j]:
                out.put1(KIND_MESSAGE, cid, t, t, True, True,
                         (<double>dt) / (<double>ct[j]), -1, i)
            else:
                out.put1(KIND_MESSAGE, cid, t, t, False, False,
                         (<double>dt) / (<double>ct[j]), -1, i)
                st.anchor = t
            i += 1
        it = states.begin()
        while it != states.end():
            st = &deref(it).second
            if st.held_idx.size() > 0 and <double>now >= st.deadline:
                group = _hold_flush(out, deref(it).first, st, group)
            inc(it)
    it = states.begin()
    while it != states.end():
        st = &deref(it).second
        if st.held_idx.size() > 0:
            group = _hold_flush(out, deref(it).first, st, group)
        inc(it)
    return out.finish(), _stats(n, unknown, noncyc, 0)


cdef void _tstat_close_due(Sink out, int64_t cid, TStatSt* st, int64_t now,
                           int64_t seq_len, double threshold):
    cdef double mean, var, tval, score
    cdef size_t q
    while now >= st.win_start + US_PER_SECOND:
        if st.n >= 2:
            mean = st.mean
            var = st.m2 / (<double>(st.n - 1))
            if var > 0.0:
                tval = (mean - <double>st.ct) / sqrt(var / <double>st.n)
            elif mean == <double>st.ct:
                tval = 0.0
            else:
                tval = copysign(INFINITY, mean - <double>st.ct)
            if st.seq_t.size() == 0:
                st.seq_start = st.win_start
            st.seq_t.push_back(tval)
            for q in range(st.members.size()):
                st.seq_members.push_back(st.members[q])
            if <int64_t>st.seq_t.size() == seq_len:
                score = 0.0
                for q in range(st.seq_t.size()):
                    score += log1p(fabs(st.seq_t[q]))
                score = score / (<double>st.seq_t.size())
                out.putv(KIND_WINDOW, cid, st.seq_start,
                         st.win_start + US_PER_SECOND,
                         score >= threshold, False, score, -1,
                         &st.seq_members)
                st.seq_t.clear()
                st.seq_members.clear()
        st.n = 0
        st.mean = 0.0
        st.m2 = 0.0
        st.members.clear()
        st.win_start += US_PER_SECOND


def window_tstat(const int64_t[::1] t_us, const int64_t[::1] can_id,
                 const int64_t[::1] ids, const int64_t[::1] ct,
                 const uint8_t[::1] cyclic, const uint8_t[::1] applicable,
                 int64_t seq_len, double threshold):
    cdef Sink out = Sink()
    cdef cmap[int64_t, Py_ssize_t] idx_of
    _index_ids(ids, &idx_of)
    cdef cmap[int64_t, Py_ssize_t].iterator jt
    cdef cmap[int64_t, TStatSt] states
    cdef cmap[int64_t, TStatSt].iterator it
    cdef cset[int64_t] inapp_seen
    cdef TStatSt* st
    cdef Py_ssize_t i = 0, j
    cdef int64_t n = t_us.shape[0], unknown = 0, noncyc = 0, inapp = 0
    cdef int64_t cid, t, now, dt
    cdef double delta
    while i < n:
        now = t_us[i]
        while i < n and t_us[i] == now:
            cid = can_id[i]
            t = t_us[i]
            jt = idx_of.find(cid)
            if jt == idx_of.end():
                unknown += 1
                i += 1
                continue
            j = deref(jt).second
            if not cyclic[j]:
                noncyc += 1
                i += 1
                continue
            if not applicable[j]:
                if inapp_seen.insert(cid).second:
                    inapp += 1
                i += 1
                continue
            it = states.find(cid)
            if it == states.end():
                st = &states[cid]
                st.win_start = t
                st.seq_start = t
                st.last_t = t
                st.ct = ct[j]
                i += 1
                continue
            st = &deref(it).second
            _tstat_close_due(out, cid, st, t, seq_len, threshold)
            dt = t - st.last_t
            st.last_t = t
            st.n += 1
            delta = (<double>dt) - st.mean
            st.mean = st.mean + delta / (<double>st.n)
            st.m2 = st.m2 + delta * ((<double>dt) - st.mean)
            st.members.push_back(i)
            i += 1
        it = states.begin()
        while it != states.end():
            _tstat_close_due(out, deref(it).first, &deref(it).second, now,
                             seq_len, threshold)
            inc(it)
    return out.finish(), _stats(n, unknown, noncyc, inapp)


cdef void _cho_close(Sink out, int64_t cid, ChoSt* st, int64_t t0,
                     double lam, double kappa, double limit, bint frozen):
    cdef int64_t nb = <int64_t>st.batch_t.size()
    cdef int64_t a1 = st.batch_t.front()
    cdef double off_sum = 0.0
    cdef int64_t i
    for i in range(1, nb):
        off_sum += (<double>(st.batch_t[i] - a1)) - (<double>i) * st.mu
    cdef double o_k_ms = off_sum / (<double>(nb - 1)) / 1000.0
    st.mu = (<double>(st.batch_t.back() - a1)) / (<double>(nb - 1))
    st.o_acc += fabs(o_k_ms)

    cdef double t = (<double>(st.batch_t.back() - t0)) / 1e6
    cdef double e = st.o_acc - st.skew * t
    cdef double gain = st.cov * t / (lam + t * t * st.cov)
    st.skew += gain * e
    st.cov = (st.cov - gain * t * st.cov) / lam

    cdef double d
    if not frozen:
        st.err_count += 1
        d = e - st.err_mean
        st.err_mean += d / (<double>st.err_count)
        st.err_m2 += d * (e - st.err_mean)
    cdef double sigma = 0.0
    if st.err_count:
        sigma = sqrt(st.err_m2 / (<double>st.err_count))

    cdef double z, v
    if sigma > 0.0:
        z = (e - st.err_mean) / sigma
        v = st.l_pos + z - kappa
        st.l_pos = v if v > 0.0 else 0.0
        v = st.l_neg - z - kappa
        st.l_neg = v if v > 0.0 else 0.0
    cdef double score = st.l_neg if st.l_neg > st.l_pos else st.l_pos
    cdef bint anomalous = score > limit
    out.putv(KIND_WINDOW, cid, st.batch_t.front(), st.batch_t.back(),
             anomalous, False, score, -1, &st.batch_idx)
    if anomalous:
        st.l_pos = 0.0
        st.l_neg = 0.0
    st.batch_idx.clear()
    st.batch_t.clear()


def clock_skew(const int64_t[::1] t_us, const int64_t[::1] can_id,
               const int64_t[::1] ids, const uint8_t[::1] cyclic,
               const double[::1] mu, const double[::1] skew,
               const double[::1] cov, const int64_t[::1] err_count,
               const double[::1] err_mean, const double[::1] err_m2,
               int64_t window, double lam, double kappa, double limit,
               bint frozen):
    cdef Sink out = Sink()
    cdef cmap[int64_t, Py_ssize_t] idx_of
    _index_ids(ids, &idx_of)
    cdef cmap[int64_t, Py_ssize_t].iterator jt
    cdef cmap[int64_t, ChoSt] states
    cdef ChoSt* st
    cdef Py_ssize_t i, j
    for j in range(ids.shape[0]):
        if cyclic[j]:
            st = &states[ids[j]]
            st.mu = mu[j]
            st.skew = skew[j]
            st.cov = cov[j]
            st.err_count = err_count[j]
            st.err_mean = err_mean[j]
            st.err_m2 = err_m2[j]
    cdef int64_t n = t_us.shape[0], unknown = 0, noncyc = 0
    cdef int64_t t0 = t_us[0] if n > 0 else 0
    cdef int64_t cid, t
    for i in range(n):
        cid = can_id[i]
        t = t_us[i]
        jt = idx_of.find(cid)
        if jt == idx_of.end():
            unknown += 1
            continue
        if not cyclic[deref(jt).second]:
            noncyc += 1
            continue
        st = &states[cid]
        st.batch_idx.push_back(i)
        st.batch_t.push_back(t)
        if <int64_t>st.batch_t.size() == window:
            _cho_close(out, cid, st, t0, lam, kappa, limit, frozen)
    return out.finish(), _stats(n, unknown, noncyc, 0)


cdef void _moore_confirm(Sink out, int64_t cid, MooreSt* st, int64_t idx,
                         int64_t t, int64_t consecutive):
    st.streak_idx.push_back(idx)
    st.streak_t.push_back(t)
    if <int64_t>st.streak_idx.size() == consecutive:
        out.putv(KIND_WINDOW, cid, st.streak_t.front(), st.streak_t.back(),
                 True, False, <double>st.streak_idx.size(), -1,
                 &st.streak_idx)
        st.streak_idx.clear()
        st.streak_t.clear()


def deviation_margin(const int64_t[::1] t_us, const int64_t[::1] can_id,
                     const int64_t[::1] ids, const int64_t[::1] ct,
                     const uint8_t[::1] cyclic, const double[::1] thr,
                     int64_t consecutive, bint settle):
    cdef Sink out = Sink()
    cdef cmap[int64_t, Py_ssize_t] idx_of
    _index_ids(ids, &idx_of)
    cdef cmap[int64_t, Py_ssize_t].iterator jt
    cdef cmap[int64_t, MooreSt] states
    cdef cmap[int64_t, MooreSt].iterator it
    cdef MooreSt* st
    cdef Py_ssize_t i, j
    cdef int64_t n = t_us.shape[0], unknown = 0, noncyc = 0
    cdef int64_t cid, t, p_idx, p_t, dt, dev
    cdef double th
    for i in range(n):
        cid = can_id[i]
        t = t_us[i]
        jt = idx_of.find(cid)
        if jt == idx_of.end():
            unknown += 1
            continue
        j = deref(jt).second
        if not cyclic[j]:
            noncyc += 1
            continue
        st = &states[cid]
        th = thr[j]
        if st.pend_idx >= 0:
            p_idx = st.pend_idx
            p_t = st.pend_t
            st.pend_idx = -1
            if <double>t > (<double>p_t) + th:
                _moore_confirm(out, cid, st, p_idx, p_t, consecutive)
            # else withdrawn: neither an alert nor a streak reset
        if st.last_t < 0:
            st.last_t = t
            continue
        dt = t - st.last_t
        st.last_t = t
        dev = dt - ct[j]
        if dev < 0:
            dev = -dev
        if <double>dev > th:
            if settle:
                st.pend_idx = i
                st.pend_t = t
            else:
                _moore_confirm(out, cid, st, i, t, consecutive)
        else:
            st.streak_idx.clear()
            st.streak_t.clear()
    cdef int64_t t_end = t_us[n - 1] if n > 0 else 0
    it = states.begin()
    while it != states.end():
        st = &deref(it).second
        if st.pend_idx >= 0:
            p_idx = st.pend_idx
            p_t = st.pend_t
            st.pend_idx = -1
            jt = idx_of.find(deref(it).first)
            if <double>(t_end - p_t) > thr[deref(jt).second]:
                _moore_confirm(out, deref(it).first, st, p_idx, p_t,
                               consecutive)
        inc(it)
    return out.finish(), _stats(n, unknown, noncyc, 0)


def missing_id(const int64_t[::1] t_us, const int64_t[::1] can_id,
               const int64_t[::1] ids, const int64_t[::1] ct,
               const uint8_t[::1] cyclic, const int64_t[::1] k):
    cdef Sink out = Sink()
    cdef cmap[int64_t, Py_ssize_t] idx_of
    _index_ids(ids, &idx_of)
    cdef cmap[int64_t, Py_ssize_t].iterator jt
    cdef cmap[int64_t, MissSt] watched
    cdef cmap[int64_t, MissSt].iterator it, wt
    cdef MissSt* st
    cdef Py_ssize_t i = 0, j
    cdef int64_t n = t_us.shape[0], unknown = 0, noncyc = 0
    cdef int64_t cid, now, dl
    if n > 0:
        # k < 1 marks IDs without a configured horizon
        for j in range(ids.shape[0]):
            if cyclic[j] and k[j] >= 1:
                st = &watched[ids[j]]
                st.k = k[j]
                st.ct = ct[j]
                st.deadline = t_us[0] + k[j] * ct[j]
    while i < n:
        now = t_us[i]
        while i < n and t_us[i] == now:
            cid = can_id[i]
            jt = idx_of.find(cid)
            if jt == idx_of.end():
                unknown += 1
                i += 1
                continue
            if not cyclic[deref(jt).second]:
                noncyc += 1
                i += 1
                continue
            wt = watched.find(cid)
            if wt != watched.end():
                st = &deref(wt).second
                st.deadline = now + st.k * st.ct
            i += 1
        it = watched.begin()
        while it != watched.end():
            st = &deref(it).second
            if now >= st.deadline:
                dl = st.deadline
                while now >= dl:
                    out.put(KIND_MISSING, deref(it).first, dl, dl, True,
                            False, 0.0, -1)
                    out.seal()
                    dl += st.ct
                st.deadline = dl
            inc(it)
    return out.finish(), _stats(n, unknown, noncyc, 0)


def arrival_window(const int64_t[::1] t_us, const int64_t[::1] can_id,
                   const int64_t[::1] ids, const uint8_t[::1] cyclic,
                   const int64_t[::1] ptilde, const double[::1] slack,
                   bint protection):
    cdef Sink out = Sink()
    cdef cmap[int64_t, Py_ssize_t] idx_of
    _index_ids(ids, &idx_of)
    cdef cmap[int64_t, Py_ssize_t].iterator jt
    cdef cmap[int64_t, int64_t] ref
    cdef cmap[int64_t, int64_t].iterator rt
    cdef Py_ssize_t i, j
    cdef int64_t n = t_us.shape[0], unknown = 0, noncyc = 0
    cdef int64_t cid, t, expected
    cdef double sl, dev_ms
    for i in range(n):
        cid = can_id[i]
        t = t_us[i]
        jt = idx_of.find(cid)
        if jt == idx_of.end():
            unknown += 1
            continue
        j = deref(jt).second
        if not cyclic[j]:
            noncyc += 1
            continue
        rt = ref.find(cid)
        if rt == ref.end():
            ref[cid] = t
            continue
        expected = deref(rt).second + ptilde[j]
        sl = slack[j]
        dev_ms = (<double>(t - expected)) / 1000.0
        if <double>t < (<double>expected) - sl:
            out.put1(KIND_MESSAGE, cid, t, t, True, False, dev_ms, -1, i)
            if not protection:
                deref(rt).second = t
        elif <double>t > (<double>expected) + sl:
            out.put1(KIND_MESSAGE, cid, t, t, True, True, dev_ms, -1, i)
            deref(rt).second = t
        else:
            out.put1(KIND_MESSAGE, cid, t, t, False, False, dev_ms, -1, i)
            deref(rt).second = t
    return out.finish(), _stats(n, unknown, noncyc, 0)
