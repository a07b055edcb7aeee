"""Trace replay: drive a detector over a trace and pack the verdicts.

Two interchangeable backends produce bit-identical output:

* the pure-Python detector classes under ``cantids.detectors``;
* compiled whole-trace kernels in ``cantids._speedups`` (Cython), built
  optionally at install time.

Backend choice: the ``backend`` argument wins, then the
``CANTIDS_BACKEND`` environment variable (``python`` or ``compiled``),
then whatever is available (compiled preferred). Replay order is part of
the detector contract: all frames carrying one timestamp are processed
before time advances to that timestamp, and finalize runs once at the
last frame's time.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .detectors import DETECTORS, Verdict, make_detector
from .detectors.base import DetectorConfig
from .frames import Trace, ValidationError
from .profile import CycleTimeModel

try:
    from . import _speedups
except ImportError:
    _speedups = None


def available_backends() -> list[str]:
    return ["python"] if _speedups is None else ["python", "compiled"]


def resolve_backend(backend: str | None = None) -> str:
    choice = backend or os.environ.get("CANTIDS_BACKEND") or "auto"
    if choice == "auto":
        return "compiled" if _speedups is not None else "python"
    if choice not in ("python", "compiled"):
        raise ValidationError(f"unknown backend {choice!r}")
    if choice == "compiled" and _speedups is None:
        raise ValidationError("compiled backend requested but not built")
    return choice


@dataclass
class RunResult:
    """Column-oriented verdict stream plus run counters."""

    detector: str
    backend: str
    kind: np.ndarray          # int8
    can_id: np.ndarray        # int32
    t_start_us: np.ndarray    # int64
    t_end_us: np.ndarray      # int64
    anomalous: np.ndarray     # bool
    late: np.ndarray          # bool
    score: np.ndarray         # float64
    group: np.ndarray         # int64, -1 = ungrouped
    members_flat: np.ndarray  # int64
    members_off: np.ndarray   # int64, len n+1
    stats: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.kind)

    def members(self, i: int) -> tuple[int, ...]:
        lo, hi = self.members_off[i], self.members_off[i + 1]
        return tuple(int(x) for x in self.members_flat[lo:hi])

    def verdict(self, i: int) -> Verdict:
        return Verdict(int(self.kind[i]), int(self.can_id[i]),
                       int(self.t_start_us[i]), int(self.t_end_us[i]),
                       bool(self.anomalous[i]), bool(self.late[i]),
                       float(self.score[i]), int(self.group[i]),
                       self.members(i))

    def __iter__(self):
        return (self.verdict(i) for i in range(len(self)))

    @classmethod
    def from_verdicts(cls, detector: str, backend: str,
                      verdicts: list[Verdict], stats: dict) -> "RunResult":
        n = len(verdicts)
        kind = np.empty(n, dtype=np.int8)
        can_id = np.empty(n, dtype=np.int32)
        t0 = np.empty(n, dtype=np.int64)
        t1 = np.empty(n, dtype=np.int64)
        anomalous = np.empty(n, dtype=bool)
        late = np.empty(n, dtype=bool)
        score = np.empty(n, dtype=np.float64)
        group = np.empty(n, dtype=np.int64)
        off = np.zeros(n + 1, dtype=np.int64)
        for i, v in enumerate(verdicts):
            kind[i] = v.kind
            can_id[i] = v.can_id
            t0[i] = v.t_start_us
            t1[i] = v.t_end_us
            anomalous[i] = v.anomalous
            late[i] = v.late
            score[i] = v.score
            group[i] = v.group
            off[i + 1] = off[i] + len(v.members)
        flat = np.empty(int(off[-1]), dtype=np.int64)
        pos = 0
        for v in verdicts:
            for m in v.members:
                flat[pos] = m
                pos += 1
        return cls(detector, backend, kind, can_id, t0, t1, anomalous,
                   late, score, group, flat, off, stats)


def drive(det, trace: Trace) -> None:
    """Feed one trace through a detector instance (python backend core)."""
    frames = trace.frames
    if not frames:
        return
    det.begin_trace(frames[0].t_us)
    n = len(frames)
    for i, frame in enumerate(frames):
        det.process(i, frame)
        if i + 1 == n or frames[i + 1].t_us != frame.t_us:
            det.advance(frame.t_us)
    det.finalize(frames[-1].t_us)


def run_detector(name: str, model: CycleTimeModel, config: DetectorConfig,
                 trace: Trace, backend: str | None = None) -> RunResult:
    if name not in DETECTORS:
        raise ValidationError(f"unknown detector {name!r}; "
                              f"choose from {', '.join(sorted(DETECTORS))}")
    chosen = resolve_backend(backend)
    if chosen == "compiled":
        return _run_compiled(name, model, config, trace)
    det = make_detector(name, model, config)
    drive(det, trace)
    return RunResult.from_verdicts(name, "python", det.out, det.stats)


def _run_compiled(name: str, model: CycleTimeModel, config: DetectorConfig,
                  trace: Trace) -> RunResult:
    t_us, can_id, _ = trace.arrays()
    kernel = _KERNELS[DETECTORS[name]]
    arrays, stats = kernel(_speedups, model, config, t_us, can_id)
    return RunResult(name, "compiled", *arrays, stats=stats)


def _model_arrays(model: CycleTimeModel):
    ids = sorted(model.timings)
    n = len(ids)
    arr_id = np.array(ids, dtype=np.int64)
    ct = np.empty(n, dtype=np.int64)
    cyclic = np.empty(n, dtype=np.uint8)
    min_dt = np.empty(n, dtype=np.int64)
    max_dt = np.empty(n, dtype=np.int64)
    max_err = np.empty(n, dtype=np.int64)
    tx_us = np.empty(n, dtype=np.float64)
    for i, cid in enumerate(ids):
        t = model[cid]
        ct[i] = t.ct_us
        cyclic[i] = 1 if t.cyclic else 0
        min_dt[i] = t.min_dt_us
        max_dt[i] = t.max_dt_us
        max_err[i] = t.max_abs_error_us
        tx_us[i] = t.worst_case_tx_ms * 1000.0
    return arr_id, ct, cyclic, min_dt, max_dt, max_err, tx_us


def _id_map_array(ids, mapping, fallback) -> np.ndarray:
    out = np.empty(len(ids), dtype=np.int64)
    for i, cid in enumerate(ids):
        v = mapping.get(int(cid))
        out[i] = fallback(int(cid)) if v is None else v
    return out


def _kernel_gap_halving(sp, model, config, t_us, can_id):
    ids, ct, cyclic, *_ = _model_arrays(model)
    return sp.gap_halving(t_us, can_id, ids, ct, cyclic)


def _kernel_burst_flood(sp, model, config, t_us, can_id):
    return sp.burst_flood(t_us, can_id, config.song_dos_dt_us,
                          config.song_dos_threshold)


def _kernel_hold_window(sp, model, config, t_us, can_id):
    ids, ct, cyclic, *_ = _model_arrays(model)
    return sp.hold_window(t_us, can_id, ids, ct, cyclic,
                          config.otsuka_delta)


def _kernel_window_tstat(sp, model, config, t_us, can_id):
    ids, ct, cyclic, *_ = _model_arrays(model)
    applicable = np.array(
        [1 if model[int(c)].ct_ms < config.taylor_applicability_ct_max else 0
         for c in ids], dtype=np.uint8)
    return sp.window_tstat(t_us, can_id, ids, ct, cyclic, applicable,
                           config.taylor_seq_len, config.taylor_threshold)


def _kernel_clock_skew(sp, model, config, t_us, can_id):
    ids, ct, cyclic, *_ = _model_arrays(model)
    n = len(ids)
    mu = np.empty(n, dtype=np.float64)
    skew = np.zeros(n, dtype=np.float64)
    cov = np.empty(n, dtype=np.float64)
    err_count = np.zeros(n, dtype=np.int64)
    err_mean = np.zeros(n, dtype=np.float64)
    err_m2 = np.zeros(n, dtype=np.float64)
    for i, cid in enumerate(ids):
        snap = config.cho_baseline.get(int(cid))
        if snap is not None:
            mu[i] = snap["mu_us"]
            skew[i] = snap["s"]
            cov[i] = snap["p"]
            err_count[i] = snap["err_count"]
            err_mean[i] = snap["err_mean"]
            err_m2[i] = snap["err_m2"]
        else:
            mu[i] = float(model[int(cid)].ct_us)
            cov[i] = config.cho_p_init
    return sp.clock_skew(t_us, can_id, ids, cyclic, mu, skew, cov,
                         err_count, err_mean, err_m2, config.cho_window,
                         config.cho_forgetting, config.cho_kappa,
                         config.cho_cusum_limit,
                         1 if config.cho_baseline else 0)


def _kernel_deviation_margin(sp, model, config, t_us, can_id):
    ids, ct, cyclic, _, _, max_err, _ = _model_arrays(model)
    m_us = _id_map_array(ids, config.moore_m_us,
                         lambda cid: model[cid].max_abs_error_us)
    thr = config.moore_margin_factor * ct.astype(np.float64) \
        + m_us.astype(np.float64)
    return sp.deviation_margin(t_us, can_id, ids, ct, cyclic, thr,
                               config.moore_consecutive,
                               1 if config.moore_alert_settle else 0)


def _kernel_missing_id(sp, model, config, t_us, can_id):
    ids, ct, cyclic, *_ = _model_arrays(model)
    k = _id_map_array(ids, config.stabili_k, lambda cid: -1)
    return sp.missing_id(t_us, can_id, ids, ct, cyclic, k)


def _kernel_arrival_window(sp, model, config, t_us, can_id):
    ids, ct, cyclic, min_dt, max_dt, _, tx_us = _model_arrays(model)
    ptilde = _id_map_array(ids, config.olufowobi_ptilde_us,
                           lambda cid: model[cid].min_dt_us)
    jitter = _id_map_array(ids, config.olufowobi_jitter_us,
                           lambda cid: model[cid].max_dt_us
                           - model[cid].min_dt_us)
    slack = jitter.astype(np.float64) + tx_us
    return sp.arrival_window(t_us, can_id, ids, cyclic, ptilde, slack,
                             1 if config.olufowobi_protection else 0)


def _register_kernels():
    from .detectors.arrival_window import ArrivalWindowDetector
    from .detectors.burst_flood import BurstFloodDetector
    from .detectors.clock_skew import ClockSkewDetector
    from .detectors.deviation_margin import DeviationMarginDetector
    from .detectors.gap_halving import GapHalvingDetector
    from .detectors.hold_window import HoldWindowDetector
    from .detectors.missing_id import MissingIdDetector
    from .detectors.window_tstat import WindowTStatDetector
    return {
        GapHalvingDetector: _kernel_gap_halving,
        BurstFloodDetector: _kernel_burst_flood,
        HoldWindowDetector: _kernel_hold_window,
        WindowTStatDetector: _kernel_window_tstat,
        ClockSkewDetector: _kernel_clock_skew,
        DeviationMarginDetector: _kernel_deviation_margin,
        MissingIdDetector: _kernel_missing_id,
        ArrivalWindowDetector: _kernel_arrival_window,
    }


_KERNELS = _register_kernels()


def write_verdicts(path: str, result: RunResult, trace_path: str = "",
                   extra: dict | None = None) -> None:
    """JSON-lines verdict file: one meta header line, then verdicts."""
    header = {"detector": result.detector, "backend": result.backend,
              "trace": trace_path, "stats": result.stats,
              "verdicts": len(result)}
    if extra:
        header.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"meta": header}, sort_keys=True) + "\n")
        for v in result:
            fh.write(json.dumps(v.to_json(), sort_keys=True) + "\n")


def read_verdicts(path: str) -> tuple[dict, list[Verdict]]:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first.strip():
            raise ValidationError(f"{path}: empty verdict file")
        header = json.loads(first)
        if "meta" not in header:
            raise ValidationError(f"{path}: missing meta header line")
        verdicts = [Verdict.from_json(json.loads(line))
                    for line in fh if line.strip()]
    return header["meta"], verdicts
