"""Fitting and threshold tuning against clean traffic.

Every tuner follows the same discipline: derive a candidate closed-form
(or grid) value, then verify it by replaying the clean set and counting
anomalies, because the replay semantics — inclusive bands, strict
comparisons, timestamp ordering — are what actually decide false
positives.
"""

from __future__ import annotations

import copy
import math
import logging
from typing import Iterable

from ..frames import Trace, ValidationError
from ..profile import CycleTimeModel
from .base import DetectorConfig

log = logging.getLogger(__name__)

STABILI_K_CAP = 64
OTSUKA_DELTA_GRID = [i / 100 for i in range(1, 51)]


def _drive(det, trace: Trace) -> None:
    # local import; replay pulls in the detector registry
    from ..replay import drive
    drive(det, trace)


def _clean_anomalies(det_cls, model, config, traces) -> int:
    # counting goes through run_detector so the compiled backend, when
    # built, carries the grid searches; both backends emit identical
    # verdict streams
    from ..replay import run_detector
    from . import DETECTORS
    name = next(n for n, cls in DETECTORS.items() if cls is det_cls)
    total = 0
    for trace in traces:
        result = run_detector(name, model, config, trace)
        total += int(result.anomalous.sum())
    return total


def _per_id_gaps(traces: Iterable[Trace]):
    """Yield (id, gap_us, kind) with kind in {start, delta, trail}."""
    for trace in traces:
        if not len(trace):
            continue
        t_start = trace.start_us
        t_end = trace.end_us
        last: dict[int, int] = {}
        for frame in trace.frames:
            prev = last.get(frame.can_id)
            if prev is None:
                yield frame.can_id, frame.t_us - t_start, "start"
            else:
                yield frame.can_id, frame.t_us - prev, "delta"
            last[frame.can_id] = frame.t_us
        for cid, t in last.items():
            yield cid, t_end - t, "trail"


def tune_otsuka_delta(clean: list[Trace], model: CycleTimeModel,
                      config: DetectorConfig) -> float:
    from .hold_window import HoldWindowDetector
    max_rel = 0.0
    for cid, gap, kind in _per_id_gaps(clean):
        timing = model.get(cid)
        if timing is None or not timing.cyclic or kind != "delta":
            continue
        rel = abs(gap - timing.ct_us) / timing.ct_us
        if rel > max_rel:
            max_rel = rel
    for delta in OTSUKA_DELTA_GRID:
        if delta < max_rel:
            continue
        trial = copy.deepcopy(config)
        trial.otsuka_delta = delta
        if _clean_anomalies(HoldWindowDetector, model, trial, clean) == 0:
            return delta
    raise ValidationError(
        f"no tolerance up to 50% clears the clean set (max dev {max_rel:.3f})")


def tune_taylor_threshold(clean: list[Trace], model: CycleTimeModel,
                          config: DetectorConfig, step: float = 0.1) -> float:
    from .window_tstat import WindowTStatDetector
    max_score = 0.0
    for trace in clean:
        det = WindowTStatDetector(model, config)
        _drive(det, trace)
        for v in det.out:
            if v.score > max_score:
                max_score = v.score
    if not math.isfinite(max_score):
        raise ValidationError("clean traffic already saturates the t statistic")
    threshold = round((math.floor(max_score / step) + 1) * step, 6)
    return threshold


def tune_moore_m(clean: list[Trace], model: CycleTimeModel,
                 first_s: float = 5.0) -> dict[int, int]:
    """Largest |gap - ct| inside each trace's opening seconds, per ID."""
    window_us = round(first_s * 1_000_000)
    m: dict[int, int] = {}
    for trace in clean:
        if not len(trace):
            continue
        cutoff = trace.start_us + window_us
        last: dict[int, int] = {}
        for frame in trace.frames:
            if frame.t_us > cutoff:
                break
            prev = last.get(frame.can_id)
            last[frame.can_id] = frame.t_us
            timing = model.get(frame.can_id)
            if prev is None or timing is None or not timing.cyclic:
                continue
            dev = abs((frame.t_us - prev) - timing.ct_us)
            if dev > m.get(frame.can_id, -1):
                m[frame.can_id] = dev
    for cid in model.cyclic_ids():
        if cid not in m:
            log.warning("id 0x%x has no gap inside the first %.0fs, "
                        "falling back to whole-data deviation", cid, first_s)
            m[cid] = model[cid].max_abs_error_us
    return m


def tune_stabili_k(clean: list[Trace], model: CycleTimeModel,
                   config: DetectorConfig) -> dict[int, int]:
    from .missing_id import MissingIdDetector
    k: dict[int, int] = {}
    for cid, gap, kind in _per_id_gaps(clean):
        timing = model.get(cid)
        if timing is None or not timing.cyclic:
            continue
        ct = timing.ct_us
        # trailing silence alarms at equality, interior gaps do not
        need = gap // ct + 1 if kind == "trail" else -(-gap // ct)
        if need > k.get(cid, 0):
            k[cid] = max(1, need)
    for cid in model.cyclic_ids():
        k.setdefault(cid, 1)
    while True:
        trial = copy.deepcopy(config)
        trial.stabili_k = dict(k)
        offenders: set[int] = set()
        for trace in clean:
            det = MissingIdDetector(model, trial)
            _drive(det, trace)
            offenders.update(v.can_id for v in det.out)
        if not offenders:
            return k
        for cid in offenders:
            k[cid] += 1
            if k[cid] > STABILI_K_CAP:
                raise ValidationError(
                    f"id {cid:#x} still misfires at k={STABILI_K_CAP}")


def fit_cho_baseline(clean: list[Trace], model: CycleTimeModel,
                     config: DetectorConfig) -> dict[int, dict]:
    from .clock_skew import ClockSkewDetector
    det = ClockSkewDetector(model, config)
    for trace in clean:
        _drive(det, trace)
    return det.export_baseline()


CHO_LIMIT_GRID = (5.0, 10.0, 25.0, 50.0, 100.0, 250.0, 500.0,
                  1000.0, 2500.0, 5000.0)
# ascending, so ties in the search favor the fastest-tracking regression
CHO_FORGETTING_GRID = (0.8, 0.9, 0.95, 0.99, 0.9995)


def cho_parameter_search(clean: list[Trace], model: CycleTimeModel,
                         config: DetectorConfig,
                         windows: list[int] | None = None,
                         p_inits: list[float] | None = None,
                         kappas: list[float] | None = None,
                         forgettings: list[float] | None = None,
                         limits: list[float] | None = None,
                         validate: list[Trace] | None = None,
                         ) -> DetectorConfig:
    """Exhaustive grid minimizing clean-set anomalies; ties go to the
    lexicographically first candidate, so reruns are reproducible and
    the loosest knob (the control limit) stays as tight as possible.
    Anomalies are counted on `validate` when given (held-out data keeps
    the limit honest), otherwise on the fitting traces themselves."""
    from .clock_skew import ClockSkewDetector
    held_out = validate if validate is not None else clean
    windows = sorted(windows or [config.cho_window])
    p_inits = sorted(p_inits or [config.cho_p_init])
    kappas = sorted(kappas or [config.cho_kappa])
    forgettings = sorted(forgettings or [config.cho_forgetting])
    limits = sorted(limits if limits is not None else CHO_LIMIT_GRID)
    best = None
    for n in windows:
        for p in p_inits:
            for lam in forgettings:
                fitted = copy.deepcopy(config)
                fitted.cho_window = n
                fitted.cho_p_init = p
                fitted.cho_forgetting = lam
                # the baseline depends on the regression knobs only
                baseline = fit_cho_baseline(clean, model, fitted)
                for kappa in kappas:
                    for limit in limits:
                        trial = copy.deepcopy(fitted)
                        trial.cho_kappa = kappa
                        trial.cho_cusum_limit = limit
                        trial.cho_baseline = baseline
                        fps = _clean_anomalies(ClockSkewDetector, model,
                                               trial, held_out)
                        if best is None or fps < best[0]:
                            best = (fps, trial)
    assert best is not None
    log.info("cho grid search: best has %d clean anomalies", best[0])
    return best[1]


def fit(name: str, clean: list[Trace], model: CycleTimeModel,
        config: DetectorConfig | None = None) -> DetectorConfig:
    """Tune the named detector on clean traces, returning a new config."""
    cfg = copy.deepcopy(config) if config is not None else DetectorConfig()
    if name == "otsuka14":
        cfg.otsuka_delta = tune_otsuka_delta(clean, model, cfg)
    elif name == "taylor15":
        cfg.taylor_threshold = tune_taylor_threshold(clean, model, cfg)
    elif name == "cho16":
        cfg = cho_parameter_search(clean, model, cfg,
                                   forgettings=list(CHO_FORGETTING_GRID))
    elif name == "moore17":
        cfg.moore_m_us = tune_moore_m(clean, model)
    elif name == "stabili19":
        cfg.stabili_k = tune_stabili_k(clean, model, cfg)
    elif name == "olufowobi20":
        for cid in model.cyclic_ids():
            timing = model[cid]
            cfg.olufowobi_ptilde_us[cid] = timing.min_dt_us
            cfg.olufowobi_jitter_us[cid] = timing.max_dt_us - timing.min_dt_us
            cfg.olufowobi_precise_us[cid] = timing.ct_us
    elif name in ("gmiden16", "song16", "song16-dos"):
        pass   # nothing to learn beyond the cycle-time model
    else:
        raise ValidationError(f"unknown detector {name!r}")
    cfg.validate()
    return cfg
