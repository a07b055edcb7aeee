import copy

import pytest

from cantids.detectors import DetectorConfig, make_detector
from cantids.detectors.tuning import (
    cho_parameter_search,
    fit,
    fit_cho_baseline,
    tune_moore_m,
    tune_otsuka_delta,
    tune_stabili_k,
    tune_taylor_threshold,
)
from cantids.frames import ValidationError
from cantids.replay import drive, run_detector

from helpers import make_model, make_timing, trace_of


def clean_anomaly_count(name, model, cfg, traces):
    total = 0
    for trace in traces:
        result = run_detector(name, model, cfg, trace, backend="python")
        total += int(result.anomalous.sum())
    return total


def test_otsuka_delta_clears_clean_set(fleet_traces, model, config):
    delta = tune_otsuka_delta(fleet_traces, model, config)
    assert 0.0 < delta <= 0.5
    cfg = copy.deepcopy(config)
    cfg.otsuka_delta = delta
    assert clean_anomaly_count("otsuka14", model, cfg, fleet_traces) == 0


def test_otsuka_delta_covers_observed_deviation(fleet_traces, model, config):
    delta = tune_otsuka_delta(fleet_traces, model, config)
    worst = 0.0
    for trace in fleet_traces:
        last = {}
        for f in trace.frames:
            prev = last.get(f.can_id)
            last[f.can_id] = f.t_us
            t = model.get(f.can_id)
            if prev is None or t is None or not t.cyclic:
                continue
            worst = max(worst, abs((f.t_us - prev) - t.ct_us) / t.ct_us)
    assert delta >= worst


def test_otsuka_delta_fails_on_wild_traffic():
    model = make_model([make_timing(0x10, 100)])
    # alternating 10/190 ms gaps: 90% deviation, past any grid value
    arrivals, t = [], 0
    for k in range(40):
        arrivals.append((t, 0x10))
        t += 10_000 if k % 2 else 190_000
    with pytest.raises(ValidationError):
        tune_otsuka_delta([trace_of(arrivals)], model, DetectorConfig())


def test_taylor_threshold_sits_above_clean_scores(fleet_traces, model,
                                                  config):
    threshold = tune_taylor_threshold(fleet_traces, model, config)
    high = 0.0
    for trace in fleet_traces:
        det = make_detector("taylor15", model, config)
        drive(det, trace)
        high = max(high, max((v.score for v in det.out), default=0.0))
    assert high < threshold <= high + 0.1 + 1e-9


def test_moore_m_is_first_seconds_worst_deviation(model, fleet_traces):
    m = tune_moore_m(fleet_traces, model, first_s=5.0)
    expected = {}
    for trace in fleet_traces:
        cutoff = trace.start_us + 5_000_000
        last = {}
        for f in trace.frames:
            if f.t_us > cutoff:
                break
            prev = last.get(f.can_id)
            last[f.can_id] = f.t_us
            t = model.get(f.can_id)
            if prev is None or t is None or not t.cyclic:
                continue
            dev = abs((f.t_us - prev) - t.ct_us)
            expected[f.can_id] = max(expected.get(f.can_id, 0), dev)
    assert m == expected


def test_moore_m_falls_back_for_quiet_ids(caplog):
    # a 9 s cycle never produces a delta inside the first 5 s
    model = make_model([make_timing(0x10, 9_000, max_abs_error_us=123)])
    arrivals = [(0, 0x10), (9_000_000, 0x10), (18_000_000, 0x10)]
    with caplog.at_level("WARNING"):
        m = tune_moore_m([trace_of(arrivals)], model)
    assert m[0x10] == 123


def test_stabili_k_quiet_on_clean(fleet_traces, model, config):
    k = tune_stabili_k(fleet_traces, model, config)
    assert set(k) == set(model.cyclic_ids())
    assert all(v >= 1 for v in k.values())
    cfg = copy.deepcopy(config)
    cfg.stabili_k = k
    assert clean_anomaly_count("stabili19", model, cfg, fleet_traces) == 0


def test_stabili_k_accounts_for_trailing_silence():
    model = make_model([make_timing(0x10, 100)])
    # last sighting 350 ms before the end: k=1..3 would alarm on the tail
    arrivals = [(0, 0x10), (100_000, 0x10), (200_000, 0x10),
                (550_000, 0x99)]
    model = make_model([make_timing(0x10, 100),
                        make_timing(0x99, 100, cyclic=False)])
    k = tune_stabili_k([trace_of(arrivals)], model, DetectorConfig())
    assert k[0x10] == 4


def test_fit_cho_baseline_exports_state(fleet_traces, model, config):
    baseline = fit_cho_baseline(fleet_traces[:1], model, config)
    assert set(baseline) == set(model.cyclic_ids())
    for snap in baseline.values():
        assert snap["err_count"] > 0


def test_cho_search_picks_quiet_limit(fleet_traces, model, config):
    cfg = cho_parameter_search(fleet_traces[:2], model, config,
                               limits=[0.001, 5.0, 500.0],
                               validate=fleet_traces[2:])
    assert cfg.cho_baseline
    fps = clean_anomaly_count("cho16", model, cfg, fleet_traces[2:])
    worse = copy.deepcopy(cfg)
    worse.cho_cusum_limit = 0.001
    assert fps <= clean_anomaly_count("cho16", model, worse,
                                      fleet_traces[2:])


def test_fit_dispatch(fleet_traces, model):
    cfg = fit("gmiden16", fleet_traces, model)
    assert cfg == DetectorConfig()
    cfg = fit("olufowobi20", fleet_traces, model)
    assert set(cfg.olufowobi_ptilde_us) == set(model.cyclic_ids())
    assert set(cfg.olufowobi_jitter_us) == set(model.cyclic_ids())
    for cid in model.cyclic_ids():
        t = model[cid]
        assert cfg.olufowobi_ptilde_us[cid] == t.min_dt_us
        assert cfg.olufowobi_jitter_us[cid] == t.max_dt_us - t.min_dt_us
    with pytest.raises(ValidationError):
        fit("nope", fleet_traces, model)


def test_fit_does_not_mutate_input_config(fleet_traces, model):
    cfg = DetectorConfig()
    fit("moore17", fleet_traces, model, cfg)
    assert cfg.moore_m_us == {}


def test_tuned_config_is_quiet_everywhere(fleet_traces, model, tuned_config):
    for name in ("otsuka14", "taylor15", "gmiden16", "moore17",
                 "stabili19", "olufowobi20", "song16-dos"):
        assert clean_anomaly_count(name, model, tuned_config,
                                   fleet_traces) == 0, name
