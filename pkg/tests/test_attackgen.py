import pytest

from cantids.attackgen import (
    ATTACK_KINDS,
    DOS_DEFAULT_FREQUENCY,
    INJECT_FREQUENCIES,
    KIND_DOS,
    KIND_IMPERSONATE,
    KIND_INJECT,
    KIND_REMOVE,
    AttackSpec,
    apply_attack,
    campaign_entries,
    dos_flood,
    impersonate,
    inject_replay,
    injection_instants,
    remove_id,
)
from cantids.frames import (
    LABEL_CLEAN,
    LABEL_INJECTED,
    CanFrame,
    Trace,
    TraceMeta,
    ValidationError,
)

from helpers import make_model, make_timing


def ramp_trace(can_id=0x120, ct_us=20_000, n=100, t0=0):
    """Periodic single-ID trace whose payload encodes the frame index,
    so copied payloads can be traced back to their template."""
    frames = [CanFrame(t0 + k * ct_us, can_id, 2, bytes([k % 256, k // 256]))
              for k in range(n)]
    return Trace(frames, TraceMeta(source="ramp"))


# --- spec validation ----------------------------------------------------

def test_unknown_kind_rejected():
    with pytest.raises(ValidationError):
        AttackSpec("teleport", 0x10)


@pytest.mark.parametrize("kind", [KIND_INJECT, KIND_DOS])
def test_injecting_kinds_need_positive_frequency(kind):
    with pytest.raises(ValidationError):
        AttackSpec(kind, 0x10, frequency=-1.0)
    if kind == KIND_INJECT:
        with pytest.raises(ValidationError):
            AttackSpec(kind, 0x10, frequency=0.0)


def test_dos_frequency_defaults():
    assert AttackSpec(KIND_DOS).frequency == DOS_DEFAULT_FREQUENCY
    assert AttackSpec(KIND_DOS, frequency=500.0).frequency == 500.0


def test_window_and_phase_bounds():
    with pytest.raises(ValidationError):
        AttackSpec(KIND_INJECT, 0x10, 10.0, start_s=5.0, end_s=4.0)
    with pytest.raises(ValidationError):
        AttackSpec(KIND_INJECT, 0x10, 10.0, phase=1.0)
    with pytest.raises(ValidationError):
        AttackSpec(KIND_INJECT, 0x10, 10.0, phase=-0.1)
    AttackSpec(KIND_INJECT, 0x10, 10.0, phase=0.0)   # closed end is fine


def test_spec_json_round_trip():
    spec = AttackSpec(KIND_IMPERSONATE, 0x2B5, start_s=100.0,
                      overlap_ms=5.0)
    again = AttackSpec.from_json(spec.to_json())
    assert again == spec


def test_absent_target_rejected_with_inventory():
    trace = ramp_trace(can_id=0x120)
    with pytest.raises(ValidationError, match="0x999.*0x120"):
        inject_replay(trace, AttackSpec(KIND_INJECT, 0x999, 10.0))


# --- injection instants -------------------------------------------------

def test_instants_evenly_spread_with_centered_phase():
    got = injection_instants(0, 1_000_000, 10.0, 0.5)
    assert got == [50_000 + j * 100_000 for j in range(10)]


def test_instants_trailing_partial_second_floors():
    # 1.35 s at 10/s: 10 full-second instants plus floor(3.5) = 3 more
    got = injection_instants(0, 1_350_000, 10.0, 0.5)
    assert len(got) == 13
    assert got[10:] == [1_050_000, 1_150_000, 1_250_000]


def test_instants_offset_start():
    got = injection_instants(7_000_000, 8_000_000, 2.0, 0.0)
    assert got == [7_000_000, 7_500_000]


# --- replay injection ---------------------------------------------------

def test_inject_counts_and_labels():
    trace = ramp_trace(n=200)           # 4 s of 20 ms traffic
    spec = AttackSpec(KIND_INJECT, 0x120, 25.0)
    attacked = inject_replay(trace, spec)
    n_inj = attacked.count_label(LABEL_INJECTED)
    assert n_inj == attacked.meta.attack["injected_count"]
    assert len(attacked) == len(trace) + n_inj
    assert attacked.count_label(LABEL_CLEAN) == len(trace)


def test_inject_window_defaults_to_first_arrival_through_end():
    # target appears 2 s into the trace; nothing may be replayed before
    base = ramp_trace(can_id=0x10, ct_us=10_000, n=500)
    late = [CanFrame(2_000_000 + k * 100_000, 0x350, 1, b"\x07")
            for k in range(30)]
    trace = Trace(base.frames + late, TraceMeta(source="mix"))
    attacked = inject_replay(trace, AttackSpec(KIND_INJECT, 0x350, 10.0))
    inj = [f for f in attacked if f.label == LABEL_INJECTED]
    assert attacked.meta.attack["start_us"] == 2_000_000
    assert min(f.t_us for f in inj) >= 2_000_000
    assert max(f.t_us for f in inj) <= trace.end_us


def test_inject_copies_most_recent_payload():
    trace = ramp_trace(ct_us=20_000, n=100)
    spec = AttackSpec(KIND_INJECT, 0x120, 10.0)
    attacked = inject_replay(trace, spec)
    originals = trace.frames_of(0x120)
    times = [f.t_us for f in originals]
    for f in attacked:
        if f.label != LABEL_INJECTED:
            continue
        # the template is the newest original at or before the instant
        preceding = [o for o in originals if o.t_us <= f.t_us]
        assert preceding, f
        assert f.payload == preceding[-1].payload
        assert f.dlc == preceding[-1].dlc
    assert times == [f.t_us for f in attacked.frames_of(0x120)
                     if f.label == LABEL_CLEAN]


def test_inject_tie_keeps_legit_frame_first():
    # phase 0 puts an instant exactly on a legit arrival
    trace = ramp_trace(ct_us=100_000, n=21)
    spec = AttackSpec(KIND_INJECT, 0x120, 10.0, phase=0.0)
    attacked = inject_replay(trace, spec)
    by_t = {}
    for f in attacked:
        by_t.setdefault(f.t_us, []).append(f.label)
    dupes = [labels for labels in by_t.values() if len(labels) > 1]
    assert dupes
    for labels in dupes:
        assert labels[0] == LABEL_CLEAN


def test_inject_explicit_window():
    trace = ramp_trace(n=300)
    spec = AttackSpec(KIND_INJECT, 0x120, 50.0, start_s=1.0, end_s=3.0)
    attacked = inject_replay(trace, spec)
    assert attacked.count_label(LABEL_INJECTED) == 100
    inj = [f for f in attacked if f.label == LABEL_INJECTED]
    assert all(1_000_000 <= f.t_us < 3_000_000 for f in inj)


# --- removal ------------------------------------------------------------

def test_remove_defaults_to_whole_trace():
    trace = ramp_trace(n=50)
    thinned, removed = remove_id(trace, AttackSpec(KIND_REMOVE, 0x120))
    assert len(removed) == 50
    assert len(thinned) == 0
    assert thinned.meta.attack["removed_count"] == 50


def test_remove_window_is_half_open():
    trace = ramp_trace(ct_us=10_000, n=100)   # arrivals at 0,10,...,990 ms
    spec = AttackSpec(KIND_REMOVE, 0x120, start_s=0.2, end_s=0.5)
    thinned, removed = remove_id(trace, spec)
    ts = [f.t_us for f in removed]
    assert ts[0] == 200_000          # start is included
    assert ts[-1] == 490_000         # end is not
    assert len(removed) == 30
    assert len(thinned) == 70
    kept_ts = {f.t_us for f in thinned}
    assert 500_000 in kept_ts and 190_000 in kept_ts


def test_remove_empty_window_is_identity():
    trace = ramp_trace(n=40)
    spec = AttackSpec(KIND_REMOVE, 0x120, start_s=0.3, end_s=0.3)
    thinned, removed = remove_id(trace, spec)
    assert removed == []
    assert [f.t_us for f in thinned] == [f.t_us for f in trace]


def test_remove_leaves_other_ids_alone():
    a = ramp_trace(can_id=0x10, ct_us=10_000, n=100)
    b = ramp_trace(can_id=0x20, ct_us=25_000, n=40)
    trace = Trace(a.frames + b.frames, TraceMeta(source="pair"))
    thinned, removed = remove_id(trace, AttackSpec(KIND_REMOVE, 0x20))
    assert len(removed) == 40
    assert thinned.frames_of(0x10) == trace.frames_of(0x10)


# --- impersonation ------------------------------------------------------

def imp_model(can_id=0x120, ct_ms=20):
    return make_model([make_timing(can_id, ct_ms)])


def test_impersonate_swaps_tail_at_exact_spacing():
    trace = ramp_trace(ct_us=20_000, n=200)   # ~4 s
    spec = AttackSpec(KIND_IMPERSONATE, 0x120, start_s=2.0)
    attacked = impersonate(trace, spec, imp_model())
    meta = attacked.meta.attack
    assert meta["anchor_us"] == 2_000_000
    inj = [f for f in attacked if f.label == LABEL_INJECTED]
    assert [f.t_us for f in inj] == list(
        range(2_000_000, trace.end_us + 1, 20_000))
    assert meta["injected_count"] == len(inj)
    assert meta["removed_count"] == 100
    # the attacker clones the last frame it observed before taking over
    last_seen = trace.frames_of(0x120)[99]
    assert all(f.payload == last_seen.payload for f in inj)
    clean_after = [f for f in attacked
                   if f.label == LABEL_CLEAN and f.can_id == 0x120
                   and f.t_us >= 2_000_000]
    assert clean_after == []


def test_impersonate_overlap_keeps_victim_briefly():
    trace = ramp_trace(ct_us=20_000, n=200)
    spec = AttackSpec(KIND_IMPERSONATE, 0x120, start_s=2.0, overlap_ms=50.0)
    attacked = impersonate(trace, spec, imp_model())
    clean_ts = [f.t_us for f in attacked
                if f.label == LABEL_CLEAN and f.t_us >= 2_000_000]
    assert clean_ts == [2_000_000, 2_020_000, 2_040_000]
    assert attacked.meta.attack["removed_count"] == 97


def test_impersonate_start_past_trace_is_a_noop():
    trace = ramp_trace(ct_us=20_000, n=100)   # ends before 250 s default
    spec = AttackSpec(KIND_IMPERSONATE, 0x120)
    attacked = impersonate(trace, spec, imp_model())
    assert attacked.meta.attack["anchor_us"] is None
    assert attacked.meta.attack["injected_count"] == 0
    assert [f.t_us for f in attacked] == [f.t_us for f in trace]


def test_impersonate_needs_cyclic_target():
    trace = ramp_trace(ct_us=20_000, n=100)
    model = make_model([make_timing(0x120, 20, cyclic=False)])
    with pytest.raises(ValidationError, match="not cyclic"):
        impersonate(trace, AttackSpec(KIND_IMPERSONATE, 0x120), model)


# --- flooding -----------------------------------------------------------

def test_dos_flood_rate_and_shape():
    trace = ramp_trace(ct_us=10_000, n=301)   # exactly 3 s
    attacked = dos_flood(trace, AttackSpec(KIND_DOS))
    inj = [f for f in attacked if f.label == LABEL_INJECTED]
    assert len(inj) == 3 * DOS_DEFAULT_FREQUENCY
    assert all(f.can_id == 0x0 for f in inj)
    assert all(f.dlc == 8 and f.payload == bytes(8) for f in inj)
    assert attacked.meta.attack["injected_count"] == len(inj)


def test_dos_flood_custom_rate_and_window():
    trace = ramp_trace(ct_us=10_000, n=301)
    spec = AttackSpec(KIND_DOS, 0x7, frequency=100.0, start_s=1.0,
                      end_s=2.0)
    attacked = dos_flood(trace, spec)
    inj = [f for f in attacked if f.label == LABEL_INJECTED]
    assert len(inj) == 100
    assert inj[0].t_us == 1_000_000
    assert all(f.can_id == 0x7 for f in inj)
    assert all(1_000_000 <= f.t_us < 2_000_000 for f in inj)


# --- dispatch and campaign grid -----------------------------------------

def test_apply_attack_dispatch():
    trace = ramp_trace(ct_us=20_000, n=200)
    model = imp_model()
    for kind in ATTACK_KINDS:
        spec = AttackSpec(kind, 0x120, frequency=10.0, start_s=1.0)
        out = apply_attack(trace, spec, model)
        assert out.meta.attack["kind"] == kind


def test_impersonation_requires_model():
    trace = ramp_trace(ct_us=20_000, n=200)
    with pytest.raises(ValidationError, match="model"):
        apply_attack(trace, AttackSpec(KIND_IMPERSONATE, 0x120))


def test_attack_leaves_base_trace_untouched():
    trace = ramp_trace(n=100)
    before = [(f.t_us, f.can_id, f.payload, f.label) for f in trace]
    inject_replay(trace, AttackSpec(KIND_INJECT, 0x120, 50.0))
    remove_id(trace, AttackSpec(KIND_REMOVE, 0x120))
    assert [(f.t_us, f.can_id, f.payload, f.label) for f in trace] == before
    assert trace.meta.attack is None


def test_campaign_grid_shape_and_names():
    ids = [0x330, 0x10]
    entries = campaign_entries(ids, n_traces=3)
    n_inject = len(ids) * len(INJECT_FREQUENCIES) * 3
    n_remove = len(ids) * 3
    assert len(entries) == n_inject + n_remove
    names = [e.name for e in entries]
    assert len(set(names)) == len(names)
    assert "inject_0x10_f25_t2" in names
    assert "remove_0x330_t0" in names
    # ids iterate in ascending order regardless of input order
    assert names[0].startswith("inject_0x10_")
    inject_part = entries[:n_inject]
    assert all(e.spec.kind == KIND_INJECT for e in inject_part)
    assert all(e.spec.kind == KIND_REMOVE for e in entries[n_inject:])
    assert {e.trace_index for e in entries} == {0, 1, 2}
