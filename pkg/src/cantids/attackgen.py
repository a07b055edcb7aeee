"""Labeled attack-trace synthesis on top of clean captures.

Four attack shapes, all purely timestamp-level (legit frames are never
perturbed, so ground truth stays exact):

* ``inject-replay``: per active second, `frequency` copies of the most
  recently observed target frame at evenly spread sub-second offsets.
  The active window defaults to [first target arrival, trace end] — a
  replay can only reuse frames it has already seen.
* ``remove-inhibition``: target frames inside [start, end) deleted, the
  count recorded so absence-based recall stays computable.
* ``impersonation``: from the first original arrival past start_time the
  target's frames are removed and substituted with attacker frames at
  exact cycle-time spacing.
* ``dos-flood``: a flat high-rate stream (default 2000/s) under an
  arbitrary, possibly never-seen ID, default 0x0.

Injected frames carry the ``injected`` label; the attack descriptor
(with resolved window and exact counts) lands in trace meta.
"""

from __future__ import annotations

import copy
from bisect import bisect_left
from dataclasses import dataclass, field

from .frames import (
    LABEL_INJECTED,
    US_PER_SECOND,
    CanFrame,
    Trace,
    TraceMeta,
    ValidationError,
    to_us,
)
from .profile import CycleTimeModel

KIND_INJECT = "inject-replay"
KIND_REMOVE = "remove-inhibition"
KIND_IMPERSONATE = "impersonation"
KIND_DOS = "dos-flood"
ATTACK_KINDS = (KIND_INJECT, KIND_REMOVE, KIND_IMPERSONATE, KIND_DOS)

INJECT_FREQUENCIES = (1, 10, 25, 50, 100)
DOS_DEFAULT_FREQUENCY = 2000
DOS_DEFAULT_ID = 0x0
IMPERSONATE_DEFAULT_START_S = 250.0


@dataclass
class AttackSpec:
    kind: str
    target_id: int = DOS_DEFAULT_ID
    frequency: float = 0.0
    start_s: float | None = None
    end_s: float | None = None
    phase: float = 0.5            # fraction of the injection spacing
    overlap_ms: float = 0.0       # impersonation transition artifact

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValidationError(f"unknown attack kind {self.kind!r}")
        if self.kind == KIND_DOS and self.frequency == 0.0:
            self.frequency = DOS_DEFAULT_FREQUENCY
        if self.kind in (KIND_INJECT, KIND_DOS) and self.frequency <= 0:
            raise ValidationError(f"{self.kind} needs frequency > 0")
        if (self.start_s is not None and self.end_s is not None
                and self.start_s > self.end_s):
            raise ValidationError("start_s must not exceed end_s")
        if not 0.0 <= self.phase < 1.0:
            raise ValidationError("phase must be in [0, 1)")

    def to_json(self) -> dict:
        return {"kind": self.kind, "target_id": self.target_id,
                "frequency": self.frequency, "start_s": self.start_s,
                "end_s": self.end_s, "phase": self.phase,
                "overlap_ms": self.overlap_ms}

    @classmethod
    def from_json(cls, d: dict) -> "AttackSpec":
        return cls(**d)


def _attack_meta(base: Trace, spec: AttackSpec, **resolved) -> TraceMeta:
    meta = copy.deepcopy(base.meta)
    meta.attack = {**spec.to_json(), **resolved}
    return meta


def _target_frames(base: Trace, spec: AttackSpec) -> list[CanFrame]:
    frames = base.frames_of(spec.target_id)
    if not frames:
        available = ", ".join(f"0x{i:x}" for i in base.ids())
        raise ValidationError(
            f"id 0x{spec.target_id:x} absent from trace; have: {available}")
    return frames


def injection_instants(start_us: int, end_us: int, frequency: float,
                       phase: float) -> list[int]:
    """Per-second grid from start_us; a trailing partial second gets
    floor(frequency * fraction) instants."""
    instants = []
    second = start_us
    while second < end_us:
        span = min(US_PER_SECOND, end_us - second)
        if span == US_PER_SECOND:
            count = round(frequency)
        else:
            count = int(frequency * span / US_PER_SECOND)
        for j in range(count):
            instants.append(second + round((j + phase) / frequency
                                           * US_PER_SECOND))
        second += US_PER_SECOND
    return instants


def inject_replay(base: Trace, spec: AttackSpec) -> Trace:
    targets = _target_frames(base, spec)
    times = [f.t_us for f in targets]
    start_us = times[0] if spec.start_s is None else to_us(spec.start_s)
    end_us = base.end_us if spec.end_s is None else to_us(spec.end_s)
    instants = injection_instants(start_us, end_us, spec.frequency,
                                  spec.phase)
    injected = []
    for t in instants:
        i = bisect_left(times, t) - 1
        template = targets[i] if i >= 0 else targets[0]
        injected.append(CanFrame(t, spec.target_id, template.dlc,
                                 template.payload, LABEL_INJECTED))
    meta = _attack_meta(base, spec, start_us=start_us, end_us=end_us,
                        injected_count=len(injected))
    # list order ties legit frames ahead of injected at equal timestamps
    return Trace(base.frames + injected, meta)


def remove_id(base: Trace, spec: AttackSpec
              ) -> tuple[Trace, list[CanFrame]]:
    """Returns the thinned trace and the frames that were removed."""
    _target_frames(base, spec)
    start_us = base.start_us if spec.start_s is None else to_us(spec.start_s)
    end_us = base.end_us + 1 if spec.end_s is None else to_us(spec.end_s)
    kept, removed = [], []
    for f in base.frames:
        if f.can_id == spec.target_id and start_us <= f.t_us < end_us:
            removed.append(f)
        else:
            kept.append(f)
    meta = _attack_meta(base, spec, start_us=start_us, end_us=end_us,
                        removed_count=len(removed))
    return Trace(kept, meta), removed


def impersonate(base: Trace, spec: AttackSpec,
                model: CycleTimeModel) -> Trace:
    targets = _target_frames(base, spec)
    timing = model.get(spec.target_id)
    if timing is None or not timing.cyclic:
        raise ValidationError(
            f"id 0x{spec.target_id:x} is not cyclic in the model")
    start_s = (IMPERSONATE_DEFAULT_START_S if spec.start_s is None
               else spec.start_s)
    start_us = base.start_us + to_us(start_s)
    anchor = next((f.t_us for f in targets if f.t_us >= start_us), None)
    if anchor is None:
        meta = _attack_meta(base, spec, start_us=start_us, anchor_us=None,
                            removed_count=0, injected_count=0)
        return Trace(list(base.frames), meta)

    overlap_us = round(spec.overlap_ms * 1000)
    kept, removed = [], 0
    for f in base.frames:
        if (f.can_id == spec.target_id and f.t_us >= anchor
                and not (overlap_us and f.t_us < anchor + overlap_us)):
            removed += 1
        else:
            kept.append(f)
    before = [f for f in targets if f.t_us < anchor]
    template = before[-1] if before else targets[0]
    injected = []
    t = anchor
    while t <= base.end_us:
        injected.append(CanFrame(t, spec.target_id, template.dlc,
                                 template.payload, LABEL_INJECTED))
        t += timing.ct_us
    meta = _attack_meta(base, spec, start_us=start_us, anchor_us=anchor,
                        removed_count=removed,
                        injected_count=len(injected))
    return Trace(kept + injected, meta)


def dos_flood(base: Trace, spec: AttackSpec, dlc: int = 8) -> Trace:
    start_us = base.start_us if spec.start_s is None else to_us(spec.start_s)
    end_us = base.end_us if spec.end_s is None else to_us(spec.end_s)
    count = int(spec.frequency * (end_us - start_us) / US_PER_SECOND)
    payload = bytes(dlc)
    injected = [CanFrame(start_us + round(j * US_PER_SECOND / spec.frequency),
                         spec.target_id, dlc, payload, LABEL_INJECTED)
                for j in range(count)]
    meta = _attack_meta(base, spec, start_us=start_us, end_us=end_us,
                        injected_count=len(injected))
    return Trace(base.frames + injected, meta)


def apply_attack(base: Trace, spec: AttackSpec,
                 model: CycleTimeModel | None = None) -> Trace:
    if spec.kind == KIND_INJECT:
        return inject_replay(base, spec)
    if spec.kind == KIND_REMOVE:
        return remove_id(base, spec)[0]
    if spec.kind == KIND_IMPERSONATE:
        if model is None:
            raise ValidationError("impersonation needs a cycle-time model")
        return impersonate(base, spec, model)
    if spec.kind == KIND_DOS:
        return dos_flood(base, spec)
    raise ValidationError(f"unknown attack kind {spec.kind!r}")


@dataclass
class CampaignEntry:
    trace_index: int
    spec: AttackSpec
    name: str


def campaign_entries(target_ids: list[int], n_traces: int,
                     frequencies: tuple[int, ...] = INJECT_FREQUENCIES,
                     ) -> list[CampaignEntry]:
    """The full comparison grid: every target at every injection rate on
    every trace, plus one whole-trace removal per target per trace."""
    entries = []
    for cid in sorted(target_ids):
        for freq in frequencies:
            for r in range(n_traces):
                spec = AttackSpec(KIND_INJECT, cid, float(freq))
                entries.append(CampaignEntry(
                    r, spec, f"inject_{cid:#x}_f{freq}_t{r}"))
    for cid in sorted(target_ids):
        for r in range(n_traces):
            spec = AttackSpec(KIND_REMOVE, cid)
            entries.append(CampaignEntry(r, spec, f"remove_{cid:#x}_t{r}"))
    return entries
