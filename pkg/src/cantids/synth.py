"""Synthetic periodic CAN traffic.

Ten IDs with cycle times spanning 10 ms to 1 s, mirroring the kind of mix
a real body/powertrain bus carries. Two jitter models:

``grid``
    The k-th frame of an ID lands at ``phase + k*ct + ct*eta_k`` with
    eta_k drawn uniform in [-jitter, +jitter]. Arrivals stay locked to the
    nominal grid, so frame counts per window are deterministic and
    consecutive deltas deviate from ct by at most 2*jitter. This is what a
    scheduler-driven ECU looks like and is the default.

``spacing``
    Each delta is ``ct * (1 + u)``, u uniform in [-jitter, +jitter]; the
    arrival clock random-walks away from the grid. Useful for exercising
    cycle-time recovery, not for count-exact fixtures.

Payloads are the frame counter in little-endian bytes so that replayed
payloads look like real (changing) data.
"""

from __future__ import annotations

import random

from .frames import US_PER_SECOND, CanFrame, Trace, TraceMeta

# id -> cycle time in ms; the mix used by the synthetic fleet
FLEET_CT_MS = {
    0x010: 10,
    0x120: 20,
    0x290: 30,
    0x2B5: 40,
    0x2C5: 60,
    0x330: 80,
    0x350: 100,
    0x3D0: 200,
    0x3E0: 300,
    0x581: 1000,
}

DEFAULT_JITTER = 0.02
DEFAULT_DLC = 8


def _id_rng(seed: int, can_id: int, salt: str = "") -> random.Random:
    # string seeds hash stably across processes, tuples do not
    return random.Random(f"{seed}/{salt}/{can_id:x}")


def generate_id_stream(can_id: int, ct_ms: int, duration_s: float,
                       seed: int, jitter: float = DEFAULT_JITTER,
                       mode: str = "grid", phase_us: int | None = None,
                       dlc: int = DEFAULT_DLC, salt: str = "") -> list[CanFrame]:
    rng = _id_rng(seed, can_id, salt)
    ct_us = ct_ms * 1000
    duration_us = round(duration_s * US_PER_SECOND)
    if phase_us is None:
        phase_us = int(rng.random() * ct_us)
    frames = []
    k = 0
    if mode == "grid":
        while True:
            nominal = phase_us + k * ct_us
            if nominal >= duration_us:
                break
            t = nominal + round(ct_us * rng.uniform(-jitter, jitter))
            frames.append(_frame(t, can_id, dlc, k))
            k += 1
    elif mode == "spacing":
        t = phase_us
        while t < duration_us:
            frames.append(_frame(t, can_id, dlc, k))
            k += 1
            t += round(ct_us * (1.0 + rng.uniform(-jitter, jitter)))
    else:
        raise ValueError(f"unknown jitter mode {mode!r}")
    return frames


def _frame(t_us: int, can_id: int, dlc: int, counter: int) -> CanFrame:
    payload = (counter & (2 ** (8 * dlc) - 1)).to_bytes(dlc, "little") if dlc else b""
    return CanFrame(t_us, can_id, dlc, payload)


def generate_traffic(duration_s: float, seed: int,
                     fleet: dict[int, int] | None = None,
                     jitter: float = DEFAULT_JITTER, mode: str = "grid",
                     phases_us: dict[int, int] | None = None,
                     source: str = "synth") -> Trace:
    """One bus trace: every fleet ID transmitting for duration_s seconds."""
    fleet = FLEET_CT_MS if fleet is None else fleet
    frames: list[CanFrame] = []
    for can_id in sorted(fleet):
        phase = phases_us.get(can_id) if phases_us else None
        frames.extend(generate_id_stream(
            can_id, fleet[can_id], duration_s, seed, jitter, mode,
            phase_us=phase, salt=source))
    return Trace(frames, TraceMeta(source=source))


def stratified_phases(fleet: dict[int, int], trace_index: int,
                      n_traces: int) -> dict[int, int]:
    """Spread each ID's phase across traces: ct * (r + 0.5) / n.

    Keeps a multi-trace set from reusing one alignment between IDs, the
    way captures taken at different times would differ.
    """
    return {cid: (ct * 1000 * (2 * trace_index + 1)) // (2 * n_traces)
            for cid, ct in fleet.items()}


def generate_fleet_traces(n_traces: int, duration_s: float, seed: int,
                          fleet: dict[int, int] | None = None,
                          jitter: float = DEFAULT_JITTER,
                          mode: str = "grid") -> list[Trace]:
    fleet = FLEET_CT_MS if fleet is None else fleet
    traces = []
    for r in range(n_traces):
        traces.append(generate_traffic(
            duration_s, seed, fleet, jitter, mode,
            phases_us=stratified_phases(fleet, r, n_traces),
            source=f"synth-{r}"))
    return traces
