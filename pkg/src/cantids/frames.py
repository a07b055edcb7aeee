"""CAN frame and trace data model.

Timestamps are integer microseconds throughout the package: CAN logs carry
microsecond-resolution wall times and keeping them as ints makes interval
arithmetic exact and replay results platform independent. Seconds floats
only appear at the I/O boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

US_PER_SECOND = 1_000_000

MAX_STANDARD_ID = 0x7FF       # 11-bit
MAX_EXTENDED_ID = 0x1FFFFFFF  # 29-bit

LABEL_CLEAN = "clean"
LABEL_INJECTED = "injected"
LABEL_REMOVED = "removed"           # only meaningful in removal sidecars
LABEL_ATTACK_UNKNOWN = "attack-unknown"

VALID_LABELS = (LABEL_CLEAN, LABEL_INJECTED, LABEL_REMOVED, LABEL_ATTACK_UNKNOWN)

DEFAULT_BITRATE = 500_000  # bit/s, classic high-speed CAN


class ValidationError(ValueError):
    """Raised for malformed frames, traces or trace files."""


@dataclass(slots=True)
class CanFrame:
    """One data frame: arrival time, arbitration ID, payload and ground truth."""

    t_us: int
    can_id: int
    dlc: int
    payload: bytes = b""
    label: str = LABEL_CLEAN

    def __post_init__(self):
        if self.t_us < 0:
            raise ValidationError(f"negative timestamp {self.t_us}")
        if not 0 <= self.can_id <= MAX_EXTENDED_ID:
            raise ValidationError(f"CAN id 0x{self.can_id:x} out of 29-bit range")
        if not 0 <= self.dlc <= 8:
            raise ValidationError(f"dlc {self.dlc} out of range 0..8")
        if len(self.payload) != self.dlc:
            raise ValidationError(
                f"payload is {len(self.payload)} bytes but dlc={self.dlc}")
        if self.label not in VALID_LABELS:
            raise ValidationError(f"unknown label {self.label!r}")

    @property
    def timestamp(self) -> float:
        """Arrival time in seconds."""
        return self.t_us / US_PER_SECOND

    @property
    def extended(self) -> bool:
        """True when the ID cannot fit the 11-bit standard format."""
        return self.can_id > MAX_STANDARD_ID


@dataclass
class TraceMeta:
    """Bookkeeping that travels with a trace but not inside the CSV rows."""

    source: str = ""
    bitrate: int = DEFAULT_BITRATE
    # attack descriptor written by attackgen: kind, target id, frequency,
    # window, phase, injected/removed counts. None for clean traces.
    attack: dict | None = None

    def to_json(self) -> dict:
        out = {"source": self.source, "bitrate": self.bitrate}
        if self.attack is not None:
            out["attack"] = self.attack
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "TraceMeta":
        return cls(source=obj.get("source", ""),
                   bitrate=int(obj.get("bitrate", DEFAULT_BITRATE)),
                   attack=obj.get("attack"))


class Trace:
    """A timestamp-sorted sequence of frames plus metadata.

    Treat it as immutable once built; transformations (attack generation)
    return new Trace objects.
    """

    def __init__(self, frames: list[CanFrame], meta: TraceMeta | None = None,
                 sort: bool = True):
        if sort:
            # stable: ties keep input order (legit rows before appended ones)
            frames = sorted(frames, key=lambda f: f.t_us)
        self.frames = frames
        self.meta = meta if meta is not None else TraceMeta()
        self._arrays = None

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self) -> Iterator[CanFrame]:
        return iter(self.frames)

    def __getitem__(self, i):
        return self.frames[i]

    @property
    def start_us(self) -> int:
        return self.frames[0].t_us if self.frames else 0

    @property
    def end_us(self) -> int:
        return self.frames[-1].t_us if self.frames else 0

    def ids(self) -> list[int]:
        """Distinct CAN ids, ascending."""
        return sorted({f.can_id for f in self.frames})

    def frames_of(self, can_id: int) -> list[CanFrame]:
        return [f for f in self.frames if f.can_id == can_id]

    def count_label(self, label: str) -> int:
        return sum(1 for f in self.frames if f.label == label)

    def arrays(self):
        """(t_us int64, can_id int64, injected bool) numpy views, cached."""
        if self._arrays is None:
            import numpy as np

            n = len(self.frames)
            t = np.empty(n, dtype=np.int64)
            ids = np.empty(n, dtype=np.int64)
            inj = np.zeros(n, dtype=np.bool_)
            for i, f in enumerate(self.frames):
                t[i] = f.t_us
                ids[i] = f.can_id
                if f.label == LABEL_INJECTED:
                    inj[i] = True
            self._arrays = (t, ids, inj)
        return self._arrays


def to_us(seconds: float | int) -> int:
    """Convert seconds to integer microseconds (round half away from zero)."""
    if isinstance(seconds, int):
        return seconds * US_PER_SECOND
    scaled = seconds * US_PER_SECOND
    return int(scaled + 0.5) if scaled >= 0 else -int(-scaled + 0.5)
