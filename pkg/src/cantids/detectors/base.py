"""Shared detector plumbing: verdicts, configuration, streaming interface.

A detector is a stream processor over one trace. The replay driver calls
``begin_trace`` once, ``process`` per frame (in timestamp order),
``advance`` once per distinct timestamp after all frames carrying it, and
``finalize`` at the end. Verdicts accumulate in the ``out`` list in
emission order. Fitted parameters live in DetectorConfig so a detector
can be reconstructed in a fresh process from the config JSON alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import TYPE_CHECKING

from ..frames import CanFrame, ValidationError

if TYPE_CHECKING:
    from ..profile import CycleTimeModel

KIND_MESSAGE = 0
KIND_WINDOW = 1
KIND_MISSING = 2

KIND_NAMES = {KIND_MESSAGE: "message", KIND_WINDOW: "window",
              KIND_MISSING: "missing-id"}


@dataclass(slots=True)
class Verdict:
    kind: int
    can_id: int
    t_start_us: int
    t_end_us: int
    anomalous: bool
    late: bool = False
    score: float = 0.0
    group: int = -1          # links held/grouped frames; -1 = ungrouped
    members: tuple[int, ...] = ()   # frame indices backing this verdict

    @property
    def kind_name(self) -> str:
        return KIND_NAMES[self.kind]

    def to_json(self) -> dict:
        return {
            "kind": self.kind_name,
            "id": self.can_id,
            "t_start_us": self.t_start_us,
            "t_end_us": self.t_end_us,
            "anomalous": self.anomalous,
            "late": self.late,
            "score": self.score,
            "group": self.group,
            "members": list(self.members),
        }

    @classmethod
    def from_json(cls, d: dict) -> "Verdict":
        kind = {v: k for k, v in KIND_NAMES.items()}[d["kind"]]
        return cls(kind, d["id"], d["t_start_us"], d["t_end_us"],
                   d["anomalous"], d["late"], d["score"], d["group"],
                   tuple(d["members"]))


# dict-valued config fields keyed by CAN ID (JSON forces string keys)
_ID_MAP_FIELDS = ("moore_m_us", "stabili_k", "olufowobi_ptilde_us",
                  "olufowobi_jitter_us", "olufowobi_precise_us")


@dataclass
class DetectorConfig:
    """Tunables for all detectors plus the per-ID values fit() fills in."""

    otsuka_delta: float = 0.04
    taylor_seq_len: int = 2
    taylor_threshold: float = 2.0
    taylor_applicability_ct_max: int = 50      # ms
    cho_window: int = 10
    cho_p_init: float = 0.05
    cho_kappa: float = 0.1
    cho_forgetting: float = 0.9995
    cho_cusum_limit: float = 5.0
    song_dos_dt_ms: float = 0.2
    song_dos_threshold: int = 3
    moore_margin_factor: float = 0.15
    moore_consecutive: int = 3
    # an alert needs its own settling time free of same-ID arrivals before
    # it counts toward the consecutive streak
    moore_alert_settle: bool = True
    moore_m_us: dict[int, int] = field(default_factory=dict)
    stabili_k: dict[int, int] = field(default_factory=dict)
    olufowobi_ptilde_us: dict[int, int] = field(default_factory=dict)
    olufowobi_jitter_us: dict[int, int] = field(default_factory=dict)
    olufowobi_precise_us: dict[int, int] = field(default_factory=dict)
    olufowobi_protection: bool = True
    # per-ID post-fit clock state: mu_us, skew, cov, err_count/mean/m2
    cho_baseline: dict[int, dict] = field(default_factory=dict)

    def validate(self) -> None:
        positive = ("otsuka_delta", "taylor_threshold", "cho_window",
                    "cho_p_init", "cho_kappa", "cho_forgetting",
                    "cho_cusum_limit", "song_dos_dt_ms", "song_dos_threshold",
                    "moore_margin_factor", "moore_consecutive",
                    "taylor_applicability_ct_max")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be > 0")
        if self.taylor_seq_len < 2:
            raise ValidationError("taylor_seq_len must be >= 2")
        for cid, k in self.stabili_k.items():
            if k < 1:
                raise ValidationError(f"stabili_k[{cid:#x}] must be >= 1")

    @classmethod
    def ventus(cls) -> "DetectorConfig":
        return cls()

    @classmethod
    def otids(cls) -> "DetectorConfig":
        return cls(otsuka_delta=0.25, taylor_threshold=1.0,
                   cho_window=5, cho_p_init=0.001, cho_kappa=2.5)

    @property
    def song_dos_dt_us(self) -> int:
        return round(self.song_dos_dt_ms * 1000)

    def to_json(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name in _ID_MAP_FIELDS or f.name == "cho_baseline":
                value = {str(k): v for k, v in value.items()}
            out[f.name] = value
        return out

    @classmethod
    def from_json(cls, data: dict) -> "DetectorConfig":
        kwargs = {}
        known = {f.name for f in fields(cls)}
        for name, value in data.items():
            if name not in known:
                raise ValidationError(f"unknown config field {name!r}")
            if name in _ID_MAP_FIELDS:
                value = {int(k): int(v) for k, v in value.items()}
            elif name == "cho_baseline":
                value = {int(k): v for k, v in value.items()}
            kwargs[name] = value
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


class Detector:
    """Base streaming detector; subclasses fill in the hooks they need."""

    #: eval policy this detector's verdicts are scored under
    policy = "per-message"

    def __init__(self, model: "CycleTimeModel", config: DetectorConfig):
        self.model = model
        self.config = config
        self.out: list[Verdict] = []
        self.stats = {"frames": 0, "unknown_id": 0, "non_cyclic": 0,
                      "inapplicable": 0}

    def begin_trace(self, t_start_us: int) -> None:
        pass

    def process(self, idx: int, frame: CanFrame) -> None:
        raise NotImplementedError

    def advance(self, now_us: int) -> None:
        pass

    def finalize(self, t_end_us: int) -> None:
        pass

    # helpers ----------------------------------------------------------

    def timing_for(self, can_id: int):
        """Cyclic timing record or None, bumping skip counters."""
        t = self.model.get(can_id)
        if t is None:
            self.stats["unknown_id"] += 1
            return None
        if not t.cyclic:
            self.stats["non_cyclic"] += 1
            return None
        return t

    def emit(self, kind: int, can_id: int, t_start_us: int, t_end_us: int,
             anomalous: bool, late: bool = False, score: float = 0.0,
             group: int = -1, members: tuple[int, ...] = ()) -> None:
        self.out.append(Verdict(kind, can_id, t_start_us, t_end_us,
                                anomalous, late, score, group, members))
