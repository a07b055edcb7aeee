"""Detector registry and shared types.

Detector names are stable CLI identifiers. ``song16`` resolves to the
same implementation as ``gmiden16`` (the two published rules coincide);
``song16-dos`` is the separate flood rule.
"""

from ..frames import ValidationError
from .arrival_window import ArrivalWindowDetector
from .base import (
    KIND_MESSAGE,
    KIND_MISSING,
    KIND_WINDOW,
    Detector,
    DetectorConfig,
    Verdict,
)
from .burst_flood import BurstFloodDetector
from .clock_skew import ClockSkewDetector
from .deviation_margin import DeviationMarginDetector
from .gap_halving import GapHalvingDetector
from .hold_window import HoldWindowDetector
from .missing_id import MissingIdDetector
from .window_tstat import WindowTStatDetector

DETECTORS: dict[str, type[Detector]] = {
    "otsuka14": HoldWindowDetector,
    "taylor15": WindowTStatDetector,
    "cho16": ClockSkewDetector,
    "gmiden16": GapHalvingDetector,
    "song16": GapHalvingDetector,
    "song16-dos": BurstFloodDetector,
    "moore17": DeviationMarginDetector,
    "stabili19": MissingIdDetector,
    "olufowobi20": ArrivalWindowDetector,
}


def make_detector(name: str, model, config: DetectorConfig) -> Detector:
    try:
        cls = DETECTORS[name]
    except KeyError:
        raise ValidationError(
            f"unknown detector {name!r}; "
            f"choose from {', '.join(sorted(DETECTORS))}") from None
    return cls(model, config)


__all__ = [
    "DETECTORS",
    "Detector",
    "DetectorConfig",
    "Verdict",
    "KIND_MESSAGE",
    "KIND_WINDOW",
    "KIND_MISSING",
    "make_detector",
    "ArrivalWindowDetector",
    "BurstFloodDetector",
    "ClockSkewDetector",
    "DeviationMarginDetector",
    "GapHalvingDetector",
    "HoldWindowDetector",
    "MissingIdDetector",
    "WindowTStatDetector",
]
