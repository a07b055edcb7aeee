"""Timing-based anomaly detection toolkit for CAN bus traffic.

The package is organized around five pieces:

* :mod:`cantids.frames` / :mod:`cantids.traceio` -- frame/trace data model
  and the trace file formats (native CSV, OTIDS-style text logs).
* :mod:`cantids.profile` -- per-ID cycle time estimation and the timing
  model every detector consumes.
* :mod:`cantids.detectors` -- eight streaming detectors keyed by the
  frequency/timing behavior of periodic CAN traffic.
* :mod:`cantids.attackgen` -- labeled attack-trace synthesis (replay
  injection, ID removal, impersonation, DoS flood).
* :mod:`cantids.evalkit` -- confusion accounting, F-measure / detection
  rate reports for detector-vs-attack campaigns.

Whole-trace replay runs on a compiled kernel when the optional
``cantids._speedups`` extension is available and falls back to stepping the
pure-Python detectors otherwise (see :mod:`cantids.replay`).
"""

__version__ = "0.1.0"

from .detectors import DETECTORS, DetectorConfig, Verdict, make_detector
from .frames import CanFrame, Trace, TraceMeta, ValidationError
from .profile import CycleTimeModel, estimate_cycle_times, worst_case_tx_time
from .replay import RunResult, available_backends, run_detector
from .traceio import load_trace, parse_trace, save_trace

__all__ = [
    "CanFrame",
    "Trace",
    "TraceMeta",
    "ValidationError",
    "CycleTimeModel",
    "estimate_cycle_times",
    "worst_case_tx_time",
    "DETECTORS",
    "DetectorConfig",
    "Verdict",
    "make_detector",
    "RunResult",
    "available_backends",
    "run_detector",
    "load_trace",
    "parse_trace",
    "save_trace",
    "__version__",
]
