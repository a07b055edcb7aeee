"""Trace file formats.

Native format is a plain UTF-8 CSV with header
``timestamp,id,dlc,payload,label``: decimal seconds at microsecond
resolution, ``0x``-prefixed hex IDs, lowercase hex payload, one of the
ground-truth labels. The label column may be omitted entirely (everything
defaults to clean). Serializing a parsed file reproduces it byte for byte.

Also reads the whitespace-separated text logs used by the OTIDS captures::

    Timestamp:     0.000100  ID: 0164  000  DLC: 8  00 21 10 ff 00 ff 00 00

where the flag column marks the frame type; rows whose flag is not ``000``
are remote frames and are skipped (only data frames carry timing signal).

Trace metadata (source name, bitrate, attack descriptor) does not fit the
row schema; it travels in a ``<file>.meta.json`` sidecar written/read by
:func:`save_trace` / :func:`load_trace`.
"""

from __future__ import annotations

import json
import os
from typing import Iterable

from .frames import (
    LABEL_CLEAN,
    US_PER_SECOND,
    VALID_LABELS,
    CanFrame,
    Trace,
    TraceMeta,
    ValidationError,
)

NATIVE_HEADER = "timestamp,id,dlc,payload,label"
NATIVE_HEADER_NOLABEL = "timestamp,id,dlc,payload"


def parse_timestamp_us(text: str, where: str = "") -> int:
    """Decimal seconds -> integer microseconds, exact up to 6 decimals."""
    text = text.strip()
    if not text or text[0] == "-":
        raise ValidationError(f"{where}bad timestamp {text!r}")
    whole, dot, frac = text.partition(".")
    try:
        seconds = int(whole) if whole else 0
        if dot:
            if not frac.isdigit():
                raise ValueError
            micros = int(frac[:6].ljust(6, "0"))
            # anything past microsecond resolution rounds half-up
            if len(frac) > 6 and frac[6] >= "5":
                micros += 1
        else:
            micros = 0
    except ValueError:
        raise ValidationError(f"{where}bad timestamp {text!r}") from None
    return seconds * US_PER_SECOND + micros


def format_timestamp(t_us: int) -> str:
    return f"{t_us // US_PER_SECOND}.{t_us % US_PER_SECOND:06d}"


def frame_to_row(frame: CanFrame) -> str:
    return (f"{format_timestamp(frame.t_us)},0x{frame.can_id:x},"
            f"{frame.dlc},{frame.payload.hex()},{frame.label}")


def serialize_trace(trace: Trace) -> str:
    lines = [NATIVE_HEADER]
    lines.extend(frame_to_row(f) for f in trace.frames)
    return "\n".join(lines) + "\n"


def _parse_native(lines: list[str]) -> list[CanFrame]:
    header = lines[0].strip()
    if header == NATIVE_HEADER:
        has_label = True
    elif header == NATIVE_HEADER_NOLABEL:
        has_label = False
    else:
        raise ValidationError(f"line 1: unrecognized header {header!r}")

    frames = []
    want = 5 if has_label else 4
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        where = f"line {lineno}: "
        cols = line.split(",")
        if len(cols) != want:
            raise ValidationError(f"{where}expected {want} columns, got {len(cols)}")
        t_us = parse_timestamp_us(cols[0], where)
        idtext = cols[1].strip()
        if not idtext.lower().startswith("0x"):
            raise ValidationError(f"{where}id {idtext!r} is not 0x-prefixed hex")
        try:
            can_id = int(idtext, 16)
        except ValueError:
            raise ValidationError(f"{where}bad id {idtext!r}") from None
        try:
            dlc = int(cols[2])
        except ValueError:
            raise ValidationError(f"{where}bad dlc {cols[2]!r}") from None
        try:
            payload = bytes.fromhex(cols[3])
        except ValueError:
            raise ValidationError(f"{where}bad payload hex {cols[3]!r}") from None
        label = cols[4].strip() if has_label else LABEL_CLEAN
        if label not in VALID_LABELS:
            raise ValidationError(f"{where}unknown label {label!r}")
        try:
            frames.append(CanFrame(t_us, can_id, dlc, payload, label))
        except ValidationError as exc:
            raise ValidationError(f"{where}{exc}") from None
    return frames


OTIDS_DATA_FLAG = "000"


def _parse_otids(lines: list[str]) -> list[CanFrame]:
    frames = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        where = f"line {lineno}: "
        tok = line.split()
        if len(tok) < 7 or tok[0] != "Timestamp:" or tok[2] != "ID:" or tok[5] != "DLC:":
            raise ValidationError(f"{where}unrecognized OTIDS row {line!r}")
        if tok[4] != OTIDS_DATA_FLAG:
            continue  # remote frame
        t_us = parse_timestamp_us(tok[1], where)
        try:
            can_id = int(tok[3], 16)
            dlc = int(tok[6])
        except ValueError:
            raise ValidationError(f"{where}bad id/dlc in {line!r}") from None
        data = tok[7:]
        if len(data) != dlc:
            raise ValidationError(
                f"{where}dlc={dlc} but {len(data)} payload bytes")
        try:
            payload = bytes(int(b, 16) for b in data)
        except ValueError:
            raise ValidationError(f"{where}bad payload byte in {line!r}") from None
        try:
            frames.append(CanFrame(t_us, can_id, dlc, payload))
        except ValidationError as exc:
            raise ValidationError(f"{where}{exc}") from None
    return frames


def parse_trace(text: str, fmt: str = "native", meta: TraceMeta | None = None) -> Trace:
    """Parse trace text. ``fmt`` is ``native`` or ``otids``.

    An empty input yields an empty trace, not an error.
    """
    lines = text.splitlines()
    if not lines or all(not ln.strip() for ln in lines):
        return Trace([], meta)
    if fmt == "native":
        frames = _parse_native(lines)
    elif fmt == "otids":
        frames = _parse_otids(lines)
    else:
        raise ValidationError(f"unknown trace format {fmt!r}")
    return Trace(frames, meta)


def sniff_format(path: str, head: str) -> str:
    if head.startswith("Timestamp:"):
        return "otids"
    if head.startswith("timestamp,"):
        return "native"
    ext = os.path.splitext(path)[1].lower()
    return "otids" if ext in (".txt", ".log") else "native"


def meta_path(path: str) -> str:
    return path + ".meta.json"


def load_trace(path: str, fmt: str = "auto") -> Trace:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if fmt == "auto":
        first = text.splitlines()[0] if text.splitlines() else ""
        fmt = sniff_format(path, first)
    meta = None
    if os.path.exists(meta_path(path)):
        with open(meta_path(path), encoding="utf-8") as fh:
            meta = TraceMeta.from_json(json.load(fh))
    else:
        meta = TraceMeta(source=os.path.basename(path))
    return parse_trace(text, fmt, meta)


def save_trace(trace: Trace, path: str) -> None:
    """Write native CSV; attack descriptors go to the sidecar."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_trace(trace))
    if trace.meta.attack is not None:
        with open(meta_path(path), "w", encoding="utf-8") as fh:
            json.dump(trace.meta.to_json(), fh, indent=1, sort_keys=True)
            fh.write("\n")


def save_frames_sidecar(frames: Iterable[CanFrame], path: str) -> None:
    """Ground-truth dump of frames that are absent from a trace (removals)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(NATIVE_HEADER + "\n")
        for f in frames:
            fh.write(frame_to_row(f) + "\n")
