"""Command line front end.

Subcommands mirror the workflow: ``cycles`` profiles clean traffic,
``gen`` builds labeled attack traces, ``fit`` tunes detector
parameters, ``detect`` replays one trace through one detector,
``eval`` scores verdict files and ``bench`` runs the whole
generate/fit/detect/score pipeline in one go.

Exit codes: 0 success, 1 invalid input or arguments, 2 file I/O
problems. ``CANTIDS_LOG`` selects the log level (default WARNING).
"""

from __future__ import annotations

import argparse
import json
import logging
import multiprocessing
import os
import sys
import time
from pathlib import Path

from .attackgen import (
    ATTACK_KINDS,
    KIND_DOS,
    KIND_IMPERSONATE,
    KIND_INJECT,
    KIND_REMOVE,
    AttackSpec,
    apply_attack,
    campaign_entries,
    remove_id,
)
from .detectors import DETECTORS, DetectorConfig
from .detectors.tuning import fit as fit_detector
from .evalkit import EvalRow, render_report, score_run
from .frames import Trace, ValidationError
from .profile import CycleTimeModel, estimate_cycle_times
from .replay import (
    available_backends,
    read_verdicts,
    run_detector,
    write_verdicts,
)
from .synth import generate_fleet_traces
from .traceio import load_trace, save_frames_sidecar, save_trace

log = logging.getLogger("cantids")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2

# which detectors are meaningful against which attack shape
PAIRINGS = {
    KIND_INJECT: ("otsuka14", "taylor15", "cho16", "gmiden16",
                  "moore17", "olufowobi20"),
    KIND_REMOVE: ("stabili19",),
    KIND_DOS: ("song16-dos",),
    KIND_IMPERSONATE: ("olufowobi20",),
}
FIT_ORDER = ("otsuka14", "taylor15", "cho16", "gmiden16", "moore17",
             "stabili19", "olufowobi20")


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; bad arguments are validation
    # failures here, and 2 is reserved for I/O
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError(message)


def _load_traces(paths) -> list[Trace]:
    return [load_trace(p) for p in paths]


def _load_config(path: str | None, preset: str | None) -> DetectorConfig:
    if path:
        with open(path, encoding="utf-8") as fh:
            return DetectorConfig.from_json(json.load(fh))
    if preset == "otids":
        return DetectorConfig.otids()
    return DetectorConfig.ventus()


def _write_text(path: str, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def cmd_cycles(args) -> int:
    traces = _load_traces(args.traces)
    model = estimate_cycle_times(traces, bitrate=args.bitrate,
                                 cv_threshold=args.cv_threshold,
                                 stuffing=not args.no_stuffing)
    print(f"{'id':>10} {'frames':>8} {'ct_ms':>8} {'cyclic':>6} "
          f"{'min_ms':>9} {'max_ms':>9} {'dev_pct':>8} {'tx_ms':>7}")
    for cid in model.ids():
        t = model[cid]
        print(f"{cid:#10x} {t.count:>8} {t.ct_ms:>8} "
              f"{'yes' if t.cyclic else 'no':>6} {t.min_dt_ms:>9.3f} "
              f"{t.max_dt_ms:>9.3f} {t.max_deviation_pct:>8.2f} "
              f"{t.worst_case_tx_ms:>7.3f}")
    if args.out:
        model.save(args.out)
        print(f"model -> {args.out}")
    return EXIT_OK


def _gen_single(args) -> int:
    base = load_trace(args.trace)
    spec = AttackSpec(kind=args.attack, target_id=args.target,
                      frequency=args.frequency, start_s=args.start,
                      end_s=args.end, phase=args.phase)
    if spec.kind == KIND_REMOVE:
        infected, removed = remove_id(base, spec)
        save_frames_sidecar(removed, args.out + ".removed.csv")
    else:
        model = CycleTimeModel.load(args.model) if args.model else None
        infected = apply_attack(base, spec, model)
    save_trace(infected, args.out)
    a = infected.meta.attack
    touched = a.get("injected_count", a.get("removed_count", 0))
    print(f"{spec.kind} on 0x{spec.target_id:x}: {touched} frames "
          f"-> {args.out}")
    return EXIT_OK


def _gen_campaign(args) -> int:
    out = Path(args.out)
    (out / "clean").mkdir(parents=True, exist_ok=True)
    (out / "attacks").mkdir(parents=True, exist_ok=True)
    clean = generate_fleet_traces(args.traces, args.duration,
                                  seed=args.seed)
    for r, trace in enumerate(clean):
        save_trace(trace, str(out / "clean" / f"t{r}.csv"))
    target_ids = clean[0].ids()
    entries = campaign_entries(target_ids, len(clean))
    manifest = {"seed": args.seed, "traces": args.traces,
                "duration_s": args.duration, "entries": []}
    for entry in entries:
        base = clean[entry.trace_index]
        if entry.spec.kind == KIND_REMOVE:
            infected, removed = remove_id(base, entry.spec)
            save_frames_sidecar(
                removed, str(out / "attacks" / f"{entry.name}.removed.csv"))
        else:
            infected = apply_attack(base, entry.spec)
        save_trace(infected, str(out / "attacks" / f"{entry.name}.csv"))
        manifest["entries"].append({"name": entry.name,
                                    "trace": entry.trace_index,
                                    **entry.spec.to_json()})
    _write_text(str(out / "manifest.json"),
                json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    n_inject = sum(1 for e in entries if e.spec.kind == KIND_INJECT)
    print(f"{len(clean)} clean traces, {n_inject} injection and "
          f"{len(entries) - n_inject} removal traces -> {out}")
    return EXIT_OK


def cmd_gen(args) -> int:
    if args.campaign:
        return _gen_campaign(args)
    for name in ("trace", "attack", "out"):
        if getattr(args, name) is None:
            raise ValidationError(f"--{name} is required without --campaign")
    return _gen_single(args)


def cmd_fit(args) -> int:
    model = CycleTimeModel.load(args.model)
    clean = _load_traces(args.traces)
    cfg = _load_config(None, args.preset)
    names = FIT_ORDER if args.detector == "all" else (args.detector,)
    for name in names:
        cfg = fit_detector(name, clean, model, cfg)
    _write_text(args.out, json.dumps(cfg.to_json(), indent=1,
                                     sort_keys=True) + "\n")
    print(f"fitted {', '.join(names)} on {len(clean)} traces "
          f"-> {args.out}")
    return EXIT_OK


def cmd_detect(args) -> int:
    model = CycleTimeModel.load(args.model)
    config = _load_config(args.config, None)
    trace = load_trace(args.trace)
    result = run_detector(args.detector, model, config, trace,
                          backend=args.backend)
    if args.out:
        write_verdicts(args.out, result, trace_path=args.trace)
    n_anom = int(result.anomalous.sum()) if len(result) else 0
    print(f"{args.detector} [{result.backend}] {len(trace)} frames: "
          f"{len(result)} verdicts, {n_anom} anomalous")
    return EXIT_OK


def _eval_row(detector: str, verdicts, trace: Trace,
              trace_label: str) -> EvalRow:
    attack = trace.meta.attack or {}
    counts = score_run(verdicts, trace, DETECTORS[detector].policy)
    return EvalRow(detector, attack.get("kind", "clean"),
                   attack.get("target_id", 0),
                   float(attack.get("frequency") or 0.0),
                   trace_label, counts)


def cmd_eval(args) -> int:
    rows = []
    for path in args.verdicts:
        header, verdicts = read_verdicts(path)
        trace_path = header.get("trace")
        if not trace_path:
            raise ValidationError(f"{path}: no trace path in header")
        trace = load_trace(trace_path)
        rows.append(_eval_row(header["detector"], verdicts, trace,
                              Path(trace_path).stem))
    report = render_report(rows, args.format)
    if args.out:
        _write_text(args.out, report)
        print(f"{len(rows)} runs -> {args.out}")
    else:
        print(report, end="")
    return EXIT_OK


# bench fan-out state; populated once per worker (or once in-process)
_BENCH: dict = {}


def _bench_init(clean, model, config, entries, backend):
    _BENCH.update(clean=clean, model=model, config=config,
                  entries=entries, backend=backend)


def _bench_entry(i: int):
    entry = _BENCH["entries"][i]
    base = _BENCH["clean"][entry.trace_index]
    infected = apply_attack(base, entry.spec, _BENCH["model"])
    rows, frames = [], 0
    for name in PAIRINGS[entry.spec.kind]:
        result = run_detector(name, _BENCH["model"], _BENCH["config"],
                              infected, backend=_BENCH["backend"])
        rows.append(_eval_row(name, list(result), infected,
                              f"t{entry.trace_index}"))
        frames += len(infected)
    return rows, frames


def cmd_bench(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    if args.clean:
        paths = sorted(str(p) for p in Path(args.clean).iterdir()
                       if p.suffix in (".csv", ".log", ".txt"))
        if not paths:
            raise ValidationError(f"no trace files under {args.clean}")
        clean = _load_traces(paths)
    else:
        clean = generate_fleet_traces(args.traces, args.duration,
                                      seed=args.seed)
    model = estimate_cycle_times(clean)
    cfg = DetectorConfig.ventus()
    for name in FIT_ORDER:
        cfg = fit_detector(name, clean, model, cfg)
    model.save(str(out / "model.json"))
    _write_text(str(out / "config.json"),
                json.dumps(cfg.to_json(), indent=1, sort_keys=True) + "\n")
    t_fit = time.perf_counter()

    entries = campaign_entries(model.cyclic_ids(), len(clean))
    jobs = args.jobs or os.cpu_count() or 1
    init_args = (clean, model, cfg, entries, args.backend)
    rows, frames = [], 0
    t1 = time.perf_counter()
    if jobs > 1:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(jobs, initializer=_bench_init,
                      initargs=init_args) as pool:
            for chunk, n in pool.imap_unordered(_bench_entry,
                                                range(len(entries))):
                rows.extend(chunk)
                frames += n
    else:
        _bench_init(*init_args)
        for i in range(len(entries)):
            chunk, n = _bench_entry(i)
            rows.extend(chunk)
            frames += n
    elapsed = time.perf_counter() - t1

    _write_text(str(out / "report.csv"), render_report(rows, "csv"))
    _write_text(str(out / "report.json"), render_report(rows, "json"))
    manifest = [{"name": e.name, "trace": e.trace_index,
                 **e.spec.to_json()} for e in entries]
    _write_text(str(out / "manifest.json"),
                json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    print(f"{len(entries)} attack traces, {len(rows)} detector runs, "
          f"fit {t_fit - t0:.1f}s, detect+score {elapsed:.1f}s "
          f"({frames / elapsed:,.0f} frames/s) -> {out}")
    return EXIT_OK


def _hex_int(text: str) -> int:
    return int(text, 0)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cantids",
                description="timing-based CAN bus anomaly detection")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("cycles", help="profile cycle times of clean traces")
    c.add_argument("traces", nargs="+")
    c.add_argument("--bitrate", type=int, default=None)
    c.add_argument("--cv-threshold", type=float, default=0.5)
    c.add_argument("--no-stuffing", action="store_true")
    c.add_argument("--out", help="write the model as JSON")
    c.set_defaults(func=cmd_cycles)

    g = sub.add_parser("gen", help="synthesize labeled attack traces")
    g.add_argument("--campaign", action="store_true",
                   help="full grid on synthetic fleet traffic")
    g.add_argument("--trace", help="clean base trace (single attack)")
    g.add_argument("--attack", choices=ATTACK_KINDS)
    g.add_argument("--target", type=_hex_int, default=0)
    g.add_argument("--frequency", type=float, default=0.0)
    g.add_argument("--start", type=float, default=None)
    g.add_argument("--end", type=float, default=None)
    g.add_argument("--phase", type=float, default=0.5)
    g.add_argument("--model", help="cycle-time model (impersonation)")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--traces", type=int, default=7)
    g.add_argument("--duration", type=float, default=10.0)
    g.set_defaults(func=cmd_gen)

    f = sub.add_parser("fit", help="tune detector parameters on clean traces")
    f.add_argument("traces", nargs="+")
    f.add_argument("--detector", default="all",
                   choices=("all",) + tuple(sorted(DETECTORS)))
    f.add_argument("--model", required=True)
    f.add_argument("--preset", choices=("ventus", "otids"), default="ventus")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    d = sub.add_parser("detect", help="replay one trace through a detector")
    d.add_argument("--detector", required=True,
                   choices=tuple(sorted(DETECTORS)))
    d.add_argument("--model", required=True)
    d.add_argument("--config")
    d.add_argument("--trace", required=True)
    d.add_argument("--out", help="verdicts as JSON lines")
    d.add_argument("--backend", choices=available_backends(), default=None)
    d.set_defaults(func=cmd_detect)

    e = sub.add_parser("eval", help="score verdict files into a report")
    e.add_argument("verdicts", nargs="+")
    e.add_argument("--out")
    e.add_argument("--format", choices=("csv", "json"), default="csv")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="full generate/fit/detect/score run")
    b.add_argument("--out", required=True)
    b.add_argument("--clean", help="directory of clean traces "
                                   "(default: synthetic fleet)")
    b.add_argument("--seed", type=int, default=1)
    b.add_argument("--traces", type=int, default=7)
    b.add_argument("--duration", type=float, default=10.0)
    b.add_argument("--jobs", type=int, default=0,
                   help="worker processes, 0 = one per CPU")
    b.add_argument("--backend", choices=available_backends(), default=None)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    logging.basicConfig(
        level=getattr(logging, os.environ.get("CANTIDS_LOG", "WARNING").upper(),
                      logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
