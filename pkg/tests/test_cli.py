import json

import pytest

from cantids.cli import EXIT_INVALID, EXIT_IO, EXIT_OK, main
from cantids.detectors import DetectorConfig
from cantids.evalkit import CSV_HEADER
from cantids.profile import CycleTimeModel
from cantids.replay import read_verdicts
from cantids.synth import generate_fleet_traces
from cantids.traceio import load_trace, save_trace


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A clean trace, its model and a gmiden-visible injection trace."""
    root = tmp_path_factory.mktemp("cliws")
    trace = generate_fleet_traces(1, 10.0, seed=3)[0]
    clean = root / "clean.csv"
    save_trace(trace, str(clean))
    model = root / "model.json"
    assert main(["cycles", str(clean), "--out", str(model)]) == EXIT_OK
    attacked = root / "attacked.csv"
    assert main(["gen", "--trace", str(clean), "--attack", "inject-replay",
                 "--target", "0x120", "--frequency", "50",
                 "--out", str(attacked)]) == EXIT_OK
    return {"root": root, "clean": clean, "model": model,
            "attacked": attacked}


# --- exit codes ---------------------------------------------------------

def test_usage_errors_exit_1(capsys):
    assert main(["cycles"]) == EXIT_INVALID
    assert main(["detect", "--detector", "nonsense", "--model", "m",
                 "--trace", "t"]) == EXIT_INVALID
    err = capsys.readouterr().err
    assert "error:" in err


def test_missing_input_file_exits_2(tmp_path, capsys):
    assert main(["cycles", str(tmp_path / "absent.csv")]) == EXIT_IO
    assert "error:" in capsys.readouterr().err


def test_bad_attack_arguments_exit_1(workspace, tmp_path):
    # frequency is required for injection
    assert main(["gen", "--trace", str(workspace["clean"]),
                 "--attack", "inject-replay", "--target", "0x120",
                 "--out", str(tmp_path / "x.csv")]) == EXIT_INVALID
    # single-trace mode needs --trace and --attack
    assert main(["gen", "--out", str(tmp_path / "y.csv")]) == EXIT_INVALID


# --- cycles -------------------------------------------------------------

def test_cycles_prints_table_and_saves_model(workspace, capsys, tmp_path):
    out = tmp_path / "m.json"
    assert main(["cycles", str(workspace["clean"]), "--out",
                 str(out)]) == EXIT_OK
    text = capsys.readouterr().out
    assert "0x120" in text and "cyclic" in text
    model = CycleTimeModel.load(str(out))
    assert model[0x120].ct_ms == 20
    assert 0x581 in model.cyclic_ids()


# --- gen ----------------------------------------------------------------

def test_gen_single_injection(workspace):
    attacked = load_trace(str(workspace["attacked"]))
    meta = attacked.meta.attack
    assert meta["kind"] == "inject-replay"
    assert meta["injected_count"] > 0
    assert attacked.count_label("injected") == meta["injected_count"]


def test_gen_removal_writes_sidecar(workspace, tmp_path, capsys):
    out = tmp_path / "thinned.csv"
    assert main(["gen", "--trace", str(workspace["clean"]),
                 "--attack", "remove-inhibition", "--target", "0x350",
                 "--start", "2", "--end", "7",
                 "--out", str(out)]) == EXIT_OK
    assert "remove-inhibition on 0x350" in capsys.readouterr().out
    thinned = load_trace(str(out))
    removed = load_trace(str(out) + ".removed.csv")
    assert len(removed) == thinned.meta.attack["removed_count"] > 0
    assert all(f.can_id == 0x350 for f in removed)
    gap = [f for f in thinned.frames_of(0x350)
           if 2_000_000 <= f.t_us < 7_000_000]
    assert gap == []


def test_gen_campaign_builds_grid(tmp_path, capsys):
    out = tmp_path / "camp"
    assert main(["gen", "--campaign", "--out", str(out), "--traces", "1",
                 "--duration", "4", "--seed", "2"]) == EXIT_OK
    stdout = capsys.readouterr().out
    assert "50 injection and 10 removal" in stdout
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["entries"]) == 60
    assert (out / "clean" / "t0.csv").exists()
    names = {e["name"] for e in manifest["entries"]}
    assert "inject_0x10_f25_t0" in names
    for name in list(names)[:3]:
        assert (out / "attacks" / f"{name}.csv").exists()
    sidecars = list((out / "attacks").glob("*.removed.csv"))
    assert len(sidecars) == 10


# --- fit ----------------------------------------------------------------

def test_fit_single_detector(workspace, tmp_path, capsys):
    out = tmp_path / "cfg.json"
    assert main(["fit", str(workspace["clean"]), "--model",
                 str(workspace["model"]), "--detector", "otsuka14",
                 "--out", str(out)]) == EXIT_OK
    assert "fitted otsuka14" in capsys.readouterr().out
    cfg = DetectorConfig.from_json(json.loads(out.read_text()))
    cfg.validate()
    assert 0.0 < cfg.otsuka_delta <= 0.5


def test_fit_all_detectors(workspace, tmp_path):
    out = tmp_path / "cfg.json"
    assert main(["fit", str(workspace["clean"]), "--model",
                 str(workspace["model"]), "--out", str(out)]) == EXIT_OK
    cfg = DetectorConfig.from_json(json.loads(out.read_text()))
    assert cfg.moore_m_us          # per-id maps were learned
    assert cfg.stabili_k
    assert cfg.cho_baseline


# --- detect -------------------------------------------------------------

def test_detect_writes_verdicts(workspace, tmp_path, capsys):
    out = tmp_path / "v.jsonl"
    assert main(["detect", "--detector", "gmiden16", "--model",
                 str(workspace["model"]), "--trace",
                 str(workspace["attacked"]), "--out", str(out)]) == EXIT_OK
    stdout = capsys.readouterr().out
    assert "gmiden16" in stdout and "anomalous" in stdout
    header, verdicts = read_verdicts(str(out))
    assert header["detector"] == "gmiden16"
    assert header["trace"] == str(workspace["attacked"])
    assert header["verdicts"] == len(verdicts) > 0
    assert any(v.anomalous for v in verdicts)


def test_detect_backend_is_selectable(workspace, tmp_path, capsys):
    assert main(["detect", "--detector", "gmiden16", "--model",
                 str(workspace["model"]), "--trace",
                 str(workspace["attacked"]),
                 "--backend", "python"]) == EXIT_OK
    assert "[python]" in capsys.readouterr().out


# --- eval ---------------------------------------------------------------

def test_eval_to_stdout_and_file(workspace, tmp_path, capsys):
    verdicts = tmp_path / "v.jsonl"
    assert main(["detect", "--detector", "gmiden16", "--model",
                 str(workspace["model"]), "--trace",
                 str(workspace["attacked"]), "--out",
                 str(verdicts)]) == EXIT_OK
    capsys.readouterr()
    assert main(["eval", str(verdicts)]) == EXIT_OK
    stdout = capsys.readouterr().out
    assert stdout.startswith(CSV_HEADER)
    line = stdout.splitlines()[1].split(",")
    assert line[0] == "gmiden16"
    assert line[1] == "inject-replay"
    assert line[2] == "0x120"

    report = tmp_path / "report.json"
    assert main(["eval", str(verdicts), "--format", "json", "--out",
                 str(report)]) == EXIT_OK
    doc = json.loads(report.read_text())
    assert doc["rows"][0]["detector"] == "gmiden16"
    assert doc["rows"][0]["fmeasure"] is not None


def test_eval_rejects_verdicts_without_trace(workspace, tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text(json.dumps({"meta": {"detector": "gmiden16",
                                        "trace": ""}}) + "\n")
    assert main(["eval", str(bad)]) == EXIT_INVALID
    assert "no trace path" in capsys.readouterr().err


# --- bench --------------------------------------------------------------

def bench_args(out, jobs):
    return ["bench", "--out", str(out), "--traces", "2", "--duration", "6",
            "--seed", "4", "--jobs", str(jobs)]


def test_bench_pipeline_and_parallel_determinism(tmp_path, capsys):
    serial = tmp_path / "serial"
    assert main(bench_args(serial, jobs=1)) == EXIT_OK
    stdout = capsys.readouterr().out
    assert "frames/s" in stdout
    for name in ("report.csv", "report.json", "manifest.json",
                 "model.json", "config.json"):
        assert (serial / name).exists(), name
    report = (serial / "report.csv").read_text()
    assert report.splitlines()[0] == CSV_HEADER
    manifest = json.loads((serial / "manifest.json").read_text())
    # 10 ids x 5 rates x 2 traces injections plus 10 x 2 removals
    assert len(manifest) == 120

    parallel = tmp_path / "parallel"
    assert main(bench_args(parallel, jobs=2)) == EXIT_OK
    capsys.readouterr()
    assert (parallel / "report.csv").read_text() == report
