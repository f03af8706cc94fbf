"""Command-line wiring: every subcommand end to end, against frozen outputs.

Analytic outputs (power, regression fit, labels, model inspect, bundle
inspect) are compared byte for byte with goldens.  Signal-path outputs go
through run-twice byte equality instead, since their exact floats depend on
the FFT backend.
"""

import json
import os

import pytest

from scgvitals.cli import dispatch


def run_cli(capsys, argv, expect=0):
    """Dispatch in process; return (stdout, stderr) after asserting exit code."""
    code = dispatch(argv)
    captured = capsys.readouterr()
    assert code == expect, f"{argv}: exit {code}\n{captured.err}"
    return captured.out, captured.err


# ------------------------------------------------------------- parser basics


def test_bare_invocation_is_usage_error(capsys):
    run_cli(capsys, [], expect=2)


def test_unknown_subcommand_is_usage_error(capsys):
    run_cli(capsys, ["frobnicate"], expect=2)


def test_invalid_stride_choice_is_usage_error(capsys):
    # stride is restricted to the supported duty-cycle grid
    run_cli(capsys, ["run", "--stride-min", "15", "--in", "x.icx"], expect=2)


def test_config_echo_goes_to_stderr(capsys, tmp_path):
    out = tmp_path / "p.json"
    stdout, stderr = run_cli(capsys, ["power", "estimate", "--out", str(out)])
    assert stderr.startswith("config: {")
    echoed = json.loads(stderr.splitlines()[0][len("config: ") :])
    assert echoed["command"] == "power"
    assert echoed["seed"] == 0
    assert stdout == ""


# -------------------------------------------------------------------- power


def test_power_estimate_golden(capsys, tmp_path, golden_dir):
    out = tmp_path / "estimate.json"
    run_cli(capsys, ["power", "estimate", "--out", str(out)])
    assert out.read_text() == (golden_dir / "power_estimate.json").read_text()


def test_power_curve_golden(capsys, tmp_path, golden_dir):
    out = tmp_path / "curve.csv"
    run_cli(capsys, ["power", "curve", "--strides", "2,10,30,60", "--out", str(out)])
    assert out.read_text() == (golden_dir / "power_curve.csv").read_text()


def test_power_curve_bad_strides(capsys, tmp_path):
    run_cli(capsys, ["power", "curve", "--strides", "abc"], expect=1)


# ----------------------------------------------------------------------- bp


def test_bp_fit_golden(capsys, tmp_path, golden_dir):
    out = tmp_path / "fit.json"
    run_cli(capsys, ["bp", "fit", "--csv", str(golden_dir / "bp_input.csv"), "--out", str(out)])
    assert out.read_text() == (golden_dir / "bp_fit.json").read_text()


def test_bp_fit_to_stdout(capsys, golden_dir):
    # no --out: the JSON goes to stdout, the config echo stays on stderr
    stdout, _ = run_cli(capsys, ["bp", "fit", "--csv", str(golden_dir / "bp_input.csv")])
    assert stdout == (golden_dir / "bp_fit.json").read_text()


def test_bp_loo_exact_line(capsys, tmp_path, golden_dir):
    # every fixture point sits on sbp = 160 - 1.5 ptt, so held-out error
    # is zero in every fold (parse, not bytes: roundoff may leave a -0.0)
    out = tmp_path / "loo.json"
    run_cli(capsys, ["bp", "loo", "--csv", str(golden_dir / "bp_input.csv"), "--out", str(out)])
    stats = json.loads(out.read_text())
    assert stats["mean_mmhg"] == 0.0
    assert stats["sd_mmhg"] == 0.0
    assert stats["n"] == 8


def test_bp_missing_csv(capsys, tmp_path):
    run_cli(capsys, ["bp", "fit", "--csv", str(tmp_path / "nope.csv")], expect=1)


def test_bp_bad_header(capsys, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b,c\n1,2,3\n")
    run_cli(capsys, ["bp", "fit", "--csv", str(bad)], expect=1)


# -------------------------------------------------------------------- model


def test_model_demo_chain_goldens(capsys, tmp_path, golden_dir):
    fm = tmp_path / "f.bin"
    qm = tmp_path / "q.bin"
    run_cli(capsys, ["model", "init", "--kind", "demo", "--out", str(fm)])
    run_cli(capsys, ["model", "quantize", "--model", str(fm), "--out", str(qm)])

    fj = tmp_path / "f.json"
    qj = tmp_path / "q.json"
    run_cli(capsys, ["model", "inspect", "--model", str(fm), "--out", str(fj)])
    run_cli(capsys, ["model", "inspect", "--model", str(qm), "--out", str(qj)])
    assert fj.read_text() == (golden_dir / "model_inspect_float.json").read_text()
    assert qj.read_text() == (golden_dir / "model_inspect_int8.json").read_text()

    # the compressed payload is exactly a quarter of the float payload
    payload_f = json.loads(fj.read_text())["weight_payload_bytes"]
    payload_q = json.loads(qj.read_text())["weight_payload_bytes"]
    assert payload_f == 4 * payload_q


def test_model_init_deterministic_bytes(capsys, tmp_path):
    a = tmp_path / "a.bin"
    b = tmp_path / "b.bin"
    run_cli(capsys, ["model", "init", "--kind", "demo", "--out", str(a)])
    run_cli(capsys, ["model", "init", "--kind", "demo", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_model_init_random_seeded(capsys, tmp_path):
    a = tmp_path / "a.bin"
    b = tmp_path / "b.bin"
    c = tmp_path / "c.bin"
    run_cli(capsys, ["--seed", "5", "model", "init", "--kind", "random", "--out", str(a)])
    run_cli(capsys, ["--seed", "5", "model", "init", "--kind", "random", "--out", str(b)])
    run_cli(capsys, ["--seed", "6", "model", "init", "--kind", "random", "--out", str(c)])
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()

    out = tmp_path / "r.json"
    run_cli(capsys, ["model", "inspect", "--model", str(a), "--out", str(out)])
    info = json.loads(out.read_text())
    assert info["format"] == "float32"
    assert info["heads"] == 4


def test_model_inspect_junk_magic(capsys, tmp_path):
    junk = tmp_path / "junk.bin"
    junk.write_bytes(b"JUNKJUNKJUNKJUNKJUNK")
    run_cli(capsys, ["model", "inspect", "--model", str(junk)], expect=1)


# --------------------------------------------------------------------- data


def test_data_pack_inspect_unpack_goldens(capsys, tmp_path, golden_dir):
    bundle = tmp_path / "bundle.bin"
    run_cli(capsys, ["data", "pack", "--events", str(golden_dir / "events_in.jsonl"), "--out", str(bundle)])

    ij = tmp_path / "inspect.json"
    uj = tmp_path / "unpack.jsonl"
    run_cli(capsys, ["data", "inspect", "--in", str(bundle), "--out", str(ij)])
    run_cli(capsys, ["data", "unpack", "--in", str(bundle), "--out", str(uj)])
    assert ij.read_text() == (golden_dir / "data_inspect.json").read_text()
    assert uj.read_text() == (golden_dir / "data_unpack.jsonl").read_text()


def test_data_unpack_truncated(capsys, tmp_path, golden_dir):
    bundle = tmp_path / "bundle.bin"
    run_cli(capsys, ["data", "pack", "--events", str(golden_dir / "events_in.jsonl"), "--out", str(bundle)])
    trunc = tmp_path / "trunc.bin"
    trunc.write_bytes(bundle.read_bytes()[:-3])
    run_cli(capsys, ["data", "unpack", "--in", str(trunc)], expect=1)


# ------------------------------------------------------------- label / eval


def test_label_golden(capsys, tmp_path, golden_dir):
    out = tmp_path / "labels.json"
    stdout, _ = run_cli(capsys, ["label", "--csv", str(golden_dir / "labeler_fixture.csv"), "--out", str(out)])
    assert out.read_text() == (golden_dir / "labels_cli.json").read_text()
    assert "labeled 12 episodes" in stdout

    # agrees with the labeler-level golden, entry by entry
    got = json.loads(out.read_text())
    want = json.loads((golden_dir / "labeler_golden.json").read_text())
    assert sorted(got) == sorted(want)
    for pid, entry in want.items():
        if "rejected" in entry:
            assert got[pid]["rejected"] == entry["rejected"]
        else:
            assert got[pid]["positive"] == entry["positive"]
            assert got[pid]["onset_hour"] == entry["onset_hour"]
            assert got[pid]["included"] == entry["included"]


def test_eval_hand_fixture(capsys, tmp_path, golden_dir):
    # 3 positives (2 caught, P1 4 h and P2 0.5 h early), 2 negatives (1 FP)
    out = tmp_path / "metrics.json"
    run_cli(
        capsys,
        [
            "eval",
            "--labels", str(golden_dir / "eval_labels.json"),
            "--events", str(golden_dir / "eval_events"),
            "--n-boot", "200",
            "--out", str(out),
        ],
    )
    m = json.loads(out.read_text())
    assert m["sensitivity"] == 0.666667
    assert m["specificity"] == 0.5
    assert m["median_time_to_sepsis_h"] == 2.25
    assert m["n_positive"] == 3
    assert m["n_negative"] == 2
    for key in ("sensitivity", "specificity", "median_time_to_sepsis_h"):
        lo, hi = m["ci"][key]
        assert lo <= hi


def test_eval_missing_events_file(capsys, tmp_path, golden_dir):
    run_cli(
        capsys,
        [
            "eval",
            "--labels", str(golden_dir / "eval_labels.json"),
            "--events", str(tmp_path),
        ],
        expect=1,
    )


# ------------------------------------------------------- signal-path wiring


@pytest.fixture(scope="module")
def acc_bundle(tmp_path_factory):
    """One 61 s two-site recording, long enough for two vitals reports."""
    path = tmp_path_factory.mktemp("sig") / "rec.icx"
    code = dispatch(
        [
            "siggen",
            "--duration", "61",
            "--hr", "72",
            "--rr", "14",
            "--snr-db", "20",
            "--out", str(path),
        ]
    )
    assert code == 0
    return path


def test_siggen_rerun_is_byte_identical(capsys, tmp_path, acc_bundle):
    again = tmp_path / "again.icx"
    truth = tmp_path / "truth.json"
    run_cli(
        capsys,
        [
            "siggen",
            "--duration", "61",
            "--hr", "72",
            "--rr", "14",
            "--snr-db", "20",
            "--out", str(again),
            "--truth-out", str(truth),
        ],
    )
    assert again.read_bytes() == acc_bundle.read_bytes()

    facts = json.loads(truth.read_text())
    assert facts["rr_hz"] == round(14 / 60.0, 6)
    beats = facts["beat_times_s"]
    assert len(beats) >= 60
    # mean beat spacing tracks the commanded rate
    spacing = (beats[-1] - beats[0]) / (len(beats) - 1)
    assert spacing == pytest.approx(60.0 / 72.0, rel=0.05)


def test_vitals_extract_wiring(capsys, tmp_path, acc_bundle):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    run_cli(capsys, ["vitals", "extract", "--in", str(acc_bundle), "--out", str(a)])
    run_cli(capsys, ["vitals", "extract", "--in", str(acc_bundle), "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()

    lines = a.read_text().splitlines()
    assert lines[0] == "t_s,kind,value"
    kinds = {ln.split(",")[1] for ln in lines[1:]}
    assert "hr_bpm" in kinds and "rr_brpm" in kinds
    hr = [float(ln.split(",")[2]) for ln in lines[1:] if ln.split(",")[1] == "hr_bpm"]
    assert all(abs(v - 72.0) < 5.0 for v in hr)


def test_vitals_extract_mcu_proxy(capsys, tmp_path, acc_bundle):
    out = tmp_path / "mcu.csv"
    run_cli(capsys, ["vitals", "extract", "--in", str(acc_bundle), "--mcu-proxy", "--out", str(out)])
    lines = out.read_text().splitlines()
    assert lines[0] == "t_s,kind,value"
    assert len(lines) > 1


def test_run_bundle_rerun_is_byte_identical(capsys, tmp_path, acc_bundle):
    a = tmp_path / "a.jsonl"
    b = tmp_path / "b.jsonl"
    run_cli(capsys, ["run", "--in", str(acc_bundle), "--model", "demo", "--out", str(a)])
    run_cli(capsys, ["run", "--in", str(acc_bundle), "--model", "demo", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()
    rows = [json.loads(ln) for ln in a.read_text().splitlines()]
    assert any(r["type"] == "report" for r in rows)


def test_run_with_model_file(capsys, tmp_path, acc_bundle):
    # a saved model file must behave exactly like its in-memory twin
    fm = tmp_path / "demo.bin"
    run_cli(capsys, ["model", "init", "--kind", "demo", "--out", str(fm)])
    a = tmp_path / "a.jsonl"
    b = tmp_path / "b.jsonl"
    run_cli(capsys, ["run", "--in", str(acc_bundle), "--model", str(fm), "--out", str(a)])
    run_cli(capsys, ["run", "--in", str(acc_bundle), "--model", "demo", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_run_needs_an_input(capsys):
    run_cli(capsys, ["run", "--model", "demo"], expect=1)


def test_cohort_chain(capsys, tmp_path):
    """siggen cohort CSV, then the stream runner over every patient."""
    csv = tmp_path / "cohort.csv"
    run_cli(capsys, ["--seed", "11", "siggen", "--cohort", "2", "--out-csv", str(csv)])

    evdir = tmp_path / "events"
    stdout, _ = run_cli(
        capsys,
        ["run", "--cohort", str(csv), "--model", "demo", "--events-dir", str(evdir)],
    )
    names = sorted(os.listdir(evdir))
    assert len(names) == 2 and all(n.endswith(".jsonl") for n in names)
    status = stdout.strip().splitlines()
    assert len(status) == 2
    assert all(("alarm at" in ln) or ("no alarm" in ln) for ln in status)

    # any latched alarm must coincide with a prediction instant
    for name in names:
        rows = [json.loads(ln) for ln in (evdir / name).read_text().splitlines()]
        preds = [r["t"] for r in rows if r["type"] == "prediction"]
        alarms = [r["t"] for r in rows if r["type"] == "alarm"]
        assert preds and preds[0] == 14400.0
        for t in alarms:
            assert t in preds
