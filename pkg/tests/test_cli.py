import csv

import pytest

from gaitkit.cli import main
from gaitkit.ingest import load_recording, save_recording

SMALL = "q1=4\nq2=8\nfeatures=12\nn_train=20\nn_test=10\nmax_epochs=6\npca_components=8\n"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """Synth -> preprocess -> train-cnn -> enroll, shared by the read-only checks below."""
    d = tmp_path_factory.mktemp("cli")
    (d / "small.cfg").write_text(SMALL)
    cfg = ["--config", d / "small.cfg"]
    assert main([str(a) for a in ["synth", "--seeds", 21, 22, 23, "--walks", 2, "--duration", 45,
                                  "--out", d]]) == 0
    recs = sorted(d.glob("*.rec"))
    assert main([str(a) for a in ["preprocess", *recs, "--out", d / "all.cyc", *cfg]]) == 0
    assert main([str(a) for a in ["train-cnn", d / "all.cyc", "--out", d / "net.cnn", "--report",
                                  d / "conf.csv", *cfg]]) == 0
    assert main([str(a) for a in ["enroll", d / "all.cyc", "--subject", "s021", "--bank", d / "all.cyc",
                                  "--cnn", d / "net.cnn", "--out", d / "s021.auth", *cfg]]) == 0
    return d


def test_synth_deterministic(tmp_path, capsys):
    for sub in ("a", "b"):
        (tmp_path / sub).mkdir()
        assert run(capsys, "synth", "--seeds", 5, "--duration", 8, "--truth", "--out", tmp_path / sub)[0] == 0
    for name in ("s005_w0.rec", "s005_w0.truth.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_synth_force(tmp_path, capsys):
    assert run(capsys, "synth", "--seeds", 5, "--duration", 6, "--out", tmp_path)[0] == 0
    code, _, err = run(capsys, "synth", "--seeds", 5, "--duration", 6, "--out", tmp_path)
    assert code == 2 and "--force" in err
    assert run(capsys, "synth", "--seeds", 5, "--duration", 6, "--out", tmp_path, "--force")[0] == 0


def test_synth_missing_dir(tmp_path, capsys):
    code, _, err = run(capsys, "synth", "--seeds", 1, "--out", tmp_path / "nope")
    assert code == 2 and "does not exist" in err


def test_bad_config_key(tmp_path, capsys):
    code, _, err = run(capsys, "config", "--set", "bogus=1")
    assert code == 2 and "bogus" in err


def test_config_prints(capsys):
    code, out, _ = run(capsys, "config", "--set", "nu=0.1", "--seed", 4)
    assert code == 0 and "nu = 0.1" in out.replace("nu=0.1", "nu = 0.1") and "seed" in out


def test_preprocess_short_recording(tmp_path, capsys):
    run(capsys, "synth", "--seeds", 1, "--duration", 6, "--out", tmp_path)
    rec = load_recording(tmp_path / "s001_w0.rec")
    rec = type(rec)(rec.subject_id, rec.session_id, rec.accel[rec.accel[:, 0] < 2], rec.gyro[rec.gyro[:, 0] < 2])
    save_recording(rec, tmp_path / "short.rec")
    code, out, err = run(capsys, "preprocess", tmp_path / "short.rec", "--out", tmp_path / "x.cyc")
    assert code == 3 and "shorter than 3 s" in out
    assert not (tmp_path / "x.cyc").exists()


def test_preprocess_no_gyro_and_phi(tmp_path, capsys):
    run(capsys, "synth", "--seeds", 1, "--duration", 10, "--out", tmp_path)
    (tmp_path / "phi").mkdir()
    code, out, _ = run(capsys, "preprocess", "--no-gyro", tmp_path / "s001_w0.rec", "--out", tmp_path / "d.cyc",
                       "--phi-csv", tmp_path / "phi")
    assert code == 0 and "dropped" in out
    assert (tmp_path / "d.cyc").read_text().splitlines()[0] == "#gaitkit-cyc v1 rows=4 n=200"
    with open(tmp_path / "phi" / "s001_w0.phi.csv") as fh:
        rows = list(csv.DictReader(fh))
    # one metric value per template position, so shorter than the signal by a window
    assert 1500 < len(rows) < 2000 and sum(int(r["boundary"]) for r in rows) >= 6


def test_missing_input(tmp_path, capsys):
    code, _, err = run(capsys, "preprocess", tmp_path / "none.rec", "--out", tmp_path / "x.cyc")
    assert code == 2 and "none.rec" in err


def test_train_corrupt_header(tmp_path, capsys):
    (tmp_path / "bad.cyc").write_text("#gaitkit-cyc v9 rows=8 n=200\n")
    code, _, err = run(capsys, "train-cnn", tmp_path / "bad.cyc", "--out", tmp_path / "m.cnn")
    assert code == 2 and "line 1" in err
    assert not (tmp_path / "m.cnn").exists()


def test_train_same_seed_same_bytes(ws, tmp_path, capsys):
    code, out, _ = run(capsys, "train-cnn", ws / "all.cyc", "--out", tmp_path / "again.cnn",
                       "--config", ws / "small.cfg")
    assert code == 0 and out.startswith("test accuracy")
    assert (tmp_path / "again.cnn").read_bytes() == (ws / "net.cnn").read_bytes()


def test_confusion_report(ws):
    with open(ws / "conf.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 9 and sum(int(r["count"]) for r in rows) == 30


def test_enroll_too_few_cycles(ws, tmp_path, capsys):
    lines = (ws / "all.cyc").read_text().splitlines()
    # header plus 5 cycles of 9 lines each (record line + 8 rows)
    (tmp_path / "few.cyc").write_text("\n".join(lines[:1 + 5 * 9]) + "\n")
    code, _, err = run(capsys, "enroll", tmp_path / "few.cyc", "--bank", ws / "all.cyc", "--cnn", ws / "net.cnn",
                       "--out", tmp_path / "p.auth")
    assert code == 3 and "at least 10" in err


def test_enroll_needs_subject(ws, tmp_path, capsys):
    code, _, err = run(capsys, "enroll", ws / "all.cyc", "--bank", ws / "all.cyc", "--cnn", ws / "net.cnn",
                       "--out", tmp_path / "p.auth")
    assert code == 2 and "--subject" in err


def test_authenticate(ws, tmp_path, capsys):
    code, out, _ = run(capsys, "authenticate", ws / "s021_w1.rec", "--profile", ws / "s021.auth",
                       "--cnn", ws / "net.cnn", "--trace", tmp_path / "t.csv")
    assert code == 0
    lines = dict(line.split(" ", 1) for line in out.strip().splitlines())
    assert lines["decision"] in ("accept_H1", "accept_H0")
    n = int(lines["cycles_used"])
    assert len(lines["lambda"].split()) == n
    assert len((tmp_path / "t.csv").read_text().splitlines()) == n + 1


def test_authenticate_wrong_cnn(ws, tmp_path, capsys):
    text = (ws / "net.cnn").read_text().replace("seed=0", "seed=1", 1)
    (tmp_path / "other.cnn").write_text(text)
    code, _, err = run(capsys, "authenticate", ws / "s021_w1.rec", "--profile", ws / "s021.auth",
                       "--cnn", tmp_path / "other.cnn")
    assert code == 2 and "does not match" in err


def test_eval_writes_csv_and_png(ws, tmp_path, capsys):
    code, out, _ = run(capsys, "eval", ws / "all.cyc", "--protocol", "osvm-grid", "--cnn", ws / "net.cnn",
                       "--out", tmp_path / "ev", "--config", ws / "small.cfg")
    assert code == 0
    assert (tmp_path / "ev" / "osvm-grid.png").read_bytes()[:4] == b"\x89PNG"
    assert len((tmp_path / "ev" / "osvm-grid.csv").read_text().splitlines()) == 1 + 7 * 6


def test_eval_needs_cnn(ws, tmp_path, capsys):
    code, _, err = run(capsys, "eval", ws / "all.cyc", "--protocol", "sprt", "--out", tmp_path / "ev")
    assert code == 2 and "--cnn" in err
