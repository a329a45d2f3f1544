import io
import subprocess
import sys

import numpy as np
import pytest

from spkcount import cli
from spkcount.corpus import DatasetManifest
from spkcount.dsp import AudioSegment, load_lmfb, write_wav
from spkcount.nn import DESK_CONFIG, SpeakerCounter, save_checkpoint
from spkcount.nn.train import read_history_csv


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    ini = d / "exp.ini"
    ini.write_text("[model]\nconv_layers = 1\nconv_channels = 4\nfc_layers = 1\nfc_width = 8\n"
                   "[train]\nbatch_size = 8\n")
    assert cli.main(["--config", str(ini), "--out-dir", str(d), "--seed", "1", "simulate", "--per-class", "3",
                     "--write-audio"]) == 0
    return d, ini


def test_dry_run_prints_default_counts(capsys):
    assert cli.main(["simulate", "--dry-run"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[1].split() == ["train", "5000", "5000", "5000", "5000"]
    assert lines[2].split() == ["cv", "500", "500", "500", "500"]
    assert lines[3].split() == ["test", "500", "500", "500", "500"]


def test_simulate_deterministic(tmp_path, run_dir):
    d, ini = run_dir
    assert cli.main(["--config", str(ini), "--out-dir", str(tmp_path), "--seed", "1", "simulate",
                     "--per-class", "3", "--write-audio"]) == 0
    for split in ("train", "cv", "test"):
        a = DatasetManifest.load(d / "manifests" / f"{split}.jsonl")
        b = DatasetManifest.load(tmp_path / "manifests" / f"{split}.jsonl")
        assert a.checksum() == b.checksum()
        assert a.counts == {0: 3, 1: 3, 2: 3, 3: 3}


def test_featurize_idempotent_and_exact(tmp_path, run_dir):
    d, _ = run_dir
    m = d / "manifests" / "train.jsonl"
    assert cli.main(["featurize", str(m), "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["featurize", str(m), "--out", str(tmp_path / "b")]) == 0
    files = sorted((tmp_path / "a").iterdir())
    assert len(files) == 12
    for f in files:
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
        assert load_lmfb(f).shape == (20, 40)


def test_featurize_missing_audio(tmp_path, run_dir):
    d, _ = run_dir
    text = (d / "manifests" / "cv.jsonl").read_text().replace("../audio/cv/cv-1-00000.wav", "../audio/missing.wav")
    bad = d / "manifests" / "cv-broken.jsonl"
    bad.write_text(text)
    assert cli.main(["featurize", str(bad), "--out", str(tmp_path)]) == 2
    assert len(list(tmp_path.iterdir())) == 11


def test_train_evaluate_sweep_stream(tmp_path, run_dir, capsys):
    d, ini = run_dir
    base = ["--config", str(ini), "--out-dir", str(tmp_path)]
    ckpt = {}
    for agg in ("attention", "avgpool"):
        assert cli.main(base + ["train", str(d / "manifests" / "train.jsonl"), "--cv-manifest",
                                str(d / "manifests" / "cv.jsonl"), "--aggregation", agg, "--epochs", "4"]) == 0
        ckpt[agg] = tmp_path / f"model-{agg}.ckpt"
        hist = read_history_csv(tmp_path / f"model-{agg}.history.csv")
        assert 1 <= len(hist) <= 4
        assert hist[0].lr == 0.01
    capsys.readouterr()

    csv_path = tmp_path / "m.csv"
    assert cli.main(base + ["evaluate", str(ckpt["attention"]), str(d / "manifests" / "test.jsonl"),
                            "--frames", "20", "--csv", str(csv_path)]) == 0
    out = capsys.readouterr().out
    assert "weighted accuracy" in out and "confusion matrix" in out
    assert csv_path.read_text().startswith("scope,")

    assert cli.main(base + ["sweep", "--test", f"20={d / 'manifests' / 'test.jsonl'}",
                            "--a", f"20={ckpt['attention']}", "--b", f"20={ckpt['avgpool']}"]) == 0
    assert capsys.readouterr().out.splitlines()[0].split() == ["frames", "attention", "avgpool"]

    wav = tmp_path / "in.wav"
    write_wav(wav, AudioSegment(np.zeros(6880)))
    assert cli.main(base + ["stream", str(ckpt["attention"]), str(wav), "--hop-frames", "10"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert [line.split(",")[0] for line in lines] == ["0", "10", "20"]
    assert all(len(line.split(",")) == 7 for line in lines)


def test_stream_underflow_warns(tmp_path, capsys):
    ck = tmp_path / "m.ckpt"
    save_checkpoint(SpeakerCounter(DESK_CONFIG), ck)
    wav = tmp_path / "short.wav"
    write_wav(wav, AudioSegment(np.zeros(1000)))
    assert cli.main(["stream", str(ck), str(wav)]) == 0
    cap = capsys.readouterr()
    assert cap.out == ""
    assert cap.err.count("warning") == 1


def test_stream_stdin_raw(tmp_path):
    ck = tmp_path / "m.ckpt"
    save_checkpoint(SpeakerCounter(DESK_CONFIG), ck)
    raw = np.zeros(3440, dtype="<i2").tobytes()
    p = subprocess.run([sys.executable, "-m", "spkcount.cli", "stream", str(ck), "-"], input=raw,
                       capture_output=True, check=False)
    assert p.returncode == 0
    assert len(p.stdout.decode().splitlines()) == 1


@pytest.mark.parametrize("argv", [[], ["bogus"], ["train"], ["stream", "x", "--window-frames", "many"],
                                  ["sweep", "--test", "twenty=x", "--a", "20=a", "--b", "20=b"]])
def test_usage_errors_exit_1(argv):
    assert cli.main(argv) == 1


def test_help_exits_0():
    assert cli.main(["--help"]) == 0


def test_data_errors_exit_2(tmp_path):
    assert cli.main(["evaluate", str(tmp_path / "none.ckpt"), str(tmp_path / "none.jsonl")]) == 2
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"SCNT\0\0")
    (tmp_path / "m.jsonl").write_text("")
    assert cli.main(["evaluate", str(bad), str(tmp_path / "m.jsonl")]) == 2
    bad_ini = tmp_path / "bad.ini"
    bad_ini.write_text("[train]\nmomentum = 1\n")
    assert cli.main(["--config", str(bad_ini), "simulate", "--dry-run"]) == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numerical_failure_exits_3(tmp_path, run_dir):
    d, ini = run_dir
    # an absurd learning rate drives the loss to infinity
    assert cli.main(["--config", str(ini), "--out-dir", str(tmp_path), "train",
                     str(d / "manifests" / "train.jsonl"), "--lr", "1e30", "--epochs", "3"]) == 3
