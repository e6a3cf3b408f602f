import json
import subprocess
import sys

import numpy as np
import pytest

from biomstat.cli import main
from biomstat.gbt import GbtModel, serialize
from biomstat.store import EmbeddingSequence, write_sequence


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli-data")
    data = root / "synth"
    code = main([
        "synth", str(data),
        "--identities", "12", "--videos-per-identity", "2",
        "--frames", "60", "--dim", "16", "--seed", "5",
    ])
    assert code == 0
    return data


@pytest.fixture(scope="module")
def trained(dataset, tmp_path_factory):
    root = tmp_path_factory.mktemp("cli-model")
    features = root / "features.csv"
    model = root / "model.json"
    assert main(["featurize", str(dataset / "manifest.json"), "-o", str(features)]) == 0
    assert main(["train", str(features), "-o", str(model), "--trees", "40"]) == 0
    return model


def test_ingest_ok(dataset, capsys):
    assert main(["ingest", str(dataset)]) == 0
    out = capsys.readouterr().out
    assert "24 videos" in out
    assert "12 identities" in out


def test_ingest_missing_dir(tmp_path, capsys):
    assert main(["ingest", str(tmp_path / "nope")]) == 1
    assert "error:" in capsys.readouterr().err


def test_featurize_csv_shape(dataset, tmp_path):
    out = tmp_path / "f.csv"
    assert main(["featurize", str(dataset / "manifest.json"), "-o", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 25
    assert lines[0].startswith("video_id,identity_id,label,mean")


def test_predict_authentic_and_deepfake(dataset, trained, capsys):
    # record ids follow (identity + video) parity: id0000_v0 is authentic
    auth = dataset / "embeddings" / "id0000_v0.bmsq"
    fake = dataset / "embeddings" / "id0000_v1.bmsq"
    assert main(["predict", str(trained), str(auth), "--json"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["label"] == "authentic"
    assert report["probability"] < 0.5
    assert report["frames_used"] == 60
    assert main(["predict", str(trained), str(fake), "--json"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["label"] == "deepfake"
    assert report["probability"] >= 0.5


def test_predict_max_frames_reported(dataset, trained, capsys):
    video = dataset / "embeddings" / "id0001_v0.bmsq"
    assert main(["predict", str(trained), str(video), "--max-frames", "30"]) == 0
    assert "N=30" in capsys.readouterr().out


def test_predict_insufficient_frames_exits_2(trained, tmp_path, capsys):
    rows = np.eye(2, 16, dtype=np.float32)
    tiny = tmp_path / "tiny.bmsq"
    write_sequence(EmbeddingSequence("tiny", rows, np.arange(2, dtype=np.uint32)), tiny)
    assert main(["predict", str(trained), str(tiny)]) == 2
    assert "at least 3" in capsys.readouterr().err


def test_predict_malformed_model_exits_1(dataset, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    video = dataset / "embeddings" / "id0001_v0.bmsq"
    assert main(["predict", str(bad), str(video)]) == 1
    assert "error:" in capsys.readouterr().err


def test_predict_empty_model_warns(dataset, tmp_path, capsys):
    from biomstat.features import FEATURE_NAMES

    empty = tmp_path / "empty.json"
    empty.write_bytes(serialize(GbtModel((), 0.1, 0.5, FEATURE_NAMES, 0, -1)))
    video = dataset / "embeddings" / "id0001_v0.bmsq"
    assert main(["predict", str(empty), str(video), "--json"]) == 0
    captured = capsys.readouterr()
    assert "non-discriminative" in captured.err
    report = json.loads(captured.out)
    assert report["probability"] == 0.5
    assert report["label"] == "deepfake"


def test_hist_counts_conserved(dataset, tmp_path, capsys):
    video = dataset / "embeddings" / "id0002_v1.bmsq"
    out = tmp_path / "hist.csv"
    assert main(["hist", str(video), "-o", str(out), "--bins", "256"]) == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "bin_lo,bin_hi,count"
    total = sum(int(r.split(",")[2]) for r in rows[1:])
    assert total == 60 * 59 // 2
    assert (tmp_path / "hist.png").exists()


def test_hist_no_figure(dataset, tmp_path):
    video = dataset / "embeddings" / "id0002_v0.bmsq"
    out = tmp_path / "h.csv"
    assert main(["hist", str(video), "-o", str(out), "--no-figure"]) == 0
    assert not (tmp_path / "h.png").exists()


def test_evaluate_single_row(dataset, tmp_path, capsys):
    outdir = tmp_path / "report"
    code = main([
        "evaluate", str(dataset / "manifest.json"),
        "--train-tag", "synthetic", "--eval-tag", "synthetic",
        "--trees", "30", "-o", str(outdir),
    ])
    assert code == 0
    out = capsys.readouterr().out
    assert "Acc" in out and "synthetic" in out
    assert (outdir / "report.txt").exists()
    assert (outdir / "metrics.png").exists()
    lines = (outdir / "report.jsonl").read_text().splitlines()
    assert len(lines) == 1
    row = json.loads(lines[0])
    assert row["schema_version"] == 1
    assert 0.0 <= row["accuracy"] <= 1.0


def test_evaluate_sweep_writes_sweep_figure(dataset, tmp_path):
    outdir = tmp_path / "sweep"
    code = main([
        "evaluate", str(dataset / "manifest.json"),
        "--sweep-frames", "60,30,10", "--trees", "20", "-o", str(outdir),
    ])
    assert code == 0
    assert (outdir / "accuracy_vs_frames.png").exists()
    assert len((outdir / "report.jsonl").read_text().splitlines()) == 3


def test_evaluate_degenerate_selector_exits_2(dataset, capsys):
    code = main([
        "evaluate", str(dataset / "manifest.json"), "--train-tag", "absent",
    ])
    assert code == 2
    assert "degenerate" in capsys.readouterr().err


def test_config_file_defaults_flags_win(dataset, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"trees": 3, "seed": 9}))
    features = tmp_path / "f.csv"
    model = tmp_path / "m.json"
    assert main(["featurize", str(dataset / "manifest.json"), "-o", str(features)]) == 0
    capsys.readouterr()
    assert main(["--config", str(cfg), "train", str(features), "-o", str(model)]) == 0
    out = capsys.readouterr().out
    assert "trained 3 rounds" in out  # config default applied
    assert main([
        "--config", str(cfg), "train", str(features), "-o", str(model), "--trees", "5",
    ]) == 0
    assert "trained 5 rounds" in capsys.readouterr().out  # flag wins


def test_config_file_unknown_key(dataset, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus_knob": 1}))
    assert main(["--config", str(cfg), "ingest", str(dataset)]) == 1
    assert "unknown config keys: bogus_knob" in capsys.readouterr().err


def test_unknown_flag_rejected(dataset):
    with pytest.raises(SystemExit):
        main(["ingest", str(dataset), "--frobnicate"])


def test_console_script_help():
    proc = subprocess.run(
        [sys.executable, "-m", "biomstat.cli", "--help"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert "subcommands" in proc.stdout or "usage" in proc.stdout


def test_threads_env_var(monkeypatch):
    from biomstat.threads import resolve_threads

    monkeypatch.delenv("BIOMSTAT_THREADS", raising=False)
    assert resolve_threads(3) == 3
    assert resolve_threads(0) >= 1  # auto
    monkeypatch.setenv("BIOMSTAT_THREADS", "7")
    assert resolve_threads(None) == 7
    assert resolve_threads(2) == 2  # explicit flag beats the env var
    monkeypatch.setenv("BIOMSTAT_THREADS", "lots")
    with pytest.raises(ValueError, match="BIOMSTAT_THREADS"):
        resolve_threads(None)


def test_subsets_cli_small(dataset, tmp_path):
    outdir = tmp_path / "subsets"
    code = main([
        "subsets", str(dataset / "manifest.json"),
        "--k", "2", "--trees", "8", "-o", str(outdir),
    ])
    assert code == 0
    lines = (outdir / "subsets.jsonl").read_text().splitlines()
    assert len(lines) == 511
    assert (outdir / "subset_accuracy.png").exists()
