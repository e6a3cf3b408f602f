import subprocess
import sys
from pathlib import Path

from biomstat.store import read_sequence

from faceextract.cli import main
from faceextract.fixtures import render_clip

EXTRACT_PY = Path(__file__).resolve().parents[1] / "extract.py"


def test_single_video(tmp_path, capsys):
    clip = render_clip(tmp_path / "clip.avi", 6)
    out = tmp_path / "clip.bmsq"
    meta = tmp_path / "clip.meta.json"
    code = main([str(clip), "-o", str(out), "--meta", str(meta)])
    assert code == 0
    assert "kept 6/6 frames" in capsys.readouterr().out
    assert read_sequence(out).frame_count == 6
    assert meta.exists()


def test_threshold_flags(tmp_path, capsys):
    clip = render_clip(tmp_path / "turn.avi", 6, pose_fn=lambda i: (30.0, 0.0, 0.0))
    out = tmp_path / "turn.bmsq"
    assert main([str(clip), "-o", str(out)]) == 2  # everything filtered
    assert "no usable frames" in capsys.readouterr().err
    assert main([str(clip), "-o", str(out), "--pitch-max", "40"]) == 0
    assert read_sequence(out).frame_count == 6


def test_batch_with_labels(tmp_path, capsys):
    videos = tmp_path / "v"
    videos.mkdir()
    render_clip(videos / "a.avi", 5)
    render_clip(videos / "b.avi", 5)
    labels = tmp_path / "labels.csv"
    labels.write_text(
        "video_id,identity_id,label,generator_tag\n"
        "a,person1,0,authentic\n"
        "b,person1,1,facefusion\n"
    )
    out = tmp_path / "ds"
    code = main(["--batch", str(videos), "-o", str(out), "--labels", str(labels)])
    assert code == 0
    assert (out / "manifest.json").exists()
    assert (out / "embeddings" / "a.bmsq").exists()


def test_unknown_embedder_flag(tmp_path, capsys):
    clip = render_clip(tmp_path / "c.avi", 4)
    code = main([str(clip), "-o", str(tmp_path / "c.bmsq"),
                 "--embedder", "arcface-onnx"])
    assert code == 1
    assert "arcface-model" in capsys.readouterr().err


def test_extract_py_entrypoint(tmp_path):
    clip = render_clip(tmp_path / "e.avi", 4)
    out = tmp_path / "e.bmsq"
    proc = subprocess.run(
        [sys.executable, str(EXTRACT_PY), str(clip), "-o", str(out)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert out.exists()
