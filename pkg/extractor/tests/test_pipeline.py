import json

import numpy as np
import pytest

# conformance oracle: the consumer's parser and manifest loader
from biomstat.similarity import pairwise_stats
from biomstat.store import load_manifest, read_sequence

from faceextract.fixtures import render_clip
from faceextract.pipeline import ExtractError, Thresholds, extract, extract_batch


def pose_segments(over: dict[range, tuple[float, float, float]]):
    def pose_fn(i):
        for frames, pose in over.items():
            if i in frames:
                return pose
        return (0.0, 0.0, 0.0)

    return pose_fn


class TestExtractSingle:
    def test_static_face_keeps_all_frames_and_is_self_similar(self, tmp_path):
        clip = render_clip(tmp_path / "static.avi", 30)
        out = tmp_path / "static.bmsq"
        result = extract(clip, out, meta_path=tmp_path / "static.meta.json")
        assert result.kept_frames == 30
        seq = read_sequence(out)  # primary parser validates magic + unit norms
        assert seq.frame_count == 30
        assert seq.dim == 512
        stats = pairwise_stats(seq)
        assert float(stats.values.min()) > 0.99

    def test_pose_segment_frames_dropped(self, tmp_path):
        clip = render_clip(
            tmp_path / "turning.avi",
            40,
            pose_fn=pose_segments({range(10, 21): (30.0, 0.0, 0.0)}),
        )
        out = tmp_path / "turning.bmsq"
        result = extract(clip, out, meta_path=tmp_path / "turning.meta.json")
        seq = read_sequence(out)
        kept = set(int(i) for i in seq.frame_indices)
        assert kept == set(range(40)) - set(range(10, 21))
        assert result.kept_frames == 29

    @pytest.mark.parametrize(
        "pose,axis",
        [
            ((30.0, 0.0, 0.0), "pitch"),
            ((0.0, 25.0, 0.0), "yaw"),
            ((0.0, 0.0, 25.0), "roll"),
        ],
    )
    def test_each_axis_threshold_enforced(self, tmp_path, pose, axis):
        clip = render_clip(
            tmp_path / f"{axis}.avi", 10, pose_fn=pose_segments({range(4, 7): pose})
        )
        out = tmp_path / f"{axis}.bmsq"
        extract(clip, out)
        kept = set(int(i) for i in read_sequence(out).frame_indices)
        assert kept == set(range(10)) - {4, 5, 6}

    def test_thresholds_configurable(self, tmp_path):
        clip = render_clip(
            tmp_path / "lenient.avi", 10, pose_fn=pose_segments({range(4, 7): (30.0, 0.0, 0.0)})
        )
        out = tmp_path / "lenient.bmsq"
        extract(clip, out, thresholds=Thresholds(pitch_max=40.0))
        assert read_sequence(out).frame_count == 10

    def test_occluded_frames_dropped(self, tmp_path):
        clip = render_clip(tmp_path / "occ.avi", 12, occluded_frames=range(5, 9))
        out = tmp_path / "occ.bmsq"
        extract(clip, out, meta_path=tmp_path / "occ.meta.json")
        kept = set(int(i) for i in read_sequence(out).frame_indices)
        assert kept == set(range(12)) - {5, 6, 7, 8}
        sidecar = json.loads((tmp_path / "occ.meta.json").read_text())
        occluded = [f["frame_index"] for f in sidecar["frames"] if f["occluded"]]
        assert occluded == [5, 6, 7, 8]

    def test_blank_frames_have_no_face(self, tmp_path):
        clip = render_clip(tmp_path / "blank.avi", 8, blank_frames={0, 3})
        out = tmp_path / "blank.bmsq"
        extract(clip, out, meta_path=tmp_path / "blank.meta.json")
        kept = set(int(i) for i in read_sequence(out).frame_indices)
        assert kept == set(range(8)) - {0, 3}
        sidecar = json.loads((tmp_path / "blank.meta.json").read_text())
        assert [f["face_found"] for f in sidecar["frames"]] == [
            False, True, True, False, True, True, True, True,
        ]

    def test_no_usable_frames_writes_nothing(self, tmp_path):
        clip = render_clip(tmp_path / "unusable.avi", 6, occluded_frames=range(6))
        out = tmp_path / "unusable.bmsq"
        with pytest.raises(ExtractError, match="no usable frames"):
            extract(clip, out)
        assert not out.exists()

    def test_undecodable_video(self, tmp_path):
        bogus = tmp_path / "bogus.avi"
        bogus.write_bytes(b"not a video")
        with pytest.raises(ExtractError, match="cannot decode"):
            extract(bogus, tmp_path / "out.bmsq")

    def test_sidecar_kept_invariant_and_template(self, tmp_path):
        clip = render_clip(
            tmp_path / "mix.avi",
            20,
            pose_fn=pose_segments({range(3, 6): (0.0, 30.0, 0.0)}),
            occluded_frames={10, 11},
        )
        meta_path = tmp_path / "mix.meta.json"
        extract(clip, tmp_path / "mix.bmsq", meta_path=meta_path)
        sidecar = json.loads(meta_path.read_text())
        assert sidecar["thresholds"] == {
            "pitch_max": 25.0, "yaw_max": 20.0, "roll_max": 20.0,
            "occlusion_overlap": 0.1,
        }
        assert len(sidecar["landmark_template"]) == 6
        for frame in sidecar["frames"]:
            if frame["kept"]:
                assert frame["face_found"] and not frame["occluded"]
                assert abs(frame["pitch"]) <= 25.0
                assert abs(frame["yaw"]) <= 20.0
                assert abs(frame["roll"]) <= 20.0

    def test_deterministic_output(self, tmp_path):
        clip = render_clip(tmp_path / "det.avi", 10)
        out1 = tmp_path / "det1.bmsq"
        out2 = tmp_path / "det2.bmsq"
        extract(clip, out1)
        extract(clip, out2)
        assert out1.read_bytes() == out2.read_bytes()


class TestExtractBatch:
    def test_batch_manifest_loads_with_primary(self, tmp_path):
        videos = tmp_path / "videos"
        videos.mkdir()
        render_clip(videos / "alice_real.avi", 8)
        render_clip(videos / "alice_fake.avi", 8)
        render_clip(videos / "broken.avi", 5, occluded_frames=range(5))
        out = tmp_path / "dataset"
        labels = {
            "alice_real": {"identity_id": "alice", "label": 0, "generator_tag": "authentic"},
            "alice_fake": {"identity_id": "alice", "label": 1, "generator_tag": "facefusion"},
        }
        records, failures = extract_batch(videos, out, labels=labels)
        assert [r["video_id"] for r in records] == ["alice_fake", "alice_real"]
        assert len(failures) == 1 and "broken" in failures[0][0]
        manifest = load_manifest(out)  # the consumer's loader checks everything
        assert len(manifest.records) == 2
        by_id = {r.video_id: r for r in manifest.records}
        assert by_id["alice_fake"].label == 1
        assert by_id["alice_real"].generator_tag == "authentic"
        for rec in manifest.records:
            read_sequence(manifest.embedding_file(rec))

    def test_batch_empty_dir(self, tmp_path):
        empty = tmp_path / "none"
        empty.mkdir()
        with pytest.raises(ExtractError, match="no video files"):
            extract_batch(empty, tmp_path / "out")


class TestMultiFace:
    def test_largest_face_wins_and_extras_flagged(self):
        from faceextract.backends import FiducialBackend
        from faceextract.fixtures import render_frame

        frame = render_frame((0.0, 0.0, 0.0))
        # second, smaller face-colored blob far from the real face
        import cv2

        cv2.rectangle(frame, (10, 10), (80, 90), (180, 180, 180), -1)
        obs = FiducialBackend().analyze(frame)
        assert obs is not None
        assert obs.extra_faces == 1
        x0, y0, x1, y1 = obs.box
        assert (x1 - x0) * (y1 - y0) > 70 * 80  # kept the dominant face


class TestEmbedderProperties:
    def test_unit_norm_and_distinct_crops(self):
        from faceextract.embed import PatchEmbedder

        embedder = PatchEmbedder()
        rng = np.random.default_rng(1)
        a = rng.integers(0, 255, (64, 64, 3)).astype(np.uint8)
        b = rng.integers(0, 255, (64, 64, 3)).astype(np.uint8)
        va, vb = embedder.embed(a), embedder.embed(b)
        assert np.linalg.norm(va) == pytest.approx(1.0, abs=1e-5)
        assert np.linalg.norm(vb) == pytest.approx(1.0, abs=1e-5)
        assert abs(float(va @ vb)) < 0.5
        assert np.array_equal(embedder.embed(a), va)

    def test_flat_crop_guard(self):
        from faceextract.embed import PatchEmbedder

        flat = np.full((50, 50, 3), 128, np.uint8)
        vec = PatchEmbedder().embed(flat)
        assert np.linalg.norm(vec) == pytest.approx(1.0, abs=1e-6)
