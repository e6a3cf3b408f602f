import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biomstat.errors import DataFormatError, ValidationError
from biomstat.store import (
    EmbeddingSequence,
    VideoRecord,
    load_manifest,
    read_sequence,
    save_manifest,
    scan_dataset,
    write_sequence,
)


def unit_rows(rng, n, dim):
    rows = rng.standard_normal((n, dim))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return rows.astype(np.float32)


def make_seq(n=3, dim=8, seed=0, video_id="vid"):
    rng = np.random.default_rng(seed)
    return EmbeddingSequence(
        video_id=video_id,
        embeddings=unit_rows(rng, n, dim),
        frame_indices=np.arange(n, dtype=np.uint32),
    )


class TestSequenceValidation:
    def test_non_unit_row_names_offender(self):
        rows = np.zeros((2, 4), dtype=np.float32)
        rows[0, 0] = 0.5
        rows[1, 1] = 1.0
        with pytest.raises(ValidationError, match=r"row 0 norm 0.5"):
            EmbeddingSequence("v", rows, np.arange(2, dtype=np.uint32))

    def test_non_increasing_frame_indices(self):
        rows = np.eye(2, 4, dtype=np.float32)
        with pytest.raises(ValidationError, match="strictly increasing"):
            EmbeddingSequence("v", rows, np.array([3, 3], dtype=np.uint32))

    def test_norm_tolerance_absorbs_float32_rounding(self):
        seq = make_seq(n=50, dim=512)
        assert seq.frame_count == 50

    def test_truncated_prefix(self):
        seq = make_seq(n=10, dim=4)
        cut = seq.truncated(4)
        assert cut.frame_count == 4
        np.testing.assert_array_equal(cut.embeddings, seq.embeddings[:4])
        assert seq.truncated(None) is seq
        assert seq.truncated(100) is seq

    def test_immutable(self):
        seq = make_seq()
        with pytest.raises(ValueError):
            seq.embeddings[0, 0] = 0.0


class TestBinaryRoundTrip:
    def test_single_basis_vector_payload_size(self):
        rows = np.zeros((1, 4), dtype=np.float32)
        rows[0, 0] = 1.0
        seq = EmbeddingSequence("one", rows, np.array([0], dtype=np.uint32))
        buf = io.BytesIO()
        n = write_sequence(seq, buf)
        # 16-byte header + one u32 frame index + 16-byte float payload
        assert n == 16 + 4 + 16
        assert buf.getvalue()[:4] == b"BMSQ"

    def test_round_trip_bitwise(self):
        seq = make_seq(n=3, dim=512, seed=1)
        buf = io.BytesIO()
        write_sequence(seq, buf)
        buf.seek(0)
        back = read_sequence(buf, video_id="vid")
        assert back.video_id == "vid"
        assert back.embeddings.tobytes() == seq.embeddings.tobytes()
        np.testing.assert_array_equal(back.frame_indices, seq.frame_indices)

    def test_path_round_trip_uses_stem(self, tmp_path):
        seq = make_seq(video_id="clip42")
        path = tmp_path / "clip42.bmsq"
        write_sequence(seq, path)
        back = read_sequence(path)
        assert back.video_id == "clip42"
        assert back.embeddings.tobytes() == seq.embeddings.tobytes()

    @settings(max_examples=25, deadline=None)
    @given(
        n=st.integers(min_value=1, max_value=20),
        dim=st.integers(min_value=1, max_value=64),
        seed=st.integers(min_value=0, max_value=2**31),
    )
    def test_round_trip_property(self, n, dim, seed):
        seq = make_seq(n=n, dim=dim, seed=seed)
        buf = io.BytesIO()
        write_sequence(seq, buf)
        buf.seek(0)
        back = read_sequence(buf)
        assert back.embeddings.tobytes() == seq.embeddings.tobytes()
        assert back.frame_indices.tobytes() == seq.frame_indices.tobytes()


class TestParseErrors:
    def payload(self):
        buf = io.BytesIO()
        write_sequence(make_seq(n=3, dim=4), buf)
        return bytearray(buf.getvalue())

    def test_bad_magic(self):
        data = self.payload()
        data[:4] = b"NOPE"
        with pytest.raises(DataFormatError, match="unrecognized format"):
            read_sequence(io.BytesIO(bytes(data)))

    def test_unsupported_version(self):
        data = self.payload()
        data[4:8] = (99).to_bytes(4, "little")
        with pytest.raises(DataFormatError, match="unsupported version 99"):
            read_sequence(io.BytesIO(bytes(data)))

    def test_truncated_mid_row(self):
        data = self.payload()
        with pytest.raises(DataFormatError, match="truncated payload"):
            read_sequence(io.BytesIO(bytes(data[:-7])))

    def test_empty_stream(self):
        with pytest.raises(DataFormatError, match="truncated payload"):
            read_sequence(io.BytesIO(b""))

    def test_norm_violation_detected_on_read(self):
        data = self.payload()
        # zero out the first embedding row (offset: header 16 + 3 u32 indices)
        off = 16 + 12
        data[off : off + 16] = b"\x00" * 16
        with pytest.raises(ValidationError, match="row 0 norm 0"):
            read_sequence(io.BytesIO(bytes(data)))

    @settings(max_examples=200, deadline=None)
    @given(data=st.binary(max_size=256))
    def test_parsing_is_total(self, data):
        # any byte stream either parses to a valid sequence or raises one of
        # the two typed errors; nothing else escapes
        try:
            seq = read_sequence(io.BytesIO(data))
        except (DataFormatError, ValidationError):
            return
        assert seq.frame_count >= 1

    @settings(max_examples=100, deadline=None)
    @given(data=st.binary(max_size=128))
    def test_parsing_is_total_with_valid_header(self, data):
        blob = b"BMSQ" + (1).to_bytes(4, "little") + data
        try:
            seq = read_sequence(io.BytesIO(blob))
        except (DataFormatError, ValidationError):
            return
        assert seq.frame_count >= 1


def write_dataset(tmp_path, records):
    for rec, seq in records:
        write_sequence(seq, tmp_path / rec.embedding_path)
    save_manifest([rec for rec, _ in records], tmp_path)


class TestManifest:
    def sample_records(self):
        return [
            (
                VideoRecord(f"v{i}", f"id{i % 2}", i % 2, "synthetic", f"v{i}.bmsq", 30.0),
                make_seq(seed=i, video_id=f"v{i}"),
            )
            for i in range(4)
        ]

    def test_load_valid(self, tmp_path):
        write_dataset(tmp_path, self.sample_records())
        manifest = load_manifest(tmp_path)
        assert len(manifest.records) == 4
        assert manifest.identities() == ["id0", "id1"]
        summary = scan_dataset(manifest)
        assert summary["videos"] == 4
        assert summary["authentic"] == 2 and summary["deepfake"] == 2

    def test_duplicate_video_id(self, tmp_path):
        write_dataset(tmp_path, self.sample_records())
        payload = json.loads((tmp_path / "manifest.json").read_text())
        payload["records"].append(
            {
                "video_id": "v0",
                "identity_id": "idX",
                "label": 1,
                "generator_tag": "synthetic",
                "embedding_path": "v1.bmsq",
                "fps": 30.0,
            }
        )
        (tmp_path / "manifest.json").write_text(json.dumps(payload))
        with pytest.raises(ValidationError, match="duplicate video_id: v0"):
            load_manifest(tmp_path)

    def test_label_out_of_range(self, tmp_path):
        write_dataset(tmp_path, self.sample_records())
        payload = json.loads((tmp_path / "manifest.json").read_text())
        payload["records"][0]["label"] = 2
        (tmp_path / "manifest.json").write_text(json.dumps(payload))
        with pytest.raises((DataFormatError, ValidationError), match="label 2"):
            load_manifest(tmp_path)

    def test_missing_embedding_file(self, tmp_path):
        write_dataset(tmp_path, self.sample_records())
        (tmp_path / "v2.bmsq").unlink()
        with pytest.raises(ValidationError, match="missing embedding files: v2.bmsq"):
            load_manifest(tmp_path)

    def test_unsupported_manifest_version(self, tmp_path):
        write_dataset(tmp_path, self.sample_records())
        payload = json.loads((tmp_path / "manifest.json").read_text())
        payload["version"] = 9
        (tmp_path / "manifest.json").write_text(json.dumps(payload))
        with pytest.raises(DataFormatError, match="unsupported manifest version"):
            load_manifest(tmp_path)

    def test_empty_identity_rejected(self):
        with pytest.raises(ValidationError, match="empty identity_id"):
            VideoRecord("v", "", 0, "synthetic", "v.bmsq", 30.0)
