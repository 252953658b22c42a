import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wearecg.data import (DatasetManifest, EcgRecord, LabelVector, RecordFormatError, Vocabulary,
                          VocabularyMismatchError, csv_to_record, fnv1a64, load_record, load_split,
                          save_record, split_by_subject)
from wearecg.leads import CANONICAL, LeadId, parse_leads


def make_record(seed=0, n=50, order=CANONICAL, labels=None):
    sig = np.random.default_rng(seed).normal(size=(12, n)).astype(np.float32)
    return EcgRecord("S1", f"R{seed}", 500, sig, labels, order)


class TestLeads:
    def test_canonical_order(self):
        assert [l.name for l in CANONICAL] == ["I", "II", "III", "aVR", "aVL", "aVF",
                                              "V1", "V2", "V3", "V4", "V5", "V6"]

    def test_parse_case_insensitive(self):
        assert LeadId.parse("avr") is LeadId.aVR
        assert parse_leads("II, v1,V5") == (LeadId.II, LeadId.V1, LeadId.V5)

    def test_parse_errors(self):
        with pytest.raises(ValueError):
            LeadId.parse("V7")
        with pytest.raises(ValueError):
            parse_leads("I,I")


class TestVocabulary:
    def test_fnv_reference_values(self):
        assert fnv1a64(b"") == 0xCBF29CE484222325
        assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C

    def test_default(self):
        v = Vocabulary.default()
        assert len(v) == 10
        assert v.labels[0] == "NORMAL"
        assert len(v.hash) == 16

    def test_comments_and_blank_lines(self):
        v = Vocabulary.from_bytes(b"# header\nA\n\nB\n")
        assert v.labels == ("A", "B")

    def test_duplicate_rejected(self):
        with pytest.raises(ValueError):
            Vocabulary.from_bytes(b"A\nA\n")

    def test_encode_and_names(self):
        v = Vocabulary.from_bytes(b"A\nB\nC\n")
        lv = v.encode(["C", "A"])
        np.testing.assert_array_equal(lv.bits, [1, 0, 1])
        assert lv.names(v) == ["A", "C"]
        with pytest.raises(KeyError):
            v.encode(["D"])

    def test_hash_binding(self):
        v1 = Vocabulary.from_bytes(b"A\nB\n")
        v2 = Vocabulary.from_bytes(b"A\nC\n")
        with pytest.raises(VocabularyMismatchError):
            v1.encode(["A"]).names(v2)

    def test_bits_must_be_binary(self):
        with pytest.raises(ValueError):
            LabelVector(np.array([0, 2]), "x")


class TestEcgRecord:
    def test_shape_check(self):
        with pytest.raises(RecordFormatError):
            EcgRecord("s", "r", 500, np.zeros((11, 10)))

    def test_lead_order_must_be_permutation(self):
        with pytest.raises(RecordFormatError):
            EcgRecord("s", "r", 500, np.zeros((12, 10)), lead_order=(LeadId.I,) * 12)

    def test_fs_must_be_positive_integer(self):
        with pytest.raises(RecordFormatError):
            EcgRecord("s", "r", 0, np.zeros((12, 10)))
        with pytest.raises(RecordFormatError):
            EcgRecord("s", "r", 250.5, np.zeros((12, 10)))

    def test_canonical_reorders(self):
        order = tuple(reversed(CANONICAL))
        rec = make_record(order=order).canonical()
        raw = make_record()
        np.testing.assert_array_equal(rec.signal, raw.signal[::-1])


class TestRecordFiles:
    def test_roundtrip(self, tmp_path):
        v = Vocabulary.default()
        rec = make_record(labels=v.encode(["TACHY"]))
        save_record(rec, tmp_path / "a")
        back = load_record(tmp_path / "a.ecgjson")
        assert back.signal.tobytes() == rec.signal.tobytes()
        assert back.labels == rec.labels
        assert (back.subject_id, back.record_id, back.fs) == ("S1", "R0", 500)

    def test_noncanonical_order_loaded_canonical(self, tmp_path):
        order = tuple(reversed(CANONICAL))
        rec = make_record(order=order)
        save_record(rec, tmp_path / "a")
        back = load_record(tmp_path / "a")
        assert back.lead_order == CANONICAL
        np.testing.assert_array_equal(back.signal, rec.signal[::-1])

    def test_payload_is_little_endian_f32(self, tmp_path):
        rec = make_record(n=7)
        save_record(rec, tmp_path / "a")
        raw = (tmp_path / "a.ecgf32").read_bytes()
        assert len(raw) == 12 * 7 * 4
        np.testing.assert_array_equal(np.frombuffer(raw, "<f4").reshape(12, 7), rec.signal)

    def test_truncated_payload(self, tmp_path):
        save_record(make_record(), tmp_path / "a")
        p = tmp_path / "a.ecgf32"
        p.write_bytes(p.read_bytes()[:-4])
        with pytest.raises(RecordFormatError, match="size"):
            load_record(tmp_path / "a")

    def test_checksum(self, tmp_path):
        save_record(make_record(), tmp_path / "a")
        p = tmp_path / "a.ecgf32"
        raw = bytearray(p.read_bytes())
        raw[0] ^= 0xFF
        p.write_bytes(bytes(raw))
        with pytest.raises(RecordFormatError, match="checksum"):
            load_record(tmp_path / "a")

    def test_sidecar_fields(self, tmp_path):
        save_record(make_record(), tmp_path / "a")
        meta = json.loads((tmp_path / "a.ecgjson").read_text())
        for key in ("subject_id", "record_id", "fs", "n_samples", "lead_order", "labels", "payload_sha256"):
            assert key in meta
        assert meta["labels"] is None

    def test_csv_ingest(self, tmp_path):
        names = [l.name for l in reversed(CANONICAL)]
        rows = [",".join(names)] + [",".join(str(float(i + j)) for j in range(12)) for i in range(4)]
        rows[2] = rows[2].replace("1.0,", ",", 1)  # first cell of row 1 -> empty -> NaN
        (tmp_path / "x.csv").write_text("\n".join(rows) + "\n")
        rec = csv_to_record(tmp_path / "x.csv", "S", "R", 250)
        # column j held lead (11 - j)
        assert rec.signal[11, 0] == 0.0
        assert np.isnan(rec.signal[11, 1])
        assert rec.signal[0, 3] == 3.0 + 11


class TestManifest:
    @staticmethod
    def pairs(n_subjects, per):
        return [(f"S{s}_R{r}", f"S{s}") for s in range(n_subjects) for r in range(per)]

    def test_counts(self):
        m = split_by_subject(self.pairs(10, 3), 0.2, seed=0)
        assert m.counts == {"train": 24, "test": 6}
        assert len(m.subjects("test")) == 2

    def test_deterministic(self):
        a = split_by_subject(self.pairs(20, 2), 0.3, seed=5)
        b = split_by_subject(self.pairs(20, 2), 0.3, seed=5)
        assert a.to_json() == b.to_json()

    def test_invalid_fraction(self):
        with pytest.raises(ValueError):
            split_by_subject(self.pairs(3, 1), 0.0, 0)
        with pytest.raises(ValueError):
            split_by_subject([], 0.5, 0)

    @given(st.integers(1, 40), st.integers(1, 5), st.floats(0.01, 0.99), st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=100, deadline=None)
    def test_no_subject_leakage(self, n_subj, per, frac, seed):
        rng = np.random.default_rng(seed)
        pairs = [(f"R{i}", f"S{rng.integers(n_subj)}") for i in range(n_subj * per)]
        m = split_by_subject(pairs, frac, seed)
        assert not m.subjects("train") & m.subjects("test")
        assert sum(m.counts.values()) == len(pairs)
        assert m.subjects("test")

    def test_save_load(self, tmp_path):
        m = split_by_subject(self.pairs(5, 2), 0.4, seed=1)
        m.save(tmp_path / "m.json")
        back = DatasetManifest.load(tmp_path / "m.json")
        assert back.to_json() == m.to_json()
        assert back.digest() == m.digest()

    def test_load_split(self, tmp_path):
        recs = [make_record(seed=i) for i in range(4)]
        for i, r in enumerate(recs):
            r.subject_id = f"S{i}"
            save_record(r, tmp_path / f"r{i}")
        m = split_by_subject([(r.record_id, r.subject_id) for r in recs], 0.5, 0,
                             paths=[f"r{i}.ecgjson" for i in range(4)])
        test = load_split(m, tmp_path, "test")
        assert {r.subject_id for r in test} == m.subjects("test")
