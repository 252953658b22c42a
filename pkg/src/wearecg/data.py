"""Record I/O, label vocabularies and subject-wise dataset manifests.

A record on disk is a pair of files sharing a stem:

``<stem>.ecgjson``
    UTF-8 JSON sidecar with ``subject_id``, ``record_id``, ``fs``,
    ``n_samples``, ``lead_order``, ``labels`` (bit list or null) and
    ``payload_sha256``.
``<stem>.ecgf32``
    Raw little-endian float32 samples, row-major ``leads x samples``.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .leads import CANONICAL, N_LEADS, LeadId
from .preprocess import reorder_leads

SIDECAR_SUFFIX = ".ecgjson"
PAYLOAD_SUFFIX = ".ecgf32"


class RecordFormatError(ValueError):
    pass


class VocabularyMismatchError(ValueError):
    pass


# -- vocabulary -------------------------------------------------------------
def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


@dataclass(frozen=True)
class Vocabulary:
    labels: tuple[str, ...]
    hash: str

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Vocabulary":
        labels = []
        for line in raw.decode("utf-8").splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                labels.append(line)
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate label in vocabulary")
        return cls(tuple(labels), f"{fnv1a64(raw):016x}")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls.from_bytes(Path(path).read_bytes())

    @classmethod
    def default(cls) -> "Vocabulary":
        raw = resources.files("wearecg").joinpath("resources/labels_v1.txt").read_bytes()
        return cls.from_bytes(raw)

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"label {label!r} not in vocabulary") from None

    def encode(self, names: Iterable[str]) -> "LabelVector":
        bits = np.zeros(len(self), dtype=np.uint8)
        for n in names:
            bits[self.index(n)] = 1
        return LabelVector(bits, self.hash)


@dataclass
class LabelVector:
    bits: np.ndarray
    vocabulary_hash: str

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        if self.bits.ndim != 1 or not np.isin(self.bits, (0, 1)).all():
            raise ValueError("label bits must be a 1-D 0/1 vector")

    def names(self, vocab: Vocabulary) -> list[str]:
        self.check(vocab)
        return [vocab.labels[i] for i in np.flatnonzero(self.bits)]

    def check(self, vocab: Vocabulary) -> None:
        if self.vocabulary_hash != vocab.hash or len(self.bits) != len(vocab):
            raise VocabularyMismatchError(
                f"labels bound to vocabulary {self.vocabulary_hash}, got {vocab.hash}")

    def __eq__(self, other) -> bool:
        return (isinstance(other, LabelVector) and self.vocabulary_hash == other.vocabulary_hash
                and np.array_equal(self.bits, other.bits))


# -- records ------------------------------------------------------------------
@dataclass
class EcgRecord:
    subject_id: str
    record_id: str
    fs: int
    signal: np.ndarray
    labels: LabelVector | None = None
    lead_order: tuple[LeadId, ...] = CANONICAL
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.signal = np.asarray(self.signal)
        if self.signal.dtype not in (np.float32, np.float64):
            self.signal = self.signal.astype(np.float64)
        self.lead_order = tuple(LeadId.parse(l) for l in self.lead_order)
        if self.signal.ndim != 2 or self.signal.shape[0] != N_LEADS:
            raise RecordFormatError(f"signal must be 12 x T, got shape {self.signal.shape}")
        if self.signal.shape[1] < 1:
            raise RecordFormatError("signal has no samples")
        if sorted(self.lead_order) != list(CANONICAL):
            raise RecordFormatError(f"lead_order is not a permutation of the 12 leads: {self.lead_order}")
        if int(self.fs) != self.fs or self.fs <= 0:
            raise RecordFormatError(f"fs must be a positive integer, got {self.fs}")
        self.fs = int(self.fs)

    @property
    def n_samples(self) -> int:
        return self.signal.shape[1]

    def canonical(self) -> "EcgRecord":
        if self.lead_order == CANONICAL:
            return self
        return EcgRecord(self.subject_id, self.record_id, self.fs,
                         reorder_leads(self.signal, self.lead_order), self.labels, CANONICAL,
                         dict(self.provenance))


def _record_paths(path: str | Path) -> tuple[Path, Path]:
    path = Path(path)
    stem = path.with_suffix("") if path.suffix in (SIDECAR_SUFFIX, PAYLOAD_SUFFIX) else path
    return Path(f"{stem}{SIDECAR_SUFFIX}"), Path(f"{stem}{PAYLOAD_SUFFIX}")


def save_record(record: EcgRecord, path: str | Path) -> Path:
    """Write ``record`` as a sidecar + payload pair; returns the sidecar path."""
    if record.signal.shape[0] != N_LEADS:
        raise RecordFormatError("only 12-lead signals can be saved")
    sidecar, payload = _record_paths(path)
    raw = np.ascontiguousarray(record.signal, dtype="<f4").tobytes()
    meta = {
        "subject_id": record.subject_id,
        "record_id": record.record_id,
        "fs": record.fs,
        "n_samples": record.n_samples,
        "lead_order": [l.name for l in record.lead_order],
        "labels": None if record.labels is None else [int(b) for b in record.labels.bits],
        "payload_sha256": hashlib.sha256(raw).hexdigest(),
    }
    if record.labels is not None:
        meta["vocabulary_hash"] = record.labels.vocabulary_hash
    if record.provenance:
        meta["provenance"] = record.provenance
    payload.write_bytes(raw)
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return sidecar


def load_record(path: str | Path) -> EcgRecord:
    sidecar, payload = _record_paths(path)
    meta = json.loads(sidecar.read_text(encoding="utf-8"))
    raw = payload.read_bytes()
    n = int(meta["n_samples"])
    if len(raw) != 4 * N_LEADS * n:
        raise RecordFormatError(
            f"payload size mismatch: expected {4 * N_LEADS * n} bytes, found {len(raw)}")
    if hashlib.sha256(raw).hexdigest() != meta["payload_sha256"]:
        raise RecordFormatError("payload checksum mismatch")
    order = tuple(LeadId.parse(name) for name in meta["lead_order"])
    signal = np.frombuffer(raw, dtype="<f4").reshape(N_LEADS, n).astype(np.float32)
    labels = None
    if meta.get("labels") is not None:
        labels = LabelVector(np.asarray(meta["labels"], dtype=np.uint8), meta.get("vocabulary_hash", ""))
    rec = EcgRecord(meta["subject_id"], meta["record_id"], meta["fs"], signal, labels, order,
                    meta.get("provenance", {}))
    return rec.canonical()


def csv_to_record(path: str | Path, subject_id: str, record_id: str, fs: int) -> EcgRecord:
    """Ingest a CSV with one column per lead and a header row of lead names.

    Empty cells and ``nan`` become NaN (to be imputed by preprocessing).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(c) if c.strip() else math.nan for c in row] for row in reader if row]
    order = tuple(LeadId.parse(h) for h in header)
    if len(order) != N_LEADS:
        raise RecordFormatError(f"expected 12 lead columns, found {len(order)}")
    signal = np.asarray(rows, dtype=np.float64).T
    return EcgRecord(subject_id, record_id, fs, signal, None, order).canonical()


# -- manifests ------------------------------------------------------------------
@dataclass(frozen=True)
class ManifestEntry:
    path: str
    subject_id: str
    split: str
    record_id: str = ""


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    seed: int
    test_fraction: float

    @property
    def counts(self) -> dict[str, int]:
        out = {"train": 0, "test": 0}
        for e in self.entries:
            out[e.split] += 1
        return out

    def split(self, tag: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == tag]

    def subjects(self, tag: str) -> set[str]:
        return {e.subject_id for e in self.entries if e.split == tag}

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "test_fraction": self.test_fraction,
            "counts": self.counts,
            "entries": [{"path": e.path, "record_id": e.record_id, "subject_id": e.subject_id,
                         "split": e.split} for e in self.entries],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        d = json.loads(Path(path).read_text())
        entries = [ManifestEntry(e["path"], e["subject_id"], e["split"], e.get("record_id", ""))
                   for e in d["entries"]]
        return cls(entries, int(d["seed"]), float(d["test_fraction"]))

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()


def split_by_subject(records: Sequence[tuple[str, str]], test_fraction: float, seed: int,
                     paths: Sequence[str] | None = None) -> DatasetManifest:
    """Partition ``(record_id, subject_id)`` pairs into train/test by subject.

    Subjects (sorted, then shuffled with ``seed``) are assigned to the test
    split until ``ceil(test_fraction * n_subjects)`` have been taken.
    """
    if not records:
        raise ValueError("cannot split an empty record list")
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    subjects = sorted({s for _, s in records})
    n_test = math.ceil(test_fraction * len(subjects))
    order = np.random.default_rng(seed).permutation(len(subjects))
    test = {subjects[i] for i in order[:n_test]}
    paths = list(paths) if paths is not None else [rid for rid, _ in records]
    entries = [ManifestEntry(p, sid, "test" if sid in test else "train", rid)
               for (rid, sid), p in zip(records, paths)]
    return DatasetManifest(entries, seed, test_fraction)


def load_split(manifest: DatasetManifest, root: str | Path, tag: str) -> list[EcgRecord]:
    root = Path(root)
    return [load_record(root / e.path) for e in manifest.split(tag)]
