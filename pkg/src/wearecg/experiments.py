"""Desk-scale experiment drivers shared by the acceptance suite and ``scripts/``.

Everything here is a thin composition of the public pipeline pieces:
synthetic corpus -> subject split -> VAE training -> metrics / classification.
Trained models can be cached on disk keyed by their full configuration so
several experiments can reuse the same runs.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Vocabulary, split_by_subject
from .diagnoser import (CONFIGURATIONS, ONE_LEAD, THREE_LEAD, classifier_input, classify_configurations,
                        label_matrix, macro_or_nan, pretrain_backbone, train_head)
from .metrics import FeatureEmbedder, embed, fid, report_from_arrays
from .synthgen import DEFAULT_MIX, GenConfig, derive_seed, gen_dataset
from .train import TrainConfig, load_model, reconstruct_batch, save_model, stack_signals, train
from .vae import ArchConfig, MaskSpec, WearEcgVae

_NOISE = 30
_PRETRAIN_CORPUS = 31


@dataclass(frozen=True)
class CorpusConfig:
    n_subjects: int = 400
    records_per_subject: int = 5
    test_fraction: float = 0.1
    duration_s: float = 2.0
    seed: int = 1
    mix: dict = field(default_factory=lambda: dict(DEFAULT_MIX))


@dataclass(frozen=True)
class Corpus:
    x_train: np.ndarray
    x_test: np.ndarray
    y_train: np.ndarray
    y_test: np.ndarray
    test_subjects: frozenset
    train_subjects: frozenset


def build_corpus(cfg: CorpusConfig = CorpusConfig(), vocab: Vocabulary | None = None) -> Corpus:
    """Generate the labelled corpus and split it by subject (records sorted by id within each split)."""
    vocab = vocab or Vocabulary.default()
    recs = gen_dataset(cfg.n_subjects, cfg.records_per_subject, cfg.mix, seed=cfg.seed,
                       cfg=GenConfig(duration_s=cfg.duration_s))
    man = split_by_subject([(r.record_id, r.subject_id) for r in recs], cfg.test_fraction, seed=cfg.seed)
    test_ids = {e.record_id for e in man.split("test")}
    tr = sorted((r for r in recs if r.record_id not in test_ids), key=lambda r: r.record_id)
    te = sorted((r for r in recs if r.record_id in test_ids), key=lambda r: r.record_id)
    return Corpus(stack_signals(tr, np.float64), stack_signals(te, np.float64),
                  label_matrix(tr, vocab), label_matrix(te, vocab),
                  frozenset(r.subject_id for r in te), frozenset(r.subject_id for r in tr))


def _run_key(corpus_cfg: CorpusConfig, mask: MaskSpec, cfg: TrainConfig, arch: ArchConfig) -> str:
    blob = json.dumps({"corpus": dataclasses.asdict(corpus_cfg), "mask": str(mask),
                       "train": dataclasses.asdict(dataclasses.replace(cfg, checkpoint_dir=None)),
                       "arch": dataclasses.asdict(arch)}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def train_or_load(corpus: Corpus, corpus_cfg: CorpusConfig, mask: MaskSpec, cfg: TrainConfig, arch: ArchConfig,
                  cache_dir: str | Path | None = None) -> WearEcgVae:
    """Train a VAE on the corpus train split, reusing a cached final model when one matches."""
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"vae_{_run_key(corpus_cfg, mask, cfg, arch)}"
        if path.with_suffix(".bin").exists():
            return load_model(path)[0]
    res = train(corpus.x_train, mask, dataclasses.replace(cfg, checkpoint_dir=None), arch)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        save_model(path, res.model, {"mask": str(mask), "epochs": len(res.epochs)})
    return res.model


def noise_like(x: np.ndarray, seed: int) -> np.ndarray:
    """White Gaussian noise with each lead's std matched to ``x`` (pooled over records and time)."""
    std = x.std(axis=(0, 2), keepdims=True)
    return np.random.default_rng(derive_seed(seed, _NOISE)).normal(size=x.shape) * std


def einthoven_residual(x: np.ndarray) -> float:
    """Mean over records of max_t |III - (II - I)|."""
    return float(np.abs(x[:, 2] - (x[:, 1] - x[:, 0])).max(axis=-1).mean())


def zero_baseline(x: np.ndarray, mask: MaskSpec) -> np.ndarray:
    """Prediction that passes kept leads through and outputs zero on every generated lead."""
    out = np.zeros_like(x)
    rows = mask.keep_rows()
    out[:, rows] = x[:, rows]
    return out


def reconstruction_summary(model: WearEcgVae, x_test: np.ndarray, mask: MaskSpec, seed: int = 0,
                           embedder: FeatureEmbedder | None = None) -> dict:
    recon = reconstruct_batch(x_test, model, mask, mode="mean")
    rep = report_from_arrays(x_test, recon, mask, embedder, with_fid=False)
    gen = ~mask.keep_rows()
    base_mse = float(np.mean(x_test[:, gen] ** 2))
    baseline = zero_baseline(x_test, mask)
    embedder = embedder or FeatureEmbedder()
    f_real = embed(x_test, embedder)
    fid_recon = fid(f_real, embed(recon, embedder))
    fid_noise = fid(f_real, embed(noise_like(x_test, seed), embedder))
    return {
        "mask": str(mask),
        "mse": rep.overall_mse, "mae": rep.overall_mae, "zero_mse": base_mse,
        "einthoven": einthoven_residual(recon), "zero_einthoven": einthoven_residual(baseline),
        "fid": fid_recon, "noise_fid": fid_noise,
        "per_lead": rep.per_lead,
    }


@dataclass(frozen=True)
class ClassifyConfig:
    pretrain_subjects: int = 400
    pretrain_epochs: int = 5
    pretrain_lr: float = 1e-3
    head_epochs: int = 200
    head_lr: float = 5e-2


def classification_summary(corpus: Corpus, corpus_cfg: CorpusConfig, model: WearEcgVae, seed: int,
                           cfg: ClassifyConfig = ClassifyConfig(), vocab: Vocabulary | None = None,
                           mask: MaskSpec = THREE_LEAD) -> dict:
    """Macro-AUROC of the four input configurations with a pretrained, frozen backbone."""
    vocab = vocab or Vocabulary.default()
    pre_recs = gen_dataset(cfg.pretrain_subjects, corpus_cfg.records_per_subject, corpus_cfg.mix,
                           seed=derive_seed(corpus_cfg.seed, _PRETRAIN_CORPUS, seed),
                           cfg=GenConfig(duration_s=corpus_cfg.duration_s))
    x_pre = stack_signals(pre_recs, np.float64)
    backbone = pretrain_backbone(classifier_input(x_pre), label_matrix(pre_recs, vocab), seed=seed,
                                 epochs=cfg.pretrain_epochs, lr=cfg.pretrain_lr)
    head, _ = train_head(classifier_input(corpus.x_train), corpus.y_train, vocab, backbone,
                         epochs=cfg.head_epochs, lr=cfg.head_lr, seed=seed)
    recon = reconstruct_batch(corpus.x_test, model, mask, mode="mean")
    reports = classify_configurations(head, corpus.x_test, recon, corpus.y_test, vocab, mask, ONE_LEAD)
    return {name: macro_or_nan(reports[name]) for name in CONFIGURATIONS}
