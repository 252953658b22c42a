"""Downstream diagnostic check: frozen conv backbone, linear multi-label head, AUROC."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .data import EcgRecord, LabelVector, Vocabulary, VocabularyMismatchError
from .leads import LeadId
from .metrics import EMBED_DIM, FeatureEmbedder
from .nn.modules import Linear, Module
from .nn.optim import Adam
from .nn.tensor import Tensor, _sigmoid, make_node, no_grad
from .preprocess import zscore_per_lead
from .synthgen import derive_seed
from .vae import MaskSpec, mask_leads

_HEAD_INIT, _HEAD_SHUFFLE, _PRETRAIN = 20, 21, 22


# -- loss -------------------------------------------------------------------
def bce_multilabel(logits: Tensor, targets) -> Tensor:
    """Mean binary cross-entropy over all ``B x L`` entries, log-sum-exp stable.

    Per element: ``max(l, 0) - l * t + log(1 + exp(-|l|))``.
    """
    t = np.asarray(targets, dtype=logits.dtype)
    if t.shape != logits.shape:
        raise ValueError(f"targets shape {t.shape} != logits shape {logits.shape}")
    if not np.isin(t, (0, 1)).all():
        raise ValueError("targets must be 0/1")
    l = logits.data
    per = np.maximum(l, 0) - l * t + np.log1p(np.exp(-np.abs(l)))
    n = l.size
    return make_node(np.asarray(per.mean()), (logits,), lambda g: (g * (_sigmoid(l) - t) / n,))


# -- backbone / head ----------------------------------------------------------
def classifier_input(signals: np.ndarray, mask: MaskSpec | None = None) -> np.ndarray:
    """Optional zero-masking followed by the per-lead z-score the classifier expects."""
    x = np.asarray(signals, dtype=np.float64)
    if mask is not None:
        x = mask_leads(x, mask)
    return zscore_per_lead(x)


def backbone_features(backbone: FeatureEmbedder, signals: np.ndarray, batch_size: int = 64) -> np.ndarray:
    x = np.asarray(signals)
    out = np.empty((x.shape[0], EMBED_DIM))
    with no_grad():
        for s in range(0, x.shape[0], batch_size):
            out[s:s + batch_size] = backbone(Tensor(x[s:s + batch_size].astype(backbone.dtype))).data
    return out


class ClassifierHead(Module):
    """``sigmoid(W^T standardise(f) + b)`` on top of a frozen backbone.

    ``feat_mean``/``feat_std`` are fixed at training time from the training
    features; they are buffers, not parameters.
    """

    def __init__(self, n_labels: int, backbone: FeatureEmbedder, vocabulary_hash: str, seed: int = 0):
        if any(not p.frozen for p in backbone.parameters()):
            raise ValueError("backbone must be frozen before attaching a head")
        self.linear = Linear(EMBED_DIM, n_labels, rng=np.random.default_rng(derive_seed(seed, _HEAD_INIT)),
                             dtype=np.float64)
        self._backbone = backbone
        self.vocabulary_hash = vocabulary_hash
        self.feat_mean = np.zeros(EMBED_DIM)
        self.feat_std = np.ones(EMBED_DIM)

    @property
    def backbone(self) -> FeatureEmbedder:
        return self._backbone

    def logits_from_features(self, feats: np.ndarray) -> Tensor:
        return self.linear(Tensor((feats - self.feat_mean) / self.feat_std))

    def predict_proba(self, signals: np.ndarray, mask: MaskSpec | None = None) -> np.ndarray:
        feats = backbone_features(self.backbone, classifier_input(signals, mask))
        with no_grad():
            return _sigmoid(self.logits_from_features(feats).data)


@dataclass
class HeadTrainLog:
    losses: list[float] = field(default_factory=list)


def label_matrix(records: Sequence[EcgRecord], vocab: Vocabulary) -> np.ndarray:
    rows = []
    for r in records:
        if r.labels is None:
            raise ValueError(f"record {r.record_id} has no labels")
        r.labels.check(vocab)
        rows.append(r.labels.bits)
    return np.stack(rows).astype(np.float64)


def train_head(signals: np.ndarray, labels: np.ndarray | Sequence[LabelVector], vocab: Vocabulary,
               backbone: FeatureEmbedder, epochs: int = 200, lr: float = 5e-2, seed: int = 0,
               batch_size: int | None = None, features: np.ndarray | None = None
               ) -> tuple[ClassifierHead, HeadTrainLog]:
    """Fit a linear head with Adam on cached backbone features.

    ``signals`` must already be z-scored per lead (see :func:`classifier_input`);
    pass ``features`` to reuse a cached backbone pass. ``batch_size=None``
    means full-batch steps.
    """
    if len(labels) and isinstance(labels[0], LabelVector):
        for lv in labels:
            lv.check(vocab)
        y = np.stack([lv.bits for lv in labels]).astype(np.float64)
    else:
        y = np.asarray(labels, dtype=np.float64)
    if y.ndim != 2 or y.shape[1] != len(vocab):
        raise ValueError(f"label matrix must be N x {len(vocab)}, got {y.shape}")
    feats = backbone_features(backbone, signals) if features is None else np.asarray(features, np.float64)
    if feats.shape[0] != y.shape[0]:
        raise ValueError("features and labels differ in length")
    head = ClassifierHead(len(vocab), backbone, vocab.hash, seed)
    head.feat_mean = feats.mean(axis=0)
    head.feat_std = feats.std(axis=0) + 1e-6
    opt = Adam(head.parameters(), lr=lr)
    log = HeadTrainLog()
    n = feats.shape[0]
    bs = n if batch_size is None else batch_size
    for epoch in range(epochs):
        order = np.random.default_rng(derive_seed(seed, _HEAD_SHUFFLE, epoch)).permutation(n)
        total = 0.0
        for s in range(0, n, bs):
            idx = order[s:s + bs]
            loss = bce_multilabel(head.logits_from_features(feats[idx]), y[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.data) * len(idx)
        log.losses.append(total / n)
    return head, log


def pretrain_backbone(signals: np.ndarray, labels: np.ndarray, seed: int = 0, epochs: int = 5,
                      lr: float = 1e-3, batch_size: int = 32) -> FeatureEmbedder:
    """Supervised pretraining of the conv backbone on a labelled corpus, then freeze it.

    ``signals`` must be z-scored per lead. A throwaway linear head is trained
    jointly and discarded.
    """
    y = np.asarray(labels, dtype=np.float64)
    backbone = FeatureEmbedder(seed=derive_seed(seed, _PRETRAIN), dtype=np.float32, frozen=False)
    tmp = Linear(EMBED_DIM, y.shape[1], rng=np.random.default_rng(derive_seed(seed, _PRETRAIN, 1)),
                 dtype=np.float32)
    params = backbone.parameters() + tmp.parameters()
    opt = Adam(params, lr=lr)
    x = np.asarray(signals, dtype=np.float32)
    n = x.shape[0]
    for epoch in range(epochs):
        order = np.random.default_rng(derive_seed(seed, _PRETRAIN, 2, epoch)).permutation(n)
        for s in range(0, n, batch_size):
            idx = order[s:s + batch_size]
            loss = bce_multilabel(tmp(backbone(Tensor(x[idx]))), y[idx].astype(np.float32))
            opt.zero_grad()
            loss.backward()
            opt.step()
    return backbone.freeze()


# -- evaluation ---------------------------------------------------------------
def _check_binary(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    return s, y.astype(bool)


def _average_ranks(s: np.ndarray) -> np.ndarray:
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    # boundaries of tie runs
    starts = np.flatnonzero(np.r_[True, sorted_s[1:] != sorted_s[:-1]])
    ends = np.r_[starts[1:], len(s)]
    ranks_sorted = np.repeat((starts + ends + 1) / 2.0, ends - starts)
    ranks = np.empty(len(s))
    ranks[order] = ranks_sorted
    return ranks


def auroc(scores, labels) -> float | None:
    """Exact Mann-Whitney AUROC (ties count one half); None if only one class is present."""
    s, y = _check_binary(scores, labels)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = _average_ranks(s)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def optimal_threshold(scores, labels) -> tuple[float, float, float]:
    """Youden-optimal ``(threshold, sensitivity, specificity)``; positive means ``score >= threshold``.

    Candidates are the smallest score (everything positive) and the midpoints
    between consecutive distinct scores. Ties in J go to the larger threshold.
    """
    s, y = _check_binary(scores, labels)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("optimal_threshold needs both classes")
    uniq = np.unique(s)
    cands = np.r_[uniq[0], (uniq[1:] + uniq[:-1]) / 2.0]
    pos_sorted = np.sort(s[y])
    neg_sorted = np.sort(s[~y])
    tp = n_pos - np.searchsorted(pos_sorted, cands, side="left")
    fp = n_neg - np.searchsorted(neg_sorted, cands, side="left")
    sens = tp / n_pos
    spec = 1.0 - fp / n_neg
    j = sens + spec - 1.0
    best = np.flatnonzero(j >= j.max() - 1e-12)[-1]
    return float(cands[best]), float(sens[best]), float(spec[best])


@dataclass
class EvalPerLabel:
    auroc: float | None
    sensitivity: float | None
    specificity: float | None
    threshold: float | None
    n_positive: int
    n: int


@dataclass
class LabelReport:
    per_label: dict[str, EvalPerLabel]
    macro_auroc: float | None
    excluded: list[str]
    configuration: str = ""

    def to_json(self) -> dict:
        return {"configuration": self.configuration, "macro_auroc": self.macro_auroc,
                "excluded": self.excluded,
                "per_label": {k: asdict(v) for k, v in self.per_label.items()}}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"


def evaluate_labels(scores: np.ndarray, labels: np.ndarray, vocab: Vocabulary,
                    configuration: str = "") -> LabelReport:
    """Per-label AUROC / Youden operating point, plus macro AUROC over labels with both classes."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.shape[1] != len(vocab):
        raise ValueError("scores/labels must both be N x n_labels")
    per, aucs, excluded = {}, [], []
    for i, name in enumerate(vocab.labels):
        y = labels[:, i]
        a = auroc(scores[:, i], y)
        if a is None:
            excluded.append(name)
            per[name] = EvalPerLabel(None, None, None, None, int(y.sum()), len(y))
            continue
        thr, se, sp = optimal_threshold(scores[:, i], y)
        per[name] = EvalPerLabel(a, se, sp, thr, int(y.sum()), len(y))
        aucs.append(a)
    if excluded:
        warnings.warn(f"labels with a single class in the test set excluded from macro AUROC: {excluded}")
    macro = float(np.mean(aucs)) if aucs else None
    return LabelReport(per, macro, excluded, configuration)


# -- configurations -------------------------------------------------------------
ONE_LEAD = MaskSpec((LeadId.I,))
THREE_LEAD = MaskSpec()

CONFIGURATIONS = ("reconstructed_12", "original_12", "masked_3", "masked_1")


def classify_configurations(head: ClassifierHead, original: np.ndarray, reconstructed: np.ndarray | None,
                            labels: np.ndarray, vocab: Vocabulary,
                            three_lead: MaskSpec = THREE_LEAD, one_lead: MaskSpec = ONE_LEAD
                            ) -> dict[str, LabelReport]:
    """Score the same test set under the four input configurations."""
    if head.vocabulary_hash != vocab.hash:
        raise VocabularyMismatchError(f"head trained on vocabulary {head.vocabulary_hash}, got {vocab.hash}")
    inputs = {"original_12": (original, None), "masked_3": (original, three_lead),
              "masked_1": (original, one_lead)}
    if reconstructed is not None:
        inputs = {"reconstructed_12": (reconstructed, None), **inputs}
    out = {}
    for name, (sig, mask) in inputs.items():
        out[name] = evaluate_labels(head.predict_proba(sig, mask), labels, vocab, name)
    return out


def render_table(reports: dict[str, LabelReport], vocab: Vocabulary) -> str:
    """Aligned Disease x configuration AUROC table with a macro row."""
    names = list(reports)
    width = max(12, *(len(n) + 2 for n in names))
    lines = [f"{'Disease':<18}" + "".join(f"{n:>{width}}" for n in names)]

    def fmt(v):
        return f"{v:>{width}.4f}" if v is not None else f"{'-':>{width}}"

    for label in vocab.labels:
        lines.append(f"{label:<18}" + "".join(fmt(reports[n].per_label[label].auroc) for n in names))
    lines.append(f"{'Macro-AUC':<18}" + "".join(fmt(reports[n].macro_auroc) for n in names))
    return "\n".join(lines) + "\n"


def macro_or_nan(report: LabelReport) -> float:
    return math.nan if report.macro_auroc is None else report.macro_auroc
