"""Signal-level evaluation: MAE, MSE and a random-feature Frechet distance.

FID here uses a frozen, randomly initialised convolutional embedder with a
fixed seed. Values are comparable between runs of this package only.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .data import EcgRecord
from .leads import N_LEADS, LeadId
from .nn import functional as F
from .nn.modules import Conv1d, Linear, Module
from .nn.tensor import Tensor, no_grad
from .vae import MaskSpec

EMBEDDER_SEED = 20240917
EMBEDDER_VERSION = "rfe-v1"
EMBED_DIM = 64
FID_REG = 1e-6


def _pair(r, g) -> tuple[np.ndarray, np.ndarray]:
    r = np.asarray(r, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if r.shape != g.shape:
        raise ValueError(f"shape mismatch {r.shape} vs {g.shape}")
    return r, g


def mae(r, g) -> float:
    r, g = _pair(r, g)
    return float(np.mean(np.abs(r - g)))


def mse(r, g) -> float:
    r, g = _pair(r, g)
    return float(np.mean((r - g) ** 2))


class FeatureEmbedder(Module):
    """Frozen random conv encoder: 4 stride-2 stages 12->32->64->128->256, SiLU, mean pool, 64-d."""

    channels = (32, 64, 128, 256)

    def __init__(self, seed: int = EMBEDDER_SEED, kernel: int = 5, dtype=np.float32, frozen: bool = True):
        rng = np.random.default_rng(seed)
        self.seed = seed
        self.version = EMBEDDER_VERSION
        self.convs = []
        prev = N_LEADS
        for c in self.channels:
            self.convs.append(Conv1d(prev, c, kernel, stride=2, rng=rng, dtype=dtype))
            prev = c
        self.proj = Linear(prev, EMBED_DIM, rng=rng, dtype=dtype)
        if frozen:
            self.freeze()

    @property
    def dtype(self):
        return self.proj.weight.dtype

    def forward(self, x: Tensor) -> Tensor:
        h = x
        for conv in self.convs:
            h = F.silu(conv(h))
        return self.proj(F.global_avg_pool(h))


def embed(signals, embedder: FeatureEmbedder | None = None, batch_size: int = 64) -> np.ndarray:
    """Map ``N x 12 x T`` signals (or a list of 12 x T) to an ``N x 64`` matrix."""
    embedder = embedder or FeatureEmbedder()
    x = np.asarray(signals)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[1] != N_LEADS:
        raise ValueError(f"expected 12-lead signals, got shape {x.shape}")
    out = np.empty((x.shape[0], EMBED_DIM))
    with no_grad():
        for s in range(0, x.shape[0], batch_size):
            out[s:s + batch_size] = embedder(Tensor(x[s:s + batch_size].astype(embedder.dtype))).data
    return out


def _sqrtm_psd(a: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((a + a.T) / 2)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def frechet_distance(mu1: np.ndarray, cov1: np.ndarray, mu2: np.ndarray, cov2: np.ndarray) -> float:
    """Frechet distance between two Gaussians.

    The cross term uses ``S = C1^{1/2} C2 C1^{1/2}`` (symmetric, same trace of
    square root as ``C1 C2``) with negative eigenvalues clamped to zero.
    """
    mu1, mu2 = np.atleast_1d(mu1).astype(np.float64), np.atleast_1d(mu2).astype(np.float64)
    cov1, cov2 = np.atleast_2d(cov1).astype(np.float64), np.atleast_2d(cov2).astype(np.float64)
    root1 = _sqrtm_psd(cov1)
    s = root1 @ cov2 @ root1
    eig = np.linalg.eigvalsh((s + s.T) / 2)
    tr_cross = float(np.sum(np.sqrt(np.clip(eig, 0.0, None))))
    d = mu1 - mu2
    val = float(d @ d + np.trace(cov1) + np.trace(cov2) - 2.0 * tr_cross)
    return max(val, 0.0)


def fid(feat_r, feat_g, reg: float = FID_REG) -> float:
    feat_r = np.atleast_2d(np.asarray(feat_r, dtype=np.float64))
    feat_g = np.atleast_2d(np.asarray(feat_g, dtype=np.float64))
    if feat_r.shape[0] < 2 or feat_g.shape[0] < 2:
        raise ValueError("fid needs at least 2 samples per side")
    if feat_r.shape[1] != feat_g.shape[1]:
        raise ValueError("feature dimensions differ")
    eye = reg * np.eye(feat_r.shape[1])
    c_r = np.cov(feat_r, rowvar=False, ddof=1).reshape(feat_r.shape[1], -1) + eye
    c_g = np.cov(feat_g, rowvar=False, ddof=1).reshape(feat_g.shape[1], -1) + eye
    return frechet_distance(feat_r.mean(0), c_r, feat_g.mean(0), c_g)


@dataclass
class MetricReport:
    per_lead: dict[str, dict[str, float]]
    overall_mse: float
    overall_mae: float
    n_records: int
    mask: str
    fid: float | None = None
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "per_lead": self.per_lead, "overall_mse": self.overall_mse, "overall_mae": self.overall_mae,
            "fid": self.fid, "n_records": self.n_records, "mask": self.mask, "notes": self.notes,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, d: dict) -> "MetricReport":
        return cls(d["per_lead"], d["overall_mse"], d["overall_mae"], d["n_records"], d["mask"],
                   d.get("fid"), list(d.get("notes", [])))

    def to_text(self) -> str:
        lines = [f"Input leads: {self.mask}   records: {self.n_records}",
                 f"{'Lead':<8}{'MSE':>12}{'MAE':>12}"]
        for name in sorted(self.per_lead, key=lambda n: int(LeadId.parse(n))):
            m = self.per_lead[name]
            lines.append(f"{name:<8}{m['mse']:>12.5f}{m['mae']:>12.5f}")
        lines.append(f"{'Overall':<8}{self.overall_mse:>12.5f}{self.overall_mae:>12.5f}")
        if self.fid is not None:
            lines.append(f"FID ({EMBEDDER_VERSION}, random-feature): {self.fid:.4f}")
        lines.extend(f"note: {n}" for n in self.notes)
        return "\n".join(lines) + "\n"


def report_from_arrays(real: np.ndarray, recon: np.ndarray, mask: MaskSpec,
                       embedder: FeatureEmbedder | None = None, with_fid: bool = True) -> MetricReport:
    """Metrics over the leads not kept by ``mask``; FID over the full 12 leads."""
    real, recon = _pair(real, recon)
    if real.ndim != 3 or real.shape[0] == 0:
        raise ValueError("expected a non-empty N x 12 x T batch")
    per_lead = {}
    for lead in mask.generated_leads():
        r, g = recon[:, int(lead)], real[:, int(lead)]
        per_lead[lead.name] = {"mse": mse(r, g), "mae": mae(r, g)}
    rows = [int(l) for l in mask.generated_leads()]
    overall_mse = mse(recon[:, rows], real[:, rows])
    overall_mae = mae(recon[:, rows], real[:, rows])
    fid_val = None
    if with_fid and real.shape[0] >= 2:
        embedder = embedder or FeatureEmbedder()
        fid_val = fid(embed(real, embedder), embed(recon, embedder))
    notes = [f"FID uses a frozen random-feature embedder ({EMBEDDER_VERSION}, seed {EMBEDDER_SEED}); "
             "values are only comparable within this package"]
    return MetricReport(per_lead, overall_mse, overall_mae, real.shape[0], str(mask), fid_val, notes)


Reconstructor = Callable[[np.ndarray, MaskSpec], np.ndarray]


def evaluate(model, records: Sequence[EcgRecord], mask: MaskSpec = MaskSpec(),
             embedder: FeatureEmbedder | None = None, with_fid: bool = True) -> MetricReport:
    """Reconstruct each test record (posterior mean) and score it.

    ``model`` is a :class:`~wearecg.vae.WearEcgVae` or any callable mapping
    ``(N x 12 x T signals, mask)`` to reconstructions.
    """
    if not records:
        raise ValueError("empty test split")
    from .train import reconstruct_batch, stack_signals

    ordered = sorted(records, key=lambda r: r.record_id)
    real = stack_signals(ordered, dtype=np.float64)
    if callable(model) and not hasattr(model, "encode"):
        recon = np.asarray(model(real, mask), dtype=np.float64)
    else:
        recon = reconstruct_batch(real, model, mask, mode="mean")
    return report_from_arrays(real, recon, mask, embedder, with_fid)

