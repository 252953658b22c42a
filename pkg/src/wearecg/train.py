"""ELBO training loop, per-epoch checkpoints and inference-time reconstruction."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .data import EcgRecord
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.optim import AdamW, LrSchedule, onecycle_lr
from .nn.tensor import no_grad
from .synthgen import derive_seed
from .vae import ArchConfig, MaskSpec, WearEcgVae, mask_leads, reparameterize, total_loss

TARGET_FS = 500

# derive_seed stream tags
_SHUFFLE, _EPS, _SAMPLE = 10, 11, 12


class TrainingDivergedError(FloatingPointError):
    def __init__(self, step: int, value: float):
        super().__init__(f"non-finite loss {value} at step {step}")
        self.step = step


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    epochs: int = 10
    lr_initial: float = 1e-5
    lr_max: float = 5e-5
    pct_warmup: float = 0.2
    beta_kl: float = 1e-4
    weight_decay: float = 0.01
    seed: int = 0
    checkpoint_dir: str | None = None
    patience: int | None = None  # early stopping on validation recon; None disables

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.beta_kl < 0:
            raise ValueError("beta_kl must be >= 0")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be >= 1 when set")

    def schedule(self, n_records: int) -> LrSchedule:
        total = max(self.epochs * self.steps_per_epoch(n_records), 1)
        return LrSchedule(total, lr_max=self.lr_max, pct_warmup=self.pct_warmup,
                          lr_initial=self.lr_initial)

    def steps_per_epoch(self, n_records: int) -> int:
        return math.ceil(n_records / self.batch_size)

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    model: WearEcgVae
    steps: list[dict] = field(default_factory=list)
    epochs: list[dict] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)
    stopped_early: bool = False


def stack_signals(records: Sequence[EcgRecord], dtype=np.float32) -> np.ndarray:
    """Stack preprocessed records into a ``N x 12 x T`` array."""
    if not records:
        raise ValueError("no records")
    for r in records:
        if r.fs != TARGET_FS:
            raise ValueError(f"record {r.record_id} has fs={r.fs}; preprocess to {TARGET_FS} Hz first")
    lengths = {r.n_samples for r in records}
    if len(lengths) != 1:
        raise ValueError(f"records differ in length: {sorted(lengths)}")
    return np.stack([r.canonical().signal for r in records]).astype(dtype)


def _decay_mask(model: WearEcgVae) -> list[bool]:
    # no decay on biases and norm affines
    return [p.ndim > 1 for p in model.parameters()]


def _opt_state(opt: AdamW) -> dict:
    out = {}
    for i, (m, v) in enumerate(zip(opt.state.m, opt.state.v)):
        out[f"opt.m.{i:04d}"] = m
        out[f"opt.v.{i:04d}"] = v
    return out


def _checkpoint_meta(model, cfg, mask, epoch, step, manifest_digest, summary) -> dict:
    # the output location is left out so identical runs in different directories match bytewise
    hyper = {k: v for k, v in cfg.to_json().items() if k != "checkpoint_dir"}
    return {
        "kind": "wearecg-vae",
        "arch": model.arch.to_json(),
        "train_config": hyper,
        "mask": str(mask),
        "epoch": epoch,
        "step": step,
        "manifest_digest": manifest_digest,
        "epoch_summary": summary,
    }


def save_model(path: str | Path, model: WearEcgVae, meta: dict | None = None,
               extra: dict | None = None) -> Path:
    state = model.state_dict()
    state.update(extra or {})
    meta = dict(meta or {})
    meta.setdefault("kind", "wearecg-vae")
    meta.setdefault("arch", model.arch.to_json())
    return save_checkpoint(path, state, meta)


def load_model(path: str | Path, dtype=np.float32) -> tuple[WearEcgVae, dict, dict]:
    """Return ``(model, meta, optimizer_arrays)`` from a checkpoint."""
    state, meta = load_checkpoint(path)
    if meta.get("kind") != "wearecg-vae":
        raise ValueError(f"{path} is not a WearECG model checkpoint")
    arch = meta["arch"]
    arch = ArchConfig(**{**arch, "channel_plan": tuple(arch["channel_plan"])})
    model = WearEcgVae(arch, seed=0, dtype=dtype)
    opt_arrays = {k: state.pop(k) for k in list(state) if k.startswith("opt.")}
    model.load_state_dict(state)
    return model, meta, opt_arrays


def train(data: np.ndarray, mask: MaskSpec = MaskSpec(), cfg: TrainConfig = TrainConfig(),
          arch: ArchConfig = ArchConfig(), *, dtype=np.float32, model: WearEcgVae | None = None,
          val_data: np.ndarray | None = None, manifest_digest: str = "",
          resume_from: str | Path | None = None,
          on_step: Callable[[dict], None] | None = None) -> TrainResult:
    """Train a VAE on ``N x 12 x T`` preprocessed signals.

    Targets are the full 12-lead signals; only the encoder input is masked.
    With ``cfg.checkpoint_dir`` set, each epoch writes ``epoch_XXX.json/.bin``
    (weights plus optimizer moments) and appends to ``train_log.jsonl``.
    """
    data = np.asarray(data, dtype=dtype)
    if data.ndim != 3 or data.shape[1] != 12:
        raise ValueError(f"expected N x 12 x T training data, got {data.shape}")
    n = data.shape[0]
    if n == 0:
        raise ValueError("empty training set")
    if not np.all(np.isfinite(data)):
        raise ValueError("training data contains non-finite values")
    masked = mask_leads(data, mask)

    start_epoch, step = 0, 0
    opt_arrays: dict = {}
    if resume_from is not None:
        model, meta, opt_arrays = load_model(resume_from, dtype=dtype)
        start_epoch, step = int(meta["epoch"]), int(meta["step"])
        arch = model.arch
    elif model is None:
        model = WearEcgVae(arch, seed=cfg.seed, dtype=dtype)
    if data.shape[2] % model.arch.downsample_factor:
        raise ValueError(f"T={data.shape[2]} not divisible by {model.arch.downsample_factor}")

    params = model.parameters()
    opt = AdamW(params, lr=cfg.lr_initial, weight_decay=cfg.weight_decay, decay_mask=_decay_mask(model))
    if opt_arrays:
        opt.state.m = [opt_arrays[f"opt.m.{i:04d}"].astype(dtype) for i in range(len(params))]
        opt.state.v = [opt_arrays[f"opt.v.{i:04d}"].astype(dtype) for i in range(len(params))]
        opt.state.step = step

    sched = cfg.schedule(n)
    spe = cfg.steps_per_epoch(n)
    ckpt_dir = Path(cfg.checkpoint_dir) if cfg.checkpoint_dir else None
    log_fh = None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        log_fh = open(ckpt_dir / "train_log.jsonl", "a" if resume_from else "w", encoding="utf-8")

    result = TrainResult(model)
    best, bad_epochs = math.inf, 0

    def emit(obj: dict) -> None:
        if log_fh is not None:
            log_fh.write(json.dumps(obj, sort_keys=True) + "\n")
            log_fh.flush()

    try:
        for epoch in range(start_epoch, cfg.epochs):
            order = np.random.default_rng(derive_seed(cfg.seed, _SHUFFLE, epoch)).permutation(n)
            sums = np.zeros(3)
            for b in range(spe):
                idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
                lr = onecycle_lr(min(step, sched.total_steps), sched)
                opt.lr = lr
                q = model.encode(masked[idx])
                z = reparameterize(q, np.random.default_rng(derive_seed(cfg.seed, _EPS, step)))
                parts = total_loss(model.decode(z), data[idx], q, cfg.beta_kl)
                total = float(parts.total.data)
                rec = {"kind": "step", "epoch": epoch, "step": step, "lr": lr,
                       "recon": float(parts.recon.data), "kl": float(parts.kl.data), "total": total}
                if not math.isfinite(total):
                    emit({**rec, "error": "non-finite loss"})
                    raise TrainingDivergedError(step, total)
                opt.zero_grad()
                parts.total.backward()
                opt.step()
                step += 1
                sums += (rec["recon"], rec["kl"], total)
                result.steps.append(rec)
                emit(rec)
                if on_step is not None:
                    on_step(rec)
            summary = {"kind": "epoch", "epoch": epoch, "steps": spe,
                       "recon": sums[0] / spe, "kl": sums[1] / spe, "total": sums[2] / spe}
            if val_data is not None:
                summary["val_recon"] = validation_recon(model, val_data, mask, cfg.batch_size)
            result.epochs.append(summary)
            emit(summary)
            if ckpt_dir is not None:
                meta = _checkpoint_meta(model, cfg, mask, epoch + 1, step, manifest_digest, summary)
                result.checkpoints.append(
                    save_model(ckpt_dir / f"epoch_{epoch + 1:03d}", model, meta, _opt_state(opt)))
            if cfg.patience is not None and val_data is not None:
                if summary["val_recon"] < best:
                    best, bad_epochs = summary["val_recon"], 0
                else:
                    bad_epochs += 1
                    if bad_epochs >= cfg.patience:
                        result.stopped_early = True
                        break
    finally:
        if log_fh is not None:
            log_fh.close()
    return result


def validation_recon(model: WearEcgVae, data: np.ndarray, mask: MaskSpec, batch_size: int = 16) -> float:
    rec = reconstruct_batch(data, model, mask, mode="mean", batch_size=batch_size)
    return float(np.mean((rec - np.asarray(data, dtype=np.float64)) ** 2))


def reconstruct_batch(signals: np.ndarray, model: WearEcgVae, mask: MaskSpec = MaskSpec(),
                      mode: str = "mean", seed: int = 0, batch_size: int = 16) -> np.ndarray:
    """Reconstruct ``N x 12 x T`` signals; returns float64."""
    if mode not in ("mean", "sample"):
        raise ValueError(f"mode must be 'mean' or 'sample', got {mode!r}")
    signals = np.asarray(signals)
    out = np.empty(signals.shape, dtype=np.float64)
    with no_grad():
        for start in range(0, signals.shape[0], batch_size):
            chunk = mask_leads(signals[start:start + batch_size].astype(model.dtype), mask)
            q = model.encode(chunk)
            if mode == "mean":
                z = q.mu
            else:
                z = reparameterize(q, np.random.default_rng(derive_seed(seed, _SAMPLE, start)))
            out[start:start + len(chunk)] = model.decode(z).data
    return out


def reconstruct(record: EcgRecord, model: WearEcgVae, mask: MaskSpec = MaskSpec(),
                mode: str = "mean", seed: int = 0) -> EcgRecord:
    """Reconstruct all 12 leads of a preprocessed record from its kept leads."""
    if record.fs != TARGET_FS:
        raise ValueError(f"record {record.record_id} has fs={record.fs}; preprocess to {TARGET_FS} Hz first")
    x = record.canonical().signal[None]
    out = reconstruct_batch(x, model, mask, mode, seed, batch_size=1)[0]
    prov = {"model_hash": model.digest(), "mask": str(mask), "mode": mode}
    if mode == "sample":
        prov["seed"] = seed
    return EcgRecord(record.subject_id, record.record_id, record.fs, out, record.labels,
                     provenance={**record.provenance, "reconstruction": prov})
