"""Lead reordering, NaN imputation, Fourier resampling and per-lead z-scoring."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .leads import CANONICAL, N_LEADS, LeadId

if TYPE_CHECKING:
    from .data import EcgRecord


@dataclass(frozen=True)
class PreprocessConfig:
    target_fs: int = 500
    nan_window: int = 5
    zscore: bool = False
    eps: float = 1e-8

    def __post_init__(self):
        if self.target_fs <= 0:
            raise ValueError("target_fs must be positive")
        if self.nan_window < 1:
            raise ValueError("nan_window must be >= 1")
        if self.eps <= 0:
            raise ValueError("eps must be positive")


def reorder_leads(signal: np.ndarray, stored_order: Sequence) -> np.ndarray:
    """Permute rows so that row i holds the lead with canonical index i."""
    order = [LeadId.parse(l) for l in stored_order]
    if len(order) != N_LEADS or len(set(order)) != N_LEADS:
        raise ValueError(f"stored_order must name each of the 12 leads once, got {order}")
    signal = np.asarray(signal)
    if signal.shape[0] != N_LEADS:
        raise ValueError(f"expected 12 rows, got {signal.shape[0]}")
    out = np.empty_like(signal)
    for row, lead in enumerate(order):
        out[int(lead)] = signal[row]
    return out


def fourier_resample(x: np.ndarray, fs_in: float, fs_out: float) -> np.ndarray:
    """Resample a 1-D series by zero-padding or truncating its spectrum.

    The output length is ``round(N * fs_out / fs_in)``. An even-length
    Nyquist bin is split in half when upsampling and folded back when
    downsampling, so up-then-down is exact for real input.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("fourier_resample needs a 1-D series of length >= 2")
    if fs_in <= 0 or fs_out <= 0:
        raise ValueError("sampling rates must be positive")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite samples; run impute_nan first")
    n_in = x.size
    n_out = int(round(n_in * fs_out / fs_in))
    if n_out == n_in:
        return x.copy()
    if n_out < 1:
        raise ValueError("resampled length would be zero")
    spec = np.fft.rfft(x)
    n = min(n_in, n_out)
    keep = n // 2 + 1
    out = np.zeros(n_out // 2 + 1, dtype=complex)
    out[:keep] = spec[:keep]
    if n % 2 == 0:
        out[n // 2] *= 2.0 if n_out < n_in else 0.5
    return np.fft.irfft(out, n_out) * (n_out / n_in)


def impute_nan(x: np.ndarray, window: int) -> np.ndarray:
    """Fill each NaN with the mean of the non-NaN originals within ``window`` samples.

    Windows with no valid sample fall back to the series mean. Fills never
    read other fills.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise ValueError("impute_nan needs a non-empty 1-D series")
    nan = np.isnan(x)
    if not nan.any():
        return x.copy()
    if nan.all():
        raise ValueError("series is entirely NaN")
    vals = np.where(nan, 0.0, x)
    csum = np.concatenate(([0.0], np.cumsum(vals)))
    ccnt = np.concatenate(([0], np.cumsum(~nan)))
    idx = np.flatnonzero(nan)
    lo = np.maximum(idx - window, 0)
    hi = np.minimum(idx + window, x.size - 1) + 1
    sums = csum[hi] - csum[lo]
    counts = ccnt[hi] - ccnt[lo]
    fallback = vals.sum() / (~nan).sum()
    out = x.copy()
    with np.errstate(invalid="ignore", divide="ignore"):
        out[idx] = np.where(counts > 0, sums / np.maximum(counts, 1), fallback)
    return out


def zscore_per_lead(signal: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    """Standardise every row with its mean and population variance (plus ``eps``)."""
    s = np.asarray(signal, dtype=np.float64)
    centred = s - s.mean(axis=-1, keepdims=True)
    denom = np.sqrt(centred.var(axis=-1, keepdims=True) + eps)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(denom > 0, centred / np.where(denom > 0, denom, 1.0), 0.0)
    # constant rows: mean round-off must not leak through a tiny denominator
    out[np.ptp(s, axis=-1) == 0] = 0.0
    return out


def preprocess_record(record: "EcgRecord", cfg: PreprocessConfig = PreprocessConfig(),
                      trace: list | None = None) -> "EcgRecord":
    """reorder -> impute -> resample -> (optional) z-score.

    ``trace`` (if given) receives the stage names in execution order.
    """

    def mark(stage):
        if trace is not None:
            trace.append(stage)

    sig = reorder_leads(record.signal, record.lead_order).astype(np.float64)
    mark("reorder")
    sig = np.stack([impute_nan(row, cfg.nan_window) for row in sig])
    mark("impute")
    if record.fs != cfg.target_fs:
        sig = np.stack([fourier_resample(row, record.fs, cfg.target_fs) for row in sig])
    mark("resample")
    if cfg.zscore:
        sig = zscore_per_lead(sig, cfg.eps)
        mark("zscore")
    return dataclasses.replace(record, fs=cfg.target_fs, signal=sig.astype(record.signal.dtype),
                               lead_order=CANONICAL)
