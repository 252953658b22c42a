"""Synthetic 12-lead ECGs from a rotating cardiac dipole.

Each spatial axis of the dipole is a sum of Gaussian bumps on the cardiac
phase circle (one bump per P, Q, R, S, T wave). Leads I, II and V1-V6 are
projections of the dipole; III, aVR, aVL and aVF follow from the
Einthoven/Goldberger identities, so the limb-lead algebra is exact.

Pathologies are injected on top: rate changes (TACHY/BRADY), a frontal-plane
axis rotation (AXIS_DEV) and regional ST-segment offsets (MI_*).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping

import numpy as np

from .data import EcgRecord, Vocabulary
from .leads import CANONICAL, LeadId

WAVES = ("P", "Q", "R", "S", "T")
MASK64 = 0xFFFFFFFFFFFFFFFF


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(seed: int, *keys: int) -> int:
    h = splitmix64(seed & MASK64)
    for k in keys:
        h = splitmix64(h ^ (k & MASK64))
    return h


def rotation_z(degrees: float) -> np.ndarray:
    a = np.deg2rad(degrees)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


# rows: waves P..T, columns: axes x (leftward), y (inferior), z (anterior)
_AMP = np.array([
    [0.10, 0.12, 0.04],
    [-0.08, -0.04, 0.18],
    [1.00, 0.80, -0.45],
    [-0.22, -0.12, -0.25],
    [0.22, 0.20, 0.12],
])
_THETA = np.array([
    [-1.22, -1.20, -1.25],
    [-0.26, -0.24, -0.30],
    [0.00, 0.02, 0.05],
    [0.26, 0.24, 0.20],
    [1.75, 1.78, 1.70],
])
_WIDTH = np.array([
    [0.25, 0.25, 0.25],
    [0.10, 0.10, 0.10],
    [0.10, 0.11, 0.12],
    [0.10, 0.10, 0.10],
    [0.40, 0.40, 0.42],
])


@dataclass(frozen=True)
class DipoleParams:
    amplitude: np.ndarray = field(default_factory=lambda: _AMP.copy())
    theta: np.ndarray = field(default_factory=lambda: _THETA.copy())
    width: np.ndarray = field(default_factory=lambda: _WIDTH.copy())
    heart_rate: float = 70.0
    rr_jitter: float = 0.03
    axis_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    noise_std: float = 0.01

    def __post_init__(self):
        for name in ("amplitude", "theta", "width", "axis_rotation"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if self.amplitude.shape != (5, 3) or self.theta.shape != (5, 3) or self.width.shape != (5, 3):
            raise ValueError("wave parameters must be 5 x 3 (waves x axes)")
        if np.any(self.width <= 0):
            raise ValueError("wave widths must be positive")
        if not 20.0 <= self.heart_rate <= 250.0:
            raise ValueError(f"heart rate {self.heart_rate} outside [20, 250] bpm")
        if self.rr_jitter < 0 or self.noise_std < 0:
            raise ValueError("rr_jitter and noise_std must be non-negative")
        r = self.axis_rotation
        if r.shape != (3, 3) or np.abs(r @ r.T - np.eye(3)).max() > 1e-6:
            raise ValueError("axis_rotation must be orthonormal")

    def to_json(self) -> dict:
        d = asdict(self)
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in d.items()}

    @classmethod
    def from_json(cls, d: Mapping) -> "DipoleParams":
        return cls(**d)


def _precordial(angle_deg: float, incl: float, gain: float) -> tuple[float, float, float]:
    a = np.deg2rad(angle_deg)
    return (gain * np.cos(a), gain * incl, gain * np.sin(a))


@dataclass(frozen=True)
class LeadProjection:
    limb_vectors: np.ndarray = field(default_factory=lambda: np.array([
        [1.0, 0.0, 0.0],
        [np.cos(np.pi / 3), np.sin(np.pi / 3), 0.0],
    ]))
    precordial_vectors: np.ndarray = field(default_factory=lambda: np.array([
        _precordial(120, 0.15, 1.1),
        _precordial(95, 0.15, 1.3),
        _precordial(75, 0.15, 1.3),
        _precordial(55, 0.15, 1.2),
        _precordial(30, 0.15, 1.1),
        _precordial(0, 0.15, 1.0),
    ]))

    def __post_init__(self):
        object.__setattr__(self, "limb_vectors", np.asarray(self.limb_vectors, dtype=np.float64))
        object.__setattr__(self, "precordial_vectors", np.asarray(self.precordial_vectors, dtype=np.float64))
        if self.limb_vectors.shape != (2, 3) or self.precordial_vectors.shape != (6, 3):
            raise ValueError("need 2 limb vectors and 6 precordial vectors in 3-D")


def derive_limb_leads(lead_i: np.ndarray, lead_ii: np.ndarray) -> dict[LeadId, np.ndarray]:
    return {
        LeadId.I: lead_i,
        LeadId.II: lead_ii,
        LeadId.III: lead_ii - lead_i,
        LeadId.aVR: -(lead_i + lead_ii) / 2.0,
        LeadId.aVL: lead_i - lead_ii / 2.0,
        LeadId.aVF: lead_ii - lead_i / 2.0,
    }


def assemble_leads(independent: np.ndarray) -> np.ndarray:
    """Expand ``(I, II, V1..V6)`` rows (8 x T) into the canonical 12 x T signal."""
    out = np.empty((12, independent.shape[1]))
    for lead, row in derive_limb_leads(independent[0], independent[1]).items():
        out[int(lead)] = row
    out[int(LeadId.V1):] = independent[2:]
    return out


def cardiac_phase(n_samples: int, fs: float, heart_rate: float, rr_jitter: float,
                  rng: np.random.Generator) -> np.ndarray:
    """Phase in [-pi, pi) advancing by 2 pi per (log-normally jittered) RR interval."""
    mean_rr = 60.0 / heart_rate
    duration = n_samples / fs
    start = rng.random()  # fraction of the first beat already elapsed at t=0
    n_beats = int(np.ceil(duration / (mean_rr * 0.5))) + 3
    if rr_jitter > 0:
        rr = mean_rr * np.exp(rng.normal(0.0, rr_jitter, n_beats) - rr_jitter ** 2 / 2.0)
    else:
        rr = np.full(n_beats, mean_rr)
    edges = np.concatenate(([0.0], np.cumsum(rr)))
    u = np.arange(n_samples) / fs + start * rr[0]
    k = np.searchsorted(edges, u, side="right") - 1
    frac = (u - edges[k]) / rr[k]
    return -np.pi + 2.0 * np.pi * frac


def _wrap(a: np.ndarray) -> np.ndarray:
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def dipole_from_phase(params: DipoleParams, phase: np.ndarray) -> np.ndarray:
    d = _wrap(phase[None, None, :] - params.theta[:, :, None])  # waves x axes x T
    bumps = params.amplitude[:, :, None] * np.exp(-d ** 2 / (2.0 * params.width[:, :, None] ** 2))
    return params.axis_rotation @ bumps.sum(axis=0)


def gen_dipole(params: DipoleParams, duration_s: float, fs: float, seed: int) -> np.ndarray:
    """3 x T dipole trajectory; deterministic for a given seed."""
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    n = int(round(duration_s * fs))
    rng = np.random.default_rng(seed)
    phase = cardiac_phase(n, fs, params.heart_rate, params.rr_jitter, rng)
    traj = dipole_from_phase(params, phase)
    if params.noise_std > 0:
        traj = traj + rng.normal(0.0, params.noise_std, traj.shape)
    return traj


def project_leads(trajectory: np.ndarray, proj: LeadProjection = LeadProjection()) -> np.ndarray:
    """Project a 3 x T dipole onto the 12 leads (canonical order)."""
    traj = np.asarray(trajectory, dtype=np.float64)
    if traj.ndim != 2 or traj.shape[0] != 3:
        raise ValueError("trajectory must be 3 x T")
    limb = proj.limb_vectors @ traj
    prec = proj.precordial_vectors @ traj
    return assemble_leads(np.vstack([limb, prec]))


# -- pathologies ------------------------------------------------------------------
ST_OFFSET_MV = 0.15
ST_PLATEAU = (0.55, 1.25)  # phase interval (rad) between QRS end and T onset
ST_TAPER = 0.15

# offsets on the independent leads; derived limb leads follow by the identities
MI_REGIONS: dict[str, dict[str, tuple[LeadId, ...]]] = {
    "MI_ANTERIOR": {"independent": (LeadId.V3, LeadId.V4)},
    "MI_ANTEROSEPTAL": {"independent": (LeadId.V1, LeadId.V2, LeadId.V3, LeadId.V4)},
    "MI_ANTEROLATERAL": {"independent": (LeadId.I, LeadId.V3, LeadId.V4, LeadId.V5, LeadId.V6)},
    "MI_LATERAL": {"independent": (LeadId.I, LeadId.V5, LeadId.V6)},
    "MI_INFERIOR": {"independent": (LeadId.II,)},
    "MI_SEPTAL": {"independent": (LeadId.V1, LeadId.V2)},
}
# leads that see the full +0.15 mV (independent leads plus derived ones)
MI_TARGET_LEADS: dict[str, tuple[LeadId, ...]] = {
    "MI_ANTERIOR": (LeadId.V3, LeadId.V4),
    "MI_ANTEROSEPTAL": (LeadId.V1, LeadId.V2, LeadId.V3, LeadId.V4),
    "MI_ANTEROLATERAL": (LeadId.I, LeadId.aVL, LeadId.V3, LeadId.V4, LeadId.V5, LeadId.V6),
    "MI_LATERAL": (LeadId.I, LeadId.aVL, LeadId.V5, LeadId.V6),
    "MI_INFERIOR": (LeadId.II, LeadId.III, LeadId.aVF),
    "MI_SEPTAL": (LeadId.V1, LeadId.V2),
}
RHYTHM_LABELS = ("TACHY", "BRADY")
# desk-scale default: each MI region 8%, each rhythm/axis class 10%
DEFAULT_MIX = {
    "MI_ANTERIOR": 0.08, "MI_ANTEROLATERAL": 0.08, "MI_ANTEROSEPTAL": 0.08, "MI_INFERIOR": 0.08,
    "MI_LATERAL": 0.08, "MI_SEPTAL": 0.08, "TACHY": 0.1, "BRADY": 0.1, "AXIS_DEV": 0.1,
}
TACHY_RANGE = (100.0, 150.0)
BRADY_RANGE = (35.0, 55.0)
AXIS_DEV_DEGREES = 30.0
_INDEPENDENT = (LeadId.I, LeadId.II, LeadId.V1, LeadId.V2, LeadId.V3, LeadId.V4, LeadId.V5, LeadId.V6)


def st_window(phase: np.ndarray) -> np.ndarray:
    """1 on the ST plateau, raised-cosine tapers of width ST_TAPER either side."""
    lo, hi = ST_PLATEAU
    w = np.zeros_like(phase)
    w[(phase >= lo) & (phase <= hi)] = 1.0
    left = (phase > lo - ST_TAPER) & (phase < lo)
    right = (phase > hi) & (phase < hi + ST_TAPER)
    w[left] = 0.5 * (1 - np.cos(np.pi * (phase[left] - (lo - ST_TAPER)) / ST_TAPER))
    w[right] = 0.5 * (1 + np.cos(np.pi * (phase[right] - hi) / ST_TAPER))
    return w


def st_offsets(labels: list[str], phase: np.ndarray, magnitude: float = ST_OFFSET_MV) -> np.ndarray:
    """8 x T additive offsets on the independent leads for the given MI labels."""
    win = st_window(phase) * magnitude
    out = np.zeros((len(_INDEPENDENT), phase.size))
    for label in labels:
        for lead in MI_REGIONS[label]["independent"]:
            out[_INDEPENDENT.index(lead)] += win
    return out


# -- proximity (non-dipolar) precordial activity --------------------------------------
# spatial profiles over V1..V6 of a right/septal and a lateral local source
PROXIMITY_PROFILES = np.array([
    [1.0, 0.7, 0.3, 0.1, 0.0, 0.0],
    [0.0, 0.0, 0.1, 0.4, 0.9, 1.0],
])
_PROX_THETA = np.array([0.05, -0.05])
_PROX_WIDTH = np.array([0.09, 0.12])


@dataclass(frozen=True)
class SubjectVariability:
    """Between-subject spread of the base morphology (all zero = clones)."""

    amplitude_log_std: float = 0.2
    theta_std: float = 0.03
    width_log_std: float = 0.1
    heart_rate_std: float = 6.0
    orientation_deg_std: float = 8.0
    proximity_std: float = 0.2

    @classmethod
    def none(cls) -> "SubjectVariability":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


def _small_rotation(rng: np.random.Generator, deg_std: float) -> np.ndarray:
    if deg_std == 0:
        return np.eye(3)
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    ang = np.deg2rad(rng.normal(0.0, deg_std))
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(ang) * k + (1 - np.cos(ang)) * (k @ k)


def subject_params(base: DipoleParams, var: SubjectVariability, rng: np.random.Generator
                   ) -> tuple[DipoleParams, np.ndarray]:
    amp = base.amplitude * np.exp(rng.normal(0.0, var.amplitude_log_std, (5, 3)))
    theta = base.theta + rng.normal(0.0, var.theta_std, (5, 3))
    width = base.width * np.exp(rng.normal(0.0, var.width_log_std, (5, 3)))
    hr = float(np.clip(base.heart_rate + rng.normal(0.0, var.heart_rate_std), 58.0, 92.0)) \
        if var.heart_rate_std else base.heart_rate
    rot = _small_rotation(rng, var.orientation_deg_std) @ base.axis_rotation
    prox = rng.normal(0.0, var.proximity_std, 2)
    return replace(base, amplitude=amp, theta=theta, width=width, heart_rate=hr, axis_rotation=rot), prox


def proximity_activity(amplitudes: np.ndarray, phase: np.ndarray) -> np.ndarray:
    """6 x T local precordial contribution for per-source amplitudes (mV)."""
    d = _wrap(phase[None, :] - _PROX_THETA[:, None])
    src = amplitudes[:, None] * np.exp(-d ** 2 / (2.0 * _PROX_WIDTH[:, None] ** 2))
    return PROXIMITY_PROFILES.T @ src


@dataclass(frozen=True)
class GenConfig:
    duration_s: float = 2.0
    fs: int = 500
    variability: SubjectVariability = SubjectVariability()
    projection: LeadProjection = LeadProjection()

    def to_json(self) -> dict:
        return {"duration_s": self.duration_s, "fs": self.fs, "variability": asdict(self.variability),
                "projection": {"limb_vectors": self.projection.limb_vectors.tolist(),
                               "precordial_vectors": self.projection.precordial_vectors.tolist()}}


def _validate_mix(mix: Mapping[str, float], vocab: Vocabulary) -> None:
    if not mix:
        raise ValueError("pathology mix is empty")
    for label, p in mix.items():
        if label not in vocab.labels:
            raise KeyError(f"unknown pathology {label!r}")
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"probability for {label!r} outside [0, 1]: {p}")
    if mix.get("TACHY", 0.0) + mix.get("BRADY", 0.0) > 1.0:
        raise ValueError("TACHY and BRADY are exclusive; their probabilities must sum to <= 1")


def sample_labels(mix: Mapping[str, float], vocab: Vocabulary, rng: np.random.Generator) -> list[str]:
    # one uniform per vocabulary slot, drawn unconditionally so streams stay aligned across mixes
    draws = rng.random(len(vocab) + 1)
    labels = []
    u_rhythm = draws[-1]
    p_t, p_b = mix.get("TACHY", 0.0), mix.get("BRADY", 0.0)
    if u_rhythm < p_t:
        labels.append("TACHY")
    elif u_rhythm < p_t + p_b:
        labels.append("BRADY")
    for i, label in enumerate(vocab.labels):
        if label in ("NORMAL",) + RHYTHM_LABELS:
            continue
        if draws[i] < mix.get(label, 0.0):
            labels.append(label)
    return labels or ["NORMAL"]


def gen_record(params: DipoleParams, proximity: np.ndarray, labels: list[str], cfg: GenConfig,
               wave_seed: int, rate_rng: np.random.Generator | None = None) -> np.ndarray:
    """Render one 12 x T record for a subject's params and a label set."""
    p = params
    if "TACHY" in labels or "BRADY" in labels:
        lo, hi = TACHY_RANGE if "TACHY" in labels else BRADY_RANGE
        p = replace(p, heart_rate=float((rate_rng or np.random.default_rng(wave_seed)).uniform(lo, hi)))
    if "AXIS_DEV" in labels:
        p = replace(p, axis_rotation=rotation_z(AXIS_DEV_DEGREES) @ p.axis_rotation)
    n = int(round(cfg.duration_s * cfg.fs))
    rng = np.random.default_rng(wave_seed)
    phase = cardiac_phase(n, cfg.fs, p.heart_rate, p.rr_jitter, rng)
    traj = dipole_from_phase(p, phase)
    if p.noise_std > 0:
        traj = traj + rng.normal(0.0, p.noise_std, traj.shape)
    proj = cfg.projection
    indep = np.vstack([proj.limb_vectors @ traj, proj.precordial_vectors @ traj])
    indep[2:] += proximity_activity(np.asarray(proximity, dtype=np.float64), phase)
    mi = [l for l in labels if l in MI_REGIONS]
    if mi:
        indep += st_offsets(mi, phase)
    return assemble_leads(indep)


def gen_dataset(n_subjects: int, records_per_subject: int, pathology_mix: Mapping[str, float],
                base_params: DipoleParams = DipoleParams(), seed: int = 0,
                cfg: GenConfig = GenConfig(), vocab: Vocabulary | None = None) -> list[EcgRecord]:
    """Generate labelled records; subject ids are unique per subject."""
    vocab = vocab or Vocabulary.default()
    if n_subjects < 1 or records_per_subject < 1:
        raise ValueError("n_subjects and records_per_subject must be positive")
    _validate_mix(pathology_mix, vocab)
    records = []
    for s in range(n_subjects):
        sp, prox = subject_params(base_params, cfg.variability,
                                  np.random.default_rng(derive_seed(seed, 1, s)))
        for r in range(records_per_subject):
            idx = s * records_per_subject + r
            labels = sample_labels(pathology_mix, vocab, np.random.default_rng(derive_seed(seed, 2, idx)))
            rate_rng = np.random.default_rng(derive_seed(seed, 3, idx))
            sig = gen_record(sp, prox, labels, cfg, derive_seed(seed, 4, idx), rate_rng)
            subject_id = f"S{s:05d}"
            records.append(EcgRecord(subject_id, f"{subject_id}_R{r:02d}", cfg.fs, sig,
                                     vocab.encode(labels), CANONICAL))
    return records


def provenance(n_subjects: int, records_per_subject: int, pathology_mix: Mapping[str, float],
               base_params: DipoleParams, seed: int, cfg: GenConfig) -> str:
    return json.dumps({
        "n_subjects": n_subjects, "records_per_subject": records_per_subject,
        "pathology_mix": dict(sorted(pathology_mix.items())), "base_params": base_params.to_json(),
        "seed": seed, "config": cfg.to_json(),
    }, indent=2, sort_keys=True)
