"""WearECG variational autoencoder: masked 12-lead input -> per-timestep Gaussian latent -> 12 leads.

Encoder: conv stem (12 -> plan[0]), one residual block plus a stride-2 conv per
entry of ``channel_plan``, a residual + attention bottleneck, and two conv heads
for ``mu`` and ``logvar``. The decoder mirrors it with nearest-neighbour x2
upsampling, attention-residual blocks at the bottleneck and a conv output head.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .leads import CANONICAL, N_LEADS, LeadId, parse_leads
from .nn import functional as F
from .nn.modules import AttnBlock, Conv1d, GroupNorm, Module, ResBlock
from .nn.tensor import Tensor, clip, exp

LOGVAR_RANGE = (-30.0, 20.0)


@dataclass(frozen=True)
class MaskSpec:
    keep: tuple[LeadId, ...] = (LeadId.II, LeadId.V1, LeadId.V5)

    def __post_init__(self):
        keep = tuple(sorted(parse_leads(list(self.keep))))
        if not 1 <= len(keep) <= N_LEADS:
            raise ValueError("mask must keep between 1 and 12 leads")
        object.__setattr__(self, "keep", keep)

    @classmethod
    def parse(cls, text: str) -> "MaskSpec":
        return cls(parse_leads(text))

    def keep_rows(self) -> np.ndarray:
        rows = np.zeros(N_LEADS, dtype=bool)
        rows[[int(l) for l in self.keep]] = True
        return rows

    def matrix(self, n_samples: int) -> np.ndarray:
        """Binary M (12 x T): zeros on kept leads, ones on masked leads."""
        return np.repeat((~self.keep_rows()).astype(np.float64)[:, None], n_samples, axis=1)

    def generated_leads(self) -> tuple[LeadId, ...]:
        return tuple(l for l in CANONICAL if l not in self.keep)

    def __str__(self) -> str:
        return ",".join(l.name for l in self.keep)


def mask_leads(x: np.ndarray, spec: MaskSpec) -> np.ndarray:
    """``x * (1 - M)`` over the lead axis (second-to-last) of ``x``."""
    x = np.asarray(x)
    if x.shape[-2] != N_LEADS:
        raise ValueError(f"expected 12 leads on axis -2, got shape {x.shape}")
    keep = spec.keep_rows()
    out = np.zeros_like(x)
    out[..., keep, :] = x[..., keep, :]
    return out


@dataclass(frozen=True)
class ArchConfig:
    channel_plan: tuple[int, ...] = (128, 256, 512)
    latent_dim: int = 4
    heads: int = 4
    enc_attn_blocks: int = 1
    dec_attn_blocks: int = 2
    in_leads: int = N_LEADS

    def __post_init__(self):
        object.__setattr__(self, "channel_plan", tuple(int(c) for c in self.channel_plan))
        if not self.channel_plan:
            raise ValueError("channel_plan must be non-empty")
        if self.channel_plan[-1] % self.heads:
            raise ValueError("bottleneck channels must divide into attention heads")

    @property
    def downsample_factor(self) -> int:
        return 2 ** len(self.channel_plan)

    def to_json(self) -> dict:
        d = asdict(self)
        d["channel_plan"] = list(self.channel_plan)
        return d


@dataclass
class LatentGaussian:
    mu: Tensor
    logvar: Tensor

    def __post_init__(self):
        if self.mu.shape != self.logvar.shape:
            raise ValueError("mu and logvar shapes differ")


class _EncStage(Module):
    def __init__(self, cin, cout, rng, dtype):
        self.res = ResBlock(cin, cout, rng=rng, dtype=dtype)
        self.down = Conv1d(cout, cout, 3, stride=2, rng=rng, dtype=dtype)

    def forward(self, x):
        return self.down(self.res(x))


class _DecStage(Module):
    def __init__(self, cin, cout, rng, dtype):
        self.conv = Conv1d(cin, cin, 3, rng=rng, dtype=dtype)
        self.res = ResBlock(cin, cout, rng=rng, dtype=dtype)

    def forward(self, x):
        return self.res(self.conv(F.upsample_nearest(x, 2)))


class WearEcgVae(Module):
    def __init__(self, arch: ArchConfig = ArchConfig(), seed: int = 0, dtype=np.float32):
        self.arch = arch
        rng = np.random.default_rng(seed)
        plan = arch.channel_plan
        top = plan[-1]
        # encoder
        self.enc_stem = Conv1d(arch.in_leads, plan[0], 3, rng=rng, dtype=dtype)
        prev = plan[0]
        self.enc_stages = []
        for c in plan:
            self.enc_stages.append(_EncStage(prev, c, rng, dtype))
            prev = c
        self.enc_mid = [ResBlock(top, top, rng=rng, dtype=dtype)]
        self.enc_mid += [AttnBlock(top, arch.heads, rng=rng, dtype=dtype) for _ in range(arch.enc_attn_blocks)]
        self.mu_head = Conv1d(top, arch.latent_dim, 3, rng=rng, dtype=dtype, zero_init=True)
        self.logvar_head = Conv1d(top, arch.latent_dim, 3, rng=rng, dtype=dtype, zero_init=True)
        # decoder
        self.dec_stem = Conv1d(arch.latent_dim, top, 3, rng=rng, dtype=dtype)
        self.dec_mid = []
        for _ in range(arch.dec_attn_blocks):
            self.dec_mid.append(ResBlock(top, top, rng=rng, dtype=dtype))
            self.dec_mid.append(AttnBlock(top, arch.heads, rng=rng, dtype=dtype))
        self.dec_stages = []
        prev = top
        for c in reversed(plan):
            self.dec_stages.append(_DecStage(prev, c, rng, dtype))
            prev = c
        self.out_norm = GroupNorm(plan[0], dtype=dtype)
        self.out_conv = Conv1d(plan[0], N_LEADS, 3, rng=rng, dtype=dtype)

    @property
    def dtype(self):
        return self.enc_stem.weight.dtype

    def encode(self, x_masked) -> LatentGaussian:
        x = x_masked if isinstance(x_masked, Tensor) else Tensor(np.asarray(x_masked, dtype=self.dtype))
        if x.ndim != 3 or x.shape[1] != self.arch.in_leads:
            raise ValueError(f"encoder expects B x {self.arch.in_leads} x T, got {x.shape}")
        f = self.arch.downsample_factor
        if x.shape[2] % f:
            raise ValueError(f"T={x.shape[2]} is not divisible by the downsample factor {f}")
        h = self.enc_stem(x)
        for stage in self.enc_stages:
            h = stage(h)
        for block in self.enc_mid:
            h = block(h)
        return LatentGaussian(self.mu_head(h), clip(self.logvar_head(h), *LOGVAR_RANGE))

    def decode(self, z) -> Tensor:
        z = z if isinstance(z, Tensor) else Tensor(np.asarray(z, dtype=self.dtype))
        if z.ndim != 3 or z.shape[1] != self.arch.latent_dim:
            raise ValueError(f"decoder expects B x {self.arch.latent_dim} x T', got {z.shape}")
        h = self.dec_stem(z)
        for block in self.dec_mid:
            h = block(h)
        for stage in self.dec_stages:
            h = stage(h)
        return self.out_conv(F.silu(self.out_norm(h)))

    def forward(self, x_masked, eps: np.ndarray | None = None):
        q = self.encode(x_masked)
        z = q.mu if eps is None else reparameterize(q, eps=eps)
        return self.decode(z), q

    def digest(self) -> str:
        h = hashlib.sha256(json.dumps(self.arch.to_json(), sort_keys=True).encode())
        for name, p in self.named_parameters():
            h.update(name.encode())
            h.update(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
        return h.hexdigest()


def sample_eps(q: LatentGaussian, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal(q.mu.shape).astype(q.mu.dtype)


def reparameterize(q: LatentGaussian, rng: np.random.Generator | None = None,
                   eps: np.ndarray | None = None) -> Tensor:
    """``z = mu + exp(logvar / 2) * eps``; eps is a constant (no gradient)."""
    if eps is None:
        if rng is None:
            raise ValueError("need an rng or explicit eps")
        eps = sample_eps(q, rng)
    return q.mu + exp(q.logvar * 0.5) * Tensor(np.asarray(eps, dtype=q.mu.dtype))


def kl_divergence(q: LatentGaussian) -> Tensor:
    """Closed-form KL(q || N(0, I)) summed over latent dims and time, averaged over batch."""
    mu, lv = q.mu, q.logvar
    terms = 1.0 + lv - mu * mu - exp(lv)
    return terms.sum() * (-0.5 / mu.shape[0])


def recon_loss(x_hat: Tensor, x) -> Tensor:
    """Mean squared error over every element (batch x leads x time)."""
    x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=x_hat.dtype))
    if x_hat.shape != x.shape:
        raise ValueError(f"shape mismatch {x_hat.shape} vs {x.shape}")
    d = x_hat - x
    return (d * d).mean()


@dataclass
class LossParts:
    total: Tensor
    recon: Tensor
    kl: Tensor
    extra: dict = field(default_factory=dict)


def total_loss(x_hat: Tensor, x, q: LatentGaussian, beta_kl: float = 1e-4,
               extra_terms: dict | None = None) -> LossParts:
    """``recon + beta * KL`` plus optional named extra terms (e.g. a perceptual loss)."""
    rec = recon_loss(x_hat, x)
    kl = kl_divergence(q)
    total = rec + kl * beta_kl if beta_kl else rec
    for term in (extra_terms or {}).values():
        total = total + term
    return LossParts(total, rec, kl, dict(extra_terms or {}))
