"""Parameterised layers built from the fused kernels."""
from __future__ import annotations

from collections import OrderedDict
from typing import Iterator

import numpy as np

from . import functional as F
from .tensor import Tensor


class Module:
    """Container that discovers parameters and submodules in attribute order.

    Attributes whose name starts with ``_`` are references, not children.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, val in vars(self).items():
            if key.startswith("_"):
                continue
            name = f"{prefix}{key}"
            if isinstance(val, Tensor) and (val.requires_grad or val.frozen):
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((n, p.data) for n, p in self.named_parameters())

    def load_state_dict(self, state: dict) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for name, p in own.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape} != expected {p.shape}")
            p.data = arr.astype(p.dtype, copy=True)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def freeze(self) -> "Module":
        for p in self.parameters():
            p.freeze()
        return self

    def astype(self, dtype) -> "Module":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def param(data: np.ndarray, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def he_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def lecun_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, dtype) -> np.ndarray:
    bound = np.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def default_groups(channels: int) -> int:
    if channels % 32 == 0:
        return 32
    if channels % 4:
        raise ValueError(f"cannot pick a group count for {channels} channels")
    return channels // 4


class Conv1d(Module):
    def __init__(self, cin: int, cout: int, kernel: int = 3, stride: int = 1, *,
                 rng: np.random.Generator, dtype=np.float32, zero_init: bool = False):
        self.stride = stride
        shape = (cout, cin, kernel)
        w = np.zeros(shape, dtype) if zero_init else he_uniform(rng, shape, cin * kernel, dtype)
        self.weight = param(w)
        self.bias = param(np.zeros(cout, dtype))

    def forward(self, x: Tensor) -> Tensor:
        return F.conv1d(x, self.weight, self.bias, self.stride)


class GroupNorm(Module):
    def __init__(self, channels: int, groups: int | None = None, eps: float = 1e-5, dtype=np.float32):
        self.groups = groups or default_groups(channels)
        self.eps = eps
        self.gamma = param(np.ones(channels, dtype))
        self.beta = param(np.zeros(channels, dtype))

    def forward(self, x: Tensor) -> Tensor:
        return F.group_norm(x, self.groups, self.gamma, self.beta, self.eps)


class ResBlock(Module):
    """conv3 -> GN -> SiLU -> conv3 -> GN, added to a (projected) skip, then SiLU."""

    def __init__(self, cin: int, cout: int, *, rng, dtype=np.float32):
        self.conv1 = Conv1d(cin, cout, 3, rng=rng, dtype=dtype)
        self.norm1 = GroupNorm(cout, dtype=dtype)
        self.conv2 = Conv1d(cout, cout, 3, rng=rng, dtype=dtype)
        self.norm2 = GroupNorm(cout, dtype=dtype)
        self.skip = Conv1d(cin, cout, 1, rng=rng, dtype=dtype) if cin != cout else None

    def forward(self, x: Tensor) -> Tensor:
        h = F.silu(self.norm1(self.conv1(x)))
        h = self.norm2(self.conv2(h))
        s = x if self.skip is None else self.skip(x)
        return F.silu(h + s)


class SelfAttention(Module):
    def __init__(self, channels: int, heads: int, *, rng, dtype=np.float32):
        self.heads = heads
        for name in ("wq", "wk", "wv", "wo"):
            setattr(self, name, param(lecun_uniform(rng, (channels, channels), channels, dtype)))

    def forward(self, x: Tensor) -> Tensor:
        return F.mhsa(x, self.heads, self.wq, self.wk, self.wv, self.wo)


class AttnBlock(Module):
    """Pre-norm attention with a residual connection: ``x + mhsa(GN(x))``."""

    def __init__(self, channels: int, heads: int, *, rng, dtype=np.float32):
        self.norm = GroupNorm(channels, dtype=dtype)
        self.attn = SelfAttention(channels, heads, rng=rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return x + self.attn(self.norm(x))


class Linear(Module):
    def __init__(self, fin: int, fout: int, *, rng, dtype=np.float32, zero_init: bool = False):
        w = np.zeros((fin, fout), dtype) if zero_init else lecun_uniform(rng, (fin, fout), fin, dtype)
        self.weight = param(w)
        self.bias = param(np.zeros(fout, dtype))

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)
