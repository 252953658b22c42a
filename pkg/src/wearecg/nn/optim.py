"""AdamW / Adam and the one-cycle learning-rate policy."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adamw_step(params: list[np.ndarray], grads: list[np.ndarray | None], state: OptimizerState,
               decay_mask: list[bool] | None = None) -> list[np.ndarray]:
    """One AdamW update; returns new parameter arrays and mutates ``state``.

    Weight decay is decoupled: ``p <- p * (1 - lr * wd)`` before the
    bias-corrected Adam step. ``decay_mask[i] = False`` exempts parameter i.
    """
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(state.m) != len(params):
        raise ValueError("optimizer state does not match parameter list")
    for i, g in enumerate(grads):
        if g is not None and not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient for parameter {i}")

    state.step += 1
    t = state.step
    b1, b2, lr = state.beta1, state.beta2, state.lr
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        decay = state.weight_decay if decay_mask is None or decay_mask[i] else 0.0
        if decay:
            p = p * p.dtype.type(1.0 - lr * decay)
        if g is None:
            out.append(p)
            continue
        m, v = state.m[i], state.v[i]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        mhat = m / c1
        vhat = v / c2
        p = p - (lr * mhat / (np.sqrt(vhat) + state.eps)).astype(p.dtype)
        out.append(p)
    return out


class AdamW:
    """Stateful wrapper binding :func:`adamw_step` to a list of tensors."""

    def __init__(self, params: list[Tensor], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.01, decay_mask: list[bool] | None = None):
        self.params = list(params)
        self.state = OptimizerState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps,
                                    weight_decay=weight_decay)
        self.decay_mask = decay_mask

    @property
    def lr(self) -> float:
        return self.state.lr

    @lr.setter
    def lr(self, value: float) -> None:
        self.state.lr = float(value)

    def step(self) -> None:
        new = adamw_step([p.data for p in self.params], [p.grad for p in self.params],
                         self.state, self.decay_mask)
        for p, arr in zip(self.params, new):
            p.data = arr

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def Adam(params: list[Tensor], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8) -> AdamW:
    return AdamW(params, lr=lr, betas=betas, eps=eps, weight_decay=0.0)


@dataclass(frozen=True)
class LrSchedule:
    total_steps: int
    lr_max: float = 5e-5
    pct_warmup: float = 0.2
    lr_initial: float = 1e-5
    lr_final: float | None = None

    def __post_init__(self):
        if self.total_steps < 1:
            raise ValueError("total_steps must be positive")
        if not 0.0 < self.pct_warmup < 1.0:
            raise ValueError("pct_warmup must lie in (0, 1)")
        if min(self.lr_max, self.lr_initial, self.final) <= 0:
            raise ValueError("learning rates must be positive")

    @property
    def final(self) -> float:
        return self.lr_initial / 10.0 if self.lr_final is None else self.lr_final

    @property
    def warmup_steps(self) -> float:
        return self.pct_warmup * self.total_steps


def _cos_interp(start: float, end: float, frac: float) -> float:
    return end + (start - end) * 0.5 * (1.0 + math.cos(math.pi * frac))


def onecycle_lr(step: int, sched: LrSchedule) -> float:
    """Cosine warm-up to ``lr_max`` then cosine anneal to ``lr_final``."""
    if not 0 <= step <= sched.total_steps:
        raise ValueError(f"step {step} outside [0, {sched.total_steps}]")
    warm = sched.warmup_steps
    if step <= warm:
        return _cos_interp(sched.lr_initial, sched.lr_max, step / warm)
    frac = (step - warm) / (sched.total_steps - warm)
    return _cos_interp(sched.lr_max, sched.final, frac)
