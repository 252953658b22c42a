"""Central finite-difference check of reverse-mode gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


@dataclass
class GradCheckReport:
    passed: bool
    max_rel_error: float
    n_checked: int
    tol: float
    worst: tuple[int, tuple[int, ...]] | None = None
    errors: list[float] = field(default_factory=list, repr=False)


def rel_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-5, tol: float = 1e-4,
               n_coords: int = 50, seed: int = 0, floor: float = 1e-6,
               analytic: Sequence[np.ndarray] | None = None) -> GradCheckReport:
    """Compare analytic gradients of the scalar ``f()`` with central differences.

    ``f`` must be deterministic (freeze any sampling noise). At least
    ``n_coords`` coordinates are drawn uniformly over all parameters, or every
    coordinate if there are fewer. ``analytic`` overrides the backward pass,
    which is how a corrupted gradient can be fed to the detector.
    """
    params = list(params)
    if analytic is None:
        for p in params:
            p.grad = None
        f().backward()
        analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    sizes = np.array([p.size for p in params])
    total = int(sizes.sum())
    rng = np.random.default_rng(seed)
    flat = np.arange(total) if total <= n_coords else np.sort(rng.choice(total, n_coords, replace=False))
    bounds = np.cumsum(sizes)

    errors = []
    worst, worst_err = None, -1.0
    for idx in flat:
        pi = int(np.searchsorted(bounds, idx, side="right"))
        local = int(idx - (bounds[pi - 1] if pi else 0))
        p = params[pi]
        coord = np.unravel_index(local, p.shape)
        orig = p.data[coord].copy()
        p.data[coord] = orig + h
        fp = float(f().data)
        p.data[coord] = orig - h
        fm = float(f().data)
        p.data[coord] = orig
        numeric = (fp - fm) / (2.0 * h)
        err = rel_error(float(analytic[pi][coord]), numeric, floor)
        errors.append(err)
        if err > worst_err:
            worst, worst_err = (pi, tuple(int(c) for c in coord)), err
    max_err = max(errors) if errors else 0.0
    return GradCheckReport(max_err <= tol, max_err, len(errors), tol, worst, errors)
