"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

import numpy as np


def grad_check(fn, params, eps=1e-3, samples=20, seed=0, floor=1e-6):
    """Largest relative error between backprop and central differences.

    ``fn`` rebuilds the graph and returns a scalar Tensor; it must be
    deterministic (seeded dropout, fixed batch). ``params`` is a list or
    dict of leaf tensors. Up to ``samples`` coordinates are drawn per
    tensor. Relative error is ``|a - n| / max(|a|, |n|, floor)``.
    """
    if isinstance(params, dict):
        params = list(params.values())
    elif hasattr(params, "params"):
        params = list(params.params.values())
    for p in params:
        p.grad = None
    fn().backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        picks = rng.choice(flat.size, size=min(samples, flat.size), replace=False)
        for i in picks:
            orig = flat[i]
            flat[i] = orig + eps
            up = float(fn().data)
            flat[i] = orig - eps
            down = float(fn().data)
            flat[i] = orig
            numeric = (up - down) / (2 * eps)
            a = float(ga.reshape(-1)[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, err)
    for p in params:
        p.grad = None
    return worst
