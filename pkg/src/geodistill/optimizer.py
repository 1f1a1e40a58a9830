"""
Update rules: momentum SGD for synthetic inputs, plain steps for the
geometry logits, exponential-map steps for points that live on the product
manifold, and a central-difference gradient checker.

State transitions are pure: each step returns a new state.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Dict

import numpy as np

from .product_space import GeometryParams, ProductPoint


@dataclass(frozen=True)
class OptimState:
    lr_syn: float = 0.01
    lr_scalars: float = 0.001
    momentum: float = 0.5
    velocity: Dict[str, np.ndarray] = field(default_factory=dict)
    step_count: int = 0

    def __post_init__(self):
        if not (self.lr_syn > 0 and self.lr_scalars > 0):
            raise ValueError("learning rates must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")


def step_synthetic(syn_raw, grads, st: OptimState):
    """Heavy-ball step ``v <- mu v + grad; x <- x - lr v``.

    Returns ``(new_syn_raw, new_state)``.
    """
    x = np.asarray(syn_raw, dtype=float)
    gr = np.asarray(grads, dtype=float)
    if x.shape != gr.shape:
        raise ValueError(f"gradient shape {gr.shape} does not match data shape {x.shape}")
    v = st.velocity.get("syn")
    if v is None:
        v = np.zeros_like(x)
    elif v.shape != x.shape:
        raise ValueError("velocity buffer does not match the data shape")
    v = st.momentum * v + gr
    vel = dict(st.velocity)
    vel["syn"] = v
    return x - st.lr_syn * v, replace(st, velocity=vel, step_count=st.step_count + 1)


def step_scalars(g: GeometryParams, grads, st: OptimState) -> GeometryParams:
    """Gradient step on ``(theta_H, theta_S, w_E, w_H, w_S)``.

    Curvature signs and the weight simplex are preserved structurally by the
    softplus/softmax parameterization.
    """
    gr = np.asarray(grads, dtype=float)
    if gr.shape != (5,) or not np.all(np.isfinite(gr)):
        raise ValueError("geometry gradient must be a finite 5-vector")
    return g.with_vector(g.vector - st.lr_scalars * gr)


def step_manifold(points: ProductPoint, rgrads: ProductPoint, lr: float, g: GeometryParams) -> ProductPoint:
    """Riemannian gradient step ``exp_z(-lr * grad)`` in every factor."""
    fe, fh, fs = g.factors(*points.dims)
    e = fe.expmap(points.e, -lr * np.asarray(rgrads.e))
    h = fh.expmap(points.h, -lr * np.asarray(rgrads.h)) if fh.dim else points.h
    s = fs.expmap(points.s, -lr * np.asarray(rgrads.s)) if fs.dim else points.s
    return ProductPoint(e, h, s)


def numerical_grad(loss_fn: Callable[[np.ndarray], float], at, h: float = 1e-5) -> np.ndarray:
    at = np.asarray(at, dtype=float)
    out = np.zeros_like(at)
    for i in np.ndindex(at.shape):
        xp = at.copy()
        xm = at.copy()
        xp[i] += h
        xm[i] -= h
        out[i] = (loss_fn(xp) - loss_fn(xm)) / (2.0 * h)
    return out


def grad_check(loss_fn: Callable[[np.ndarray], float], at, analytic, h: float = 1e-5) -> float:
    """Max relative error ``|analytic - fd| / |fd|`` of central differences.

    Only coordinates with ``|analytic| > 1e-8`` are compared; returns 0 when
    there are none.
    """
    if not h > 0:
        raise ValueError("step must be positive")
    analytic = np.asarray(analytic, dtype=float)
    num = numerical_grad(loss_fn, at, h)
    mask = np.abs(analytic) > 1e-8
    if not np.any(mask):
        return 0.0
    err = np.abs(analytic[mask] - num[mask])
    den = np.abs(num[mask])
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(den > 0, err / np.where(den > 0, den, 1.0), np.inf)
    return float(np.max(rel))
