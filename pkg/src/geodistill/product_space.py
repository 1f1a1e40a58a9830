"""
The product space E^{d_E} x H^{d_H}_{c_H} x S^{d_S}_{c_S}.

Curvatures and factor weights are carried by :class:`GeometryParams` as
unconstrained logits; the sign constraints and the simplex constraint hold
by construction (softplus and softmax), never by clamping.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np

from .manifolds import Factor, FactorKind, poincare_dist, sphere_dist


def softplus(x):
    # floored at the smallest normal float so the curvature sign survives
    # underflow for very negative logits
    return np.maximum(np.logaddexp(0.0, x), np.finfo(float).tiny)


def inv_softplus(y):
    y = float(y)
    if y <= 0:
        raise ValueError("softplus range is (0, inf)")
    # log(expm1(y)) written to avoid overflow for large y
    return y + np.log(-np.expm1(-y))


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def normalize_weights(w_logits) -> np.ndarray:
    """Softmax of the three factor-weight logits."""
    w = np.asarray(w_logits, dtype=float)
    if w.shape != (3,) or not np.all(np.isfinite(w)):
        raise ValueError("weight logits must be a finite 3-vector")
    e = np.exp(w - w.max())
    return e / e.sum()


@dataclass(frozen=True)
class GeometryParams:
    """Learnable curvature and weight logits.

    ``fixed_weights`` overrides the softmax (the degenerate-weight hook used
    by single-geometry runs); weight logits then receive no gradient.
    """

    theta_h: float = 0.0
    theta_s: float = 0.0
    w_logits: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    fixed_weights: Optional[Tuple[float, float, float]] = None

    def __post_init__(self):
        object.__setattr__(self, "theta_h", float(self.theta_h))
        object.__setattr__(self, "theta_s", float(self.theta_s))
        object.__setattr__(self, "w_logits", tuple(float(v) for v in self.w_logits))
        if len(self.w_logits) != 3:
            raise ValueError("w_logits must have three entries")
        if self.fixed_weights is not None:
            fw = tuple(float(v) for v in self.fixed_weights)
            if len(fw) != 3 or min(fw) < 0 or abs(sum(fw) - 1.0) > 1e-12:
                raise ValueError("fixed_weights must be a point of the closed simplex")
            object.__setattr__(self, "fixed_weights", fw)

    @classmethod
    def from_curvatures(cls, c_h=-1.0, c_s=1.0, w_logits=(0.0, 0.0, 0.0), fixed_weights=None):
        if not c_h < 0 or not c_s > 0:
            raise ValueError("need c_h < 0 < c_s")
        return cls(inv_softplus(-c_h), inv_softplus(c_s), w_logits, fixed_weights)

    @property
    def c_h(self) -> float:
        return -float(softplus(self.theta_h))

    @property
    def c_s(self) -> float:
        return float(softplus(self.theta_s))

    @property
    def k_h(self) -> float:
        return float(softplus(self.theta_h))

    @property
    def r_h(self) -> float:
        return 1.0 / np.sqrt(-self.c_h)

    @property
    def r_s(self) -> float:
        return 1.0 / np.sqrt(self.c_s)

    @property
    def weights(self) -> np.ndarray:
        if self.fixed_weights is not None:
            return np.array(self.fixed_weights)
        return normalize_weights(self.w_logits)

    @property
    def vector(self) -> np.ndarray:
        """Flat parameter vector ``(theta_h, theta_s, w_E, w_H, w_S)``."""
        return np.array([self.theta_h, self.theta_s, *self.w_logits])

    def with_vector(self, v) -> "GeometryParams":
        v = np.asarray(v, dtype=float)
        return replace(self, theta_h=v[0], theta_s=v[1], w_logits=tuple(v[2:5]))

    def factors(self, d_e: int, d_h: int, d_s: int):
        return (
            Factor(FactorKind.EUCLIDEAN, d_e),
            Factor(FactorKind.HYPERBOLIC, d_h, self.c_h),
            Factor(FactorKind.SPHERICAL, d_s, self.c_s),
        )


@dataclass(frozen=True)
class ProductPoint:
    """Point(s) of the product space; arrays may carry a leading batch axis.

    ``s_raw`` keeps the pre-projection output of the spherical branch when the
    point came out of an encoder (used by the spherical radius penalty).
    """

    e: np.ndarray
    h: np.ndarray
    s: np.ndarray
    s_raw: Optional[np.ndarray] = field(default=None, compare=False)

    @property
    def dims(self):
        return self.e.shape[-1], self.h.shape[-1], self.s.shape[-1]

    def __len__(self):
        return self.e.shape[0]

    def __getitem__(self, idx):
        return ProductPoint(
            self.e[idx], self.h[idx], self.s[idx],
            None if self.s_raw is None else self.s_raw[idx],
        )

    def validate(self, g: GeometryParams):
        fe, fh, fs = g.factors(*self.dims)
        fe.check(self.e)
        if fh.dim:
            fh.check(self.h)
        if fs.dim:
            fs.check(self.s)
        return self


def _check_pair(z: ProductPoint, z2: ProductPoint):
    if z.dims != z2.dims:
        raise ValueError(f"factor dimensions differ: {z.dims} vs {z2.dims}")


def factor_sq_distances(z: ProductPoint, z2: ProductPoint, g: GeometryParams):
    """Per-factor squared distances ``(a, b, c)``, broadcasting over batch axes."""
    _check_pair(z, z2)
    a = np.sum((z.e - z2.e) ** 2, axis=-1)
    if z.h.shape[-1]:
        b = poincare_dist(z.h, z2.h, g.k_h) ** 2
    else:
        b = np.zeros_like(a)
    if z.s.shape[-1]:
        c = sphere_dist(z.s, z2.s, g.c_s) ** 2
    else:
        c = np.zeros_like(a)
    return a, b, c


def product_distance_sq(z: ProductPoint, z2: ProductPoint, g: GeometryParams):
    a, b, c = factor_sq_distances(z, z2, g)
    w = g.weights
    return w[0] * a + w[1] * b + w[2] * c


def curvature_loss(h_batch, s_batch, g: GeometryParams, lambda_h=1.0, lambda_s=1.0) -> float:
    """Radius penalty ``lambda_H E|‖z^H‖ - r_H| + lambda_S E(‖z^S‖ - r_S)^2``.

    ``s_batch`` should be the spherical branch output *before* projection;
    projected points sit on the sphere and make the second term vanish.
    Empty factors (dimension zero) contribute nothing.
    """
    h_batch = np.atleast_2d(np.asarray(h_batch, dtype=float))
    s_batch = np.atleast_2d(np.asarray(s_batch, dtype=float))
    if h_batch.shape[0] == 0 or s_batch.shape[0] == 0:
        raise ValueError("curvature loss needs nonempty batches")
    if lambda_h < 0 or lambda_s < 0:
        raise ValueError("penalty weights must be nonnegative")
    total = 0.0
    if h_batch.shape[-1]:
        total += lambda_h * np.mean(np.abs(np.linalg.norm(h_batch, axis=-1) - g.r_h))
    if s_batch.shape[-1]:
        total += lambda_s * np.mean((np.linalg.norm(s_batch, axis=-1) - g.r_s) ** 2)
    return float(total)


def curvature_loss_grad(h_batch, s_batch, g: GeometryParams, lambda_h=1.0, lambda_s=1.0):
    """Value and gradients of :func:`curvature_loss`.

    Returns ``(value, d/dh, d/ds_raw, d/dk_h, d/dc_s)`` where ``k_h = -c_H``.
    """
    value = curvature_loss(h_batch, s_batch, g, lambda_h, lambda_s)
    h_batch = np.atleast_2d(h_batch)
    s_batch = np.atleast_2d(s_batch)
    gh = np.zeros_like(h_batch)
    gs = np.zeros_like(s_batch)
    dk = 0.0
    dc = 0.0
    if h_batch.shape[-1]:
        n = np.linalg.norm(h_batch, axis=-1, keepdims=True)
        sign = np.sign(n - g.r_h)
        gh = lambda_h * sign * h_batch / np.maximum(n, 1e-300) / h_batch.shape[0]
        # r_h = k^{-1/2}
        dk = -lambda_h * float(np.mean(sign)) * (-0.5 * g.k_h ** -1.5)
    if s_batch.shape[-1]:
        n = np.linalg.norm(s_batch, axis=-1, keepdims=True)
        resid = n - g.r_s
        gs = lambda_s * 2.0 * resid * s_batch / np.maximum(n, 1e-300) / s_batch.shape[0]
        dc = -lambda_s * 2.0 * float(np.mean(resid)) * (-0.5 * g.c_s ** -1.5)
    return value, gh, gs, dk, dc


def concat_features(z: ProductPoint, weights: Optional[Sequence[float]] = None) -> np.ndarray:
    """``[z^E ; z^H ; z^S]`` along the last axis.

    With ``weights`` each block is scaled by the square root of its weight,
    so squared feature distances pick up the same weighting as the product
    distance. Off by default.
    """
    if weights is None:
        return np.concatenate([z.e, z.h, z.s], axis=-1)
    w = np.sqrt(np.asarray(weights, dtype=float))
    return np.concatenate([w[0] * z.e, w[1] * z.h, w[2] * z.s], axis=-1)
