"""
Random per-branch feature maps into the product space.

Each branch is an affine map followed by ``tanh``; the hyperbolic branch is
then sent into the Poincare ball with ``exp_0`` and the spherical branch is
normalized onto the sphere. Encoders are frozen: only their inputs (the
synthetic data) and the curvatures receive gradients, which
:meth:`Encoding.backward` computes in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .manifolds import BOUNDARY_EPS, ZERO_NORM_EPS, max_ball_norm
from .product_space import GeometryParams, ProductPoint

BIAS_SCALE = 0.5


@dataclass(frozen=True, eq=False)
class EncoderParams:
    W_e: np.ndarray
    b_e: np.ndarray
    W_h: np.ndarray
    b_h: np.ndarray
    W_s: np.ndarray
    b_s: np.ndarray
    seed: int

    @classmethod
    def init(cls, d_in: int, d_e: int, d_h: int, d_s: int, seed: int) -> "EncoderParams":
        rng = np.random.default_rng(seed)
        scale = 1.0 / np.sqrt(d_in)

        def branch(d):
            W = rng.standard_normal((d, d_in)) * scale
            b = rng.standard_normal(d) * BIAS_SCALE
            return W, b

        W_e, b_e = branch(d_e)
        W_h, b_h = branch(d_h)
        W_s, b_s = branch(d_s)
        return cls(W_e, b_e, W_h, b_h, W_s, b_s, seed)

    @property
    def d_in(self) -> int:
        return self.W_e.shape[1]

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.W_e.shape[0], self.W_h.shape[0], self.W_s.shape[0]

    def zero_biases(self) -> "EncoderParams":
        return EncoderParams(
            self.W_e, np.zeros_like(self.b_e), self.W_h, np.zeros_like(self.b_h),
            self.W_s, np.zeros_like(self.b_s), self.seed,
        )


def sample_encoders(count: int, base_seed: int, dims) -> List[EncoderParams]:
    """``count`` encoders seeded ``base_seed + i``; ``dims = (d_in, d_E, d_H, d_S)``."""
    if count < 1:
        raise ValueError("need at least one encoder")
    d_in, d_e, d_h, d_s = dims
    return [EncoderParams.init(d_in, d_e, d_h, d_s, base_seed + i) for i in range(count)]


def _exp0_ratio(t):
    """``(t sech^2 t - tanh t) / t^3`` with its series near zero."""
    t = np.asarray(t, dtype=float)
    small = t < 1e-2
    ts = np.where(small, 1.0, t)
    exact = (ts / np.cosh(ts) ** 2 - np.tanh(ts)) / ts ** 3
    series = -2.0 / 3.0 + 8.0 / 15.0 * t * t
    return np.where(small, series, exact)


class Encoding:
    """Forward pass of one encoder on a batch, with the cache for backward."""

    def __init__(self, x, p: EncoderParams, g: GeometryParams):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != p.d_in:
            raise ValueError(f"input dimension {x.shape[1]} does not match encoder ({p.d_in})")
        self.p = p
        self.k = g.k_h
        self.c = g.c_s
        self.e = np.tanh(x @ p.W_e.T + p.b_e)

        # hyperbolic branch: h = exp_0(u), clamped inside the ball
        self.u = np.tanh(x @ p.W_h.T + p.b_h)
        s = np.sqrt(self.k)
        n = np.linalg.norm(self.u, axis=1, keepdims=True)
        t = s * n
        ratio = np.where(t > 0, np.tanh(t) / np.where(t > 0, t, 1.0), 1.0)
        self.n_u = n
        self.t = t
        self.clamped = np.tanh(t) / s > max_ball_norm(self.k)
        unit = self.u / np.where(n > 0, n, 1.0)
        self.h = np.where(self.clamped, max_ball_norm(self.k) * unit, ratio * self.u)

        # spherical branch: s = v / (sqrt(c) |v|)
        self.v = np.tanh(x @ p.W_s.T + p.b_s)
        nv = np.linalg.norm(self.v, axis=1, keepdims=True)
        self.n_v = nv
        self.fallback = nv < ZERO_NORM_EPS
        direction = np.where(self.fallback, 0.0, self.v) / np.where(self.fallback, 1.0, nv)
        if self.v.shape[1]:
            direction[self.fallback[:, 0], 0] = 1.0
        self.s = direction / np.sqrt(self.c)

    @property
    def point(self) -> ProductPoint:
        return ProductPoint(self.e, self.h, self.s, s_raw=self.v)

    def backward(self, ge=None, gh=None, gs=None, gv=None):
        """Chain upstream gradients back to the inputs.

        ``ge, gh, gs`` are gradients with respect to the three factor
        coordinates, ``gv`` with respect to the pre-projection spherical
        output. Returns ``(dx, dk_h, dc_s)``, where ``dk_h`` is the partial
        derivative with respect to ``|c_H|`` and ``dc_s`` with respect to
        ``c_S`` through the projections.
        """
        p = self.p
        gx = np.zeros((self.e.shape[0], p.d_in))
        dk = 0.0
        dc = 0.0
        if ge is not None and self.e.shape[1]:
            gx += (ge * (1.0 - self.e ** 2)) @ p.W_e
        if gh is not None and self.h.shape[1]:
            s = np.sqrt(self.k)
            n = np.where(self.n_u > 0, self.n_u, 1.0)
            unit = self.u / n
            r = _exp0_ratio(self.t)
            f = np.where(self.t > 0, np.tanh(self.t) / np.where(self.t > 0, self.t, 1.0), 1.0)
            ugh = np.sum(self.u * gh, axis=1, keepdims=True)
            gu_free = f * gh + (self.k * r) * ugh * self.u
            m = max_ball_norm(self.k)
            gu_clamp = (m / n) * (gh - unit * np.sum(unit * gh, axis=1, keepdims=True))
            gu = np.where(self.clamped, gu_clamp, gu_free)
            gx += (gu * (1.0 - self.u ** 2)) @ p.W_h
            # d h / d k at fixed u
            dh_free = 0.5 * r * self.n_u ** 2 * self.u
            dh_clamp = -(1.0 - BOUNDARY_EPS) / (2.0 * s ** 3) * unit
            dh_dk = np.where(self.clamped, dh_clamp, dh_free)
            dk += float(np.sum(gh * dh_dk))
        if self.v.shape[1] and (gs is not None or gv is not None):
            gvt = np.zeros_like(self.v) if gv is None else np.array(gv, dtype=float)
            if gs is not None:
                nv = np.where(self.fallback, 1.0, self.n_v)
                unit = self.v / nv
                proj = (gs - unit * np.sum(unit * gs, axis=1, keepdims=True)) / (np.sqrt(self.c) * nv)
                gvt += np.where(self.fallback, 0.0, proj)
                dc += float(np.sum(gs * (-self.s / (2.0 * self.c))))
            gx += (gvt * (1.0 - self.v ** 2)) @ p.W_s
        return gx, dk, dc


def encode(x, p: EncoderParams, g: GeometryParams) -> ProductPoint:
    """Embed raw input(s) ``x`` into the product space."""
    x = np.asarray(x, dtype=float)
    z = Encoding(x, p, g).point
    if x.ndim == 1:
        return z[0]
    return z
