"""
Constant-curvature factor geometries.

Three families are supported: flat Euclidean space, the Poincare ball model
of hyperbolic space (curvature ``c < 0``, radius ``1/sqrt(-c)``) and the
sphere of radius ``1/sqrt(c)`` stored as ambient vectors (``c > 0``).

All array functions operate on the last axis and broadcast over leading
axes, so a batch of ``n`` points of dimension ``d`` is an ``(n, d)`` array.
The :class:`Factor` / :class:`FactorPoint` wrappers add validation on top of
the array kernels.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import DegenerateGeodesicError, DomainError

# Hyperbolic points are clamped to (1 - BOUNDARY_EPS) of the ball radius.
BOUNDARY_EPS = 1e-5
# Spherical log map refuses pairs closer than this to antipodal.
ANTIPODAL_EPS = 1e-6
# Raw spherical vectors below this norm are replaced by e_1.
ZERO_NORM_EPS = 1e-12
SPHERE_TOL = 1e-9


class FactorKind(str, Enum):
    EUCLIDEAN = "euclidean"
    HYPERBOLIC = "hyperbolic"
    SPHERICAL = "spherical"


def _norm(x):
    return np.sqrt(np.sum(x * x, axis=-1, keepdims=True))


def _sqnorm(x):
    return np.sum(x * x, axis=-1, keepdims=True)


def _dot(x, y):
    return np.sum(x * y, axis=-1, keepdims=True)


def arcosh1p(delta):
    """``arcosh(1 + delta)`` accurate for small ``delta >= 0``."""
    delta = np.maximum(delta, 0.0)
    return np.log1p(delta + np.sqrt(delta * (delta + 2.0)))


# ---------------------------------------------------------------------------
# Poincare ball, curvature -k with k > 0
# ---------------------------------------------------------------------------


def max_ball_norm(k: float) -> float:
    return (1.0 - BOUNDARY_EPS) / np.sqrt(k)


def conformal_factor(x, k: float):
    """``lambda_x = 2 / (1 - k ||x||^2)``, shape ``(..., 1)``."""
    return 2.0 / (1.0 - k * _sqnorm(x))


def mobius_add(x, y, k: float):
    xy = _dot(x, y)
    x2 = _sqnorm(x)
    y2 = _sqnorm(y)
    num = (1.0 + 2.0 * k * xy + k * y2) * x + (1.0 - k * x2) * y
    den = 1.0 + 2.0 * k * xy + k * k * x2 * y2
    return num / den


def clamp_ball(x, k: float):
    maxnorm = max_ball_norm(k)
    n = _norm(x)
    scale = np.where(n > maxnorm, maxnorm / np.maximum(n, 1e-300), 1.0)
    return x * scale


def poincare_dist(x, y, k: float):
    """Geodesic distance in the Poincare ball of curvature ``-k``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ax = 1.0 - k * np.sum(x * x, axis=-1)
    ay = 1.0 - k * np.sum(y * y, axis=-1)
    d2 = np.sum((x - y) ** 2, axis=-1)
    return arcosh1p(2.0 * k * d2 / (ax * ay)) / np.sqrt(k)


def poincare_expmap0(v, k: float):
    """``exp_0(v) = tanh(sqrt(k)|v|) v / (sqrt(k)|v|)`` without clamping."""
    s = np.sqrt(k)
    n = _norm(v)
    sn = s * n
    safe = np.where(sn > 0, sn, 1.0)
    factor = np.where(sn > 0, np.tanh(safe) / safe, 1.0)
    return factor * v


def poincare_expmap(x, v, k: float):
    s = np.sqrt(k)
    n = _norm(v)
    safe = np.where(n > 0, n, 1.0)
    lam = conformal_factor(x, k)
    second = np.tanh(s * lam * safe / 2.0) * v / (s * safe)
    out = mobius_add(x, second, k)
    out = np.where(n > 0, out, x)
    return clamp_ball(out, k)


def poincare_logmap(x, y, k: float):
    s = np.sqrt(k)
    sub = mobius_add(-x, y, k)
    n = _norm(sub)
    safe = np.where(n > 0, n, 1.0)
    lam = conformal_factor(x, k)
    arg = np.minimum(s * safe, 1.0 - 1e-16)
    out = 2.0 / (s * lam) * np.arctanh(arg) * sub / safe
    # (-x) + x is only zero up to rounding; identical points map to exactly 0
    same = np.all(x == y, axis=-1, keepdims=True)
    return np.where((n > 0) & ~same, out, 0.0)


# ---------------------------------------------------------------------------
# Sphere of radius 1/sqrt(c), ambient coordinates
# ---------------------------------------------------------------------------


def sphere_angle(x, y):
    """Central angle between ``x`` and ``y`` (any nonzero norms)."""
    xh = x / _norm(x)
    yh = y / _norm(y)
    return 2.0 * np.arctan2(
        np.sqrt(np.sum((xh - yh) ** 2, axis=-1)),
        np.sqrt(np.sum((xh + yh) ** 2, axis=-1)),
    )


def sphere_dist(x, y, c: float):
    """Great-circle distance ``arccos(c <x, y>) / sqrt(c)``.

    Evaluated through the half-angle ``atan2`` form, which agrees with the
    arccos expression on the sphere but keeps full precision for nearly
    coincident and nearly antipodal pairs.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return sphere_angle(x, y) / np.sqrt(c)


def sphere_project(x, c: float):
    return x / (np.sqrt(c) * _norm(x))


def sphere_expmap(x, v, c: float):
    s = np.sqrt(c)
    n = _norm(v)
    safe = np.where(n > 0, n, 1.0)
    out = np.cos(s * n) * x + np.sin(s * n) * v / (s * safe)
    out = sphere_project(out, c)
    return np.where(n > 0, out, x)


def sphere_logmap(x, y, c: float):
    theta = sphere_angle(x, y)[..., None]
    if np.any(theta > np.pi - ANTIPODAL_EPS):
        raise DegenerateGeodesicError(
            "spherical log map is undefined for (nearly) antipodal points"
        )
    u = y - c * _dot(x, y) * x
    n = _norm(u)
    safe = np.where(n > 0, n, 1.0)
    out = (theta / np.sqrt(c)) * u / safe
    return np.where(n > 0, out, 0.0)


# ---------------------------------------------------------------------------
# Typed wrappers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Factor:
    """A constant-curvature factor space of a fixed dimension.

    For spherical factors ``dim`` is the ambient dimension of the stored
    coordinates, i.e. the sphere of radius ``1/sqrt(curvature)`` in
    ``R^dim``.
    """

    kind: FactorKind
    dim: int
    curvature: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", FactorKind(self.kind))
        if self.dim < 0:
            raise ValueError(f"dimension must be nonnegative, got {self.dim}")
        if self.kind is FactorKind.EUCLIDEAN:
            if self.curvature not in (None, 0, 0.0):
                raise ValueError("Euclidean factor takes no curvature")
            object.__setattr__(self, "curvature", None)
        elif self.kind is FactorKind.HYPERBOLIC:
            if self.curvature is None or not self.curvature < 0:
                raise ValueError(f"hyperbolic curvature must be < 0, got {self.curvature}")
        else:
            if self.curvature is None or not self.curvature > 0:
                raise ValueError(f"spherical curvature must be > 0, got {self.curvature}")

    @property
    def radius(self) -> float:
        if self.kind is FactorKind.EUCLIDEAN:
            return np.inf
        return 1.0 / np.sqrt(abs(self.curvature))

    @property
    def k(self) -> float:
        """Absolute curvature."""
        return 0.0 if self.curvature is None else abs(self.curvature)

    # array-level API -------------------------------------------------------

    def check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise ValueError(f"expected trailing dimension {self.dim}, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("point coordinates must be finite")
        if self.kind is FactorKind.HYPERBOLIC:
            if np.any(np.sum(x * x, axis=-1) * self.k >= 1.0):
                raise DomainError("hyperbolic point lies on or outside the ball boundary")
        elif self.kind is FactorKind.SPHERICAL:
            dev = np.abs(np.sum(x * x, axis=-1) - 1.0 / self.curvature)
            if np.any(dev > SPHERE_TOL * max(1.0, 1.0 / self.curvature)):
                raise DomainError("spherical point is off the sphere")
        return x

    def dist(self, x, y):
        if self.kind is FactorKind.EUCLIDEAN:
            return np.sqrt(np.sum((np.asarray(x) - np.asarray(y)) ** 2, axis=-1))
        if self.kind is FactorKind.HYPERBOLIC:
            return poincare_dist(x, y, self.k)
        return sphere_dist(x, y, self.curvature)

    def expmap(self, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.kind is FactorKind.EUCLIDEAN:
            return x + v
        if self.kind is FactorKind.HYPERBOLIC:
            return poincare_expmap(x, v, self.k)
        return sphere_expmap(x, v, self.curvature)

    def logmap(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind is FactorKind.EUCLIDEAN:
            return y - x
        if self.kind is FactorKind.HYPERBOLIC:
            return poincare_logmap(x, y, self.k)
        return sphere_logmap(x, y, self.curvature)

    def norm(self, x, v):
        """Riemannian norm of tangent vector ``v`` at ``x``."""
        n = np.sqrt(np.sum(np.asarray(v) ** 2, axis=-1))
        if self.kind is FactorKind.HYPERBOLIC:
            return conformal_factor(x, self.k)[..., 0] * n
        return n

    def proj(self, raw):
        raw = np.asarray(raw, dtype=float)
        if self.kind is FactorKind.EUCLIDEAN:
            return raw.copy()
        if self.kind is FactorKind.HYPERBOLIC:
            return clamp_ball(poincare_expmap0(raw, self.k), self.k)
        n = _norm(raw)
        fallback = np.zeros_like(raw)
        fallback[..., 0] = 1.0
        raw = np.where(n < ZERO_NORM_EPS, fallback, raw)
        return sphere_project(raw, self.curvature)

    def egrad2rgrad(self, x, g):
        x = np.asarray(x, dtype=float)
        g = np.asarray(g, dtype=float)
        if self.kind is FactorKind.EUCLIDEAN:
            return g.copy()
        if self.kind is FactorKind.HYPERBOLIC:
            return g / conformal_factor(x, self.k) ** 2
        n = x / _norm(x)
        return g - _dot(g, n) * n


@dataclass(frozen=True)
class FactorPoint:
    coords: np.ndarray
    factor: Factor

    def __post_init__(self):
        object.__setattr__(self, "coords", self.factor.check(self.coords))

    @property
    def kind(self) -> FactorKind:
        return self.factor.kind

    @property
    def curvature(self):
        return self.factor.curvature


@dataclass(frozen=True)
class TangentVector:
    coords: np.ndarray
    base: FactorPoint

    def __post_init__(self):
        v = np.asarray(self.coords, dtype=float)
        if v.shape != self.base.coords.shape:
            raise ValueError("tangent vector shape does not match its base point")
        if not np.all(np.isfinite(v)):
            raise ValueError("tangent vector must be finite")
        if self.base.kind is FactorKind.SPHERICAL:
            dot = np.sum(v * self.base.coords, axis=-1)
            scale = np.linalg.norm(v, axis=-1) * np.linalg.norm(self.base.coords, axis=-1)
            if np.any(np.abs(dot) > 1e-9 * np.maximum(1.0, scale)):
                raise ValueError("vector is not tangent to the sphere at its base")
        object.__setattr__(self, "coords", v)


def _same_factor(x: FactorPoint, y: FactorPoint):
    if x.factor != y.factor:
        raise ValueError(f"factor mismatch: {x.factor} vs {y.factor}")


def factor_distance(x: FactorPoint, y: FactorPoint):
    _same_factor(x, y)
    return x.factor.dist(x.coords, y.coords)


def exp_map(base: FactorPoint, v: TangentVector) -> FactorPoint:
    if v.base.factor != base.factor:
        raise ValueError("tangent vector belongs to a different factor")
    return FactorPoint(base.factor.expmap(base.coords, v.coords), base.factor)


def log_map(base: FactorPoint, y: FactorPoint) -> TangentVector:
    _same_factor(base, y)
    return TangentVector(base.factor.logmap(base.coords, y.coords), base)


def project_to_factor(raw, kind, curvature=None) -> FactorPoint:
    raw = np.asarray(raw, dtype=float)
    factor = Factor(FactorKind(kind), raw.shape[-1], curvature)
    return FactorPoint(factor.proj(raw), factor)


def riemannian_grad(point: FactorPoint, euclid_grad) -> TangentVector:
    return TangentVector(point.factor.egrad2rgrad(point.coords, euclid_grad), point)
