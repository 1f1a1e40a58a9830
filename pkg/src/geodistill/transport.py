"""
Optimal-transport loss between real and synthetic embeddings.

The ground cost is the weighted squared product distance. The transport
problem is solved with log-domain Sinkhorn iterations (entropic
relaxation); the loss is the transport cost <plan, cost> of the entropic
plan. Gradients hold the plan fixed (envelope approximation) and are exact
when the plan does not depend on the cost, e.g. a single synthetic point.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .encoder import EncoderParams, Encoding
from .manifolds import FactorKind, arcosh1p, sphere_angle
from .matching import GradResult, class_partition, geometry_grad
from .product_space import GeometryParams, ProductPoint, factor_sq_distances

MARGINAL_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class CostMatrix:
    entries: np.ndarray
    row_labels: Optional[np.ndarray] = None
    col_labels: Optional[np.ndarray] = None

    @property
    def shape(self):
        return self.entries.shape


@dataclass(frozen=True, eq=False)
class TransportPlan:
    plan: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray
    epsilon: float
    iterations_used: int
    converged: bool
    loss: float

    @property
    def marginal_violation(self) -> float:
        return float(max(
            np.max(np.abs(self.plan.sum(axis=1) - self.row_marginal)),
            np.max(np.abs(self.plan.sum(axis=0) - self.col_marginal)),
        ))


def _pairwise(z: ProductPoint, z2: ProductPoint) -> tuple:
    zz = ProductPoint(z.e[:, None, :], z.h[:, None, :], z.s[:, None, :])
    zz2 = ProductPoint(z2.e[None, :, :], z2.h[None, :, :], z2.s[None, :, :])
    return zz, zz2


def build_cost(real_pts: ProductPoint, syn_pts: ProductPoint, g: GeometryParams,
               row_labels=None, col_labels=None) -> CostMatrix:
    """Cost matrix of weighted squared product distances."""
    if len(real_pts) == 0 or len(syn_pts) == 0:
        raise ValueError("cost matrix needs points on both sides")
    a, b, c = factor_sq_distances(*_pairwise(real_pts, syn_pts), g)
    w = g.weights
    return CostMatrix(w[0] * a + w[1] * b + w[2] * c, row_labels, col_labels)


def _lse(X, axis):
    M = np.max(X, axis=axis, keepdims=True)
    M = np.where(np.isfinite(M), M, 0.0)
    return np.squeeze(M, axis) + np.log(np.sum(np.exp(X - M), axis=axis))


def sinkhorn_batch(C, a, b, epsilon, max_iters=500, tol=1e-6, check_every=5,
                   eps_scaling=True, stage_iters=50):
    """Log-domain Sinkhorn on a stack of problems ``C[k]``.

    With ``eps_scaling`` the regularization starts near ``max(C)`` and is
    halved per stage down to ``epsilon``, warm-starting the dual potentials;
    intermediate stages run at most ``stage_iters`` sweeps. This matters at
    small ``epsilon``, where a cold start can need 10^5+ sweeps.

    Returns ``(plans, iterations_used, converged)``; ``epsilon`` is a scalar
    or one value per problem. ``iterations_used`` counts sweeps over all
    stages.
    """
    C = np.asarray(C, dtype=float)
    B, n, m = C.shape
    eps = np.broadcast_to(np.asarray(epsilon, dtype=float), (B,)).reshape(B, 1, 1)
    with np.errstate(divide="ignore"):
        loga = np.log(a)[:, :, None]
        logb = np.log(b)[:, None, :]
    stages = 0
    if eps_scaling:
        ratio = float(np.max(C.reshape(B, -1).max(axis=1) / eps[:, 0, 0]))
        stages = max(0, int(np.ceil(np.log2(max(ratio, 1.0)))))
    # dual potentials in cost units, so they carry over between stages
    F = np.zeros((B, n, 1))
    G = np.zeros((B, 1, m))
    it = 0
    converged = False
    for k in range(stages, -1, -1):
        e = eps * 2.0 ** k
        Ce = C / e
        inner = 0
        while it < max_iters:
            it += 1
            inner += 1
            F = e * (loga - _lse(G / e - Ce, axis=2)[:, :, None])
            G = e * (logb - _lse(F / e - Ce, axis=1)[:, None, :])
            if inner % check_every == 0 or it == max_iters:
                P = np.exp((F + G) / e - Ce)
                if np.max(np.abs(P.sum(axis=2) - a)) < tol:
                    converged = k == 0
                    break
            if k > 0 and inner >= stage_iters:
                break
    P = round_to_marginals(np.exp((F + G) / eps - C / eps), a, b)
    return P, it, converged


def round_to_marginals(P, a, b):
    """Project a near-feasible plan onto the couplings of ``(a, b)``.

    Rows, then columns, are scaled down where they exceed their marginal and
    the leftover mass is added back as a rank-one correction (the rounding
    step of Altschuler, Weed and Rigollet, 2017). Works on stacks ``(B, n, m)``.
    The result is exactly feasible up to rounding, and moves the transport
    cost by at most ``2 max(C)`` times the L1 marginal violation of ``P``.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.minimum(np.where(P.sum(axis=2) > 0, a / P.sum(axis=2), 1.0), 1.0)
        P = P * x[:, :, None]
        y = np.minimum(np.where(P.sum(axis=1) > 0, b / P.sum(axis=1), 1.0), 1.0)
        P = P * y[:, None, :]
    er = a - P.sum(axis=2)
    ec = b - P.sum(axis=1)
    mass = er.sum(axis=1)
    safe = np.where(mass > 0, mass, 1.0)
    return P + np.where(mass > 0, 1.0, 0.0)[:, None, None] * er[:, :, None] * ec[:, None, :] / safe[:, None, None]


def _check_marginal(v, name):
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or np.any(v < 0) or abs(v.sum() - 1.0) > MARGINAL_TOL:
        raise ValueError(f"{name} must be a nonnegative vector summing to 1")
    return v


def sinkhorn(cost, a, b, epsilon: float, max_iters: int = 500, tol: float = 1e-6) -> TransportPlan:
    """Entropic OT plan between histograms ``a`` and ``b``.

    Stops when the row-marginal violation (columns are exact after each
    sweep) drops below ``tol`` or after ``max_iters`` sweeps; in the latter
    case ``converged`` is False and the caller decides what to do.
    """
    C = cost.entries if isinstance(cost, CostMatrix) else np.asarray(cost, dtype=float)
    a = _check_marginal(a, "row marginal")
    b = _check_marginal(b, "column marginal")
    if C.shape != (a.size, b.size):
        raise ValueError(f"cost shape {C.shape} does not match marginals ({a.size}, {b.size})")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    P, it, conv = sinkhorn_batch(C[None], a[None], b[None], epsilon, max_iters, tol)
    P = P[0]
    return TransportPlan(P, a, b, float(epsilon), it, conv, float(np.sum(P * C)))


def exact_ot_small(cost, a=None, b=None) -> float:
    """Exact OT value for ``n = m <= 8`` with uniform marginals.

    With uniform marginals the optimum is attained at a permutation
    (Birkhoff), so this enumerates all ``n!`` assignments.
    """
    C = cost.entries if isinstance(cost, CostMatrix) else np.asarray(cost, dtype=float)
    n, m = C.shape
    if n != m or n > 8 or n < 1:
        raise ValueError("exact_ot_small needs a square cost with n <= 8")
    for v in (a, b):
        if v is not None and not np.allclose(v, 1.0 / n, rtol=0, atol=1e-12):
            raise ValueError("exact_ot_small needs uniform marginals")
    perms = np.array(list(itertools.permutations(range(n))))
    totals = C[np.arange(n), perms].sum(axis=1)
    return float(totals.min() / n)


def auto_epsilon(C, rel=0.05):
    """``rel * median(cost)`` per problem, floored away from zero."""
    C = np.asarray(C)
    med = np.median(C.reshape(C.shape[0], -1), axis=1)
    return rel * np.maximum(med, 1e-12)


def cost_grads(zr: ProductPoint, zs: ProductPoint, P, g: GeometryParams):
    """Gradients of ``sum_ij P_ij C_ij`` with ``P`` held fixed.

    Returns Euclidean gradients for both point sets (per factor), the
    explicit partials with respect to ``|c_H|`` and ``c_S`` at fixed
    coordinates, and the per-factor transported costs (the partials with
    respect to the normalized weights).
    """
    w = g.weights
    rows = P.sum(axis=1)[:, None]
    cols = P.sum(axis=0)[:, None]
    a, b, c = factor_sq_distances(*_pairwise(zr, zs), g)
    dweights = np.array([np.sum(P * a), np.sum(P * b), np.sum(P * c)])

    ge_r = 2 * w[0] * (rows * zr.e - P @ zs.e)
    ge_s = 2 * w[0] * (cols * zs.e - P.T @ zr.e)

    gh_r = np.zeros_like(zr.h)
    gh_s = np.zeros_like(zs.h)
    dk = 0.0
    if zr.h.shape[1] and w[1] > 0:
        k = g.k_h
        x, y = zr.h, zs.h
        x2 = np.sum(x * x, axis=1)
        y2 = np.sum(y * y, axis=1)
        ax = 1.0 - k * x2
        ay = 1.0 - k * y2
        D = np.maximum(x2[:, None] + y2[None, :] - 2 * x @ y.T, 0.0)
        delta = 2 * k * D / (ax[:, None] * ay[None, :])
        acosh = arcosh1p(delta)
        root = np.sqrt(delta * (delta + 2.0))
        rho = np.where(delta > 1e-14, acosh / np.where(delta > 1e-14, root, 1.0), 1.0)
        M = w[1] * P * 8.0 * rho / (ax[:, None] * ay[None, :])
        MD = M * D
        gh_r = M.sum(axis=1)[:, None] * x - M @ y + (k / ax)[:, None] * MD.sum(axis=1)[:, None] * x
        gh_s = M.sum(axis=0)[:, None] * y - M.T @ x + (k / ay)[:, None] * MD.sum(axis=0)[:, None] * y
        dA = 2 * D / (ax[:, None] * ay[None, :]) * (
            1.0 + (k * x2 / ax)[:, None] + (k * y2 / ay)[None, :])
        dk = float(np.sum(w[1] * P * (-acosh ** 2 / k ** 2 + 2.0 * rho / k * dA)))

    gs_r = np.zeros_like(zr.s)
    gs_s = np.zeros_like(zs.s)
    dc = 0.0
    if zr.s.shape[1] and w[2] > 0:
        cs = g.c_s
        x, y = zr.s, zs.s
        theta = sphere_angle(x[:, None, :], y[None, :, :])
        sin = np.sin(theta)
        tau = np.where(theta > 1e-8, theta / np.maximum(sin, 1e-12), 1.0)
        T = w[2] * P * tau
        gs_r = -2.0 * T @ y
        gs_s = -2.0 * T.T @ x
        pdot = x @ y.T
        dc = float(np.sum(w[2] * P * (-theta ** 2 / cs ** 2 - 2.0 * tau * pdot / cs)))

    return (ge_r, gh_r, gs_r), (ge_s, gh_s, gs_s), dk, dc, dweights


@dataclass
class OTResult(GradResult):
    """OT loss, raw-input gradients and per-encoder Riemannian embedding gradients."""

    rgrads: List[ProductPoint] = field(default_factory=list)
    plans: List[List[TransportPlan]] = field(default_factory=list)


def _marginals(labels, idx, priors_by_class):
    lab = np.asarray(labels)[idx]
    out = np.empty(len(idx))
    for c in np.unique(lab):
        mask = lab == c
        out[mask] = priors_by_class[int(c)] / mask.sum()
    return out / out.sum()


def ot_loss_grad(
    real_x, real_y, syn_x, syn_y,
    encoders: Sequence[EncoderParams],
    g: GeometryParams,
    epsilon: Optional[float] = None,
    max_iters: int = 500,
    tol: float = 1e-6,
    per_class: bool = True,
    priors: Optional[Dict[int, float]] = None,
    eps_rel: float = 0.05,
) -> OTResult:
    """Class-conditional OT loss averaged over encoders, with gradients.

    ``epsilon=None`` uses ``eps_rel * median(cost)`` for each problem.
    ``per_class=False`` solves one label-free problem with prior-weighted
    marginals instead.
    """
    real_x = np.atleast_2d(np.asarray(real_x, dtype=float))
    syn_x = np.atleast_2d(np.asarray(syn_x, dtype=float))
    groups = class_partition(real_y, syn_y, priors)
    if per_class:
        problems = [(ir, is_, prior, None, None) for _, ir, is_, prior in groups]
    else:
        pri = {c: p for c, _, _, p in groups}
        ir = np.concatenate([gr[1] for gr in groups])
        is_ = np.concatenate([gr[2] for gr in groups])
        problems = [(ir, is_, 1.0, _marginals(real_y, ir, pri), _marginals(syn_y, is_, pri))]

    value = 0.0
    grad_x = np.zeros_like(syn_x)
    dk = dc = 0.0
    dweights = np.zeros(3)
    rgrads = []
    plans_all = []
    fe, fh, fs = None, None, None
    for p in encoders:
        enc_r = Encoding(real_x, p, g)
        enc_s = Encoding(syn_x, p, g)
        zr, zs = enc_r.point, enc_s.point
        if fe is None:
            fe, fh, fs = g.factors(*zr.dims)
        Gr = [np.zeros_like(zr.e), np.zeros_like(zr.h), np.zeros_like(zr.s)]
        Gs = [np.zeros_like(zs.e), np.zeros_like(zs.h), np.zeros_like(zs.s)]
        costs = [build_cost(zr[ir], zs[is_], g).entries for ir, is_, _, _, _ in problems]
        plans = _solve_all(problems, costs, epsilon, eps_rel, max_iters, tol)
        plans_all.append(plans)
        for (ir, is_, prior, _, _), C, tp in zip(problems, costs, plans):
            value += prior * tp.loss
            gr, gs, dk_i, dc_i, dw_i = cost_grads(zr[ir], zs[is_], tp.plan, g)
            for f in range(3):
                Gr[f][ir] += prior * gr[f]
                Gs[f][is_] += prior * gs[f]
            dk += prior * dk_i
            dc += prior * dc_i
            dweights += prior * dw_i
        rgrads.append(ProductPoint(
            fe.egrad2rgrad(zs.e, Gs[0]),
            fh.egrad2rgrad(zs.h, Gs[1]) if zs.h.shape[1] else Gs[1],
            fs.egrad2rgrad(zs.s, Gs[2]) if zs.s.shape[1] else Gs[2],
        ))
        gx_r, dk_r, dc_r = enc_r.backward(*Gr)
        gx_s, dk_s, dc_s = enc_s.backward(*Gs)
        grad_x += gx_s
        dk += dk_r + dk_s
        dc += dc_r + dc_s
    ne = len(encoders)
    ggeo = geometry_grad(g, dk / ne, dc / ne, dweights / ne)
    return OTResult(value / ne, grad_x / ne, ggeo, rgrads, plans_all)


def _solve_all(problems, costs, epsilon, eps_rel, max_iters, tol) -> List[TransportPlan]:
    """Solve all problems, batching those with equal shapes and uniform marginals."""
    out: List[Optional[TransportPlan]] = [None] * len(problems)
    by_shape: Dict[tuple, List[int]] = {}
    for i, ((ir, is_, _, a, b), C) in enumerate(zip(problems, costs)):
        if a is None:
            by_shape.setdefault(C.shape, []).append(i)
        else:
            eps = epsilon if epsilon is not None else float(auto_epsilon(C[None], eps_rel)[0])
            out[i] = sinkhorn(C, a, b, eps, max_iters, tol)
    for (n, m), idx in by_shape.items():
        Cs = np.stack([costs[i] for i in idx])
        a = np.full((len(idx), n), 1.0 / n)
        b = np.full((len(idx), m), 1.0 / m)
        eps = np.full(len(idx), epsilon) if epsilon is not None else auto_epsilon(Cs, eps_rel)
        P, it, conv = sinkhorn_batch(Cs, a, b, eps, max_iters, tol)
        for j, i in enumerate(idx):
            out[i] = TransportPlan(P[j], a[j], b[j], float(eps[j]), it, conv, float(np.sum(P[j] * Cs[j])))
    return out
