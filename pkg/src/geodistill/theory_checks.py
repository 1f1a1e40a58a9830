"""
Numerical checks of the geometric facts that motivate product spaces.

* arc-chord: on a sphere, ``(2/pi) d_geo <= d_chord <= d_geo`` with the lower
  constant attained by antipodal pairs;
* packing: Delta-separated sets in a hyperbolic ball grow exponentially in
  the radius, against polynomial growth in Euclidean space;
* tree distortion: a radial-angular embedding of a b-ary tree into the
  Poincare disk keeps bounded distortion as the depth grows, while an
  optimized Euclidean embedding does not;
* flat isometry: distances in a Euclidean factor are the ambient norm.

These test directions and shapes, never the existential constants.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from .data import atomic_write
from .manifolds import Factor, FactorKind, FactorPoint, factor_distance, max_ball_norm
from .optimizer import step_manifold
from .product_space import GeometryParams, ProductPoint


@dataclass
class LemmaReport:
    lemma_id: str
    samples: int
    worst_violation: float
    tolerance: float
    stats: Dict = field(default_factory=dict)
    inconclusive: bool = False

    @property
    def passed(self) -> bool:
        return (not self.inconclusive) and self.worst_violation <= self.tolerance

    def to_dict(self):
        return {
            "lemma_id": self.lemma_id,
            "samples": self.samples,
            "worst_violation": self.worst_violation,
            "tolerance": self.tolerance,
            "inconclusive": self.inconclusive,
            "pass": self.passed,
            "stats": self.stats,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=_jsonable) + "\n"

    def save(self, path):
        atomic_write(path, self.to_json())

    def summary(self) -> str:
        verdict = "inconclusive" if self.inconclusive else ("pass" if self.passed else "FAIL")
        return (f"{self.lemma_id}: {verdict} (worst violation {self.worst_violation:.3e}, "
                f"tolerance {self.tolerance:.1e}, {self.samples} samples)")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o))


# arc-chord ------------------------------------------------------------------

def arc_chord(theta, radius=1.0):
    """Closed forms ``(d_geo, d_chord)`` at central angle ``theta``."""
    theta = np.asarray(theta, dtype=float)
    return radius * theta, 2.0 * radius * np.sin(theta / 2.0)


def check_arc_chord(c_s: float = 1.0, samples: int = 100_000, seed: int = 0,
                    dim: int = 3, tol: float = 1e-12) -> LemmaReport:
    if not c_s > 0:
        raise ValueError("spherical curvature must be positive")
    if samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    fac = Factor(FactorKind.SPHERICAL, dim, c_s)
    r = fac.radius
    p = fac.proj(rng.standard_normal((samples, dim)))
    q = fac.proj(rng.standard_normal((samples, dim)))
    d_geo = factor_distance(FactorPoint(p, fac), FactorPoint(q, fac))
    d_chord = np.sqrt(np.sum((p - q) ** 2, axis=-1))
    # both bounds carry the radius, so compare on the unit scale
    low = (2.0 / np.pi) * d_geo / r - d_chord / r
    high = d_chord / r - d_geo / r
    worst = float(max(low.max(), high.max()))
    ratio = d_chord / np.where(d_geo > 0, d_geo, 1.0)

    g_pi, c_pi = arc_chord(np.pi, r)
    antipodal_gap = abs(c_pi / g_pi - 2.0 / np.pi)
    g0, c0 = arc_chord(1e-6, r)
    small_gap = abs(c0 / g0 - 1.0)
    stats = {
        "radius": r,
        "ratio_min": float(ratio[d_geo > 0].min()),
        "ratio_max": float(ratio[d_geo > 0].max()),
        "lower_violation": float(low.max()),
        "upper_violation": float(high.max()),
        "antipodal_ratio": float(c_pi / g_pi),
        "antipodal_gap": float(antipodal_gap),
        "small_angle_gap": float(small_gap),
    }
    worst = max(worst, antipodal_gap, small_gap)
    return LemmaReport("arc_chord", samples, worst, tol, stats)


# packing --------------------------------------------------------------------

def sample_hyperbolic_disk(R: float, n: int, rng) -> np.ndarray:
    """``n`` uniform points (hyperbolic area) in the radius-R disk, curvature -1.

    Polar rejection sampling with the area element ``sinh(r) dr dtheta``;
    returned in Poincare coordinates.
    """
    out = []
    have = 0
    smax = math.sinh(R)
    while have < n:
        m = max(64, 2 * (n - have) * max(1, int(R)))
        r = rng.uniform(0.0, R, m)
        keep = r[rng.uniform(0.0, smax, m) < np.sinh(r)]
        out.append(keep)
        have += len(keep)
    r = np.concatenate(out)[:n]
    phi = rng.uniform(0.0, 2 * np.pi, n)
    rho = np.tanh(r / 2.0)
    return np.stack([rho * np.cos(phi), rho * np.sin(phi)], axis=1)


def sample_euclidean_ball(R: float, n: int, dim: int, rng) -> np.ndarray:
    x = rng.standard_normal((n, dim))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x * (R * rng.uniform(0.0, 1.0, (n, 1)) ** (1.0 / dim))


def greedy_packing(points: np.ndarray, delta: float, dist_fn) -> int:
    """Size of the greedy Delta-separated subset, scanning in the given order."""
    bank = np.empty((len(points), points.shape[1]))
    bank[0] = points[0]
    k = 1
    for p in points[1:]:
        if np.all(dist_fn(bank[:k], p) >= delta):
            bank[k] = p
            k += 1
    return k


def _candidate_count(area_ratio):
    return int(min(60_000, max(2_000, 40 * area_ratio)))


def check_packing_growth(radii: Sequence[float] = (2.0, 4.0, 6.0), delta: float = 1.0,
                         dim: int = 2, seed: int = 0) -> LemmaReport:
    """Greedy packing counts in hyperbolic and Euclidean balls.

    Passes when, between consecutive radii, the increase of ``log N_H``
    strictly exceeds the increase of ``log N_E``.
    """
    radii = [float(r) for r in radii]
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be increasing")
    if not delta > 0:
        raise ValueError("delta must be positive")
    if dim != 2:
        raise ValueError("hyperbolic sampling is implemented for the disk (dim=2)")
    ss = np.random.SeedSequence(seed)
    streams = [np.random.default_rng(s) for s in ss.spawn(2 * len(radii))]
    hfac = Factor(FactorKind.HYPERBOLIC, 2, -1.0)
    rho_max = max_ball_norm(1.0)
    n_h, n_e, cands = [], [], []
    for i, R in enumerate(radii):
        if math.tanh(R / 2.0) > rho_max:
            raise ValueError(f"radius {R} is past the representable part of the ball")
        area_h = 2 * np.pi * (math.cosh(R) - 1.0)
        m = _candidate_count(area_h / (delta * delta))
        ph = sample_hyperbolic_disk(R, m, streams[2 * i])
        pe = sample_euclidean_ball(R, m, dim, streams[2 * i + 1])
        n_h.append(greedy_packing(ph, delta, hfac.dist))
        n_e.append(greedy_packing(pe, delta, lambda a, b: np.sqrt(np.sum((a - b) ** 2, axis=-1))))
        cands.append(m)
    lh = np.log(n_h)
    le = np.log(n_e)
    inc_h = np.diff(lh)
    inc_e = np.diff(le)
    lr = np.log(radii)
    stats = {
        "radii": radii,
        "delta": delta,
        "candidates": cands,
        "count_hyperbolic": n_h,
        "count_euclidean": n_e,
        "log_increment_hyperbolic": inc_h.tolist(),
        "log_increment_euclidean": inc_e.tolist(),
        "slope_vs_R_hyperbolic": (inc_h / np.diff(radii)).tolist(),
        "slope_vs_logR_hyperbolic": (inc_h / np.diff(lr)).tolist(),
        "slope_vs_logR_euclidean": (inc_e / np.diff(lr)).tolist(),
    }
    worst = float(np.max(inc_e - inc_h)) if len(radii) > 1 else 0.0
    inconclusive = min(n_h[0], n_e[0]) < 2 or len(radii) < 2
    return LemmaReport("packing", int(sum(cands)), worst, 0.0, stats, inconclusive)


# trees ------------------------------------------------------------------------

def tree_parents(b: int, h: int) -> np.ndarray:
    """Parent index of each node of the complete b-ary tree (root first, BFS)."""
    parents = [-1]
    level = [0]
    for _ in range(h):
        nxt = []
        for v in level:
            for _ in range(b):
                parents.append(v)
                nxt.append(len(parents) - 1)
        level = nxt
    return np.array(parents)


def tree_metric(parents: np.ndarray) -> np.ndarray:
    n = len(parents)
    depth = np.zeros(n, dtype=int)
    for v in range(1, n):
        depth[v] = depth[parents[v]] + 1
    anc = [[v] for v in range(n)]
    for v in range(1, n):
        anc[v] = anc[parents[v]] + [v]
    D = np.zeros((n, n))
    for u in range(n):
        for v in range(u + 1, n):
            a, c = anc[u], anc[v]
            common = 0
            for x, y in zip(a, c):
                if x != y:
                    break
                common += 1
            D[u, v] = D[v, u] = depth[u] + depth[v] - 2 * (common - 1)
    return D


def distortion(D_emb: np.ndarray, D_tree: np.ndarray) -> float:
    """Bi-Lipschitz distortion ``max(ratio) / min(ratio)`` over node pairs."""
    iu = np.triu_indices_from(D_tree, k=1)
    ratio = D_emb[iu] / D_tree[iu]
    if np.any(ratio <= 0):
        return np.inf
    return float(ratio.max() / ratio.min())


def sarkar_disk_embedding(b: int, h: int, scale: float = None, phi0: float = np.pi):
    """Radial-angular embedding of the complete b-ary tree into the Poincare disk.

    Depth-t nodes sit at hyperbolic radius ``scale * t`` (curvature -1). A
    node at depth l owns an angular cone of half-width ``phi0 * exp(-scale * l)``
    and its children get equally spaced, disjoint sub-cones.
    """
    scale = math.log(2 * b) if scale is None else scale
    if scale < math.log(2 * b):
        raise ValueError("scale must be at least log(2b) for the cones to nest")
    if math.tanh(scale * h / 2.0) > max_ball_norm(1.0):
        raise ValueError(f"depth {h} with scale {scale:.3f} reaches past the clamped ball")
    parents = tree_parents(b, h)
    n = len(parents)
    angle = np.zeros(n)
    depth = np.zeros(n, dtype=int)
    child_rank = {}
    for v in range(1, n):
        p = parents[v]
        j = child_rank.get(p, 0)
        child_rank[p] = j + 1
        depth[v] = depth[p] + 1
        half = phi0 * math.exp(-scale * depth[p])
        angle[v] = angle[p] + half * (-1.0 + (2 * j + 1) / b)
    rho = np.tanh(scale * depth / 2.0)
    return np.stack([rho * np.cos(angle), rho * np.sin(angle)], axis=1), parents


def _pairwise(fac: Factor, X):
    return np.stack([fac.dist(X, X[i]) for i in range(len(X))])


def euclidean_tree_embedding(D_tree: np.ndarray, dim: int = 2, restarts: int = 10,
                             iters: int = 600, lr: float = 0.5, seed: int = 0):
    """Weighted-stress Euclidean embedding by gradient steps on a flat factor.

    Minimizes ``sum_{u<v} (|x_u - x_v| - d_uv)^2 / d_uv^2`` from ``restarts``
    random starts and keeps the embedding with the lowest distortion. Each
    node's gradient is divided by its total pair weight (the diagonal of the
    majorizing quadratic), which makes ``lr = 1`` a Jacobi majorization step.
    Returns ``(X, distortion, diagnostics)``.
    """
    n = len(D_tree)
    rng = np.random.default_rng(seed)
    g = GeometryParams.from_curvatures(fixed_weights=(1.0, 0.0, 0.0))
    fac = Factor(FactorKind.EUCLIDEAN, dim)
    W = np.zeros_like(D_tree)
    off = D_tree > 0
    W[off] = 1.0 / D_tree[off] ** 2
    precond = 2.0 * W.sum(axis=1, keepdims=True)
    best = (None, np.inf)
    finals = []
    empty = np.zeros((n, 0))
    for _ in range(restarts):
        X = rng.standard_normal((n, dim)) * D_tree.max() / 2.0
        pt = ProductPoint(X, empty, empty)
        stress = prev = np.inf
        for _ in range(iters):
            diff = pt.e[:, None, :] - pt.e[None, :, :]
            d = np.sqrt(np.sum(diff ** 2, axis=-1))
            np.fill_diagonal(d, 1.0)
            resid = d - D_tree
            np.fill_diagonal(resid, 0.0)
            stress = float(np.sum(W * resid ** 2) / 2.0)
            G = 2.0 * np.sum((W * resid / d)[:, :, None] * diff, axis=1) / precond
            pt = step_manifold(pt, ProductPoint(G, empty, empty), lr, g)
            if abs(prev - stress) <= 1e-12 * max(1.0, stress):
                break
            prev = stress
        finals.append(stress)
        dist = distortion(_pairwise(fac, pt.e), D_tree)
        if dist < best[1]:
            best = (pt.e, dist)
    converged = bool(np.all(np.isfinite(finals)))
    return best[0], best[1], {"final_stress": finals, "converged": converged}


def check_tree_distortion(b: int = 2, h_list: Sequence[int] = (3, 5, 7), seed: int = 0,
                          band: float = 2.0, restarts: int = 10, euclid_dim: int = 2) -> LemmaReport:
    """Hyperbolic distortion stays in a constant band; Euclidean does not shrink.

    ``worst_violation`` is the larger of ``max/min(hyperbolic) - band`` and the
    largest drop of Euclidean distortion between consecutive depths.
    """
    if b < 2:
        raise ValueError("branching must be at least 2")
    h_list = [int(h) for h in h_list]
    if any(h < 1 for h in h_list):
        raise ValueError("depths must be >= 1")
    hfac = Factor(FactorKind.HYPERBOLIC, 2, -1.0)
    d_hyp, d_euc, nodes, diags = [], [], [], []
    for i, h in enumerate(h_list):
        X, parents = sarkar_disk_embedding(b, h)
        T = tree_metric(parents)
        d_hyp.append(distortion(_pairwise(hfac, X), T))
        _, de, diag = euclidean_tree_embedding(T, euclid_dim, restarts, seed=seed + i)
        d_euc.append(de)
        diags.append(diag)
        nodes.append(len(parents))
    band_ratio = max(d_hyp) / min(d_hyp)
    drops = [a - c for a, c in zip(d_euc, d_euc[1:])]
    worst = max([band_ratio - band] + drops)
    stats = {
        "branching": b,
        "depths": h_list,
        "nodes": nodes,
        "hyperbolic_distortion": d_hyp,
        "hyperbolic_band_ratio": band_ratio,
        "euclidean_distortion": d_euc,
        "euclidean_final_stress": [d["final_stress"] for d in diags],
    }
    inconclusive = not all(d["converged"] for d in diags)
    return LemmaReport("tree", int(sum(n * (n - 1) // 2 for n in nodes)), float(worst), 0.0,
                       stats, inconclusive)


# flat -------------------------------------------------------------------------

def check_flat_isometry(samples: int = 10_000, dim: int = 8, seed: int = 0,
                        tol: float = 1e-15) -> LemmaReport:
    if samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    fac = Factor(FactorKind.EUCLIDEAN, dim)
    x = rng.standard_normal((samples, dim))
    y = rng.standard_normal((samples, dim))
    d = factor_distance(FactorPoint(x, fac), FactorPoint(y, fac))
    ref = np.linalg.norm(x - y, axis=-1)
    err = np.abs(d - ref)
    return LemmaReport("flat", samples, float(err.max()), tol,
                       {"dim": dim, "mean_error": float(err.mean())})


LEMMAS = {
    "arc_chord": check_arc_chord,
    "packing": check_packing_growth,
    "tree": check_tree_distortion,
    "flat": check_flat_isometry,
}
