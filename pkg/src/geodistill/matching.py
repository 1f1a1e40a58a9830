"""
Distribution-matching objectives over concatenated product features.

Three discrepancies are available: distance between mean embeddings,
a sum of centered-moment discrepancies, and a random-frequency
characteristic-function discrepancy (real and imaginary parts, i.e.
amplitude and phase). Gradients are closed form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .encoder import EncoderParams, Encoding
from .product_space import GeometryParams, concat_features, sigmoid

OBJECTIVE_KINDS = ("mean", "moments", "charfn")


@dataclass(frozen=True)
class MatchObjective:
    kind: str = "mean"
    order: int = 2
    num_freqs: int = 64
    freq_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in OBJECTIVE_KINDS:
            raise ValueError(f"unknown objective {self.kind!r}; expected one of {OBJECTIVE_KINDS}")
        if self.kind == "moments" and not 2 <= self.order <= 4:
            raise ValueError("moment order must be in [2, 4]")
        if self.kind == "charfn" and self.num_freqs < 1:
            raise ValueError("need at least one frequency")

    def frequencies(self, dim: int) -> np.ndarray:
        rng = np.random.default_rng(self.seed)
        return rng.normal(0.0, self.freq_scale, size=(self.num_freqs, dim))

    @classmethod
    def mean(cls):
        return cls("mean")

    @classmethod
    def moments(cls, order=2):
        return cls("moments", order=order)

    @classmethod
    def charfn(cls, num_freqs=64, freq_scale=1.0, seed=0):
        return cls("charfn", num_freqs=num_freqs, freq_scale=freq_scale, seed=seed)


def _check_feats(real, syn):
    real = np.atleast_2d(np.asarray(real, dtype=float))
    syn = np.atleast_2d(np.asarray(syn, dtype=float))
    if real.shape[0] == 0 or syn.shape[0] == 0:
        raise ValueError("feature sets must be nonempty")
    if real.shape[1] != syn.shape[1]:
        raise ValueError(f"feature dimensions differ: {real.shape[1]} vs {syn.shape[1]}")
    return real, syn


def _moment_stats(X, order):
    mu = X.mean(axis=0)
    C = X - mu
    stats = [mu] + [np.mean(C ** j, axis=0) for j in range(2, order + 1)]
    return stats, C


def _moment_grad(C, j, upstream):
    # d/dX_i of mean((X - mu)^j) contracted with upstream
    m = C.shape[0]
    if j == 1:
        return np.broadcast_to(upstream / m, C.shape)
    P = C ** (j - 1)
    return (j / m) * (P - P.mean(axis=0)) * upstream


def dm_value_and_grads(real, syn, obj: MatchObjective):
    """Discrepancy value and its gradients w.r.t. both feature sets."""
    real, syn = _check_feats(real, syn)
    n, m = real.shape[0], syn.shape[0]
    if obj.kind == "mean":
        diff = real.mean(axis=0) - syn.mean(axis=0)
        val = float(np.linalg.norm(diff))
        if val == 0.0:
            return 0.0, np.zeros_like(real), np.zeros_like(syn)
        u = diff / val
        return val, np.broadcast_to(u / n, real.shape).copy(), np.broadcast_to(-u / m, syn.shape).copy()

    if obj.kind == "moments":
        sr, Cr = _moment_stats(real, obj.order)
        ss, Cs = _moment_stats(syn, obj.order)
        val = 0.0
        gr = np.zeros_like(real)
        gs = np.zeros_like(syn)
        for j in range(1, obj.order + 1):
            diff = sr[j - 1] - ss[j - 1]
            nd = float(np.linalg.norm(diff))
            val += nd
            if nd == 0.0:
                continue
            u = diff / nd
            gr += _moment_grad(Cr, j, u)
            gs += _moment_grad(Cs, j, -u)
        return val, gr, gs

    T = obj.frequencies(real.shape[1])
    F = T.shape[0]
    pr = real @ T.T
    ps = syn @ T.T
    dC = np.cos(pr).mean(axis=0) - np.cos(ps).mean(axis=0)
    dS = np.sin(pr).mean(axis=0) - np.sin(ps).mean(axis=0)
    val = float(np.mean(dC ** 2 + dS ** 2))
    # d/dF_i of the syn (resp. real) term, contracted with frequencies
    coef_s = (2.0 / (m * F)) * (dC * np.sin(ps) - dS * np.cos(ps))
    coef_r = (2.0 / (n * F)) * (-dC * np.sin(pr) + dS * np.cos(pr))
    return val, coef_r @ T, coef_s @ T


def dm_loss(real_feats, syn_feats, obj: MatchObjective) -> float:
    return dm_value_and_grads(real_feats, syn_feats, obj)[0]


def class_partition(real_y, syn_y, priors: Optional[Dict[int, float]] = None):
    """Index sets per synthetic class and normalized class weights.

    Weights are the real class priors restricted to the classes present in
    the synthetic batch.
    """
    real_y = np.asarray(real_y)
    syn_y = np.asarray(syn_y)
    classes = np.unique(syn_y)
    real_classes = set(np.unique(real_y).tolist())
    missing = [int(c) for c in classes if int(c) not in real_classes]
    if missing:
        raise ValueError(f"synthetic classes {missing} have no real samples")
    if priors is None:
        counts = {c: np.sum(real_y == c) for c in classes}
        total = sum(counts.values())
        w = {int(c): counts[c] / total for c in classes}
    else:
        w = {int(c): float(priors[int(c)]) for c in classes}
    z = sum(w.values())
    groups = []
    for c in classes:
        groups.append((int(c), np.flatnonzero(real_y == c), np.flatnonzero(syn_y == c), w[int(c)] / z))
    return groups


@dataclass
class GradResult:
    """Loss value with gradients for synthetic inputs and geometry logits."""

    value: float
    grad_x: np.ndarray
    grad_geometry: np.ndarray


def geometry_grad(g: GeometryParams, dk_h: float, dc_s: float, dweights=None) -> np.ndarray:
    """Chain partials w.r.t. ``(|c_H|, c_S, weights)`` to the logit vector."""
    out = np.zeros(5)
    out[0] = dk_h * sigmoid(g.theta_h)
    out[1] = dc_s * sigmoid(g.theta_s)
    if dweights is not None and g.fixed_weights is None:
        w = g.weights
        dw = np.asarray(dweights, dtype=float)
        out[2:] = w * (dw - np.dot(w, dw))
    return out


def _split_blocks(G, dims):
    d_e, d_h, _ = dims
    return G[:, :d_e], G[:, d_e:d_e + d_h], G[:, d_e + d_h:]


def dm_loss_grad(
    real_x, real_y, syn_x, syn_y,
    encoders: Sequence[EncoderParams],
    g: GeometryParams,
    obj: MatchObjective,
    priors: Optional[Dict[int, float]] = None,
    weights_in_features: bool = False,
) -> GradResult:
    """Class-conditional matching loss averaged over encoders, with gradients.

    The loss for each class compares the concatenated product features of
    the real and synthetic samples of that class; classes are combined with
    the real class priors.
    """
    real_x = np.atleast_2d(np.asarray(real_x, dtype=float))
    syn_x = np.atleast_2d(np.asarray(syn_x, dtype=float))
    groups = class_partition(real_y, syn_y, priors)
    w = g.weights
    sw = np.sqrt(w)
    grad_x = np.zeros_like(syn_x)
    dk = dc = 0.0
    dweights = np.zeros(3)
    value = 0.0
    for p in encoders:
        enc_r = Encoding(real_x, p, g)
        enc_s = Encoding(syn_x, p, g)
        zr, zs = enc_r.point, enc_s.point
        Fr = concat_features(zr, w if weights_in_features else None)
        Fs = concat_features(zs, w if weights_in_features else None)
        Gr = np.zeros_like(Fr)
        Gs = np.zeros_like(Fs)
        for _, ir, is_, prior in groups:
            val, gr, gs = dm_value_and_grads(Fr[ir], Fs[is_], obj)
            value += prior * val
            Gr[ir] += prior * gr
            Gs[is_] += prior * gs
        dims = zr.dims
        blocks_r = _split_blocks(Gr, dims)
        blocks_s = _split_blocks(Gs, dims)
        if weights_in_features:
            for b, (zb_r, zb_s) in enumerate(zip((zr.e, zr.h, zr.s), (zs.e, zs.h, zs.s))):
                if sw[b] > 0:
                    dweights[b] += (np.sum(blocks_r[b] * zb_r) + np.sum(blocks_s[b] * zb_s)) / (2.0 * sw[b])
            blocks_r = tuple(sw[b] * blocks_r[b] for b in range(3))
            blocks_s = tuple(sw[b] * blocks_s[b] for b in range(3))
        gx_r, dk_r, dc_r = enc_r.backward(*blocks_r)
        gx_s, dk_s, dc_s = enc_s.backward(*blocks_s)
        grad_x += gx_s
        dk += dk_r + dk_s
        dc += dc_r + dc_s
    ne = len(encoders)
    ggeo = geometry_grad(g, dk / ne, dc / ne, dweights / ne if weights_in_features else None)
    return GradResult(value / ne, grad_x / ne, ggeo)
