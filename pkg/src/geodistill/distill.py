"""
The distillation loop.

Each iteration draws a per-class real minibatch, embeds real and synthetic
samples with freshly sampled random encoders, evaluates

    L_total = L_DM + lambda_ot * L_OT + lambda_curv * L_curv

and takes one momentum step on the synthetic inputs and one gradient step on
the curvature/weight logits.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, List, Optional

import numpy as np

from .data import LabeledSet, atomic_write
from .encoder import Encoding, sample_encoders
from .errors import NonFiniteLossError
from .matching import GradResult, MatchObjective, dm_loss_grad, geometry_grad
from .optimizer import OptimState, step_scalars, step_synthetic
from .product_space import GeometryParams, curvature_loss_grad
from .transport import ot_loss_grad

GEOMETRIES = ("product", "euclid", "hyper", "sphere")
METRIC_KEYS = ("iter", "l_dm", "l_ot", "l_curv", "l_total", "c_h", "c_s", "w_e", "w_h", "w_s")


@dataclass(frozen=True)
class OTConfig:
    epsilon: Optional[float] = None
    eps_rel: float = 0.05
    max_iters: int = 500
    tol: float = 1e-6
    per_class: bool = True


@dataclass(frozen=True)
class EncoderConfig:
    d_E: int = 8
    d_H: int = 8
    d_S: int = 8
    num_encoders: int = 1
    resample_every: int = 1
    jitter_sigma: float = 0.0


@dataclass(frozen=True)
class OptimConfig:
    lr_syn: float = 0.01
    lr_scalars: float = 0.001
    momentum: float = 0.5


@dataclass(frozen=True)
class DistillConfig:
    ipc: int = 10
    iters: int = 2000
    batch_real: int = 64
    lambda_ot: float = 2.0
    lambda_curv: float = 1.0
    lambda_H: float = 1.0
    lambda_S: float = 1.0
    objective: MatchObjective = field(default_factory=MatchObjective)
    ot: OTConfig = field(default_factory=OTConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    seed: int = 0
    init: str = "real"
    geometry: str = "product"
    learn_geometry: bool = True
    random_curv: bool = False
    weights_in_features: bool = False

    def __post_init__(self):
        if self.ipc < 1 or self.iters < 1 or self.batch_real < 1:
            raise ValueError("ipc, iters and batch_real must be >= 1")
        for name in ("lambda_ot", "lambda_curv", "lambda_H", "lambda_S"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.init not in ("real", "gaussian"):
            raise ValueError("init must be 'real' or 'gaussian'")
        if self.geometry not in GEOMETRIES:
            raise ValueError(f"geometry must be one of {GEOMETRIES}")
        if self.encoder.resample_every < 1 or self.encoder.num_encoders < 1:
            raise ValueError("resample_every and num_encoders must be >= 1")

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "DistillConfig":
        return _from_dict(cls, d, "config")

    def override(self, **kv) -> "DistillConfig":
        """Copy with dotted-key overrides, e.g. ``override(**{"ot.epsilon": 0.1})``."""
        d = self.to_dict()
        for key, value in kv.items():
            parts = key.split(".")
            target = d
            for p in parts[:-1]:
                if not isinstance(target.get(p), dict):
                    raise KeyError(f"unknown config key {key!r}")
                target = target[p]
            if parts[-1] not in target:
                raise KeyError(f"unknown config key {key!r}")
            target[parts[-1]] = value
        return DistillConfig.from_dict(d)


_NESTED = {"objective": MatchObjective, "ot": OTConfig, "encoder": EncoderConfig, "optim": OptimConfig}


def _from_dict(cls, d, where):
    if not isinstance(d, dict):
        raise TypeError(f"{where} must be a mapping")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - names)
    if unknown:
        raise KeyError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    kw = {}
    for k, v in d.items():
        if cls is DistillConfig and k in _NESTED:
            v = _from_dict(_NESTED[k], v, f"{where}.{k}")
        kw[k] = v
    return cls(**kw)


def factor_layout(cfg: DistillConfig):
    """Factor dimensions and fixed weights for the configured geometry."""
    e = cfg.encoder
    total = e.d_E + e.d_H + e.d_S
    if cfg.geometry == "product":
        return (e.d_E, e.d_H, e.d_S), None
    if cfg.geometry == "euclid":
        return (total, 0, 0), (1.0, 0.0, 0.0)
    if cfg.geometry == "hyper":
        return (0, total, 0), (0.0, 1.0, 0.0)
    return (0, 0, total), (0.0, 0.0, 1.0)


def initial_geometry(cfg: DistillConfig, rng=None) -> GeometryParams:
    _, fixed = factor_layout(cfg)
    if cfg.random_curv:
        rng = rng or np.random.default_rng(cfg.seed)
        c_h, c_s = -rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5)
    else:
        c_h, c_s = -1.0, 1.0
    return GeometryParams.from_curvatures(c_h, c_s, (0.0, 0.0, 0.0), fixed)


def init_synthetic(dataset: LabeledSet, cfg: DistillConfig, rng=None) -> LabeledSet:
    """``ipc`` synthetic samples per class, ordered by class."""
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    xs, ys = [], []
    for c in range(dataset.class_count):
        idx = np.flatnonzero(dataset.labels == c)
        if cfg.init == "real":
            if len(idx) < cfg.ipc:
                raise ValueError(
                    f"class {c} has {len(idx)} samples, fewer than ipc={cfg.ipc}")
            xs.append(dataset.points[rng.choice(idx, size=cfg.ipc, replace=False)])
        else:
            if len(idx) == 0:
                raise ValueError(f"class {c} has no samples to take a mean from")
            mu = dataset.points[idx].mean(axis=0)
            xs.append(mu + rng.standard_normal((cfg.ipc, dataset.dim)))
        ys.append(np.full(cfg.ipc, c))
    return LabeledSet(np.concatenate(xs), np.concatenate(ys), dataset.class_count)


def curvature_term(real_x, syn_x, encoders, g: GeometryParams, lambda_h, lambda_s) -> GradResult:
    """Radius penalty over real and synthetic embeddings, averaged over encoders."""
    value = 0.0
    grad_x = np.zeros_like(syn_x)
    dk = dc = 0.0
    n_r = real_x.shape[0]
    for p in encoders:
        enc_r = Encoding(real_x, p, g)
        enc_s = Encoding(syn_x, p, g)
        h = np.concatenate([enc_r.h, enc_s.h])
        v = np.concatenate([enc_r.v, enc_s.v])
        val, gh, gv, dk_r, dc_r = curvature_loss_grad(h, v, g, lambda_h, lambda_s)
        value += val
        dk += dk_r
        dc += dc_r
        _, dk_a, dc_a = enc_r.backward(gh=gh[:n_r], gv=gv[:n_r])
        gx, dk_b, dc_b = enc_s.backward(gh=gh[n_r:], gv=gv[n_r:])
        grad_x += gx
        dk += dk_a + dk_b
        dc += dc_a + dc_b
    ne = len(encoders)
    return GradResult(value / ne, grad_x / ne, geometry_grad(g, dk / ne, dc / ne))


@dataclass
class DistillReport:
    records: List[Dict[str, float]]
    synthetic: LabeledSet
    geometry: GeometryParams
    seconds: float
    config: DistillConfig

    def metrics_jsonl(self) -> str:
        return "".join(json.dumps({k: r[k] for k in METRIC_KEYS}) + "\n" for r in self.records)

    def write_metrics(self, path):
        atomic_write(path, self.metrics_jsonl())


def _zero(syn_x):
    return GradResult(0.0, np.zeros_like(syn_x), np.zeros(5))


def _check_finite(term, value, it):
    if not math.isfinite(value):
        raise NonFiniteLossError(f"{term} became non-finite ({value}) at iteration {it}")


def run_distill(dataset: LabeledSet, cfg: DistillConfig, init: Optional[LabeledSet] = None,
                callback=None) -> DistillReport:
    """Distill ``dataset`` into ``cfg.ipc`` samples per class.

    ``init`` replaces the configured initialization. Deterministic given
    ``cfg.seed``.
    """
    t0 = time.perf_counter()
    dims, _ = factor_layout(cfg)
    ss = np.random.SeedSequence(cfg.seed)
    init_rng, batch_rng, jitter_rng, curv_rng = [np.random.default_rng(s) for s in ss.spawn(4)]
    enc_seed = int(ss.generate_state(1, dtype=np.uint32)[0])

    syn = init if init is not None else init_synthetic(dataset, cfg, init_rng)
    if syn.class_count != dataset.class_count or syn.dim != dataset.dim:
        raise ValueError("synthetic set does not match the dataset layout")
    syn_x = syn.points.copy()
    syn_y = syn.labels.copy()
    priors = dataset.priors()
    g = initial_geometry(cfg, curv_rng)
    oc = cfg.optim
    st = OptimState(oc.lr_syn, oc.lr_scalars, oc.momentum)
    ec = cfg.encoder
    by_class = [np.flatnonzero(dataset.labels == c) for c in range(dataset.class_count)]
    by_class = [idx for idx in by_class if len(idx)]

    records = []
    encoders = None
    for it in range(cfg.iters):
        if it % ec.resample_every == 0:
            r = it // ec.resample_every
            encoders = sample_encoders(ec.num_encoders, enc_seed + r * ec.num_encoders,
                                       (dataset.dim, *dims))
        pick = np.concatenate([
            batch_rng.choice(idx, size=min(cfg.batch_real, len(idx)), replace=False)
            for idx in by_class
        ])
        xr = dataset.points[pick]
        yr = dataset.labels[pick]
        xs = syn_x
        if ec.jitter_sigma > 0:
            xr = xr + ec.jitter_sigma * jitter_rng.standard_normal(xr.shape)
            xs = xs + ec.jitter_sigma * jitter_rng.standard_normal(xs.shape)

        dm = dm_loss_grad(xr, yr, xs, syn_y, encoders, g, cfg.objective, priors,
                          cfg.weights_in_features)
        _check_finite("L_DM", dm.value, it)
        if cfg.lambda_ot > 0:
            ot = ot_loss_grad(xr, yr, xs, syn_y, encoders, g, cfg.ot.epsilon, cfg.ot.max_iters,
                              cfg.ot.tol, cfg.ot.per_class, priors, cfg.ot.eps_rel)
            _check_finite("L_OT", ot.value, it)
        else:
            ot = _zero(syn_x)
        if cfg.lambda_curv > 0:
            cv = curvature_term(xr, xs, encoders, g, cfg.lambda_H, cfg.lambda_S)
            _check_finite("L_curv", cv.value, it)
        else:
            cv = _zero(syn_x)

        total = dm.value + cfg.lambda_ot * ot.value + cfg.lambda_curv * cv.value
        _check_finite("L_total", total, it)
        w = g.weights
        rec = {
            "iter": it, "l_dm": dm.value, "l_ot": ot.value, "l_curv": cv.value, "l_total": total,
            "c_h": g.c_h, "c_s": g.c_s, "w_e": float(w[0]), "w_h": float(w[1]), "w_s": float(w[2]),
        }
        records.append(rec)
        if callback is not None:
            callback(rec)

        grad_x = dm.grad_x + cfg.lambda_ot * ot.grad_x + cfg.lambda_curv * cv.grad_x
        grad_g = dm.grad_geometry + cfg.lambda_ot * ot.grad_geometry + cfg.lambda_curv * cv.grad_geometry
        syn_x, st = step_synthetic(syn_x, grad_x, st)
        if not np.all(np.isfinite(syn_x)):
            raise NonFiniteLossError(f"synthetic data became non-finite at iteration {it}")
        if cfg.learn_geometry:
            g = step_scalars(g, grad_g, st)

    out = LabeledSet(syn_x, syn_y, dataset.class_count)
    return DistillReport(records, out, g, time.perf_counter() - t0, cfg)
