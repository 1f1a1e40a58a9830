"""
Downstream evaluation of distilled sets and the geometry comparison harness.

Both classifiers are trained on the (small) distilled set and scored on held
out real data.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, replace
from typing import Dict, List, Sequence

import numpy as np

from .data import LabeledSet, atomic_write

GEOMETRY_NAMES = {
    "product": "ProductEHS",
    "euclid": "EuclidOnly",
    "hyper": "HyperOnly",
    "sphere": "SphereOnly",
}


@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    per_class_accuracy: np.ndarray
    train_size: int
    test_size: int
    classifier: str
    seed: int = 0

    def to_dict(self):
        return {
            "accuracy": self.accuracy,
            "per_class_accuracy": [float(a) for a in self.per_class_accuracy],
            "train_size": self.train_size,
            "test_size": self.test_size,
            "classifier": self.classifier,
            "seed": self.seed,
        }


def _check_pair(train: LabeledSet, test: LabeledSet):
    if train.dim != test.dim:
        raise ValueError(f"train has {train.dim} features, test has {test.dim}")
    present = set(np.unique(train.labels).tolist())
    need = set(np.unique(test.labels).tolist())
    absent = sorted(need - present)
    if absent:
        raise ValueError(f"classes {absent} appear in test but not in train")


def _result(pred, test: LabeledSet, train_size, classifier, seed):
    C = max(test.class_count, int(test.labels.max()) + 1)
    correct = pred == test.labels
    per_class = np.full(C, np.nan)
    for c in range(C):
        mask = test.labels == c
        if mask.any():
            per_class[c] = correct[mask].mean()
    return EvalResult(float(correct.mean()), per_class, train_size, len(test), classifier, seed)


def class_means(ds: LabeledSet):
    classes = np.unique(ds.labels)
    return classes, np.stack([ds.points[ds.labels == c].mean(axis=0) for c in classes])


def eval_ncm(train: LabeledSet, test: LabeledSet) -> EvalResult:
    """Nearest-class-mean accuracy (Euclidean, raw input space)."""
    _check_pair(train, test)
    classes, mu = class_means(train)
    d2 = (
        np.sum(test.points ** 2, axis=1, keepdims=True)
        - 2.0 * test.points @ mu.T
        + np.sum(mu ** 2, axis=1)
    )
    return _result(classes[np.argmin(d2, axis=1)], test, len(train), "ncm", 0)


def eval_logreg(train: LabeledSet, test: LabeledSet, epochs: int = 500, lr: float = 0.5,
                seed: int = 0, l2: float = 0.0) -> EvalResult:
    """Multinomial logistic regression, full-batch gradient descent from zero.

    With ``epochs=0`` the weights stay at zero and every prediction is
    class 0 (argmax of a constant).
    """
    _check_pair(train, test)
    if epochs < 0:
        raise ValueError("epochs must be nonnegative")
    C = max(train.class_count, test.class_count)
    X = train.points
    Y = np.eye(C)[train.labels]
    n, d = X.shape
    W = np.zeros((d, C))
    b = np.zeros(C)
    for _ in range(epochs):
        logits = X @ W + b
        logits -= logits.max(axis=1, keepdims=True)
        P = np.exp(logits)
        P /= P.sum(axis=1, keepdims=True)
        G = (P - Y) / n
        W -= lr * (X.T @ G + l2 * W)
        b -= lr * G.sum(axis=0)
    pred = np.argmax(test.points @ W + b, axis=1)
    return _result(pred, test, len(train), "logreg", seed)


@dataclass(frozen=True)
class CompareCell:
    geometry: str
    seed: int
    accuracy: float
    seconds: float


@dataclass
class CompareTable:
    cells: List[CompareCell]

    def geometries(self) -> List[str]:
        out = []
        for c in self.cells:
            if c.geometry not in out:
                out.append(c.geometry)
        return out

    def accuracies(self, geometry: str) -> np.ndarray:
        return np.array([c.accuracy for c in self.cells if c.geometry == geometry])

    def summary(self) -> Dict[str, Dict[str, float]]:
        out = {}
        for geo in self.geometries():
            a = self.accuracies(geo)
            std = float(np.std(a, ddof=1)) if len(a) > 1 else 0.0
            out[geo] = {"mean": float(a.mean()), "std": std, "n": len(a)}
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("geometry,name,mean,std,n\n")
        for geo, s in self.summary().items():
            buf.write(f"{geo},{GEOMETRY_NAMES.get(geo, geo)},{s['mean']:.17g},{s['std']:.17g},{s['n']}\n")
        return buf.getvalue()

    def save_csv(self, path):
        atomic_write(path, self.to_csv())

    def to_text(self) -> str:
        rows = [("geometry", "accuracy (%)", "seeds")]
        for geo, s in self.summary().items():
            rows.append((GEOMETRY_NAMES.get(geo, geo), f"{100 * s['mean']:.2f} ± {100 * s['std']:.2f}", str(s["n"])))
        widths = [max(len(r[i]) for r in rows) for i in range(3)]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
        return "\n".join(lines) + "\n"


def compare_geometries(train: LabeledSet, test: LabeledSet, cfg, geometries: Sequence[str],
                       seeds: Sequence[int], progress=None) -> CompareTable:
    """Distill once per (geometry, seed) and score each result with NCM."""
    from .distill import run_distill

    cells = []
    for geo in geometries:
        for seed in seeds:
            rep = run_distill(train, replace(cfg, geometry=geo, seed=int(seed)))
            acc = eval_ncm(rep.synthetic, test).accuracy
            cell = CompareCell(geo, int(seed), acc, rep.seconds)
            cells.append(cell)
            if progress is not None:
                progress(cell)
    return CompareTable(cells)
