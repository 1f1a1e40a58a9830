"""
Labeled datasets: synthetic generators with known geometry and CSV I/O.

Generators return exactly balanced classes (counts differ by at most one,
extra samples going to the lowest labels) and are bit-reproducible under
their seed.
"""

from __future__ import annotations

import io
import os
import tempfile
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import CSVFormatError


@dataclass(frozen=True, eq=False)
class LabeledSet:
    points: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        lab = np.asarray(self.labels)
        if pts.shape[0] < 1:
            raise ValueError("a labeled set needs at least one sample")
        if lab.shape != (pts.shape[0],):
            raise ValueError("need exactly one label per sample")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points contain NaN or Inf")
        if lab.size and (lab.min() < 0 or lab.max() >= self.class_count):
            raise ValueError(f"labels must lie in [0, {self.class_count})")
        if not np.issubdtype(lab.dtype, np.integer):
            if not np.all(lab == np.round(lab)):
                raise ValueError("labels must be integers")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", lab.astype(np.int64))
        object.__setattr__(self, "class_count", int(self.class_count))

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)

    def priors(self) -> dict:
        counts = self.class_counts()
        return {c: counts[c] / counts.sum() for c in range(self.class_count) if counts[c] > 0}

    def subset(self, idx) -> "LabeledSet":
        return LabeledSet(self.points[idx], self.labels[idx], self.class_count)

    def equals(self, other: "LabeledSet") -> bool:
        return (
            self.class_count == other.class_count
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.points, other.points)
        )


def split_counts(n: int, classes: int) -> np.ndarray:
    base, extra = divmod(n, classes)
    return np.array([base + (c < extra) for c in range(classes)])


def _unit(rng, d, size=None):
    v = rng.standard_normal((size, d) if size else d)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def tree_layout(branching: int, depth: int, dim: int, rng, edge_length=1.0):
    """Node positions, depths and depth-1 subtree ids of a complete tree.

    Children leave their parent along the parent's direction perturbed by a
    random unit vector; edge lengths halve at every level.
    """
    pos = [np.zeros(dim)]
    dirs = [None]
    depths = [0]
    subtree = [-1]
    frontier = [0]
    for level in range(1, depth + 1):
        length = edge_length * 0.5 ** (level - 1)
        nxt = []
        for parent in frontier:
            for k in range(branching):
                if dirs[parent] is None:
                    d = _unit(rng, dim)
                else:
                    d = dirs[parent] + _unit(rng, dim)
                    d /= np.linalg.norm(d)
                pos.append(pos[parent] + length * d)
                dirs.append(d)
                depths.append(level)
                subtree.append(k if level == 1 else subtree[parent])
                nxt.append(len(pos) - 1)
        frontier = nxt
    return np.array(pos), np.array(depths), np.array(subtree)


def _gen_tree(branching, depth, dim, noise, per_class, rng, edge_length=1.0):
    pos, _, subtree = tree_layout(branching, depth, dim, rng, edge_length)
    pts, labs = [], []
    for c, cnt in enumerate(per_class):
        nodes = np.flatnonzero(subtree == c)
        pick = rng.choice(nodes, size=cnt, replace=True)
        pts.append(pos[pick] + noise * rng.standard_normal((cnt, dim)))
        labs.append(np.full(cnt, c))
    return np.concatenate(pts), np.concatenate(labs)


def gen_tree(branching: int, depth: int, dim: int, noise: float, classes: int, n: int,
             seed: int, edge_length: float = 1.0) -> LabeledSet:
    """Noisy node embeddings of a random ``branching``-ary tree.

    The class of a sample is the depth-1 subtree its node belongs to; only the
    first ``classes`` subtrees are sampled.
    """
    if branching < 2 or depth < 1:
        raise ValueError("need branching >= 2 and depth >= 1")
    if not 1 <= classes <= branching:
        raise ValueError(f"cannot form {classes} classes from {branching} depth-1 subtrees")
    rng = np.random.default_rng(seed)
    pts, labs = _gen_tree(branching, depth, dim, noise, split_counts(n, classes), rng, edge_length)
    return LabeledSet(pts, labs, classes)


def _gen_circle(classes, dim, noise, per_class, rng, arc_fraction=1.0):
    width = 2 * np.pi / classes * arc_fraction
    pts, labs = [], []
    for c, cnt in enumerate(per_class):
        ang = 2 * np.pi * c / classes + rng.uniform(-width / 2, width / 2, size=cnt)
        x = np.zeros((cnt, dim))
        x[:, 0] = np.cos(ang)
        x[:, 1] = np.sin(ang)
        x[:, 2:] = noise * rng.standard_normal((cnt, dim - 2))
        pts.append(x)
        labs.append(np.full(cnt, c))
    return np.concatenate(pts), np.concatenate(labs)


def gen_circle(classes: int, dim: int, noise: float, n: int, seed: int,
               arc_fraction: float = 1.0) -> LabeledSet:
    """Points on ``classes`` equally spaced arcs of the unit circle.

    Arc ``k`` is centred at angle ``2 pi k / classes``; the circle lives in the
    first two coordinates and the remaining ones carry isotropic noise.
    """
    if classes < 2 or dim < 2:
        raise ValueError("need at least two classes and two dimensions")
    rng = np.random.default_rng(seed)
    pts, labs = _gen_circle(classes, dim, noise, split_counts(n, classes), rng, arc_fraction)
    return LabeledSet(pts, labs, classes)


def _gen_flat(classes, dim, separation, noise, per_class, rng):
    means = separation * _unit(rng, dim, classes)
    pts, labs = [], []
    for c, cnt in enumerate(per_class):
        pts.append(means[c] + noise * rng.standard_normal((cnt, dim)))
        labs.append(np.full(cnt, c))
    return np.concatenate(pts), np.concatenate(labs), means


def gen_flat(classes: int, dim: int, separation: float, noise: float, n: int, seed: int) -> LabeledSet:
    """Isotropic Gaussian blobs centred at ``separation`` times random unit vectors."""
    if classes < 2:
        raise ValueError("need at least two classes")
    rng = np.random.default_rng(seed)
    pts, labs, _ = _gen_flat(classes, dim, separation, noise, split_counts(n, classes), rng)
    return LabeledSet(pts, labs, classes)


def flat_means(classes: int, dim: int, separation: float, seed: int) -> np.ndarray:
    """The blob centres :func:`gen_flat` uses for a given seed."""
    rng = np.random.default_rng(seed)
    return separation * _unit(rng, dim, classes)


@dataclass(frozen=True)
class MixedSpec:
    """Layout of the mixed-geometry benchmark."""

    class_counts: Tuple[int, int, int] = (2, 2, 2)
    dims: Tuple[int, int, int] = (8, 8, 8)
    noise: float = 0.3
    branching: int = 3
    depth: int = 4
    edge_length: float = 1.0
    arc_fraction: float = 1.0
    separation: float = 1.0


def gen_mixed(spec: MixedSpec, n: int, seed: int) -> LabeledSet:
    """Tree, circle and flat classes in disjoint coordinate blocks.

    Labels run over tree classes first, then circle, then flat. A sample of
    one geometry is zero in the other blocks before the isotropic noise is
    added there.
    """
    ct, cc, cf = spec.class_counts
    if min(spec.class_counts) < 1:
        raise ValueError("need at least one class per geometry")
    dt, dc, df = spec.dims
    C = ct + cc + cf
    per_class = split_counts(n, C)
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)]
    xt, yt = _gen_tree(spec.branching, spec.depth, dt, spec.noise, per_class[:ct], rngs[0], spec.edge_length)
    xc, yc = _gen_circle(cc, dc, spec.noise, per_class[ct:ct + cc], rngs[1], spec.arc_fraction)
    xf, yf, _ = _gen_flat(cf, df, spec.separation, spec.noise, per_class[ct + cc:], rngs[2])
    D = dt + dc + df
    blocks = []
    for x, offset in ((xt, 0), (xc, dt), (xf, dt + dc)):
        full = np.zeros((x.shape[0], D))
        full[:, offset:offset + x.shape[1]] = x
        blocks.append(full)
    pts = np.concatenate(blocks)
    labels = np.concatenate([yt, yc + ct, yf + ct + cc])
    # background noise outside each sample's own block
    own = np.zeros_like(pts, dtype=bool)
    own[: len(yt), :dt] = True
    own[len(yt): len(yt) + len(yc), dt:dt + dc] = True
    own[len(yt) + len(yc):, dt + dc:] = True
    pts = pts + np.where(own, 0.0, spec.noise * rngs[3].standard_normal(pts.shape))
    return LabeledSet(pts, labels, C)


def train_test_split(ds: LabeledSet, n_test: int, seed: int) -> Tuple[LabeledSet, LabeledSet]:
    """Stratified split with ``n_test`` test samples."""
    if not 0 < n_test < len(ds):
        raise ValueError("test size must be between 1 and len(ds) - 1")
    rng = np.random.default_rng(seed)
    counts = ds.class_counts()
    # largest-remainder allocation of the test budget across classes
    quota = counts * n_test / len(ds)
    take = np.floor(quota).astype(int)
    order = np.argsort(-(quota - take), kind="stable")
    take[order[: n_test - take.sum()]] += 1
    test_idx = []
    for c in range(ds.class_count):
        idx = np.flatnonzero(ds.labels == c)
        test_idx.append(rng.permutation(idx)[: take[c]])
    test_idx = np.sort(np.concatenate(test_idx))
    mask = np.zeros(len(ds), dtype=bool)
    mask[test_idx] = True
    return ds.subset(np.flatnonzero(~mask)), ds.subset(test_idx)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def format_csv(ds: LabeledSet) -> str:
    buf = io.StringIO()
    buf.write(",".join(["label"] + [f"f{i}" for i in range(ds.dim)]) + "\n")
    for y, row in zip(ds.labels, ds.points):
        buf.write(",".join([str(int(y))] + [format(float(v), ".17g") for v in row]) + "\n")
    return buf.getvalue()


def atomic_write(path, text: str):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_csv(ds: LabeledSet, path):
    atomic_write(path, format_csv(ds))


def parse_csv(text: str, class_count: Optional[int] = None) -> LabeledSet:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise CSVFormatError("empty file: expected header 'label,f0,...'")
    header = lines[0].strip().split(",")
    if header[0] != "label" or header[1:] != [f"f{i}" for i in range(len(header) - 1)]:
        raise CSVFormatError("line 1: header must be 'label,f0,f1,...'")
    d = len(header) - 1
    if len(lines) < 2:
        raise CSVFormatError("file has a header but no samples")
    labels = np.empty(len(lines) - 1, dtype=np.int64)
    points = np.empty((len(lines) - 1, d))
    for i, line in enumerate(lines[1:]):
        fields = line.strip().split(",")
        if len(fields) != d + 1:
            raise CSVFormatError(f"line {i + 2}: expected {d + 1} fields, got {len(fields)}")
        try:
            labels[i] = int(fields[0])
            points[i] = [float(v) for v in fields[1:]]
        except ValueError as exc:
            raise CSVFormatError(f"line {i + 2}: {exc}") from None
        if labels[i] < 0:
            raise CSVFormatError(f"line {i + 2}: negative label")
        if not np.all(np.isfinite(points[i])):
            raise CSVFormatError(f"line {i + 2}: non-finite value")
    C = int(labels.max()) + 1 if class_count is None else class_count
    return LabeledSet(points, labels, C)


def load_csv(path, class_count: Optional[int] = None) -> LabeledSet:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_csv(fh.read(), class_count)
