import numpy as np
import pytest

from geodistill.data import LabeledSet, MixedSpec, gen_circle, gen_flat, gen_mixed, train_test_split
from geodistill.distill import DistillConfig, EncoderConfig
from geodistill.evaluation import (
    CompareCell,
    CompareTable,
    class_means,
    compare_geometries,
    eval_logreg,
    eval_ncm,
)


def check_decomposition(res, test):
    counts = test.class_counts()
    pc = np.nan_to_num(res.per_class_accuracy[: len(counts)])
    assert abs(res.accuracy - np.sum(pc * counts) / counts.sum()) <= 1e-12
    assert 0.0 <= res.accuracy <= 1.0


def test_ncm_on_its_own_means():
    ds = gen_flat(4, 3, 1.0, 0.5, 400, seed=0)
    classes, mu = class_means(ds)
    means = LabeledSet(mu, classes, 4)
    res = eval_ncm(ds, means)
    assert res.accuracy == 1.0 and res.classifier == "ncm"
    assert (res.train_size, res.test_size) == (400, 4)


@pytest.mark.parametrize("seed", range(3))
def test_ncm_chance_without_separation(seed):
    tr, te = train_test_split(gen_flat(5, 4, 0.0, 1.0, 5000, seed), 2500, seed)
    res = eval_ncm(tr, te)
    assert abs(res.accuracy - 0.2) <= 0.05
    check_decomposition(res, te)


def test_ncm_noiseless_circle_matches_angle_buckets():
    C = 6
    ds = gen_circle(C, 2, 0.0, 600, seed=1)
    # one prototype per arc, at the arc centre
    ang = 2 * np.pi * np.arange(C) / C
    protos = LabeledSet(np.stack([np.cos(ang), np.sin(ang)], axis=1), np.arange(C), C)
    res = eval_ncm(protos, ds)
    theta = np.mod(np.arctan2(ds.points[:, 1], ds.points[:, 0]), 2 * np.pi)
    bucket = np.mod(np.round(theta / (2 * np.pi / C)), C).astype(int)
    assert res.accuracy == 1.0 and np.array_equal(bucket, ds.labels)


def test_missing_class_is_an_error():
    tr = LabeledSet(np.zeros((2, 2)), np.array([0, 0]), 2)
    te = LabeledSet(np.zeros((2, 2)), np.array([0, 1]), 2)
    with pytest.raises(ValueError, match="not in train"):
        eval_ncm(tr, te)
    with pytest.raises(ValueError):
        eval_logreg(tr, te)
    with pytest.raises(ValueError):
        eval_ncm(tr, LabeledSet(np.zeros((1, 3)), np.array([0]), 2))


def test_logreg_separable_toy():
    x = np.array([[-2.0, 0.1], [-1.0, -0.3], [-1.5, 0.2], [1.0, 0.0], [2.0, -0.1], [1.2, 0.4]])
    ds = LabeledSet(x, np.array([0, 0, 0, 1, 1, 1]), 2)
    res = eval_logreg(ds, ds, epochs=200)
    assert res.accuracy == 1.0 and res.classifier == "logreg"


def test_logreg_zero_epochs_is_chance():
    tr, te = train_test_split(gen_flat(4, 3, 2.0, 0.3, 800, seed=2), 400, 0)
    res = eval_logreg(tr, te, epochs=0)
    assert res.accuracy == pytest.approx(0.25, abs=0.05)
    with pytest.raises(ValueError):
        eval_logreg(tr, te, epochs=-1)


@pytest.mark.parametrize("seed", range(3))
def test_logreg_agrees_with_ncm_on_blobs(seed):
    tr, te = train_test_split(gen_flat(4, 5, 3.0, 0.5, 2000, seed), 1000, seed)
    a = eval_ncm(tr, te).accuracy
    b = eval_logreg(tr, te, epochs=300).accuracy
    assert abs(a - b) <= 0.05


def test_permutation_invariance():
    tr, te = train_test_split(gen_mixed(MixedSpec(), 600, 3), 200, 0)
    perm = np.random.default_rng(0).permutation(len(tr))
    for f in (eval_ncm, lambda a, b: eval_logreg(a, b, epochs=50)):
        r1 = f(tr, te)
        r2 = f(tr.subset(perm), te.subset(np.arange(len(te))[::-1]))
        assert abs(r1.accuracy - r2.accuracy) <= 1e-12


def test_eval_result_to_dict():
    tr, te = train_test_split(gen_flat(3, 2, 2.0, 0.2, 90, 0), 30, 0)
    d = eval_ncm(tr, te).to_dict()
    assert set(d) == {"accuracy", "per_class_accuracy", "train_size", "test_size", "classifier", "seed"}
    assert len(d["per_class_accuracy"]) == 3


def test_compare_table_formatting():
    cells = [CompareCell("product", s, a, 0.0) for s, a in enumerate([0.5, 0.7])]
    cells.append(CompareCell("euclid", 0, 0.4, 0.0))
    t = CompareTable(cells)
    s = t.summary()
    assert s["product"]["mean"] == pytest.approx(0.6)
    assert s["product"]["std"] == pytest.approx(np.sqrt(0.02))
    assert s["euclid"] == {"mean": 0.4, "std": 0.0, "n": 1}
    lines = t.to_csv().splitlines()
    assert lines[0] == "geometry,name,mean,std,n"
    assert lines[1].startswith("product,ProductEHS,") and lines[2].startswith("euclid,EuclidOnly,")
    text = t.to_text().splitlines()
    assert text[0].startswith("geometry") and "60.00 ± 14.14" in text[1]


def test_compare_geometries_small():
    tr, te = train_test_split(gen_mixed(MixedSpec(), 600, 0), 200, 0)
    cfg = DistillConfig(ipc=2, iters=5, batch_real=16, encoder=EncoderConfig(4, 4, 4))
    seen = []
    one = compare_geometries(tr, te, cfg, ["hyper"], [0], progress=seen.append)
    assert len(one.cells) == 1 and seen == one.cells
    again = compare_geometries(tr, te, cfg, ["hyper"], [0])
    assert one.cells[0].accuracy == again.cells[0].accuracy
    two = compare_geometries(tr, te, cfg, ["product", "sphere"], [0, 1])
    assert two.geometries() == ["product", "sphere"] and len(two.accuracies("sphere")) == 2
