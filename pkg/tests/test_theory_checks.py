import json

import numpy as np
import pytest

from geodistill.manifolds import Factor, FactorKind, FactorPoint, factor_distance
from geodistill.theory_checks import (
    LEMMAS,
    LemmaReport,
    arc_chord,
    check_arc_chord,
    check_flat_isometry,
    check_packing_growth,
    distortion,
    euclidean_tree_embedding,
    greedy_packing,
    sample_hyperbolic_disk,
    sarkar_disk_embedding,
    tree_metric,
    tree_parents,
)

HYP = Factor(FactorKind.HYPERBOLIC, 2, -1.0)


def pairwise(fac, X):
    return np.stack([fac.dist(X, X[i]) for i in range(len(X))])


def test_report_pass_flag_and_json(tmp_path):
    r = LemmaReport("x", 3, 0.5, 1.0, {"a": np.arange(2)})
    assert r.passed
    assert not LemmaReport("x", 3, 2.0, 1.0).passed
    assert not LemmaReport("x", 3, 0.0, 1.0, inconclusive=True).passed
    d = json.loads(r.to_json())
    assert d["pass"] and d["stats"]["a"] == [0, 1]
    r.save(tmp_path / "r.json")
    assert json.loads((tmp_path / "r.json").read_text()) == d
    assert "pass" in r.summary()


def test_arc_chord_closed_forms():
    g, c = arc_chord(np.pi)
    assert c / g == pytest.approx(2 / np.pi, abs=1e-15)
    g, c = arc_chord(1e-6)
    assert abs(c / g - 1.0) <= 1e-9
    g, c = arc_chord(np.pi / 3, radius=2.0)
    assert c == pytest.approx(2.0, abs=1e-15)


@pytest.mark.parametrize("c_s", [0.25, 1.0, 3.0])
def test_arc_chord_random_pairs(c_s):
    rep = check_arc_chord(c_s, samples=20_000, seed=1)
    assert rep.passed
    s = rep.stats
    assert 2 / np.pi - 1e-12 <= s["ratio_min"] and s["ratio_max"] <= 1 + 1e-12
    assert s["antipodal_gap"] <= 1e-12
    with pytest.raises(ValueError):
        check_arc_chord(-1.0)


def test_arc_chord_is_deterministic():
    assert check_arc_chord(samples=100, seed=3).to_dict() == check_arc_chord(samples=100, seed=3).to_dict()


def test_hyperbolic_sampler_density():
    # radial CDF under the sinh(r) density is (cosh r - 1) / (cosh R - 1)
    R = 3.0
    x = sample_hyperbolic_disk(R, 40_000, np.random.default_rng(0))
    r = 2 * np.arctanh(np.linalg.norm(x, axis=1))
    assert r.max() <= R
    for q in (1.0, 2.0, 2.5):
        expect = (np.cosh(q) - 1) / (np.cosh(R) - 1)
        assert abs(np.mean(r <= q) - expect) <= 0.01


def test_greedy_packing_is_separated():
    rng = np.random.default_rng(1)
    pts = rng.uniform(-3, 3, (500, 2))
    euc = lambda a, b: np.sqrt(np.sum((a - b) ** 2, axis=-1))
    k = greedy_packing(pts, 1.0, euc)
    # the first k accepted points are pairwise separated by construction; an
    # independent rerun of the scan reproduces the count
    acc = [pts[0]]
    for p in pts[1:]:
        if all(np.linalg.norm(p - q) >= 1.0 for q in acc):
            acc.append(p)
    assert k == len(acc)


def test_packing_below_delta_counts_one():
    rep = check_packing_growth(radii=(0.3, 0.4), delta=1.0)
    assert rep.stats["count_hyperbolic"] == [1, 1] and rep.stats["count_euclidean"] == [1, 1]
    assert rep.inconclusive and not rep.passed


def test_packing_small_ladder():
    rep = check_packing_growth(radii=(2.0, 3.0, 4.0), delta=1.0, seed=2)
    s = rep.stats
    assert rep.passed
    assert all(h >= e for h, e in zip(s["count_hyperbolic"], s["count_euclidean"]))
    assert all(1.4 <= v <= 2.6 for v in s["slope_vs_logR_euclidean"])
    with pytest.raises(ValueError):
        check_packing_growth(radii=(3.0, 2.0))
    with pytest.raises(ValueError):
        check_packing_growth(delta=0.0)


def test_tree_parents_and_metric():
    p = tree_parents(2, 2)
    assert p.tolist() == [-1, 0, 0, 1, 1, 2, 2]
    D = tree_metric(p)
    assert D[3, 4] == 2 and D[3, 5] == 4 and D[0, 6] == 2
    assert np.array_equal(D, D.T) and np.all(np.diag(D) == 0)


def test_distortion_examples():
    D = tree_metric(tree_parents(2, 1))
    assert distortion(3.0 * D, D) == pytest.approx(1.0)
    E = D.copy()
    E[1, 2] = E[2, 1] = 4.0
    assert distortion(E, D) == pytest.approx(2.0)


@pytest.mark.parametrize("b", [2, 3, 4])
def test_star_embeds_with_low_distortion(b):
    X, parents = sarkar_disk_embedding(b, 1)
    T = tree_metric(parents)
    assert distortion(pairwise(HYP, X), T) <= 1.5
    _, de, diag = euclidean_tree_embedding(T, restarts=3, seed=0)
    assert de <= 1.5 and diag["converged"]


def test_sarkar_embedding_is_inside_ball_and_nested():
    X, parents = sarkar_disk_embedding(3, 4)
    assert np.all(np.linalg.norm(X, axis=1) < 1.0)
    r = 2 * np.arctanh(np.linalg.norm(X, axis=1))
    depth = np.zeros(len(parents), dtype=int)
    for v in range(1, len(parents)):
        depth[v] = depth[parents[v]] + 1
    np.testing.assert_allclose(r, np.log(6) * depth, atol=1e-9)
    with pytest.raises(ValueError):
        sarkar_disk_embedding(3, 4, scale=1.0)


def test_hyperbolic_distortion_band_small():
    d = []
    for h in (2, 3, 4):
        X, parents = sarkar_disk_embedding(2, h)
        d.append(distortion(pairwise(HYP, X), tree_metric(parents)))
    assert max(d) / min(d) <= 2.0


def test_flat_isometry_examples():
    fac = Factor(FactorKind.EUCLIDEAN, 3)
    x = FactorPoint(np.array([1.0, 2.0, 3.0]), fac)
    assert factor_distance(x, x) == 0.0
    y = FactorPoint(np.array([1.0, 5.0, 3.0]), fac)
    assert factor_distance(x, y) == 3.0
    rep = check_flat_isometry(samples=10_000)
    assert rep.passed and rep.worst_violation <= 1e-15


def test_lemma_registry():
    assert set(LEMMAS) == {"arc_chord", "packing", "tree", "flat"}
