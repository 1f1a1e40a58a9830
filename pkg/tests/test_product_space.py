import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geodistill.manifolds import Factor, FactorKind, factor_distance, FactorPoint
from geodistill.product_space import (
    GeometryParams,
    ProductPoint,
    concat_features,
    curvature_loss,
    curvature_loss_grad,
    factor_sq_distances,
    normalize_weights,
    product_distance_sq,
    softplus,
)


def random_points(rng, n, dims=(3, 3, 3), g=None):
    g = g or GeometryParams.from_curvatures(-1.0, 1.0)
    d_e, d_h, d_s = dims
    e = rng.standard_normal((n, d_e))
    u = rng.standard_normal((n, d_h))
    h = u / np.linalg.norm(u, axis=1, keepdims=True) * rng.uniform(0, 0.9, (n, 1)) * g.r_h
    s = rng.standard_normal((n, d_s))
    s = s / np.linalg.norm(s, axis=1, keepdims=True) * g.r_s
    return ProductPoint(e, h, s)


def test_curvature_signs_are_structural():
    for th in (-50.0, -3.0, 0.0, 4.0, 800.0):
        g = GeometryParams(th, th)
        assert g.c_h < 0 < g.c_s


def test_from_curvatures_roundtrip():
    g = GeometryParams.from_curvatures(-0.37, 2.2)
    assert g.c_h == pytest.approx(-0.37, rel=1e-12)
    assert g.c_s == pytest.approx(2.2, rel=1e-12)
    assert g.r_h == pytest.approx(1 / np.sqrt(0.37))


def test_normalize_weights_examples():
    np.testing.assert_allclose(normalize_weights([0, 0, 0]), [1 / 3] * 3, atol=1e-15)
    e = np.e
    np.testing.assert_allclose(normalize_weights([1, 0, 0]), [e / (e + 2), 1 / (e + 2), 1 / (e + 2)], atol=1e-15)
    np.testing.assert_allclose(normalize_weights([1, 0, 0]), [0.57612, 0.21194, 0.21194], atol=1e-5)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=3, max_size=3), st.floats(-100, 100))
def test_normalize_weights_shift_invariance(logits, k):
    w = normalize_weights(logits)
    assert np.all(w > 0)
    assert abs(w.sum() - 1) <= 1e-12
    np.testing.assert_allclose(normalize_weights(np.array(logits) + k), w, atol=1e-12)


def test_product_distance_identity_and_degenerate_weights():
    rng = np.random.default_rng(0)
    z = random_points(rng, 5)
    z2 = random_points(rng, 5)
    g = GeometryParams.from_curvatures(-1.0, 1.0)
    assert np.all(product_distance_sq(z, z, g) == 0)
    g1 = GeometryParams.from_curvatures(-1.0, 1.0, fixed_weights=(1.0, 0.0, 0.0))
    np.testing.assert_array_equal(product_distance_sq(z, z2, g1), np.sum((z.e - z2.e) ** 2, axis=1))


def test_product_distance_matches_factor_oracles():
    rng = np.random.default_rng(1)
    g = GeometryParams.from_curvatures(-0.6, 1.7, (0.3, -0.2, 0.5))
    z = random_points(rng, 20, g=g)
    z2 = random_points(rng, 20, g=g)
    fe, fh, fs = g.factors(3, 3, 3)
    w = g.weights
    expect = []
    for i in range(20):
        a = factor_distance(FactorPoint(z.e[i], fe), FactorPoint(z2.e[i], fe)) ** 2
        b = factor_distance(FactorPoint(z.h[i], fh), FactorPoint(z2.h[i], fh)) ** 2
        c = factor_distance(FactorPoint(z.s[i], fs), FactorPoint(z2.s[i], fs)) ** 2
        expect.append(w[0] * a + w[1] * b + w[2] * c)
    np.testing.assert_allclose(product_distance_sq(z, z2, g), expect, rtol=1e-12)


def test_product_distance_affine_in_weights():
    rng = np.random.default_rng(2)
    g = GeometryParams.from_curvatures(-1.0, 1.0)
    z, z2 = random_points(rng, 10), random_points(rng, 10)
    a, b, c = factor_sq_distances(z, z2, g)
    for w in ([0.2, 0.5, 0.3], [0.9, 0.05, 0.05]):
        gw = GeometryParams.from_curvatures(-1.0, 1.0, fixed_weights=tuple(w))
        np.testing.assert_allclose(product_distance_sq(z, z2, gw), w[0] * a + w[1] * b + w[2] * c, rtol=1e-13)


def test_product_distance_triangle_inequality():
    rng = np.random.default_rng(3)
    g = GeometryParams.from_curvatures(-1.3, 0.8, (0.1, 0.4, -0.2))
    x, y, z = (random_points(rng, 10_000, g=g) for _ in range(3))
    dxy = np.sqrt(product_distance_sq(x, y, g))
    dyz = np.sqrt(product_distance_sq(y, z, g))
    dxz = np.sqrt(product_distance_sq(x, z, g))
    np.testing.assert_allclose(dxy, np.sqrt(product_distance_sq(y, x, g)), atol=1e-12)
    assert np.all(dxz <= dxy + dyz + 1e-9)


def test_dimension_mismatch():
    rng = np.random.default_rng(4)
    g = GeometryParams()
    with pytest.raises(ValueError):
        product_distance_sq(random_points(rng, 2, (3, 3, 3)), random_points(rng, 2, (2, 3, 3)), g)


def test_curvature_loss_examples():
    g = GeometryParams.from_curvatures(-1.0, 1.0)
    h_on = np.array([[1.0, 0.0], [0.0, -1.0]])
    s_on = np.array([[0.6, 0.8]])
    assert curvature_loss(h_on, s_on, g) == 0.0
    assert curvature_loss(np.zeros((1, 2)), s_on, g, lambda_h=1.0, lambda_s=0.0) == 1.0
    h = np.array([[0.3, 0.1], [0.0, 0.5]])
    s = np.array([[2.0, 0.0], [0.1, 0.1]])
    one = curvature_loss(h, s, g, 1.0, 0.0)
    assert curvature_loss(h, s, g, 2.0, 0.0) == 2 * one
    with pytest.raises(ValueError):
        curvature_loss(np.zeros((0, 2)), s, g)


def test_curvature_loss_hand_value():
    g = GeometryParams.from_curvatures(-4.0, 0.25)  # r_H = 0.5, r_S = 2
    h = np.array([[0.1, 0.0], [0.0, 0.2]])
    s = np.array([[3.0, 0.0], [0.0, 1.0]])
    expect = np.mean([0.4, 0.3]) + 0.5 * np.mean([1.0, 1.0])
    assert curvature_loss(h, s, g, 1.0, 0.5) == pytest.approx(expect, abs=1e-15)


def test_curvature_loss_grad_finite_differences():
    rng = np.random.default_rng(5)
    g = GeometryParams.from_curvatures(-0.8, 1.4)
    h = rng.uniform(-0.4, 0.4, (6, 3))
    s = rng.standard_normal((6, 3))
    val, gh, gs, dk, dc = curvature_loss_grad(h, s, g, 1.0, 0.7)
    eps = 1e-6
    num_h = np.zeros_like(h)
    for i in np.ndindex(h.shape):
        hp, hm = h.copy(), h.copy()
        hp[i] += eps
        hm[i] -= eps
        num_h[i] = (curvature_loss(hp, s, g, 1.0, 0.7) - curvature_loss(hm, s, g, 1.0, 0.7)) / (2 * eps)
    np.testing.assert_allclose(gh, num_h, atol=1e-7)
    num_k = (curvature_loss(h, s, GeometryParams.from_curvatures(-0.8 - eps, 1.4), 1.0, 0.7)
             - curvature_loss(h, s, GeometryParams.from_curvatures(-0.8 + eps, 1.4), 1.0, 0.7)) / (2 * eps)
    num_c = (curvature_loss(h, s, GeometryParams.from_curvatures(-0.8, 1.4 + eps), 1.0, 0.7)
             - curvature_loss(h, s, GeometryParams.from_curvatures(-0.8, 1.4 - eps), 1.0, 0.7)) / (2 * eps)
    assert dk == pytest.approx(num_k, rel=1e-6)
    assert dc == pytest.approx(num_c, rel=1e-6)


def test_concat_features():
    z = ProductPoint(np.array([2.0]), np.array([0.3]), np.array([1.0]))
    np.testing.assert_array_equal(concat_features(z), [2.0, 0.3, 1.0])
    rng = np.random.default_rng(6)
    pts = random_points(rng, 100, (2, 4, 3))
    F = concat_features(pts)
    assert F.shape == (100, 9)
    other = random_points(rng, 100, (2, 4, 3))
    assert np.all(np.any(concat_features(other) != F, axis=1))


def test_concat_features_with_weights_scales_blocks():
    z = ProductPoint(np.array([2.0]), np.array([0.3]), np.array([1.0]))
    F = concat_features(z, [0.25, 0.25, 0.5])
    np.testing.assert_allclose(F, [1.0, 0.15, np.sqrt(0.5)])


def test_empty_factor_contributes_zero():
    rng = np.random.default_rng(7)
    g = GeometryParams.from_curvatures(fixed_weights=(0.0, 1.0, 0.0))
    z = random_points(rng, 4, (0, 5, 0))
    z2 = random_points(rng, 4, (0, 5, 0))
    a, b, c = factor_sq_distances(z, z2, g)
    assert np.all(a == 0) and np.all(c == 0)
    np.testing.assert_allclose(product_distance_sq(z, z2, g), b)


def test_softplus_is_stable():
    assert softplus(1000.0) == 1000.0
    assert softplus(-1000.0) > 0
