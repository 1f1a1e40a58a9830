import numpy as np
import pytest

from geodistill.optimizer import OptimState, grad_check, step_manifold, step_scalars, step_synthetic
from geodistill.product_space import GeometryParams, ProductPoint


def test_state_validation():
    with pytest.raises(ValueError):
        OptimState(lr_syn=0.0)
    with pytest.raises(ValueError):
        OptimState(lr_scalars=-1.0)
    with pytest.raises(ValueError):
        OptimState(momentum=1.0)


def test_zero_gradient_leaves_data_unchanged():
    x = np.random.default_rng(0).standard_normal((4, 3))
    y, st = step_synthetic(x, np.zeros_like(x), OptimState())
    assert np.array_equal(x, y) and st.step_count == 1


def test_plain_sgd_step():
    x = np.array([[1.0, -2.0]])
    g = np.array([[0.5, 3.0]])
    y, _ = step_synthetic(x, g, OptimState(lr_syn=0.1, momentum=0.0))
    np.testing.assert_array_equal(y, x - 0.1 * g)


def test_two_momentum_steps_match_hand_recurrence():
    x0 = np.array([[1.0, 2.0]])
    g1 = np.array([[0.2, -0.4]])
    g2 = np.array([[1.0, 0.5]])
    st = OptimState(lr_syn=0.1, momentum=0.5)
    x1, st = step_synthetic(x0, g1, st)
    x2, st = step_synthetic(x1, g2, st)
    # v1 = g1, x1 = x0 - lr g1; v2 = 0.5 g1 + g2, x2 = x1 - lr v2
    v2 = 0.5 * g1 + g2
    np.testing.assert_allclose(x2, x0 - 0.1 * g1 - 0.1 * v2, atol=1e-15)
    np.testing.assert_allclose(st.velocity["syn"], v2)
    assert st.step_count == 2


def test_step_synthetic_is_pure_and_checks_shapes():
    st = OptimState()
    x = np.ones((2, 2))
    step_synthetic(x, np.ones((2, 2)), st)
    assert st.velocity == {} and st.step_count == 0
    with pytest.raises(ValueError):
        step_synthetic(x, np.ones((2, 3)), st)
    _, st2 = step_synthetic(x, np.ones((2, 2)), st)
    with pytest.raises(ValueError):
        step_synthetic(np.ones((3, 2)), np.ones((3, 2)), st2)


def test_step_synthetic_deterministic():
    rng = np.random.default_rng(1)
    grads = rng.standard_normal((20, 5, 3))

    def run():
        x, st = np.zeros((5, 3)), OptimState()
        for g in grads:
            x, st = step_synthetic(x, g, st)
        return x

    assert np.array_equal(run(), run())


def test_quadratic_descent_is_monotone():
    # f(x) = 0.5 x^T A x with eigenvalues up to 4: plain SGD is stable for lr < 2/4
    A = np.diag([4.0, 1.0, 0.25])
    x = np.array([[1.0, -1.0, 2.0]])
    st = OptimState(lr_syn=0.4, momentum=0.0)
    f = [0.5 * float(x[0] @ A @ x[0])]
    for _ in range(50):
        x, st = step_synthetic(x, x @ A, st)
        f.append(0.5 * float(x[0] @ A @ x[0]))
    assert all(b <= a for a, b in zip(f, f[1:]))


def test_step_scalars_zero_and_signs():
    g = GeometryParams(0.3, -0.2, (0.1, 0.2, 0.3))
    same = step_scalars(g, np.zeros(5), OptimState())
    assert np.array_equal(same.vector, g.vector)
    rng = np.random.default_rng(2)
    st = OptimState(lr_scalars=1.0)
    for _ in range(10_000):
        g = step_scalars(g, rng.normal(0, 50, 5), st)
        assert g.c_h < 0 < g.c_s
    with pytest.raises(ValueError):
        step_scalars(g, np.array([np.nan, 0, 0, 0, 0]), st)


def test_weight_logit_shift_invariance():
    g = GeometryParams(0.0, 0.0, (0.5, -1.0, 2.0))
    shifted = step_scalars(g, np.array([0.0, 0.0, 1.0, 1.0, 1.0]), OptimState(lr_scalars=3.0))
    np.testing.assert_allclose(shifted.weights, g.weights, atol=1e-15)


def _points(rng, n, g, dims=(2, 3, 3)):
    e = rng.standard_normal((n, dims[0]))
    u = rng.standard_normal((n, dims[1]))
    h = u / np.linalg.norm(u, axis=1, keepdims=True) * rng.uniform(0, 0.9, (n, 1)) * g.r_h
    s = rng.standard_normal((n, dims[2]))
    return ProductPoint(e, h, s / np.linalg.norm(s, axis=1, keepdims=True) * g.r_s)


def test_step_manifold_zero_and_flat():
    rng = np.random.default_rng(3)
    g = GeometryParams.from_curvatures(-1.0, 1.0)
    z = _points(rng, 5, g)
    zero = ProductPoint(np.zeros_like(z.e), np.zeros_like(z.h), np.zeros_like(z.s))
    out = step_manifold(z, zero, 0.1, g)
    for a, b in zip((out.e, out.h, out.s), (z.e, z.h, z.s)):
        assert np.array_equal(a, b)
    ge = rng.standard_normal(z.e.shape)
    out = step_manifold(z, ProductPoint(ge, zero.h, zero.s), 0.1, g)
    np.testing.assert_allclose(out.e, z.e - 0.1 * ge, atol=1e-15)


def test_step_manifold_stays_on_manifold():
    rng = np.random.default_rng(4)
    g = GeometryParams.from_curvatures(-2.0, 0.5)
    fe, fh, fs = g.factors(2, 3, 3)
    z = _points(rng, 8, g)
    for _ in range(10_000):
        gs = fs.egrad2rgrad(z.s, rng.standard_normal(z.s.shape))
        gh = fh.egrad2rgrad(z.h, rng.standard_normal(z.h.shape))
        z = step_manifold(z, ProductPoint(rng.standard_normal(z.e.shape), gh, gs), 0.5, g)
        assert np.all(np.linalg.norm(z.h, axis=1) < g.r_h)
    fh.check(z.h)
    fs.check(z.s)


def test_grad_check_sanity():
    x = np.random.default_rng(5).standard_normal(6)
    f = lambda v: float(np.sum(v ** 2))
    assert grad_check(f, x, 2 * x, h=1e-5) <= 1e-8
    assert grad_check(f, x, 4 * x) == pytest.approx(1.0, abs=1e-6)
    assert grad_check(f, x, np.zeros(6)) == 0.0
    with pytest.raises(ValueError):
        grad_check(f, x, 2 * x, h=0.0)
