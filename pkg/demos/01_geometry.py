"""
Constant-curvature factors and the product distance
====================================================

Each factor of E x H x S has its own distance, exponential map and
logarithmic map. The product distance is a weighted sum of the squared
factor distances, with weights that come out of a softmax.
"""

import numpy as np

from geodistill.manifolds import Factor, FactorKind
from geodistill.product_space import GeometryParams, ProductPoint, factor_sq_distances, product_distance_sq

rng = np.random.default_rng(0)

# hyperbolic distances explode near the boundary of the Poincare ball
H = Factor(FactorKind.HYPERBOLIC, 2, -1.0)
origin = np.zeros(2)
for r in (0.5, 0.9, 0.99, 0.999):
    print(f"|y| = {r:<6} euclidean 0->y = {r:.3f}   hyperbolic 0->y = {H.dist(origin, np.array([r, 0.0])):.3f}")

# on the sphere the distance is the arc length, bounded by pi times the radius
S = Factor(FactorKind.SPHERICAL, 3, 0.25)          # radius 2
p = S.proj(np.array([1.0, 0.0, 0.0]))
q = S.proj(np.array([-1.0, 1e-9, 0.0]))
print("near-antipodal arc on the radius-2 sphere:", S.dist(p, q), "(2 pi =", 2 * np.pi, ")")

# exp and log are inverse to each other
x = np.array([0.3, -0.2])
y = np.array([-0.5, 0.4])
v = H.logmap(x, y)
print("log then exp recovers y to", np.abs(H.expmap(x, v) - y).max())

# the product distance mixes the three factors
g = GeometryParams.from_curvatures(-1.0, 1.0, (0.5, 0.0, -0.5))
print("weights (E, H, S):", np.round(g.weights, 4))


def random_point(n):
    e = rng.standard_normal((n, 2))
    h = 0.5 * rng.uniform(size=(n, 2))
    s = g.factors(2, 2, 3)[2].proj(rng.standard_normal((n, 3)))
    return ProductPoint(e, h, s)


a, b = random_point(4), random_point(4)
de, dh, ds = factor_sq_distances(a, b, g)
print("per-factor squared distances:\n", np.round(np.stack([de, dh, ds], axis=1), 4))
print("weighted total:", np.round(product_distance_sq(a, b, g), 4))
